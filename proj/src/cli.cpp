#include "sdcn/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "sdcn/gradsuite.hpp"

namespace sdcn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw std::invalid_argument(where_ + " must be an object");
  }
  template <typename T>
  void get(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(where_ + "." + key + ": " + e.what());
    }
  }
  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) {
        throw std::invalid_argument(where_ + ": unknown key '" + key + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json train_to_json(const TrainConfig& t) {
  return {{"momentum", t.momentum},
          {"weight_decay", t.weight_decay},
          {"classifier_lr", t.classifier_lr},
          {"classifier_max_iters", t.classifier_max_iters},
          {"classifier_plateau_window", t.classifier_plateau_window},
          {"classifier_plateau_tol", t.classifier_plateau_tol},
          {"pretrain_iters", t.pretrain_iters},
          {"phase1_iters", t.phase1_iters},
          {"phase1_lr", t.phase1_lr},
          {"phase2_iters", t.phase2_iters},
          {"phase2_lr", t.phase2_lr},
          {"lambda_mil", t.objective.lambda_mil},
          {"lambda_ref", t.objective.lambda_ref},
          {"lambda_seg", t.objective.lambda_seg},
          {"lambda_adv", t.seg.lambda_adv},
          {"lambda_cls", t.seg.lambda_cls},
          {"topk_fraction", t.seg.topk_fraction},
          {"tau0", t.dseg.tau0},
          {"bin_thresh", t.dseg.bin_thresh},
          {"psi_keep", t.psi_keep},
          {"kappa_iou", t.kappa_iou},
          {"score_thresh", t.infer.score_thresh},
          {"nms_iou", t.infer.nms_iou}};
}

void train_from_json(const json& j, TrainConfig& t) {
  Fields f(j, "train");
  f.get("momentum", t.momentum);
  f.get("weight_decay", t.weight_decay);
  f.get("classifier_lr", t.classifier_lr);
  f.get("classifier_max_iters", t.classifier_max_iters);
  f.get("classifier_plateau_window", t.classifier_plateau_window);
  f.get("classifier_plateau_tol", t.classifier_plateau_tol);
  f.get("pretrain_iters", t.pretrain_iters);
  f.get("phase1_iters", t.phase1_iters);
  f.get("phase1_lr", t.phase1_lr);
  f.get("phase2_iters", t.phase2_iters);
  f.get("phase2_lr", t.phase2_lr);
  f.get("lambda_mil", t.objective.lambda_mil);
  f.get("lambda_ref", t.objective.lambda_ref);
  f.get("lambda_seg", t.objective.lambda_seg);
  f.get("lambda_adv", t.seg.lambda_adv);
  f.get("lambda_cls", t.seg.lambda_cls);
  f.get("topk_fraction", t.seg.topk_fraction);
  f.get("tau0", t.dseg.tau0);
  f.get("bin_thresh", t.dseg.bin_thresh);
  f.get("psi_keep", t.psi_keep);
  f.get("kappa_iou", t.kappa_iou);
  f.get("score_thresh", t.infer.score_thresh);
  f.get("nms_iou", t.infer.nms_iou);
  f.finish();
}

json switches_to_json(const Switches& s) {
  return {{"seg_branch", s.seg_branch},
          {"collab_s2d", s.collab_s2d},
          {"collab_d2s", s.collab_d2s}};
}

Switches switches_from_json(const json& j) {
  Switches s;
  Fields f(j, "switches");
  f.get("seg_branch", s.seg_branch);
  f.get("collab_s2d", s.collab_s2d);
  f.get("collab_d2s", s.collab_d2s);
  f.finish();
  return s;
}

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_fixed(std::optional<double> v, int digits = 4) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, *v);
  return buf;
}

// Loads the dataset under data_dir and checks that it was made from c.
Dataset load_matching_dataset(const RunConfig& c, const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) {
    throw std::runtime_error("no dataset at " + dir.string() + " (run synth first)");
  }
  Dataset d = load_dataset(manifest);
  if (spec_to_json(d.spec) != spec_to_json(c.scene) ||
      static_cast<int>(d.train.size()) != c.train_images ||
      static_cast<int>(d.test.size()) != c.test_images) {
    throw std::runtime_error("dataset at " + dir.string() +
                             " was generated from a different config; rerun synth");
  }
  return d;
}

TrainConfig effective_train(const RunConfig& c) {
  TrainConfig t = c.train;
  t.seed = c.seed;
  return t;
}

EvalOptions effective_eval(const RunConfig& c, const Switches& s) {
  EvalOptions e = c.eval;
  e.infer = c.train.infer;
  e.segmentation = s.seg_branch;
  return e;
}

const char* kLogHeader =
    "stage,iter,module,image,lr,loss,mil,refine,seg_branch,seg_from_det\n";

std::string log_rows(const StepLog& log) {
  std::string s;
  for (const auto& r : log) {
    s += stage_name(r.stage) + "," + std::to_string(r.iter) + "," + r.module + "," +
         std::to_string(r.image) + "," + fmt(r.lr) + "," + fmt(r.loss);
    if (r.module == "sdcn") {
      s += "," + fmt(r.terms.mil) + "," + fmt(r.terms.refine) + "," +
           fmt(r.terms.seg_branch) + "," + fmt(r.terms.seg_from_det);
    } else {
      s += ",,,,";
    }
    s += "\n";
  }
  return s;
}

void save_checkpoint_atomic(const fs::path& path, const Model& m, const TrainingState& st) {
  const fs::path tmp = path.string() + ".tmp";
  save_checkpoint(tmp, m, st);
  fs::rename(tmp, path);
}

bool training_finished(const TrainConfig& t, const TrainingState& st) {
  const bool classifier = !t.switches.seg_branch || st.classifier_done ||
                          st.classifier_iter >= t.classifier_max_iters;
  return classifier && st.pretrain_iter >= t.pretrain_iters &&
         st.collab_iter >= t.phase1_iters + t.phase2_iters;
}

json config_identity(const RunConfig& c) {
  json j = run_config_to_json(c);
  j.erase("output_dir");
  j.erase("checkpoint_every");
  return j;
}

struct Mean {
  double sum = 0.0;
  int n = 0;
  void add(std::optional<double> v) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  std::optional<double> value() const {
    if (n == 0) return std::nullopt;
    return sum / n;
  }
};

std::optional<double> mode2(const MetricsBundle& m) {
  if (!m.mean_modes) return std::nullopt;
  return (*m.mean_modes)[1];
}

std::optional<double> percent(std::optional<double> v) {
  if (!v) return std::nullopt;
  return 100.0 * *v;
}

json opt_json(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("run config: " + msg);
  };
  if (version != kRunConfigVersion) {
    fail("unsupported version " + std::to_string(version));
  }
  if (output_dir.empty()) fail("output_dir must not be empty");
  if (train_images < 1) fail("train_images must be positive");
  if (test_images < 0) fail("test_images must not be negative");
  if (ablation_seeds < 1) fail("ablation_seeds must be positive");
  if (checkpoint_every < 1) fail("checkpoint_every must be positive");
  scene.validate();
  net.validate();
  train.validate();
  if (scene.num_classes != net.num_classes || scene.width != net.image_width ||
      scene.height != net.image_height) {
    fail("scene and net disagree on classes or image size");
  }
  if (!(eval.seg_thresh > 0.0 && eval.seg_thresh < 1.0)) {
    fail("eval.seg_thresh must be in (0, 1)");
  }
}

json run_config_to_json(const RunConfig& c) {
  return {{"version", c.version},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"train_images", c.train_images},
          {"test_images", c.test_images},
          {"scene", spec_to_json(c.scene)},
          {"net", net_to_json(c.net)},
          {"train", train_to_json(c.train)},
          {"switches", switches_to_json(c.train.switches)},
          {"eval", {{"eleven_point", c.eval.eleven_point}, {"seg_thresh", c.eval.seg_thresh}}},
          {"ablation_seeds", c.ablation_seeds},
          {"checkpoint_every", c.checkpoint_every}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Fields f(j, "config");
  if (!j.is_object() || !j.contains("version")) {
    throw std::invalid_argument("config: missing version");
  }
  f.get("version", c.version);
  if (c.version != kRunConfigVersion) {
    throw std::invalid_argument("config: unsupported version " + std::to_string(c.version));
  }
  f.get("seed", c.seed);
  f.get("output_dir", c.output_dir);
  f.get("train_images", c.train_images);
  f.get("test_images", c.test_images);
  if (const json* s = f.sub("scene")) c.scene = spec_from_json(*s);
  if (const json* n = f.sub("net")) c.net = net_from_json(*n);
  if (const json* t = f.sub("train")) train_from_json(*t, c.train);
  if (const json* s = f.sub("switches")) c.train.switches = switches_from_json(*s);
  if (const json* e = f.sub("eval")) {
    Fields fe(*e, "eval");
    fe.get("eleven_point", c.eval.eleven_point);
    fe.get("seg_thresh", c.eval.seg_thresh);
    fe.finish();
  }
  f.get("ablation_seeds", c.ablation_seeds);
  f.get("checkpoint_every", c.checkpoint_every);
  f.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  const auto bytes = read_file(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

fs::path output_root(const RunConfig& c) {
  fs::path p(c.output_dir);
  const char* root = std::getenv("SDCN_OUTPUT_ROOT");
  if (root && *root && p.is_relative()) p = fs::path(root) / p;
  return p;
}

fs::path data_dir(const RunConfig& c) { return output_root(c) / "data"; }
fs::path train_dir(const RunConfig& c) { return output_root(c) / "train"; }

int cmd_synth(const RunConfig& c, std::ostream& out) {
  const Dataset d = generate_dataset(c.scene, c.train_images, c.test_images);
  const fs::path manifest = write_dataset(d, data_dir(c));
  out << "wrote " << d.train.size() << " train / " << d.test.size()
      << " test images to " << manifest.parent_path().string() << "\n";
  out << "digest " << dataset_digest(manifest) << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& c, const TrainOptions& options, std::ostream& out) {
  const Dataset data = load_matching_dataset(c, data_dir(c));
  const TrainConfig tc = effective_train(c);
  const fs::path dir = train_dir(c);
  const fs::path ckpt = dir / "checkpoint.bin";
  const fs::path log_path = dir / "log.csv";
  const fs::path marker = dir / "DIVERGED";

  Model model;
  TrainingState state;
  if (options.resume) {
    if (!fs::exists(ckpt)) throw std::runtime_error("nothing to resume at " + ckpt.string());
    const auto bytes = read_file(dir / "config.json");
    if (json::parse(bytes.begin(), bytes.end()) != config_identity(c)) {
      throw std::runtime_error("config differs from the one " + dir.string() +
                               " was started with");
    }
    model = load_checkpoint(ckpt, &state);
  } else {
    fs::create_directories(dir);
    model = init_model(c.net, c.seed);
    write_text(dir / "config.json", config_identity(c).dump(2) + "\n");
    write_text(log_path, kLogHeader);
    save_checkpoint_atomic(ckpt, model, state);
  }
  fs::remove(marker);

  std::optional<long> left = options.stop_after;
  while (!training_finished(tc, state)) {
    long chunk = c.checkpoint_every;
    if (left) chunk = std::min(chunk, *left);
    if (chunk <= 0) break;
    StepBudget budget{chunk};
    StepLog log;
    try {
      run_training(model, data.train, tc, state, &log, &budget);
    } catch (const NumericalError& e) {
      write_text(marker, std::string(e.what()) + "\nlast checkpoint: classifier " +
                             std::to_string(state.classifier_iter) + ", pretrain " +
                             std::to_string(state.pretrain_iter) + ", collaborative " +
                             std::to_string(state.collab_iter) + "\n");
      out << "diverged: " << e.what() << "\n"
          << "partial checkpoint kept at " << ckpt.string() << "\n";
      return kExitNumerical;
    }
    const long used = chunk - *budget.remaining;
    {
      std::ofstream f(log_path, std::ios::binary | std::ios::app);
      f << log_rows(log);
      if (!f) throw std::runtime_error("cannot append to " + log_path.string());
    }
    save_checkpoint_atomic(ckpt, model, state);
    if (left) *left -= used;
    if (used == 0) break;
  }
  if (training_finished(tc, state)) {
    out << "training complete: classifier " << state.classifier_iter << ", pretrain "
        << state.pretrain_iter << ", collaborative " << state.collab_iter
        << " iterations\n";
  } else {
    out << "stopped at classifier " << state.classifier_iter << ", pretrain "
        << state.pretrain_iter << ", collaborative " << state.collab_iter
        << "; continue with --resume\n";
  }
  out << "checkpoint " << ckpt.string() << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& c, const fs::path& checkpoint, const fs::path& dataset_dir,
             const fs::path& report_dir, std::ostream& out) {
  if (!fs::exists(checkpoint)) throw std::runtime_error("no checkpoint at " + checkpoint.string());
  const fs::path manifest = dataset_dir / "manifest.json";
  if (!fs::exists(manifest)) throw std::runtime_error("no dataset at " + dataset_dir.string());
  Model model = load_checkpoint(checkpoint, nullptr);
  const Dataset data = load_dataset(manifest);
  if (data.spec.num_classes != model.net.num_classes) {
    throw std::runtime_error("dataset and checkpoint disagree on the class count");
  }
  if (data.test.empty()) throw std::runtime_error("dataset has no test images");
  const EvalOutput r = evaluate_model(model, data.test, effective_eval(c, c.train.switches));
  fs::create_directories(report_dir);
  write_report(r.metrics, report_dir);
  write_text(report_dir / "detections.jsonl", detections_jsonl(r.detections));
  const MetricsBundle& m = r.metrics;
  out << "images " << m.images << " detections " << m.detections << "\n";
  out << "mAP " << fmt_fixed(percent(m.map), 2) << " CorLoc "
      << fmt_fixed(percent(m.mean_corloc), 2) << "\n";
  out << "detection pixels P " << fmt_fixed(m.det_pixels.precision) << " R "
      << fmt_fixed(m.det_pixels.recall) << "\n";
  if (c.train.switches.seg_branch) {
    out << "segmentation pixels P " << fmt_fixed(m.seg_pixels.precision) << " R "
        << fmt_fixed(m.seg_pixels.recall) << "\n";
  }
  out << "report " << report_dir.string() << "\n";
  return kExitOk;
}

int cmd_gradcheck(const std::string& flip, const std::vector<std::string>& only,
                  std::uint64_t seed, std::ostream& out) {
  GradSuiteOptions o;
  o.flip = flip;
  o.only = only;
  o.seed = seed;
  const GradSuiteReport r = run_grad_suite(o);
  int failed = 0;
  for (const auto& k : r.cases) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-24s %s  max_rel_err %.3e  tol %.0e  points %d  redrawn %d",
                  k.name.c_str(), k.passed ? "PASS" : "FAIL", k.max_rel_error, k.tolerance,
                  k.accepted, k.rejected);
    out << line;
    if (!k.passed && !k.worst_input.empty()) out << "  worst " << k.worst_input;
    out << "\n";
    if (!k.passed) ++failed;
  }
  out << r.cases.size() - failed << "/" << r.cases.size() << " passed in "
      << fmt_fixed(r.seconds, 1) << " s\n";
  return failed == 0 ? kExitOk : kExitNumerical;
}

AblationResult run_ablation(const RunConfig& c, const Dataset& data, std::ostream* progress) {
  AblationResult r;
  r.seeds = c.ablation_seeds;
  for (int row = 1; row <= 4; ++row) {
    for (int i = 0; i < c.ablation_seeds; ++i) {
      AblationRow a;
      a.row = row;
      a.switches = Switches::row(row);
      a.seed = c.seed + static_cast<std::uint64_t>(i);
      TrainConfig tc = c.train;
      tc.switches = a.switches;
      tc.seed = a.seed;
      Model model = init_model(c.net, a.seed);
      TrainingState state;
      run_training(model, data.train, tc, state);
      EvalOptions eo = effective_eval(c, a.switches);
      a.metrics = evaluate_model(model, data.test, eo).metrics;
      if (progress) {
        *progress << "row " << row << " seed " << a.seed << " mAP "
                  << fmt_fixed(percent(a.metrics.map), 2) << "\n";
      }
      r.runs.push_back(std::move(a));
    }
  }
  return r;
}

std::string ablation_csv(const AblationResult& r) {
  std::string s =
      "row,seg_branch,collab_s2d,collab_d2s,map,mode2,det_precision,det_recall,"
      "seg_precision,seg_recall,reference_map\n";
  for (int row = 1; row <= 4; ++row) {
    Mean map, m2, dp, dr, sp, sr;
    for (const auto& a : r.runs) {
      if (a.row != row) continue;
      map.add(percent(a.metrics.map));
      m2.add(mode2(a.metrics));
      dp.add(a.metrics.det_pixels.precision);
      dr.add(a.metrics.det_pixels.recall);
      sp.add(a.metrics.seg_pixels.precision);
      sr.add(a.metrics.seg_pixels.recall);
    }
    const Switches sw = Switches::row(row);
    s += std::to_string(row) + "," + (sw.seg_branch ? "1" : "0") + "," +
         (sw.collab_s2d ? "1" : "0") + "," + (sw.collab_d2s ? "1" : "0") + "," +
         fmt_fixed(map.value()) + "," + fmt_fixed(m2.value()) + "," +
         fmt_fixed(dp.value()) + "," + fmt_fixed(dr.value()) + "," +
         fmt_fixed(sp.value()) + "," + fmt_fixed(sr.value()) + "," +
         fmt_fixed(kReferenceMap[row - 1], 1) + "\n";
  }
  return s;
}

std::string ablation_seeds_csv(const AblationResult& r) {
  std::string s =
      "row,seed,map,corloc,mode1,mode2,mode3,mode4,mode5,det_precision,det_recall,"
      "seg_precision,seg_recall\n";
  for (const auto& a : r.runs) {
    const MetricsBundle& m = a.metrics;
    s += std::to_string(a.row) + "," + std::to_string(a.seed) + "," +
         fmt_fixed(percent(m.map)) + "," + fmt_fixed(percent(m.mean_corloc));
    for (int k = 0; k < kErrorModes; ++k) {
      s += "," + (m.mean_modes ? fmt_fixed((*m.mean_modes)[static_cast<std::size_t>(k)])
                               : std::string());
    }
    s += "," + fmt_fixed(m.det_pixels.precision) + "," + fmt_fixed(m.det_pixels.recall) +
         "," + fmt_fixed(m.seg_pixels.precision) + "," + fmt_fixed(m.seg_pixels.recall) +
         "\n";
  }
  return s;
}

json ablation_json(const AblationResult& r) {
  json runs = json::array();
  for (const auto& a : r.runs) {
    runs.push_back({{"row", a.row},
                    {"seed", a.seed},
                    {"switches", switches_to_json(a.switches)},
                    {"metrics", metrics_json(a.metrics)}});
  }
  json rows = json::array();
  for (int row = 1; row <= 4; ++row) {
    Mean map;
    for (const auto& a : r.runs) {
      if (a.row == row) map.add(percent(a.metrics.map));
    }
    rows.push_back({{"row", row},
                    {"switches", switches_to_json(Switches::row(row))},
                    {"map", opt_json(map.value())},
                    {"reference_map", kReferenceMap[row - 1]}});
  }
  // Reference pixel values (percent), for comparison only.
  const json reference_pixels = {
      {"detection", {{"recall", 62.9}, {"precision", 46.3}}},
      {"segmentation", {{"recall", 69.7}, {"precision", 35.4}}}};
  return {{"seeds", r.seeds},
          {"rows", rows},
          {"runs", runs},
          {"reference_pixels", reference_pixels}};
}

int cmd_ablate(const RunConfig& c, std::ostream& out) {
  const Dataset data = load_matching_dataset(c, data_dir(c));
  if (data.test.empty()) throw std::runtime_error("ablation needs test images");
  const AblationResult r = run_ablation(c, data, &out);
  const fs::path dir = output_root(c) / "ablate";
  fs::create_directories(dir);
  const std::string csv = ablation_csv(r);
  write_text(dir / "ablation.csv", csv);
  write_text(dir / "ablation_seeds.csv", ablation_seeds_csv(r));
  write_text(dir / "ablation.json", ablation_json(r).dump(2) + "\n");
  out << csv;
  return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Segmentation-detection collaborative training on synthetic scenes", "sdcn"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string switches;
  auto add_common = [&](CLI::App* sub, bool with_switches) {
    sub->add_option("--config", config_path, "Run config JSON (defaults when omitted)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "Training seed (overrides seed)");
    if (with_switches) {
      sub->add_option("--switches", switches,
                      "Comma list of seg,s2d,d2s, or none (overrides switches)");
    }
  };

  CLI::App* synth = app.add_subcommand("synth", "Generate the synthetic dataset");
  add_common(synth, false);

  CLI::App* train = app.add_subcommand("train", "Run the three training stages");
  add_common(train, true);
  bool resume = false;
  std::optional<long> stop_after;
  train->add_flag("--resume", resume, "Continue from the checkpoint in the output directory");
  train->add_option("--stop-after", stop_after, "Stop after this many iterations")
      ->check(CLI::NonNegativeNumber);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_common(eval, true);
  std::string checkpoint;
  std::string dataset;
  std::string report;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/train/checkpoint.bin)");
  eval->add_option("--data", dataset, "Dataset directory (default <out>/data)");
  eval->add_option("--report", report, "Report directory (default <out>/eval)");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  std::string flip;
  std::vector<std::string> only;
  std::uint64_t grad_seed = 0;
  gradcheck->add_option("--flip", flip, "Negate the gradient of this check (fault injection)");
  gradcheck->add_option("--only", only, "Run only these checks");
  gradcheck->add_option("--seed", grad_seed, "Seed of the random points");

  CLI::App* ablate = app.add_subcommand("ablate", "Train and evaluate the four ablation rows");
  add_common(ablate, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gradcheck->parsed()) return cmd_gradcheck(flip, only, grad_seed, out);

    RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (!out_dir.empty()) c.output_dir = out_dir;
    if (seed) c.seed = *seed;
    if (!switches.empty()) c.train.switches = Switches::parse(switches);
    c.validate();

    if (synth->parsed()) return cmd_synth(c, out);
    if (train->parsed()) return cmd_train(c, {resume, stop_after}, out);
    if (eval->parsed()) {
      const fs::path root = output_root(c);
      return cmd_eval(c, checkpoint.empty() ? train_dir(c) / "checkpoint.bin" : fs::path(checkpoint),
                      dataset.empty() ? data_dir(c) : fs::path(dataset),
                      report.empty() ? root / "eval" : fs::path(report), out);
    }
    if (ablate->parsed()) return cmd_ablate(c, out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace sdcn
