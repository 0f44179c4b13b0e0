#include "sdcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include "sdcn/ops.hpp"
#include "sdcn/rng.hpp"

namespace sdcn {

namespace {

// Stream salts; one per module so switches never shift another module's draws.
enum : std::uint64_t {
  kExtractorStream = 11,
  kMidnStream = 12,
  kRefineStream = 13,
  kSegStream = 14,
  kClassifierStream = 15,
};

Tensor gaussian(Rng& rng, Shape shape, double stddev) {
  Tensor t(std::move(shape), 0.0);
  for (auto& v : t.values()) v = rng.normal(0.0, stddev);
  return t;
}

void add_conv(ParamStore& store, Rng& rng, const std::string& name, int out,
              int in, int k) {
  const double fan_in = static_cast<double>(in) * k * k;
  const auto o = static_cast<std::size_t>(out);
  const auto i = static_cast<std::size_t>(in);
  const auto kk = static_cast<std::size_t>(k);
  store.add(name + ".weight", gaussian(rng, {o, i, kk, kk}, std::sqrt(2.0 / fan_in)));
  store.add(name + ".bias", Tensor({o}, 0.0));
}

void add_linear(ParamStore& store, Rng& rng, const std::string& name, int in,
                int out, double stddev) {
  const auto i = static_cast<std::size_t>(in);
  const auto o = static_cast<std::size_t>(out);
  store.add(name + ".weight", gaussian(rng, {i, o}, stddev));
  store.add(name + ".bias", Tensor({o}, 0.0));
}

const char* const kRefineNames[kRefineHeads] = {"refine1", "refine2", "refine3"};

}  // namespace

void NetConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("net config: " + msg);
  };
  if (num_classes < 1) fail("num_classes must be positive");
  if (image_width < 4 || image_height < 4) fail("image too small");
  if (extractor_width < 2 || extractor_width % 2 != 0) {
    fail("extractor_width must be even and >= 2");
  }
  if (seg_width < 1 || classifier_width < 1) fail("widths must be positive");
  if (proposal_scales.empty() || proposal_ratios.empty()) fail("no proposal shapes");
  if (!(proposal_stride > 0.0)) fail("proposal_stride must be positive");
  if (!(proposal_context >= 0.0)) fail("proposal_context must be non-negative");
}

Switches Switches::row(int r) {
  switch (r) {
    case 1: return {false, false, false};
    case 2: return {true, false, false};
    case 3: return {true, true, false};
    case 4: return {true, true, true};
    default: throw std::out_of_range("Switches::row: rows are 1..4");
  }
}

Switches Switches::parse(const std::string& text) {
  Switches s{false, false, false};
  if (text.empty() || text == "none") return s;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "seg") {
      s.seg_branch = true;
    } else if (item == "s2d") {
      s.collab_s2d = true;
    } else if (item == "d2s") {
      s.collab_d2s = true;
    } else {
      throw std::invalid_argument("unknown switch '" + item +
                                  "' (expected seg, s2d, d2s)");
    }
  }
  s.validate();
  return s;
}

std::string Switches::to_string() const {
  std::string out;
  auto append = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ",";
    out += name;
  };
  append(seg_branch, "seg");
  append(collab_s2d, "s2d");
  append(collab_d2s, "d2s");
  return out.empty() ? "none" : out;
}

void Switches::validate() const {
  if (collaborating() && !seg_branch) {
    throw std::invalid_argument("switches: collaboration needs the segmentation branch");
  }
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("train config: " + msg);
  };
  const std::pair<const char*, double> weights[] = {
      {"lambda_adv", seg.lambda_adv},         {"lambda_cls", seg.lambda_cls},
      {"lambda_seg", objective.lambda_seg},   {"lambda_mil", objective.lambda_mil},
      {"lambda_ref", objective.lambda_ref}};
  for (const auto& [name, l] : weights) {
    if (!(l >= 0.0)) fail(std::string(name) + " must be non-negative");
  }
  const std::pair<const char*, double> fractions[] = {{"topk_fraction", seg.topk_fraction},
                                                      {"psi_keep", psi_keep}};
  for (const auto& [name, f] : fractions) {
    if (!(f > 0.0 && f <= 1.0)) fail(std::string(name) + " must be in (0, 1]");
  }
  if (!(dseg.tau0 > 0.0)) fail("tau0 must be positive");
  if (!(dseg.bin_thresh > 0.0 && dseg.bin_thresh < 1.0)) {
    fail("bin_thresh must be in (0, 1)");
  }
  if (!(kappa_iou > 0.0 && kappa_iou <= 1.0)) fail("kappa_iou must be in (0, 1]");
  if (momentum < 0.0 || momentum >= 1.0) fail("momentum must be in [0, 1)");
  if (weight_decay < 0.0) fail("weight_decay must be non-negative");
  for (double lr : {classifier_lr, phase1_lr, phase2_lr}) {
    if (!(lr > 0.0)) fail("learning rates must be positive");
  }
  if (classifier_max_iters < 0 || pretrain_iters < 0 || phase1_iters < 0 ||
      phase2_iters < 0 || classifier_plateau_window < 0) {
    fail("iteration counts must be non-negative");
  }
  if (!(infer.score_thresh >= 0.0 && infer.score_thresh <= 1.0)) {
    fail("score_thresh must be in [0, 1]");
  }
  if (!(infer.nms_iou > 0.0 && infer.nms_iou <= 1.0)) fail("nms_iou must be in (0, 1]");
  switches.validate();
}

MapFrame Model::frame() const {
  return {net.image_width, net.image_height, net.map_width(), net.map_height()};
}

Model init_model(const NetConfig& net, std::uint64_t seed) {
  net.validate();
  Model m;
  m.net = net;
  m.proposals = generate_proposals(net.image_width, net.image_height,
                                   net.proposal_scales, net.proposal_ratios,
                                   net.proposal_stride);
  const int c = net.extractor_width;
  const int n = net.num_classes;
  {
    Rng rng(mix_seed(seed, kExtractorStream));
    add_conv(m.sdcn, rng, "extractor.conv1", c / 2, 3, 3);
    add_conv(m.sdcn, rng, "extractor.conv2", c, c / 2, 3);
    add_conv(m.sdcn, rng, "extractor.conv3", c, c, 3);
  }
  {
    Rng rng(mix_seed(seed, kMidnStream));
    add_linear(m.sdcn, rng, "midn.cls", net.pooled_width(), n, 0.01);
    add_linear(m.sdcn, rng, "midn.sel", net.pooled_width(), n, 0.01);
  }
  {
    Rng rng(mix_seed(seed, kRefineStream));
    for (const char* name : kRefineNames) add_linear(m.sdcn, rng, name, net.pooled_width(), n + 1, 0.01);
  }
  {
    Rng rng(mix_seed(seed, kSegStream));
    add_conv(m.sdcn, rng, "seg.conv1", net.seg_width, c, 1);
    add_conv(m.sdcn, rng, "seg.conv2", n + 1, net.seg_width, 1);
  }
  {
    Rng rng(mix_seed(seed, kClassifierStream));
    const int cw = net.classifier_width;
    add_conv(m.classifier, rng, "classifier.conv1", cw, 3, 3);
    add_conv(m.classifier, rng, "classifier.conv2", 2 * cw, cw, 3);
    add_linear(m.classifier, rng, "classifier.fc", 2 * cw, n, 0.01);
  }
  return m;
}

std::vector<std::string> extractor_param_names() {
  return {"extractor.conv1.weight", "extractor.conv1.bias",
          "extractor.conv2.weight", "extractor.conv2.bias",
          "extractor.conv3.weight", "extractor.conv3.bias"};
}

std::vector<std::string> detection_param_names() {
  std::vector<std::string> out{"midn.cls.weight", "midn.cls.bias",
                               "midn.sel.weight", "midn.sel.bias"};
  for (const char* name : kRefineNames) {
    out.push_back(std::string(name) + ".weight");
    out.push_back(std::string(name) + ".bias");
  }
  return out;
}

std::vector<std::string> seg_param_names() {
  return {"seg.conv1.weight", "seg.conv1.bias", "seg.conv2.weight", "seg.conv2.bias"};
}

std::vector<std::string> classifier_param_names() {
  return {"classifier.conv1.weight", "classifier.conv1.bias",
          "classifier.conv2.weight", "classifier.conv2.bias",
          "classifier.fc.weight",    "classifier.fc.bias"};
}

SdcnWeights sdcn_weights(const WeightSource& get, bool with_seg) {
  SdcnWeights w;
  for (std::size_t l = 0; l < 3; ++l) {
    const std::string base = "extractor.conv" + std::to_string(l + 1);
    w.extractor.weight[l] = get(base + ".weight");
    w.extractor.bias[l] = get(base + ".bias");
  }
  w.midn.cls_weight = get("midn.cls.weight");
  w.midn.cls_bias = get("midn.cls.bias");
  w.midn.sel_weight = get("midn.sel.weight");
  w.midn.sel_bias = get("midn.sel.bias");
  for (std::size_t h = 0; h < kRefineHeads; ++h) {
    w.refine.weight[h] = get(std::string(kRefineNames[h]) + ".weight");
    w.refine.bias[h] = get(std::string(kRefineNames[h]) + ".bias");
  }
  if (with_seg) {
    w.seg.conv1_weight = get("seg.conv1.weight");
    w.seg.conv1_bias = get("seg.conv1.bias");
    w.seg.conv2_weight = get("seg.conv2.weight");
    w.seg.conv2_bias = get("seg.conv2.bias");
  }
  return w;
}

ClassifierWeights classifier_weights(const WeightSource& get) {
  return {get("classifier.conv1.weight"), get("classifier.conv1.bias"),
          get("classifier.conv2.weight"), get("classifier.conv2.bias"),
          get("classifier.fc.weight"),    get("classifier.fc.bias")};
}

SdcnWeights bind_sdcn(ParamStore& store, bool with_seg, bool trainable) {
  return sdcn_weights(
      [&](const std::string& name) { return store.bind(name, trainable); }, with_seg);
}

ClassifierWeights bind_classifier(ParamStore& store, bool trainable) {
  return classifier_weights(
      [&](const std::string& name) { return store.bind(name, trainable); });
}

Tensor network_input(const SyntheticSample& sample) {
  Tensor t = sample.image();
  for (auto& v : t.values()) v -= 0.5;
  return t;
}

Var extractor_forward(const ExtractorWeights& w, const Var& image) {
  Var x = relu(conv2d(image, w.weight[0], w.bias[0], 1));
  x = relu(conv2d(x, w.weight[1], w.bias[1], 2));
  return relu(conv2d(x, w.weight[2], w.bias[2], 1));
}

Var classifier_forward(const ClassifierWeights& w, const Var& image) {
  Var x = relu(conv2d(image, w.conv1_weight, w.conv1_bias, 1));
  x = relu(conv2d(x, w.conv2_weight, w.conv2_bias, 2));
  const Var pooled = global_avg_pool(x);
  const Var row = reshape(pooled, {1, pooled.shape()[0]});
  const Var logits = linear(row, w.fc_weight, w.fc_bias);
  return sigmoid(reshape(logits, {logits.shape()[1]}));
}

StepTerms ForwardResult::values() const {
  auto v = [](const Var& x) { return x.defined() ? x.item() : 0.0; };
  return {v(terms.mil), v(terms.refine), v(terms.seg_branch),
          v(terms.seg_from_det), v(total)};
}

ForwardResult sdcn_forward(const SdcnWeights& w, const ClassifierWeights& fc,
                           const Model& model, const Tensor& image,
                           const Tensor& labels, const TrainConfig& config,
                           const GeneratedTargets* frozen) {
  const Switches& sw = config.switches;
  sw.validate();
  const MapFrame frame = model.frame();
  const Var input = Var::constant(image);
  const Var features = extractor_forward(w.extractor, input);
  const Var pooled = pool_proposals(features, model.proposals,
                                    model.net.image_width, model.net.image_height,
                                    model.net.proposal_context);
  const Var midn = midn_forward(pooled, w.midn);
  const RefineScores refine = refine_forward(pooled, w.refine);

  ForwardResult out;
  SegMap seg;
  if (sw.seg_branch) {
    seg = seg_forward(features, w.seg);
    out.seg_probs = seg.probs.value();
  }

  Var instructor = midn;
  if (sw.collab_s2d) {
    out.targets.dseg = frozen ? *frozen->dseg
                              : build_dseg(seg.probs.value(), model.proposals,
                                           frame, labels, config.dseg);
    instructor = reweight(midn, *out.targets.dseg);
  }
  out.terms.mil = mil_loss(instructor, labels);
  if (config.objective.lambda_ref != 0.0) {
    out.targets.kappa = frozen ? frozen->kappa
                               : refinement_targets(instructor.value(), refine, labels,
                                                    model.proposals, config.kappa_iou);
    out.terms.refine = refinement_loss(refine, out.targets.kappa);
  }
  if (sw.seg_branch) {
    const Classifier classify = [&fc](const Var& img) {
      return classifier_forward(fc, img);
    };
    out.terms.seg_branch = seg_branch_loss(seg, input, classify, labels, config.seg).total;
  }
  if (sw.collab_d2s) {
    out.targets.psi = frozen ? *frozen->psi
                             : psi_labels(build_sdet(refine.mean, model.proposals,
                                                     frame, labels),
                                          config.psi_keep);
    out.terms.seg_from_det = seg_from_det_loss(seg.logits, *out.targets.psi);
  }
  out.total = total_objective(out.terms, config.objective);
  return out;
}

std::vector<Detection> infer(Model& model, const Tensor& image,
                             const InferOptions& options, int image_id) {
  ExtractorWeights ew;
  for (std::size_t l = 0; l < 3; ++l) {
    const std::string base = "extractor.conv" + std::to_string(l + 1);
    ew.weight[l] = model.sdcn.bind_const(base + ".weight");
    ew.bias[l] = model.sdcn.bind_const(base + ".bias");
  }
  RefineWeights rw;
  for (std::size_t h = 0; h < kRefineHeads; ++h) {
    rw.weight[h] = model.sdcn.bind_const(std::string(kRefineNames[h]) + ".weight");
    rw.bias[h] = model.sdcn.bind_const(std::string(kRefineNames[h]) + ".bias");
  }
  const Var features = extractor_forward(ew, Var::constant(image));
  const Var pooled = pool_proposals(features, model.proposals,
                                    model.net.image_width, model.net.image_height,
                                    model.net.proposal_context);
  const Tensor scores = refine_forward(pooled, rw).mean;

  std::vector<Detection> out;
  const std::size_t rows = model.proposals.size();
  for (int k = 0; k < model.net.num_classes; ++k) {
    std::vector<BBox> boxes;
    std::vector<double> kept_scores;
    for (std::size_t i = 0; i < rows; ++i) {
      const double s = scores.at(i, static_cast<std::size_t>(k));
      if (s >= options.score_thresh) {
        boxes.push_back(model.proposals[i]);
        kept_scores.push_back(s);
      }
    }
    for (std::size_t j : nms(boxes, kept_scores, options.nms_iou)) {
      out.push_back({image_id, boxes[j], k, kept_scores[j]});
    }
  }
  return out;
}

std::vector<BinaryMask> predict_segmentation(Model& model, const Tensor& image,
                                             double thresh) {
  const SdcnWeights w = sdcn_weights(
      [&](const std::string& name) { return model.sdcn.bind_const(name); }, true);
  const Var features = extractor_forward(w.extractor, Var::constant(image));
  const SegMap seg = seg_forward(features, w.seg);
  const auto h = static_cast<std::size_t>(model.net.image_height);
  const auto wd = static_cast<std::size_t>(model.net.image_width);
  const Tensor up = upsample_nearest(seg.probs, h, wd).value();
  std::vector<BinaryMask> out;
  for (int k = 0; k < model.net.num_classes; ++k) {
    out.push_back(binarize(up, static_cast<std::size_t>(k), thresh));
  }
  return out;
}

nlohmann::json net_to_json(const NetConfig& net) {
  return {{"num_classes", net.num_classes},
          {"image_width", net.image_width},
          {"image_height", net.image_height},
          {"extractor_width", net.extractor_width},
          {"seg_width", net.seg_width},
          {"classifier_width", net.classifier_width},
          {"proposal_scales", net.proposal_scales},
          {"proposal_ratios", net.proposal_ratios},
          {"proposal_stride", net.proposal_stride},
          {"proposal_context", net.proposal_context}};
}

NetConfig net_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "num_classes", "image_width", "image_height", "extractor_width",
      "seg_width", "classifier_width", "proposal_scales", "proposal_ratios",
      "proposal_stride", "proposal_context"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("net config: unknown key '" + key + "'");
  }
  NetConfig n;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("num_classes", n.num_classes);
  get("image_width", n.image_width);
  get("image_height", n.image_height);
  get("extractor_width", n.extractor_width);
  get("seg_width", n.seg_width);
  get("classifier_width", n.classifier_width);
  get("proposal_scales", n.proposal_scales);
  get("proposal_ratios", n.proposal_ratios);
  get("proposal_stride", n.proposal_stride);
  get("proposal_context", n.proposal_context);
  n.validate();
  return n;
}

}  // namespace sdcn
