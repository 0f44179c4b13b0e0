#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "sdcn/losses.hpp"
#include "sdcn/model.hpp"
#include "sdcn/rng.hpp"

namespace sdcn {

namespace {

std::vector<std::string> sdcn_prefixes(bool with_seg) {
  std::vector<std::string> p{"extractor.", "midn.", "refine"};
  if (with_seg) p.push_back("seg.");
  return p;
}

void require_data(const std::vector<SyntheticSample>& data, const char* stage) {
  if (data.empty()) {
    throw std::invalid_argument(std::string(stage) + ": empty training set");
  }
}

void check_finite(double loss, const ParamStore& store, Stage stage, int iter,
                  const std::string& module, int image) {
  const std::string where = stage_name(stage) + " iteration " + std::to_string(iter) +
                            " (" + module + ", image " + std::to_string(image) + ")";
  if (!std::isfinite(loss)) {
    throw NumericalError("non-finite loss at " + where);
  }
  if (!store.all_finite()) {
    throw NumericalError("non-finite parameter after " + where);
  }
}

}  // namespace

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::kClassifier: return "classifier";
    case Stage::kPretrain: return "pretrain";
    case Stage::kCollaborative: return "collaborative";
  }
  return "unknown";
}

int sample_for_iter(std::uint64_t seed, Stage s, int iter, int dataset_size) {
  if (dataset_size <= 0) throw std::invalid_argument("sample_for_iter: empty dataset");
  const int epoch = iter / dataset_size;
  std::vector<int> order(static_cast<std::size_t>(dataset_size));
  std::iota(order.begin(), order.end(), 0);
  const std::uint64_t stream = mix_seed(seed, 100 + static_cast<std::uint64_t>(s));
  Rng rng(mix_seed(stream, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);
  return order[static_cast<std::size_t>(iter % dataset_size)];
}

bool StepBudget::take() {
  if (!remaining) return true;
  if (*remaining <= 0) return false;
  --*remaining;
  return true;
}

StepTerms train_step(Model& model, const SyntheticSample& sample,
                     const TrainConfig& config, const Switches& switches,
                     double lr, Stage stage, int iter, StepLog* log) {
  TrainConfig cfg = config;
  cfg.switches = switches;
  const Tensor image = network_input(sample);

  Tensor seg_probs;
  StepTerms terms;
  {
    const SdcnWeights w = bind_sdcn(model.sdcn, switches.seg_branch, true);
    ClassifierWeights fc;
    if (switches.seg_branch) fc = bind_classifier(model.classifier, false);
    const ForwardResult fr =
        sdcn_forward(w, fc, model, image, sample.labels, cfg);
    terms = fr.values();
    if (!std::isfinite(terms.total)) {
      throw NumericalError("non-finite loss at " + stage_name(stage) + " iteration " +
                           std::to_string(iter) + " (sdcn, image " +
                           std::to_string(sample.index) + ")");
    }
    backward(fr.total);
    if (fr.seg_probs) seg_probs = *fr.seg_probs;
  }
  const auto prefixes = sdcn_prefixes(switches.seg_branch);
  sgd_step(model.sdcn, {lr, config.momentum, config.weight_decay}, prefixes);
  check_finite(terms.total, model.sdcn, stage, iter, "sdcn", sample.index);
  if (log) log->push_back({stage, iter, "sdcn", sample.index, lr, terms.total, terms});

  if (switches.seg_branch) {
    double loss = 0.0;
    {
      const ClassifierWeights fc = bind_classifier(model.classifier, true);
      const Classifier classify = [&fc](const Var& img) {
        return classifier_forward(fc, img);
      };
      const Var lc = classifier_loss(Var::constant(image), seg_probs, classify,
                                     sample.labels);
      loss = lc.item();
      if (!std::isfinite(loss)) {
        throw NumericalError("non-finite classifier loss at " + stage_name(stage) +
                             " iteration " + std::to_string(iter));
      }
      backward(lc);
    }
    sgd_step(model.classifier, {config.classifier_lr, config.momentum, config.weight_decay});
    check_finite(loss, model.classifier, stage, iter, "classifier", sample.index);
    if (log) log->push_back({stage, iter, "classifier", sample.index,
                             config.classifier_lr, loss, {}});
  }
  return terms;
}

void train_classifier_stage(Model& model, const std::vector<SyntheticSample>& data,
                            const TrainConfig& config, TrainingState& state,
                            StepLog* log, StepBudget* budget) {
  require_data(data, "train_classifier_stage");
  const int n = static_cast<int>(data.size());
  const int window = config.classifier_plateau_window;
  while (!state.classifier_done && state.classifier_iter < config.classifier_max_iters) {
    if (budget && !budget->take()) return;
    const int iter = state.classifier_iter;
    const auto& sample =
        data[static_cast<std::size_t>(sample_for_iter(config.seed, Stage::kClassifier, iter, n))];
    double loss = 0.0;
    {
      const ClassifierWeights fc = bind_classifier(model.classifier, true);
      const Var l = bce(classifier_forward(fc, Var::constant(network_input(sample))),
                        sample.labels);
      loss = l.item();
      if (!std::isfinite(loss)) {
        throw NumericalError("non-finite loss at classifier iteration " +
                             std::to_string(iter));
      }
      backward(l);
    }
    sgd_step(model.classifier, {config.classifier_lr, config.momentum, config.weight_decay});
    check_finite(loss, model.classifier, Stage::kClassifier, iter, "classifier",
                 sample.index);
    if (log) log->push_back({Stage::kClassifier, iter, "classifier", sample.index,
                             config.classifier_lr, loss, {}});
    ++state.classifier_iter;
    if (window > 0) {
      state.classifier_window_sum += loss;
      if (state.classifier_iter % window == 0) {
        const double mean = state.classifier_window_sum / window;
        if (state.classifier_prev_window >= 0.0 &&
            state.classifier_prev_window - mean < config.classifier_plateau_tol) {
          state.classifier_done = true;
        }
        state.classifier_prev_window = mean;
        state.classifier_window_sum = 0.0;
      }
    }
  }
  state.classifier_done = true;
}

void pretrain_branches(Model& model, const std::vector<SyntheticSample>& data,
                       const TrainConfig& config, TrainingState& state,
                       StepLog* log, StepBudget* budget) {
  require_data(data, "pretrain_branches");
  Switches sw = config.switches;
  sw.collab_s2d = false;
  sw.collab_d2s = false;
  const int n = static_cast<int>(data.size());
  while (state.pretrain_iter < config.pretrain_iters) {
    if (budget && !budget->take()) return;
    const int iter = state.pretrain_iter;
    const auto& sample =
        data[static_cast<std::size_t>(sample_for_iter(config.seed, Stage::kPretrain, iter, n))];
    train_step(model, sample, config, sw, config.phase1_lr, Stage::kPretrain, iter, log);
    ++state.pretrain_iter;
  }
}

void train_collaborative(Model& model, const std::vector<SyntheticSample>& data,
                         const TrainConfig& config, TrainingState& state,
                         StepLog* log, StepBudget* budget) {
  require_data(data, "train_collaborative");
  const int n = static_cast<int>(data.size());
  const int total = config.phase1_iters + config.phase2_iters;
  while (state.collab_iter < total) {
    if (budget && !budget->take()) return;
    const int iter = state.collab_iter;
    const double lr = iter < config.phase1_iters ? config.phase1_lr : config.phase2_lr;
    const auto& sample = data[static_cast<std::size_t>(
        sample_for_iter(config.seed, Stage::kCollaborative, iter, n))];
    train_step(model, sample, config, config.switches, lr, Stage::kCollaborative, iter, log);
    ++state.collab_iter;
  }
}

void run_training(Model& model, const std::vector<SyntheticSample>& data,
                  const TrainConfig& config, TrainingState& state, StepLog* log,
                  StepBudget* budget) {
  config.validate();
  if (config.switches.seg_branch) {
    train_classifier_stage(model, data, config, state, log, budget);
    if (budget && budget->exhausted()) return;
  }
  pretrain_branches(model, data, config, state, log, budget);
  if (budget && budget->exhausted()) return;
  train_collaborative(model, data, config, state, log, budget);
}

}  // namespace sdcn
