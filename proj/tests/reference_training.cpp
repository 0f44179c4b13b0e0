#include "reference_training.hpp"

#include <stdexcept>
#include <string>

#include "sdcn/losses.hpp"
#include "sdcn/ops.hpp"

namespace reference {

using namespace sdcn;

namespace {

struct Schedule {
  Stage stage;
  int iter;
  double lr;
};

// Branch iterations: pretrain stage, then phase 1 and phase 2.
std::vector<Schedule> branch_schedule(const TrainConfig& c) {
  std::vector<Schedule> s;
  for (int i = 0; i < c.pretrain_iters; ++i) s.push_back({Stage::kPretrain, i, c.phase1_lr});
  for (int i = 0; i < c.phase1_iters + c.phase2_iters; ++i) {
    s.push_back({Stage::kCollaborative, i, i < c.phase1_iters ? c.phase1_lr : c.phase2_lr});
  }
  return s;
}

const SyntheticSample& pick(const std::vector<SyntheticSample>& data, const TrainConfig& c,
                            Stage stage, int iter) {
  return data[static_cast<std::size_t>(
      sample_for_iter(c.seed, stage, iter, static_cast<int>(data.size())))];
}

double classifier_step(Model& model, const Tensor& image, const Tensor* seg,
                       const Tensor& labels, const TrainConfig& c) {
  double loss = 0.0;
  {
    const ClassifierWeights fc = bind_classifier(model.classifier, true);
    const Classifier classify = [&fc](const Var& img) { return classifier_forward(fc, img); };
    const Var l = seg ? classifier_loss(Var::constant(image), *seg, classify, labels)
                      : bce(classify(Var::constant(image)), labels);
    loss = l.item();
    backward(l);
  }
  sgd_step(model.classifier, {c.classifier_lr, c.momentum, c.weight_decay});
  return loss;
}

// Extractor, proposal pooling and the MIDN scores for one image.
struct DetectionPath {
  Var features;
  Var pooled;
  Var midn;
};

DetectionPath detection_path(const SdcnWeights& w, const Model& model, const Var& input) {
  DetectionPath p;
  p.features = extractor_forward(w.extractor, input);
  p.pooled = pool_proposals(p.features, model.proposals, model.net.image_width,
                            model.net.image_height, model.net.proposal_context);
  p.midn = midn_forward(p.pooled, w.midn);
  return p;
}

}  // namespace

Trajectory train_multitask(Model& model, const std::vector<SyntheticSample>& data,
                           const TrainConfig& c) {
  if (c.classifier_plateau_window != 0) {
    throw std::invalid_argument("reference multitask: plateau stop must be off");
  }
  Trajectory t;
  for (int i = 0; i < c.classifier_max_iters; ++i) {
    const SyntheticSample& s = pick(data, c, Stage::kClassifier, i);
    t.classifier.push_back(classifier_step(model, network_input(s), nullptr, s.labels, c));
  }
  const std::vector<std::string> prefixes{"extractor.", "midn.", "refine", "seg."};
  for (const Schedule& step : branch_schedule(c)) {
    const SyntheticSample& s = pick(data, c, step.stage, step.iter);
    const Tensor image = network_input(s);
    Tensor seg_probs;
    {
      const SdcnWeights w = bind_sdcn(model.sdcn, true, true);
      const ClassifierWeights fc = bind_classifier(model.classifier, false);
      const Var input = Var::constant(image);
      const DetectionPath det = detection_path(w, model, input);
      const RefineScores refine = refine_forward(det.pooled, w.refine);
      const SegMap seg = seg_forward(det.features, w.seg);
      seg_probs = seg.probs.value();
      const Var mil = mil_loss(det.midn, s.labels);
      const auto targets = refinement_targets(det.midn.value(), refine, s.labels,
                                              model.proposals, c.kappa_iou);
      const Var ref = refinement_loss(refine, targets);
      const Classifier classify = [&fc](const Var& img) { return classifier_forward(fc, img); };
      const Var seg_loss = seg_branch_loss(seg, input, classify, s.labels, c.seg).total;
      const Var total = add(add(seg_loss, scale(mil, c.objective.lambda_mil)),
                            scale(ref, c.objective.lambda_ref));
      t.sdcn.push_back(total.item());
      backward(total);
    }
    sgd_step(model.sdcn, {step.lr, c.momentum, c.weight_decay}, prefixes);
    t.classifier.push_back(classifier_step(model, image, &seg_probs, s.labels, c));
  }
  return t;
}

Trajectory train_midn(Model& model, const std::vector<SyntheticSample>& data,
                      const TrainConfig& c) {
  Trajectory t;
  const std::vector<std::string> prefixes{"extractor.", "midn."};
  for (const Schedule& step : branch_schedule(c)) {
    const SyntheticSample& s = pick(data, c, step.stage, step.iter);
    {
      const SdcnWeights w = bind_sdcn(model.sdcn, false, true);
      const DetectionPath det = detection_path(w, model, Var::constant(network_input(s)));
      const Var total = scale(mil_loss(det.midn, s.labels), c.objective.lambda_mil);
      t.sdcn.push_back(total.item());
      backward(total);
    }
    sgd_step(model.sdcn, {step.lr, c.momentum, c.weight_decay}, prefixes);
  }
  return t;
}

}  // namespace reference
