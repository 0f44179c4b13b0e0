#ifndef SDCN_MODEL_HPP_
#define SDCN_MODEL_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdcn/collaboration.hpp"
#include "sdcn/datasynth.hpp"
#include "sdcn/detection.hpp"
#include "sdcn/params.hpp"
#include "sdcn/segmentation.hpp"

// Toy networks (f^E, f^D, f^S, f^C), the per-iteration training step, the
// three training stages, inference and checkpoints.
namespace sdcn {

struct NetConfig {
  int num_classes = 3;
  int image_width = 32;
  int image_height = 32;
  int extractor_width = 16;  // f^E output channels; first layer uses half
  int seg_width = 16;
  int classifier_width = 8;  // f^C first layer; second layer uses twice this
  // Square windows covering parts (4-5 px) and bodies (14-20 px).
  std::vector<double> proposal_scales{5, 10, 14, 17, 20};
  std::vector<double> proposal_ratios{1.0};
  double proposal_stride = 0.3;
  // Ring width for context-contrast proposal pooling, as a fraction of the
  // box size; 0 pools the box mean only.
  double proposal_context = 0.5;

  void validate() const;
  // Width of the pooled proposal feature.
  int pooled_width() const {
    return proposal_context > 0.0 ? 2 * extractor_width : extractor_width;
  }
  int map_width() const { return (image_width + 1) / 2; }
  int map_height() const { return (image_height + 1) / 2; }
};

// The ablation switches. Detection is always on.
struct Switches {
  bool seg_branch = true;
  bool collab_s2d = true;  // segmentation re-weights detection (D^seg)
  bool collab_d2s = true;  // detection supervises segmentation (S^det)

  // Rows 1-4: det; det+seg; det+seg+s2d; det+seg+s2d+d2s.
  static Switches row(int r);
  // Comma-separated subset of {seg, s2d, d2s}; "none" or "" for det only.
  static Switches parse(const std::string& text);
  std::string to_string() const;
  bool collaborating() const { return collab_s2d || collab_d2s; }
  void validate() const;

  friend bool operator==(const Switches&, const Switches&) = default;
};

struct InferOptions {
  double score_thresh = 0.1;
  double nms_iou = 0.3;
};

struct TrainConfig {
  SegLossOptions seg;
  // The refinement loss is summed over all proposals, so its weight is
  // scaled down from 1 to keep it comparable to the image-level terms.
  ObjectiveWeights objective{1.0, 0.03, 0.1};
  DsegOptions dseg;
  double psi_keep = 0.10;
  double kappa_iou = 0.5;
  Switches switches;
  std::uint64_t seed = 0;

  double momentum = 0.9;
  double weight_decay = 0.0;
  double classifier_lr = 2e-3;
  int classifier_max_iters = 3000;
  int classifier_plateau_window = 300;  // 0 disables the plateau stop
  double classifier_plateau_tol = 1e-3;
  int pretrain_iters = 1000;  // run at phase1_lr
  int phase1_iters = 2000;
  double phase1_lr = 3e-3;
  int phase2_iters = 1500;
  double phase2_lr = 3e-4;
  InferOptions infer;

  void validate() const;
};

struct Model {
  NetConfig net;
  ParamStore sdcn;        // extractor.*, midn.*, refine.*, seg.*
  ParamStore classifier;  // classifier.*
  ProposalSet proposals;

  MapFrame frame() const;
};

// Deterministic in seed; every module draws from its own stream, so the
// detection weights do not depend on whether other modules are used.
Model init_model(const NetConfig& net, std::uint64_t seed);

// Name -> Var lookup used to assemble weights from a store or from plain
// leaves (gradient checks).
using WeightSource = std::function<Var(const std::string& name)>;

struct ExtractorWeights {
  std::array<Var, 3> weight;
  std::array<Var, 3> bias;
};

struct ClassifierWeights {
  Var conv1_weight, conv1_bias, conv2_weight, conv2_bias, fc_weight, fc_bias;
};

struct SdcnWeights {
  ExtractorWeights extractor;
  MidnWeights midn;
  RefineWeights refine;
  SegWeights seg;  // unset when the segmentation branch is off
};

std::vector<std::string> extractor_param_names();
std::vector<std::string> detection_param_names();  // midn.* and refine.*
std::vector<std::string> seg_param_names();
std::vector<std::string> classifier_param_names();

SdcnWeights sdcn_weights(const WeightSource& get, bool with_seg);
ClassifierWeights classifier_weights(const WeightSource& get);
SdcnWeights bind_sdcn(ParamStore& store, bool with_seg, bool trainable);
ClassifierWeights bind_classifier(ParamStore& store, bool trainable);

// Network input: bytes / 255 - 0.5, so a masked-out pixel reads as grey.
Tensor network_input(const SyntheticSample& sample);

Var extractor_forward(const ExtractorWeights& w, const Var& image);
Var classifier_forward(const ClassifierWeights& w, const Var& image);

// Values produced from one network state and frozen for the backward pass.
struct GeneratedTargets {
  std::optional<Tensor> dseg;
  std::array<PseudoLabels, kRefineHeads> kappa;
  std::optional<PixelLabels> psi;
};

struct StepTerms {
  double mil = 0.0;
  double refine = 0.0;
  double seg_branch = 0.0;
  double seg_from_det = 0.0;
  double total = 0.0;
};

struct ForwardResult {
  Var total;
  ObjectiveTerms terms;
  GeneratedTargets targets;
  std::optional<Tensor> seg_probs;  // S after this forward, if seg is on
  StepTerms values() const;
};

// One forward of the full objective L for an image. When frozen is given
// its targets are reused instead of being rebuilt from the current outputs.
ForwardResult sdcn_forward(const SdcnWeights& w, const ClassifierWeights& fc,
                           const Model& model, const Tensor& image,
                           const Tensor& labels, const TrainConfig& config,
                           const GeneratedTargets* frozen = nullptr);

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stage { kClassifier, kPretrain, kCollaborative };
std::string stage_name(Stage s);

struct StepRecord {
  Stage stage = Stage::kClassifier;
  int iter = 0;
  std::string module;  // "sdcn" or "classifier"
  int image = 0;
  double lr = 0.0;
  double loss = 0.0;
  StepTerms terms;  // sdcn steps only
};

// Counters that make training resumable at any step boundary.
struct TrainingState {
  int classifier_iter = 0;
  bool classifier_done = false;
  double classifier_window_sum = 0.0;
  double classifier_prev_window = -1.0;  // < 0 until one window completes
  int pretrain_iter = 0;
  int collab_iter = 0;

  friend bool operator==(const TrainingState&, const TrainingState&) = default;
};

// Image order for stage s: a fresh shuffle per epoch, pure in (seed, s, iter).
int sample_for_iter(std::uint64_t seed, Stage s, int iter, int dataset_size);

// Step budget shared across stages; each stage stops when it runs out.
struct StepBudget {
  std::optional<long> remaining;
  bool take();
  bool exhausted() const { return remaining && *remaining <= 0; }
};

using StepLog = std::vector<StepRecord>;

// Plain BCE(f^C(I), y) at classifier_lr until the mean loss over a window
// stops dropping by classifier_plateau_tol, or classifier_max_iters.
void train_classifier_stage(Model& model, const std::vector<SyntheticSample>& data,
                            const TrainConfig& config, TrainingState& state,
                            StepLog* log = nullptr, StepBudget* budget = nullptr);

// L^S + L^D with collaboration off for pretrain_iters at phase1_lr;
// f^C keeps alternating when the segmentation branch is on.
void pretrain_branches(Model& model, const std::vector<SyntheticSample>& data,
                       const TrainConfig& config, TrainingState& state,
                       StepLog* log = nullptr, StepBudget* budget = nullptr);

// Full objective under config.switches, phase1 then phase2 learning rate.
void train_collaborative(Model& model, const std::vector<SyntheticSample>& data,
                         const TrainConfig& config, TrainingState& state,
                         StepLog* log = nullptr, StepBudget* budget = nullptr);

// The three stages in order. Without the segmentation branch f^C is never
// trained, so its stage is skipped.
void run_training(Model& model, const std::vector<SyntheticSample>& data,
                  const TrainConfig& config, TrainingState& state,
                  StepLog* log = nullptr, StepBudget* budget = nullptr);

// SDCN step on one sample, then an f^C step if the segmentation branch is on.
// Throws NumericalError on a non-finite loss or parameter.
StepTerms train_step(Model& model, const SyntheticSample& sample,
                     const TrainConfig& config, const Switches& switches,
                     double lr, Stage stage, int iter, StepLog* log);

// Refinement-head average, per-class threshold and NMS. Reads only the
// extractor and refinement parameters.
std::vector<Detection> infer(Model& model, const Tensor& image,
                             const InferOptions& options, int image_id = 0);

// Per-class masks at image resolution: s_k > 0.5 after nearest upsampling.
std::vector<BinaryMask> predict_segmentation(Model& model, const Tensor& image,
                                             double thresh = 0.5);

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const TrainingState& state);
// Throws std::runtime_error on a malformed or truncated file.
Model load_checkpoint(const std::filesystem::path& path, TrainingState* state);

nlohmann::json net_to_json(const NetConfig& net);
NetConfig net_from_json(const nlohmann::json& j);

}  // namespace sdcn

#endif  // SDCN_MODEL_HPP_
