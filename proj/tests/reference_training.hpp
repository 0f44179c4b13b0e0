#ifndef SDCN_TESTS_REFERENCE_TRAINING_HPP_
#define SDCN_TESTS_REFERENCE_TRAINING_HPP_

#include <vector>

#include "sdcn/model.hpp"

// Training loops assembled directly from the branch operations, without the
// switch-driven objective, the step function or the stage drivers. They are
// the baselines the collaborative trainer must reduce to.
namespace reference {

// Losses in the order they were computed, one per optimiser step.
struct Trajectory {
  std::vector<double> classifier;  // f^C steps, including the warm-up stage
  std::vector<double> sdcn;        // extractor + branch steps
};

// Plain multi-task model: classifier warm-up for classifier_max_iters steps
// (the plateau stop must be disabled), then L^S + lambda_mil L_mil +
// lambda_ref L_ref alternating with f^C steps, for pretrain_iters at
// phase1_lr followed by the phase1/phase2 schedule.
Trajectory train_multitask(sdcn::Model& model, const std::vector<sdcn::SyntheticSample>& data,
                           const sdcn::TrainConfig& config);

// Standalone two-stream MIDN on the extractor: lambda_mil L_mil only, the
// same learning-rate schedule, no f^C.
Trajectory train_midn(sdcn::Model& model, const std::vector<sdcn::SyntheticSample>& data,
                      const sdcn::TrainConfig& config);

}  // namespace reference

#endif  // SDCN_TESTS_REFERENCE_TRAINING_HPP_
