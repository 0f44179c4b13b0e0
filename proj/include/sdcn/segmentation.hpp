#ifndef SDCN_SEGMENTATION_HPP_
#define SDCN_SEGMENTATION_HPP_

#include <cstddef>
#include <functional>
#include <vector>

#include "sdcn/autograd.hpp"
#include "sdcn/tensor.hpp"

// Segmentation branch trained against an image classifier by masking:
// per-class soft maps, adversarial loss, response constraint, and the
// classifier's own objective.
namespace sdcn {

struct SegWeights {
  Var conv1_weight;
  Var conv1_bias;
  Var conv2_weight;  // (N+1) x C x K x K
  Var conv2_bias;
};

// S in [0,1]^{(N+1) x h x w}; channel N is background.
struct SegMap {
  Var logits;
  Var probs;

  std::size_t channels() const { return probs.shape()[0]; }
  Var channel(std::size_t k) const;
};

SegMap seg_forward(const Var& features, const SegWeights& weights);

// Image classifier f^C: image (C x H x W) -> N sigmoid probabilities.
using Classifier = std::function<Var(const Var& image)>;

// image * s_k with s_k resized to the image by nearest neighbour.
Var apply_mask(const Var& image, const Var& mask);

struct AdversarialTargets {
  Tensor masked;  // target for f^C(I * s_k)
  Tensor erased;  // target for f^C(I * (1 - s_k))
};

// k < N: masked = one-hot(k), erased = y with k cleared.
// k == N (background): masked = 0, erased = y.
// Throws std::invalid_argument for a negative foreground class.
AdversarialTargets adversarial_targets(const Tensor& labels, std::size_t k);

// BCE(f^C(I * s_k), masked) + BCE(f^C(I * (1 - s_k)), erased). The caller
// passes a classifier bound to frozen parameters.
Var seg_adv_loss(const Var& mask, const Var& image, const Classifier& fc,
                 const Tensor& labels, std::size_t k);

// BCE(mean of the top fraction of s_k, target).
Var seg_cls_loss(const Var& mask, double target, double fraction = 0.2);

struct SegLossOptions {
  double lambda_adv = 1.0;
  double lambda_cls = 0.1;
  double topk_fraction = 0.2;
};

struct SegLossTerms {
  Var adversarial;  // sum over positive classes plus background
  Var response;     // sum over all N+1 channels
  Var total;
  // Target used for each channel's response constraint, in channel order.
  std::vector<double> response_targets;
};

SegLossTerms seg_branch_loss(const SegMap& seg, const Var& image,
                             const Classifier& fc, const Tensor& labels,
                             const SegLossOptions& options = {});

// BCE(f^C(I), y) + sum over positive k of BCE(f^C(I * (1 - s_k)), y).
// seg is a plain tensor, so no gradient can reach the segmentation branch.
Var classifier_loss(const Var& image, const Tensor& seg, const Classifier& fc,
                    const Tensor& labels);

}  // namespace sdcn

#endif  // SDCN_SEGMENTATION_HPP_
