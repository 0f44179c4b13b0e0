#ifndef SDCN_LOSSES_HPP_
#define SDCN_LOSSES_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "sdcn/autograd.hpp"
#include "sdcn/tensor.hpp"

namespace sdcn {

// Probability clamp used by every log-loss in the project.
inline constexpr double kProbEpsilon = 1e-7;

// -t ln p - (1-t) ln(1-p) with p clamped to [eps, 1-eps].
double bce(double pred, double target);
// d bce / d pred. Outside the clamp range it is evaluated at the boundary.
double bce_grad(double pred, double target);
// Sum of elementwise BCE terms.
Var bce(const Var& pred, const Tensor& target);

// -weight * ln probs[label]. probs must sum to 1 within 1e-6.
double weighted_ce(std::span<const double> probs, std::size_t label,
                   double weight);
// probs: B x K row distributions; sums the per-row weighted CE terms.
Var weighted_ce(const Var& probs, std::span<const std::size_t> labels,
                std::span<const double> weights);

// Number of pixels pooled: max(1, floor(fraction * n)).
std::size_t topk_count(std::size_t n, double fraction);
// Mean of the k largest entries. Equal values are ranked by lower flat index.
double topk_avg_pool(const Tensor& map, double fraction);
Var topk_avg_pool(const Var& map, double fraction);

// Pixel label marking "no supervision".
inline constexpr int kIgnoreLabel = -1;

// logits: K x H x W; labels: H*W entries in [0, K) or kIgnoreLabel.
// Mean over labelled pixels of -log softmax_k(logits)[label]; 0 when no pixel
// is labelled.
Var channel_cross_entropy(const Var& logits, std::span<const int> labels);

}  // namespace sdcn

#endif  // SDCN_LOSSES_HPP_
