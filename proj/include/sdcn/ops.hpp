#ifndef SDCN_OPS_HPP_
#define SDCN_OPS_HPP_

#include <cstddef>
#include <span>

#include "sdcn/autograd.hpp"
#include "sdcn/geometry.hpp"
#include "sdcn/tensor.hpp"

// Differentiable building blocks. Every op computes its value eagerly and
// records a backward closure when any input requires a gradient.
namespace sdcn {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
// Elementwise product of equal shapes.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
// 1 - a
Var one_minus(const Var& a);
// Sum of all elements, scalar result.
Var sum(const Var& a);
// Reduces one axis away.
Var sum_axis(const Var& a, std::size_t axis);
// Scalar-weighted sum of scalar terms; zero-weight terms are skipped.
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);

// (B x C) * (C x O) + bias(O)
Var linear(const Var& x, const Var& weight, const Var& bias);
// x: C x H x W, weight: O x C x K x K (K odd), bias: O; zero padding K/2.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride);

Var relu(const Var& a);
Var sigmoid(const Var& a);

// Numerically stable softmax along one axis of a tensor of any rank.
Tensor softmax(const Tensor& t, std::size_t axis);
Var softmax(const Var& a, std::size_t axis);

// features: C x H x W. cells: boxes in feature-grid coordinates.
// Output B x C holding the per-box channel means.
Var roi_mean_pool(const Var& features, std::span<const BBox> cells);

// (B x C1) and (B x C2) -> B x (C1 + C2).
Var concat_columns(const Var& a, const Var& b);

// Nearest-neighbour resize of the trailing two axes to out_h x out_w.
Var upsample_nearest(const Var& a, std::size_t out_h, std::size_t out_w);
// image: C x H x W, mask: H x W; pixel-wise product broadcast over channels.
Var mask_multiply(const Var& image, const Var& mask);
// C x H x W -> C
Var global_avg_pool(const Var& a);
// Same values under a new shape of equal size.
Var reshape(const Var& a, const Shape& shape);
// Sign-flipped gradient, identity value. Only used to plant a known fault
// in gradient-check fixtures.
Var flip_gradient(const Var& a);
// K x H x W -> H x W slice k.
Var channel(const Var& a, std::size_t k);

}  // namespace sdcn

#endif  // SDCN_OPS_HPP_
