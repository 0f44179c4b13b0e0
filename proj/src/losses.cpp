#include "sdcn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sdcn {

double bce(double pred, double target) {
  const double p = std::clamp(pred, kProbEpsilon, 1.0 - kProbEpsilon);
  return -target * std::log(p) - (1.0 - target) * std::log(1.0 - p);
}

// Outside the clamp range the gradient is taken at the clamp boundary
// rather than zeroed, so a saturated prediction can still recover.
double bce_grad(double pred, double target) {
  const double p = std::clamp(pred, kProbEpsilon, 1.0 - kProbEpsilon);
  return -target / p + (1.0 - target) / (1.0 - p);
}

Var bce(const Var& pred, const Tensor& target) {
  if (pred.value().size() != target.size()) {
    throw std::invalid_argument("bce: prediction " + shape_string(pred.shape()) +
                                " vs target " + shape_string(target.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    total += bce(pred.value()[i], target[i]);
  }
  return Var::make(Tensor::scalar(total), {pred}, [target](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    const Tensor& p = self.input(0)->value;
    for (std::size_t i = 0; i < g->size(); ++i) {
      (*g)[i] += self.grad[0] * bce_grad(p[i], target[i]);
    }
  });
}

namespace {

double clamped_log(double p) { return std::log(std::max(p, kProbEpsilon)); }

}  // namespace

double weighted_ce(std::span<const double> probs, std::size_t label,
                   double weight) {
  if (label >= probs.size()) {
    throw std::out_of_range("weighted_ce: label " + std::to_string(label) +
                            " out of range for " +
                            std::to_string(probs.size()) + " classes");
  }
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-6) {
    throw std::invalid_argument("weighted_ce: probabilities sum to " +
                                std::to_string(total));
  }
  if (weight == 0.0) return 0.0;
  return -weight * clamped_log(probs[label]);
}

Var weighted_ce(const Var& probs, std::span<const std::size_t> labels,
                std::span<const double> weights) {
  if (probs.value().rank() != 2) {
    throw std::invalid_argument("weighted_ce: probs must be B x K");
  }
  const std::size_t rows = probs.shape()[0];
  const std::size_t k = probs.shape()[1];
  if (labels.size() != rows || weights.size() != rows) {
    throw std::invalid_argument("weighted_ce: labels/weights length mismatch");
  }
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    total += weighted_ce(
        std::span<const double>(probs.value().data() + r * k, k), labels[r],
        weights[r]);
  }
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  std::vector<double> wts(weights.begin(), weights.end());
  return Var::make(Tensor::scalar(total), {probs},
                   [lab = std::move(lab), wts = std::move(wts), k](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    const Tensor& p = self.input(0)->value;
    for (std::size_t r = 0; r < lab.size(); ++r) {
      const std::size_t idx = r * k + lab[r];
      if (wts[r] == 0.0 || p[idx] < kProbEpsilon) continue;
      (*g)[idx] += self.grad[0] * (-wts[r] / p[idx]);
    }
  });
}

std::size_t topk_count(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("topk fraction outside (0,1]");
  }
  const auto k = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(n, 1));
}

namespace {

std::vector<std::size_t> topk_indices(const Tensor& map, std::size_t k) {
  std::vector<std::size_t> idx(map.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                    idx.end(), [&](std::size_t a, std::size_t b) {
                      if (map[a] != map[b]) return map[a] > map[b];
                      return a < b;
                    });
  idx.resize(k);
  return idx;
}

}  // namespace

double topk_avg_pool(const Tensor& map, double fraction) {
  if (map.empty()) throw std::invalid_argument("topk_avg_pool: empty map");
  const std::size_t k = topk_count(map.size(), fraction);
  double s = 0.0;
  for (const auto i : topk_indices(map, k)) s += map[i];
  return s / static_cast<double>(k);
}

Var topk_avg_pool(const Var& map, double fraction) {
  if (map.value().empty()) {
    throw std::invalid_argument("topk_avg_pool: empty map");
  }
  const std::size_t k = topk_count(map.value().size(), fraction);
  auto idx = topk_indices(map.value(), k);
  double s = 0.0;
  for (const auto i : idx) s += map.value()[i];
  return Var::make(Tensor::scalar(s / static_cast<double>(k)), {map},
                   [idx = std::move(idx), k](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    const double v = self.grad[0] / static_cast<double>(k);
    for (const auto i : idx) (*g)[i] += v;
  });
}

Var channel_cross_entropy(const Var& logits, std::span<const int> labels) {
  if (logits.value().rank() != 3) {
    throw std::invalid_argument("channel_cross_entropy: logits must be K x H x W");
  }
  const std::size_t k = logits.shape()[0];
  const std::size_t plane = logits.shape()[1] * logits.shape()[2];
  if (labels.size() != plane) {
    throw std::invalid_argument("channel_cross_entropy: label count mismatch");
  }
  const Tensor& lv = logits.value();
  Tensor probs({k, plane}, 0.0);
  double total = 0.0;
  std::size_t labelled = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    const int label = labels[p];
    if (label == kIgnoreLabel) continue;
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw std::out_of_range("channel_cross_entropy: label out of range");
    }
    double mx = lv[p];
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, lv[c * plane + p]);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(lv[c * plane + p] - mx);
    for (std::size_t c = 0; c < k; ++c) {
      probs[c * plane + p] = std::exp(lv[c * plane + p] - mx) / z;
    }
    total += -(lv[label * plane + p] - mx - std::log(z));
    ++labelled;
  }
  if (labelled == 0) return Var::constant(Tensor::scalar(0.0));
  const double inv = 1.0 / static_cast<double>(labelled);
  std::vector<int> lab(labels.begin(), labels.end());
  return Var::make(Tensor::scalar(total * inv), {logits},
                   [probs = std::move(probs), lab = std::move(lab), k, plane,
                    inv](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    const double up = self.grad[0] * inv;
    for (std::size_t p = 0; p < plane; ++p) {
      if (lab[p] == kIgnoreLabel) continue;
      for (std::size_t c = 0; c < k; ++c) {
        const double target = static_cast<int>(c) == lab[p] ? 1.0 : 0.0;
        (*g)[c * plane + p] += up * (probs[c * plane + p] - target);
      }
    }
  });
}

}  // namespace sdcn
