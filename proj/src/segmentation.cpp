#include "sdcn/segmentation.hpp"

#include <array>
#include <stdexcept>
#include <string>

#include "sdcn/losses.hpp"
#include "sdcn/ops.hpp"

namespace sdcn {

Var SegMap::channel(std::size_t k) const { return sdcn::channel(probs, k); }

SegMap seg_forward(const Var& features, const SegWeights& weights) {
  const Var hidden =
      relu(conv2d(features, weights.conv1_weight, weights.conv1_bias, 1));
  SegMap out;
  out.logits = conv2d(hidden, weights.conv2_weight, weights.conv2_bias, 1);
  out.probs = sigmoid(out.logits);
  return out;
}

Var apply_mask(const Var& image, const Var& mask) {
  if (image.value().rank() != 3 || mask.value().rank() != 2) {
    throw std::invalid_argument("apply_mask: expected C x H x W image and h x w mask");
  }
  const std::size_t h = image.shape()[1];
  const std::size_t w = image.shape()[2];
  if (mask.shape()[0] == h && mask.shape()[1] == w) {
    return mask_multiply(image, mask);
  }
  return mask_multiply(image, upsample_nearest(mask, h, w));
}

AdversarialTargets adversarial_targets(const Tensor& labels, std::size_t k) {
  const std::size_t n = labels.size();
  if (k > n) throw std::out_of_range("adversarial_targets: channel out of range");
  AdversarialTargets t{Tensor({n}, 0.0), labels};
  if (k == n) return t;
  if (labels[k] <= 0.5) {
    throw std::invalid_argument("adversarial_targets: class " +
                                std::to_string(k) + " is not present");
  }
  t.masked[k] = 1.0;
  t.erased[k] = 0.0;
  return t;
}

Var seg_adv_loss(const Var& mask, const Var& image, const Classifier& fc,
                 const Tensor& labels, std::size_t k) {
  const AdversarialTargets t = adversarial_targets(labels, k);
  const Var kept = bce(fc(apply_mask(image, mask)), t.masked);
  const Var erased = bce(fc(apply_mask(image, one_minus(mask))), t.erased);
  return add(kept, erased);
}

Var seg_cls_loss(const Var& mask, double target, double fraction) {
  const Var pooled = topk_avg_pool(mask, fraction);
  return bce(pooled, Tensor({1}, std::vector<double>{target}));
}

SegLossTerms seg_branch_loss(const SegMap& seg, const Var& image,
                             const Classifier& fc, const Tensor& labels,
                             const SegLossOptions& options) {
  const std::size_t n = labels.size();
  if (seg.channels() != n + 1) {
    throw std::invalid_argument("seg_branch_loss: expected N+1 channels");
  }
  SegLossTerms out;
  std::vector<Var> adv_terms;
  std::vector<Var> cls_terms;
  for (std::size_t k = 0; k <= n; ++k) {
    const Var s_k = seg.channel(k);
    const bool background = k == n;
    if ((background || labels[k] > 0.5) && options.lambda_adv != 0.0) {
      adv_terms.push_back(seg_adv_loss(s_k, image, fc, labels, k));
    }
    const double target = background ? 1.0 : labels[k];
    out.response_targets.push_back(target);
    if (options.lambda_cls != 0.0) {
      cls_terms.push_back(seg_cls_loss(s_k, target, options.topk_fraction));
    }
  }
  const std::vector<double> adv_ones(adv_terms.size(), 1.0);
  const std::vector<double> cls_ones(cls_terms.size(), 1.0);
  out.adversarial = weighted_sum(adv_terms, adv_ones);
  out.response = weighted_sum(cls_terms, cls_ones);
  const std::array<Var, 2> parts{out.adversarial, out.response};
  const std::array<double, 2> w{options.lambda_adv, options.lambda_cls};
  out.total = weighted_sum(parts, w);
  return out;
}

Var classifier_loss(const Var& image, const Tensor& seg, const Classifier& fc,
                    const Tensor& labels) {
  const std::size_t n = labels.size();
  if (seg.rank() != 3 || seg.dim(0) != n + 1) {
    throw std::invalid_argument("classifier_loss: expected (N+1) x h x w map");
  }
  std::vector<Var> terms{bce(fc(image), labels)};
  const Var maps = Var::constant(seg);
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] <= 0.5) continue;
    const Var erased = apply_mask(image, one_minus(channel(maps, k)));
    terms.push_back(bce(fc(erased), labels));
  }
  const std::vector<double> ones(terms.size(), 1.0);
  return weighted_sum(terms, ones);
}

}  // namespace sdcn
