#include "sdcn/gradsuite.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <stdexcept>
#include <utility>

#include "sdcn/collaboration.hpp"
#include "sdcn/detection.hpp"
#include "sdcn/gradcheck.hpp"
#include "sdcn/losses.hpp"
#include "sdcn/model.hpp"
#include "sdcn/ops.hpp"
#include "sdcn/rng.hpp"
#include "sdcn/segmentation.hpp"

namespace sdcn {

namespace {

struct Instance {
  LossFn fn;
  std::vector<GradInput> inputs;
};

using Builder = std::function<Instance(Rng&)>;

struct Check {
  std::string name;
  double tolerance;
  Builder build;
};

Tensor random_normal(Rng& rng, Shape shape, double stddev = 1.0) {
  Tensor t(std::move(shape), 0.0);
  for (auto& v : t.values()) v = rng.normal(0.0, stddev);
  return t;
}

Tensor random_uniform(Rng& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape), 0.0);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

BBox random_box(Rng& rng, int w, int h, int min_side) {
  const int bw = rng.uniform_int(min_side, w);
  const int bh = rng.uniform_int(min_side, h);
  const int x0 = rng.uniform_int(0, w - bw);
  const int y0 = rng.uniform_int(0, h - bh);
  return {x0, y0, x0 + bw, y0 + bh};
}

// Multi-label vector with at least one positive.
Tensor random_labels(Rng& rng, int n) {
  Tensor y({static_cast<std::size_t>(n)}, 0.0);
  for (auto& v : y.values()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  y[static_cast<std::size_t>(rng.uniform_int(0, n - 1))] = 1.0;
  return y;
}

// Tensor-valued outputs are reduced with a fixed random projection.
Var project(const Var& out, const Tensor& r) { return sum(mul(out, Var::constant(r))); }

Instance elementwise(Rng& rng, Shape shape, std::function<Var(const Var&)> op,
                     double lo, double hi) {
  Tensor r = random_normal(rng, shape);
  return {[op, r](const std::vector<Var>& in) { return project(op(in[0]), r); },
          {{"x", random_uniform(rng, shape, lo, hi)}}};
}

ClassifierWeights random_classifier(Rng& rng, std::size_t n, std::size_t cw) {
  return {Var::constant(random_normal(rng, {cw, 3, 3, 3}, 0.4)),
          Var::constant(random_normal(rng, {cw}, 0.1)),
          Var::constant(random_normal(rng, {2 * cw, cw, 3, 3}, 0.4)),
          Var::constant(random_normal(rng, {2 * cw}, 0.1)),
          Var::constant(random_normal(rng, {2 * cw, n}, 0.8)),
          Var::constant(random_normal(rng, {n}, 0.1))};
}

Classifier as_classifier(const ClassifierWeights& w) {
  return [w](const Var& img) { return classifier_forward(w, img); };
}

// The selection bias is not an input: a shared shift of every proposal's
// logit leaves the softmax over proposals unchanged, so its gradient is
// identically zero and differences only measure roundoff.
std::vector<GradInput> midn_inputs(Rng& rng, std::size_t b, std::size_t c,
                                   std::size_t n) {
  return {{"pooled", random_normal(rng, {b, c})},
          {"midn.cls.weight", random_normal(rng, {c, n}, 0.7)},
          {"midn.cls.bias", random_normal(rng, {n}, 0.3)},
          {"midn.sel.weight", random_normal(rng, {c, n}, 0.7)}};
}

MidnWeights midn_from(const std::vector<Var>& in) {
  const std::size_t n = in[2].value().size();
  return {in[1], in[2], in[3], Var::constant(Tensor({n}, 0.0))};
}

void add_refine_inputs(Rng& rng, std::vector<GradInput>& inputs, std::size_t c,
                       std::size_t n) {
  for (std::size_t h = 0; h < kRefineHeads; ++h) {
    const std::string base = "refine" + std::to_string(h + 1);
    inputs.push_back({base + ".weight", random_normal(rng, {c, n + 1}, 0.7)});
    inputs.push_back({base + ".bias", random_normal(rng, {n + 1}, 0.3)});
  }
}

RefineWeights refine_from(const std::vector<Var>& in, std::size_t first) {
  RefineWeights w;
  for (std::size_t h = 0; h < kRefineHeads; ++h) {
    w.weight[h] = in[first + 2 * h];
    w.bias[h] = in[first + 2 * h + 1];
  }
  return w;
}

// Proposals and the D^seg prior built from a random soft map, as training
// would produce them.
struct DetectionScene {
  std::vector<BBox> proposals;
  Tensor labels;
  Tensor dseg;
};

DetectionScene random_detection_scene(Rng& rng, std::size_t b, std::size_t n) {
  DetectionScene s;
  for (std::size_t i = 0; i < b; ++i) s.proposals.push_back(random_box(rng, 16, 16, 3));
  s.labels = random_labels(rng, static_cast<int>(n));
  const Tensor seg = random_uniform(rng, {n + 1, 8, 8}, 0.0, 1.0);
  s.dseg = build_dseg(seg, s.proposals, MapFrame{16, 16, 8, 8}, s.labels);
  return s;
}

std::vector<Check> all_checks() {
  std::vector<Check> checks;
  const double tol = 1e-4;

  // Ops.
  checks.push_back({"linear", tol, [](Rng& rng) {
    const Tensor r = random_normal(rng, {3, 2});
    return Instance{[r](const std::vector<Var>& in) {
                      return project(linear(in[0], in[1], in[2]), r);
                    },
                    {{"x", random_normal(rng, {3, 4})},
                     {"weight", random_normal(rng, {4, 2})},
                     {"bias", random_normal(rng, {2})}}};
  }});
  for (int stride : {1, 2}) {
    checks.push_back({stride == 1 ? "conv2d" : "conv2d_stride2", tol, [stride](Rng& rng) {
      const int out = stride == 1 ? 5 : 3;
      const Tensor r = random_normal(rng, {3, static_cast<std::size_t>(out),
                                           static_cast<std::size_t>(out)});
      return Instance{[r, stride](const std::vector<Var>& in) {
                        return project(conv2d(in[0], in[1], in[2], stride), r);
                      },
                      {{"x", random_normal(rng, {2, 5, 5})},
                       {"weight", random_normal(rng, {3, 2, 3, 3})},
                       {"bias", random_normal(rng, {3})}}};
    }});
  }
  checks.push_back({"relu", tol, [](Rng& rng) {
    return elementwise(rng, {12}, [](const Var& x) { return relu(x); }, -1.0, 1.0);
  }});
  checks.push_back({"sigmoid", tol, [](Rng& rng) {
    return elementwise(rng, {12}, [](const Var& x) { return sigmoid(x); }, -4.0, 4.0);
  }});
  for (std::size_t axis : {0, 1}) {
    checks.push_back({axis == 0 ? "softmax_axis0" : "softmax_axis1", tol, [axis](Rng& rng) {
      return elementwise(rng, {3, 4}, [axis](const Var& x) { return softmax(x, axis); },
                         -2.0, 2.0);
    }});
  }
  checks.push_back({"tensor_arithmetic", tol, [](Rng& rng) {
    const Tensor r = random_normal(rng, {4});
    return Instance{[r](const std::vector<Var>& in) {
                      const Var a = in[0];
                      const Var b = in[1];
                      const Var m = mul(add(a, b), sub(one_minus(a), scale(b, 0.3)));
                      const Var rows = sum_axis(reshape(m, {3, 4}), 0);
                      const std::array<Var, 2> terms{project(rows, r), sum(mul(a, a))};
                      const std::array<double, 2> w{1.0, 0.5};
                      return weighted_sum(terms, w);
                    },
                    {{"a", random_normal(rng, {12})}, {"b", random_normal(rng, {12})}}};
  }});
  checks.push_back({"concat_columns", tol, [](Rng& rng) {
    const Tensor r = random_normal(rng, {3, 5});
    return Instance{[r](const std::vector<Var>& in) {
                      return project(concat_columns(in[0], in[1]), r);
                    },
                    {{"a", random_normal(rng, {3, 2})}, {"b", random_normal(rng, {3, 3})}}};
  }});
  checks.push_back({"channel", tol, [](Rng& rng) {
    const Tensor r = random_normal(rng, {3, 3});
    return Instance{[r](const std::vector<Var>& in) { return project(channel(in[0], 1), r); },
                    {{"x", random_normal(rng, {3, 3, 3})}}};
  }});
  checks.push_back({"roi_mean_pool", tol, [](Rng& rng) {
    // The first box covers the map so no cell has a zero gradient.
    std::vector<BBox> cells{{0, 0, 5, 5}};
    for (int i = 0; i < 3; ++i) cells.push_back(random_box(rng, 5, 5, 1));
    const Tensor r = random_normal(rng, {4, 2});
    return Instance{[r, cells](const std::vector<Var>& in) {
                      return project(roi_mean_pool(in[0], cells), r);
                    },
                    {{"features", random_normal(rng, {2, 5, 5})}}};
  }});
  checks.push_back({"pool_proposals_context", tol, [](Rng& rng) {
    std::vector<BBox> boxes;
    for (int i = 0; i < 5; ++i) boxes.push_back(random_box(rng, 12, 12, 2));
    const Tensor r = random_normal(rng, {5, 4});
    return Instance{[r, boxes](const std::vector<Var>& in) {
                      return project(pool_proposals(in[0], boxes, 12, 12, 0.5), r);
                    },
                    {{"features", random_normal(rng, {2, 6, 6})}}};
  }});
  checks.push_back({"upsample_nearest", tol, [](Rng& rng) {
    const Tensor r = random_normal(rng, {2, 6, 5});
    return Instance{[r](const std::vector<Var>& in) {
                      return project(upsample_nearest(in[0], 6, 5), r);
                    },
                    {{"x", random_normal(rng, {2, 3, 3})}}};
  }});
  checks.push_back({"mask_multiply", tol, [](Rng& rng) {
    const Tensor r = random_normal(rng, {2, 4, 4});
    return Instance{[r](const std::vector<Var>& in) {
                      return project(mask_multiply(in[0], in[1]), r);
                    },
                    {{"image", random_normal(rng, {2, 4, 4})},
                     {"mask", random_uniform(rng, {4, 4}, 0.0, 1.0)}}};
  }});
  checks.push_back({"global_avg_pool", tol, [](Rng& rng) {
    const Tensor r = random_normal(rng, {3});
    return Instance{[r](const std::vector<Var>& in) {
                      return project(global_avg_pool(in[0]), r);
                    },
                    {{"x", random_normal(rng, {3, 4, 4})}}};
  }});
  checks.push_back({"topk_avg_pool", tol, [](Rng& rng) {
    return Instance{[](const std::vector<Var>& in) { return topk_avg_pool(in[0], 0.2); },
                    {{"map", random_uniform(rng, {5, 5}, 0.0, 1.0)}}};
  }});

  // Losses.
  checks.push_back({"bce", tol, [](Rng& rng) {
    Tensor target({6}, 0.0);
    for (auto& v : target.values()) v = rng.uniform() < 0.3 ? rng.uniform() : std::round(rng.uniform());
    return Instance{[target](const std::vector<Var>& in) { return bce(sigmoid(in[0]), target); },
                    {{"logits", random_uniform(rng, {6}, -4.0, 4.0)}}};
  }});
  checks.push_back({"weighted_ce", tol, [](Rng& rng) {
    std::vector<std::size_t> labels;
    std::vector<double> weights;
    for (int r = 0; r < 4; ++r) {
      labels.push_back(static_cast<std::size_t>(rng.uniform_int(0, 2)));
      weights.push_back(rng.uniform(0.1, 1.0));
    }
    return Instance{[labels, weights](const std::vector<Var>& in) {
                      return weighted_ce(softmax(in[0], 1), labels, weights);
                    },
                    {{"logits", random_normal(rng, {4, 3})}}};
  }});
  checks.push_back({"channel_cross_entropy", tol, [](Rng& rng) {
    std::vector<int> labels(16);
    for (auto& l : labels) l = rng.uniform() < 0.3 ? kIgnoreLabel : rng.uniform_int(0, 2);
    labels[0] = 1;
    return Instance{[labels](const std::vector<Var>& in) {
                      return channel_cross_entropy(in[0], labels);
                    },
                    {{"logits", random_normal(rng, {3, 4, 4})}}};
  }});
  checks.push_back({"mil_loss", tol, [](Rng& rng) {
    const Tensor y = random_labels(rng, 3);
    return Instance{[y](const std::vector<Var>& in) {
                      return mil_loss(midn_forward(in[0], midn_from(in)), y);
                    },
                    midn_inputs(rng, 5, 4, 3)};
  }});
  checks.push_back({"refinement_loss", tol, [](Rng& rng) {
    const DetectionScene s = random_detection_scene(rng, 6, 3);
    std::vector<GradInput> inputs{{"pooled", random_normal(rng, {6, 4})}};
    add_refine_inputs(rng, inputs, 4, 3);
    // Pseudo labels from a random instructor and the heads at this point.
    std::vector<Var> consts;
    for (const auto& g : inputs) consts.push_back(Var::constant(g.value));
    const RefineScores at = refine_forward(consts[0], refine_from(consts, 1));
    const Tensor instructor = random_uniform(rng, {6, 3}, 0.0, 1.0);
    const auto targets = refinement_targets(instructor, at, s.labels, s.proposals);
    return Instance{[targets](const std::vector<Var>& in) {
                      return refinement_loss(refine_forward(in[0], refine_from(in, 1)),
                                             targets);
                    },
                    std::move(inputs)};
  }});
  checks.push_back({"seg_adv_loss", tol, [](Rng& rng) {
    const ClassifierWeights fc = random_classifier(rng, 3, 2);
    const Tensor image = random_uniform(rng, {3, 8, 8}, -0.5, 0.5);
    const Tensor y = random_labels(rng, 3);
    std::size_t k = 3;  // background unless a positive class is drawn
    if (rng.uniform() < 0.7) {
      do {
        k = static_cast<std::size_t>(rng.uniform_int(0, 2));
      } while (y[k] < 0.5);
    }
    return Instance{[fc, image, y, k](const std::vector<Var>& in) {
                      return seg_adv_loss(sigmoid(in[0]), Var::constant(image),
                                          as_classifier(fc), y, k);
                    },
                    {{"mask_logits", random_normal(rng, {4, 4})}}};
  }});
  checks.push_back({"seg_cls_loss", tol, [](Rng& rng) {
    const double target = rng.uniform() < 0.5 ? 0.0 : 1.0;
    return Instance{[target](const std::vector<Var>& in) {
                      return seg_cls_loss(sigmoid(in[0]), target, 0.2);
                    },
                    {{"mask_logits", random_normal(rng, {5, 5})}}};
  }});
  checks.push_back({"seg_branch_loss", tol, [](Rng& rng) {
    const ClassifierWeights fc = random_classifier(rng, 2, 2);
    const Tensor image = random_uniform(rng, {3, 8, 8}, -0.5, 0.5);
    const Tensor y = random_labels(rng, 2);
    return Instance{[fc, image, y](const std::vector<Var>& in) {
                      SegMap seg{in[0], sigmoid(in[0])};
                      return seg_branch_loss(seg, Var::constant(image), as_classifier(fc), y)
                          .total;
                    },
                    {{"seg_logits", random_normal(rng, {3, 4, 4})}}};
  }});
  checks.push_back({"classifier_loss", tol, [](Rng& rng) {
    const Tensor image = random_uniform(rng, {3, 8, 8}, -0.5, 0.5);
    const Tensor seg = random_uniform(rng, {3, 4, 4}, 0.0, 1.0);
    const Tensor y = random_labels(rng, 2);
    std::vector<GradInput> inputs{
        {"classifier.conv1.weight", random_normal(rng, {2, 3, 3, 3}, 0.4)},
        {"classifier.conv1.bias", random_normal(rng, {2}, 0.1)},
        {"classifier.conv2.weight", random_normal(rng, {4, 2, 3, 3}, 0.4)},
        {"classifier.conv2.bias", random_normal(rng, {4}, 0.1)},
        {"classifier.fc.weight", random_normal(rng, {4, 2}, 0.8)},
        {"classifier.fc.bias", random_normal(rng, {2}, 0.1)}};
    return Instance{[image, seg, y](const std::vector<Var>& in) {
                      const ClassifierWeights w{in[0], in[1], in[2], in[3], in[4], in[5]};
                      return classifier_loss(Var::constant(image), seg, as_classifier(w), y);
                    },
                    std::move(inputs)};
  }});
  checks.push_back({"reweighted_mil", tol, [](Rng& rng) {
    const DetectionScene s = random_detection_scene(rng, 5, 3);
    return Instance{[s](const std::vector<Var>& in) {
                      return mil_loss(reweight(midn_forward(in[0], midn_from(in)), s.dseg),
                                      s.labels);
                    },
                    midn_inputs(rng, 5, 4, 3)};
  }});
  checks.push_back({"detection_from_seg", tol, [](Rng& rng) {
    const DetectionScene s = random_detection_scene(rng, 6, 3);
    std::vector<GradInput> inputs = midn_inputs(rng, 6, 4, 3);
    add_refine_inputs(rng, inputs, 4, 3);
    std::vector<Var> consts;
    for (const auto& g : inputs) consts.push_back(Var::constant(g.value));
    const Var inst = reweight(midn_forward(consts[0], midn_from(consts)), s.dseg);
    const RefineScores at = refine_forward(consts[0], refine_from(consts, 4));
    const auto targets = refinement_targets(inst.value(), at, s.labels, s.proposals);
    return Instance{[s, targets](const std::vector<Var>& in) {
                      const Var inst = reweight(midn_forward(in[0], midn_from(in)), s.dseg);
                      const Var ref =
                          refinement_loss(refine_forward(in[0], refine_from(in, 4)), targets);
                      return branch_loss(mil_loss(inst, s.labels), ref);
                    },
                    std::move(inputs)};
  }});
  checks.push_back({"seg_from_det_loss", tol, [](Rng& rng) {
    std::vector<BBox> proposals;
    for (int i = 0; i < 6; ++i) proposals.push_back(random_box(rng, 16, 16, 3));
    const Tensor y = random_labels(rng, 2);
    const Tensor det = random_uniform(rng, {6, 3}, 0.0, 1.0);
    const PixelLabels psi =
        psi_labels(build_sdet(det, proposals, MapFrame{16, 16, 4, 4}, y), 0.25);
    return Instance{[psi](const std::vector<Var>& in) {
                      return seg_from_det_loss(in[0], psi);
                    },
                    {{"seg_logits", random_normal(rng, {3, 4, 4})}}};
  }});

  // The whole objective through the toy networks: 8x8 image, N = 2, two
  // proposals, every collaboration switch on, targets frozen at the point.
  checks.push_back({"total_objective", 1e-3, [](Rng& rng) {
    NetConfig net;
    net.num_classes = 2;
    net.image_width = 8;
    net.image_height = 8;
    net.extractor_width = 4;
    net.seg_width = 3;
    net.classifier_width = 2;
    auto model = std::make_shared<Model>(init_model(net, rng.next()));
    model->proposals = {random_box(rng, 8, 8, 3), random_box(rng, 8, 8, 3)};
    // Every parameter is an input except the selection bias (see
    // midn_inputs), which stays a constant.
    std::vector<GradInput> inputs;
    for (const auto& name : model->sdcn.names()) {
      Tensor& v = model->sdcn.at(name).value;
      v = random_normal(rng, v.shape(), 0.5);
      if (name != "midn.sel.bias") inputs.push_back({name, v});
    }
    for (const auto& name : model->classifier.names()) {
      Tensor& v = model->classifier.at(name).value;
      v = random_normal(rng, v.shape(), 0.5);
    }
    const Tensor image = random_uniform(rng, {3, 8, 8}, -0.5, 0.5);
    const Tensor y = random_labels(rng, 2);
    TrainConfig config;
    config.switches = Switches::row(4);
    config.psi_keep = 0.25;

    std::vector<std::string> names;
    for (const auto& g : inputs) names.push_back(g.name);
    auto weights_of = [model, names](const std::vector<Var>& in) {
      std::map<std::string, Var> by_name;
      for (std::size_t i = 0; i < in.size(); ++i) by_name[names[i]] = in[i];
      return sdcn_weights(
          [&](const std::string& n) {
            const auto it = by_name.find(n);
            return it != by_name.end() ? it->second : model->sdcn.bind_const(n);
          },
          true);
    };
    const ClassifierWeights fc =
        classifier_weights([&](const std::string& n) { return model->classifier.bind_const(n); });
    std::vector<Var> consts;
    for (const auto& g : inputs) consts.push_back(Var::constant(g.value));
    auto frozen = std::make_shared<GeneratedTargets>(
        sdcn_forward(weights_of(consts), fc, *model, image, y, config).targets);
    return Instance{[model, weights_of, fc, image, y, config, frozen](const std::vector<Var>& in) {
                      return sdcn_forward(weights_of(in), fc, *model, image, y, config,
                                          frozen.get())
                          .total;
                    },
                    std::move(inputs)};
  }});
  return checks;
}

}  // namespace

bool GradSuiteReport::passed() const {
  return !cases.empty() &&
         std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed; });
}

std::vector<std::string> grad_suite_names() {
  std::vector<std::string> names;
  for (const auto& c : all_checks()) names.push_back(c.name);
  return names;
}

GradSuiteReport run_grad_suite(const GradSuiteOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<Check> checks = all_checks();
  auto known = [&](const std::string& name) {
    return std::any_of(checks.begin(), checks.end(),
                       [&](const Check& c) { return c.name == name; });
  };
  if (!options.flip.empty() && !known(options.flip)) {
    throw std::invalid_argument("grad suite: unknown check '" + options.flip + "'");
  }
  for (const auto& name : options.only) {
    if (!known(name)) throw std::invalid_argument("grad suite: unknown check '" + name + "'");
  }
  if (options.points < 1 || options.max_draws < options.points) {
    throw std::invalid_argument("grad suite: need 1 <= points <= max_draws");
  }

  GradSuiteReport report;
  for (std::size_t ci = 0; ci < checks.size(); ++ci) {
    const Check& check = checks[ci];
    if (!options.only.empty() &&
        std::find(options.only.begin(), options.only.end(), check.name) == options.only.end()) {
      continue;
    }
    GradSuiteCase result;
    result.name = check.name;
    result.tolerance = check.tolerance;
    Rng rng(mix_seed(options.seed, ci));
    const bool flip = options.flip == check.name;
    for (int draw = 0; draw < options.max_draws && result.accepted < options.points; ++draw) {
      Instance inst = check.build(rng);
      LossFn fn = inst.fn;
      if (flip) fn = [inner = inst.fn](const std::vector<Var>& in) { return flip_gradient(inner(in)); };
      const GradCheckReport r =
          grad_check(check.name, fn, std::move(inst.inputs), options.step, true);
      if (r.max_step_disagreement > options.smoothness_tol) {
        ++result.rejected;
        continue;
      }
      ++result.accepted;
      if (r.max_rel_error >= result.max_rel_error) {
        result.max_rel_error = r.max_rel_error;
        for (const auto& in : r.per_input) {
          if (in.max_rel_error == r.max_rel_error) result.worst_input = in.name;
        }
      }
    }
    result.passed = result.accepted == options.points && result.max_rel_error < check.tolerance;
    report.cases.push_back(std::move(result));
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace sdcn
