#include "sdcn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sdcn {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

void require_rank(const Var& a, std::size_t rank, const char* op) {
  if (a.value().rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " +
                                std::to_string(rank) + ", got " +
                                shape_string(a.shape()));
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return Var::make(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t j = 0; j < 2; ++j) {
      if (Tensor* g = grad_buffer(self.input(j))) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return Var::make(std::move(out), {a, b}, [](Node& self) {
    if (Tensor* g = grad_buffer(self.input(0))) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (Tensor* g = grad_buffer(self.input(1))) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return Var::make(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.input(0)->value;
    const Tensor& bv = self.input(1)->value;
    if (Tensor* g = grad_buffer(self.input(0))) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (Tensor* g = grad_buffer(self.input(1))) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double c) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= c;
  return Var::make(std::move(out), {a}, [c](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += c * self.grad[i];
  });
}

Var one_minus(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = 1.0 - v;
  return Var::make(std::move(out), {a}, [](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (const double v : a.value().values()) s += v;
  return Var::make(Tensor::scalar(s), {a}, [](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    const double up = self.grad[0];
    for (auto& v : g->values()) v += up;
  });
}

namespace {

struct AxisLayout {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisLayout axis_layout(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw std::invalid_argument("axis " + std::to_string(axis) +
                                " out of range for " + shape_string(shape));
  }
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  l.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

}  // namespace

Var sum_axis(const Var& a, std::size_t axis) {
  const AxisLayout l = axis_layout(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape, 0.0);
  const Tensor& av = a.value();
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t k = 0; k < l.len; ++k) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        out[o * l.inner + i] += av[(o * l.len + k) * l.inner + i];
      }
    }
  }
  return Var::make(std::move(out), {a}, [l](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t k = 0; k < l.len; ++k) {
        for (std::size_t i = 0; i < l.inner; ++i) {
          (*g)[(o * l.len + k) * l.inner + i] += self.grad[o * l.inner + i];
        }
      }
    }
  });
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
  if (terms.size() != weights.size()) {
    throw std::invalid_argument("weighted_sum: size mismatch");
  }
  std::vector<Var> used;
  std::vector<double> w;
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (weights[i] == 0.0 || !terms[i].defined()) continue;
    used.push_back(terms[i]);
    w.push_back(weights[i]);
    total += weights[i] * terms[i].item();
  }
  return Var::make(Tensor::scalar(total), used, [w](Node& self) {
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (Tensor* g = grad_buffer(self.input(j))) (*g)[0] += w[j] * self.grad[0];
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::size_t rows = x.shape()[0];
  const std::size_t in = x.shape()[1];
  const std::size_t outd = weight.shape()[1];
  if (weight.shape()[0] != in || bias.value().size() != outd) {
    throw std::invalid_argument("linear: incompatible shapes " +
                                shape_string(x.shape()) + " " +
                                shape_string(weight.shape()));
  }
  Tensor out({rows, outd}, 0.0);
  const double* xv = x.value().data();
  const double* wv = weight.value().data();
  const double* bv = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* orow = out.data() + r * outd;
    for (std::size_t o = 0; o < outd; ++o) orow[o] = bv[o];
    for (std::size_t c = 0; c < in; ++c) {
      const double xc = xv[r * in + c];
      const double* wrow = wv + c * outd;
      for (std::size_t o = 0; o < outd; ++o) orow[o] += xc * wrow[o];
    }
  }
  return Var::make(std::move(out), {x, weight, bias},
                   [rows, in, outd](Node& self) {
    const double* up = self.grad.data();
    const Tensor& xv = self.input(0)->value;
    const Tensor& wv = self.input(1)->value;
    if (Tensor* g = grad_buffer(self.input(0))) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < in; ++c) {
          double acc = 0.0;
          for (std::size_t o = 0; o < outd; ++o) {
            acc += up[r * outd + o] * wv[c * outd + o];
          }
          (*g)[r * in + c] += acc;
        }
      }
    }
    if (Tensor* g = grad_buffer(self.input(1))) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < in; ++c) {
          const double xc = xv[r * in + c];
          for (std::size_t o = 0; o < outd; ++o) {
            (*g)[c * outd + o] += xc * up[r * outd + o];
          }
        }
      }
    }
    if (Tensor* g = grad_buffer(self.input(2))) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < outd; ++o) (*g)[o] += up[r * outd + o];
      }
    }
  });
}

namespace {

struct ConvGeom {
  int channels, height, width;
  int out_channels, kernel, stride, pad;
  int out_h, out_w;

  // Output index range [lo, hi) whose input tap (o*stride + k - pad) is in
  // [0, extent).
  static std::pair<int, int> valid_range(int k, int pad, int stride,
                                         int extent, int out_extent) {
    const int off = k - pad;
    int lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
    int hi = (extent - 1 - off) >= 0 ? (extent - 1 - off) / stride + 1 : 0;
    lo = std::min(lo, out_extent);
    hi = std::clamp(hi, lo, out_extent);
    return {lo, hi};
  }
};

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 4, "conv2d");
  ConvGeom g{};
  g.channels = static_cast<int>(x.shape()[0]);
  g.height = static_cast<int>(x.shape()[1]);
  g.width = static_cast<int>(x.shape()[2]);
  g.out_channels = static_cast<int>(weight.shape()[0]);
  g.kernel = static_cast<int>(weight.shape()[2]);
  g.stride = stride;
  g.pad = g.kernel / 2;
  if (static_cast<int>(weight.shape()[1]) != g.channels ||
      static_cast<int>(weight.shape()[3]) != g.kernel || g.kernel % 2 == 0 ||
      bias.value().size() != static_cast<std::size_t>(g.out_channels) ||
      stride < 1) {
    throw std::invalid_argument("conv2d: incompatible shapes " +
                                shape_string(x.shape()) + " " +
                                shape_string(weight.shape()));
  }
  g.out_h = (g.height + 2 * g.pad - g.kernel) / stride + 1;
  g.out_w = (g.width + 2 * g.pad - g.kernel) / stride + 1;

  Tensor out({static_cast<std::size_t>(g.out_channels),
              static_cast<std::size_t>(g.out_h),
              static_cast<std::size_t>(g.out_w)},
             0.0);
  const double* xv = x.value().data();
  const double* wv = weight.value().data();
  const double* bv = bias.value().data();
  const int plane_in = g.height * g.width;
  const int plane_out = g.out_h * g.out_w;
  for (int o = 0; o < g.out_channels; ++o) {
    double* op = out.data() + o * plane_out;
    std::fill(op, op + plane_out, bv[o]);
    for (int c = 0; c < g.channels; ++c) {
      const double* ip = xv + c * plane_in;
      for (int ky = 0; ky < g.kernel; ++ky) {
        const auto [oy0, oy1] =
            ConvGeom::valid_range(ky, g.pad, stride, g.height, g.out_h);
        for (int kx = 0; kx < g.kernel; ++kx) {
          const auto [ox0, ox1] =
              ConvGeom::valid_range(kx, g.pad, stride, g.width, g.out_w);
          const double wk =
              wv[((o * g.channels + c) * g.kernel + ky) * g.kernel + kx];
          for (int oy = oy0; oy < oy1; ++oy) {
            const double* irow = ip + (oy * stride + ky - g.pad) * g.width;
            double* orow = op + oy * g.out_w;
            for (int ox = ox0; ox < ox1; ++ox) {
              orow[ox] += wk * irow[ox * stride + kx - g.pad];
            }
          }
        }
      }
    }
  }

  return Var::make(std::move(out), {x, weight, bias}, [g](Node& self) {
    const double* up = self.grad.data();
    const double* xv = self.input(0)->value.data();
    const double* wv = self.input(1)->value.data();
    Tensor* gx = grad_buffer(self.input(0));
    Tensor* gw = grad_buffer(self.input(1));
    Tensor* gb = grad_buffer(self.input(2));
    const int plane_in = g.height * g.width;
    const int plane_out = g.out_h * g.out_w;
    for (int o = 0; o < g.out_channels; ++o) {
      const double* gp = up + o * plane_out;
      if (gb) {
        double acc = 0.0;
        for (int i = 0; i < plane_out; ++i) acc += gp[i];
        (*gb)[o] += acc;
      }
      for (int c = 0; c < g.channels; ++c) {
        const double* ip = xv + c * plane_in;
        double* gip = gx ? gx->data() + c * plane_in : nullptr;
        for (int ky = 0; ky < g.kernel; ++ky) {
          const auto [oy0, oy1] =
              ConvGeom::valid_range(ky, g.pad, g.stride, g.height, g.out_h);
          for (int kx = 0; kx < g.kernel; ++kx) {
            const auto [ox0, ox1] =
                ConvGeom::valid_range(kx, g.pad, g.stride, g.width, g.out_w);
            const std::size_t widx =
                ((o * g.channels + c) * g.kernel + ky) * g.kernel + kx;
            const double wk = wv[widx];
            double acc = 0.0;
            for (int oy = oy0; oy < oy1; ++oy) {
              const int row = (oy * g.stride + ky - g.pad) * g.width;
              const double* grow = gp + oy * g.out_w;
              for (int ox = ox0; ox < ox1; ++ox) {
                const int col = ox * g.stride + kx - g.pad;
                acc += grow[ox] * ip[row + col];
                if (gip) gip[row + col] += wk * grow[ox];
              }
            }
            if (gw) (*gw)[widx] += acc;
          }
        }
      }
    }
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return Var::make(std::move(out), {a}, [](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    const Tensor& av = self.input(0)->value;
    for (std::size_t i = 0; i < g->size(); ++i) {
      if (av[i] > 0.0) (*g)[i] += self.grad[i];
    }
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return Var::make(std::move(out), {a}, [](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double s = self.value[i];
      (*g)[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor softmax(const Tensor& t, std::size_t axis) {
  const AxisLayout l = axis_layout(t.shape(), axis);
  Tensor out(t.shape(), 0.0);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.len * l.inner + i;
      double mx = t[base];
      for (std::size_t k = 1; k < l.len; ++k) {
        mx = std::max(mx, t[base + k * l.inner]);
      }
      double z = 0.0;
      for (std::size_t k = 0; k < l.len; ++k) {
        const double e = std::exp(t[base + k * l.inner] - mx);
        out[base + k * l.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < l.len; ++k) out[base + k * l.inner] /= z;
    }
  }
  return out;
}

Var softmax(const Var& a, std::size_t axis) {
  const AxisLayout l = axis_layout(a.shape(), axis);
  return Var::make(softmax(a.value(), axis), {a}, [l](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    const Tensor& s = self.value;
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t base = o * l.len * l.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < l.len; ++k) {
          dot += self.grad[base + k * l.inner] * s[base + k * l.inner];
        }
        for (std::size_t k = 0; k < l.len; ++k) {
          const std::size_t idx = base + k * l.inner;
          (*g)[idx] += s[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Var roi_mean_pool(const Var& features, std::span<const BBox> cells) {
  require_rank(features, 3, "roi_mean_pool");
  const std::size_t channels = features.shape()[0];
  const int h = static_cast<int>(features.shape()[1]);
  const int w = static_cast<int>(features.shape()[2]);
  std::vector<BBox> boxes(cells.begin(), cells.end());
  for (const auto& b : boxes) {
    if (!b.fits(w, h)) {
      throw std::out_of_range("roi_mean_pool: box outside the feature map");
    }
  }
  const std::size_t stride = static_cast<std::size_t>(w) + 1;
  const std::size_t table_size = stride * (h + 1);
  // Per-channel summed-area tables.
  std::vector<double> table(channels * table_size, 0.0);
  const double* fv = features.value().data();
  for (std::size_t c = 0; c < channels; ++c) {
    double* t = table.data() + c * table_size;
    const double* plane = fv + c * h * w;
    for (int y = 0; y < h; ++y) {
      double row = 0.0;
      for (int x = 0; x < w; ++x) {
        row += plane[y * w + x];
        t[(y + 1) * stride + x + 1] = t[y * stride + x + 1] + row;
      }
    }
  }
  Tensor out({boxes.size(), channels}, 0.0);
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const BBox& r = boxes[b];
    const double inv_area = 1.0 / static_cast<double>(r.area());
    for (std::size_t c = 0; c < channels; ++c) {
      const double* t = table.data() + c * table_size;
      const double s = t[r.y1 * stride + r.x1] - t[r.y0 * stride + r.x1] -
                       t[r.y1 * stride + r.x0] + t[r.y0 * stride + r.x0];
      out[b * channels + c] = s * inv_area;
    }
  }
  return Var::make(std::move(out), {features},
                   [boxes = std::move(boxes), channels, h, w](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    const std::size_t stride = static_cast<std::size_t>(w) + 1;
    std::vector<double> diff(stride * (h + 1));
    for (std::size_t c = 0; c < channels; ++c) {
      std::fill(diff.begin(), diff.end(), 0.0);
      for (std::size_t b = 0; b < boxes.size(); ++b) {
        const BBox& r = boxes[b];
        const double v =
            self.grad[b * channels + c] / static_cast<double>(r.area());
        diff[r.y0 * stride + r.x0] += v;
        diff[r.y0 * stride + r.x1] -= v;
        diff[r.y1 * stride + r.x0] -= v;
        diff[r.y1 * stride + r.x1] += v;
      }
      // Running 2-D prefix sum of the corner deltas.
      double* plane = g->data() + c * h * w;
      std::vector<double> col(w, 0.0);
      for (int y = 0; y < h; ++y) {
        double row = 0.0;
        for (int x = 0; x < w; ++x) {
          row += diff[y * stride + x];
          col[x] += row;
          plane[y * w + x] += col[x];
        }
      }
    }
  });
}

Var upsample_nearest(const Var& a, std::size_t out_h, std::size_t out_w) {
  const Shape& in_shape = a.shape();
  if (in_shape.size() < 2) {
    throw std::invalid_argument("upsample_nearest: rank < 2");
  }
  const std::size_t h = in_shape[in_shape.size() - 2];
  const std::size_t w = in_shape[in_shape.size() - 1];
  const std::size_t planes = a.value().size() / (h * w);
  Shape out_shape = in_shape;
  out_shape[out_shape.size() - 2] = out_h;
  out_shape[out_shape.size() - 1] = out_w;
  std::vector<std::size_t> src(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      src[y * out_w + x] = (y * h / out_h) * w + (x * w / out_w);
    }
  }
  Tensor out(out_shape, 0.0);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      out[p * src.size() + i] = a.value()[p * h * w + src[i]];
    }
  }
  return Var::make(std::move(out), {a},
                   [src = std::move(src), planes, hw = h * w](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t i = 0; i < src.size(); ++i) {
        (*g)[p * hw + src[i]] += self.grad[p * src.size() + i];
      }
    }
  });
}

Var mask_multiply(const Var& image, const Var& mask) {
  require_rank(image, 3, "mask_multiply");
  require_rank(mask, 2, "mask_multiply");
  const std::size_t channels = image.shape()[0];
  const std::size_t plane = image.shape()[1] * image.shape()[2];
  if (mask.shape()[0] != image.shape()[1] ||
      mask.shape()[1] != image.shape()[2]) {
    throw std::invalid_argument("mask_multiply: mask " +
                                shape_string(mask.shape()) +
                                " does not match image " +
                                shape_string(image.shape()));
  }
  Tensor out = image.value();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] *= mask.value()[i];
  }
  return Var::make(std::move(out), {image, mask}, [channels, plane](Node& self) {
    const Tensor& iv = self.input(0)->value;
    const Tensor& mv = self.input(1)->value;
    if (Tensor* g = grad_buffer(self.input(0))) {
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
          (*g)[c * plane + i] += self.grad[c * plane + i] * mv[i];
        }
      }
    }
    if (Tensor* g = grad_buffer(self.input(1))) {
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
          (*g)[i] += self.grad[c * plane + i] * iv[c * plane + i];
        }
      }
    }
  });
}

Var global_avg_pool(const Var& a) {
  require_rank(a, 3, "global_avg_pool");
  const std::size_t channels = a.shape()[0];
  const std::size_t plane = a.shape()[1] * a.shape()[2];
  Tensor out({channels}, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += a.value()[c * plane + i];
    out[c] = s / static_cast<double>(plane);
  }
  return Var::make(std::move(out), {a}, [channels, plane](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = self.grad[c] / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) (*g)[c * plane + i] += v;
    }
  });
}

Var channel(const Var& a, std::size_t k) {
  require_rank(a, 3, "channel");
  if (k >= a.shape()[0]) throw std::out_of_range("channel: index out of range");
  const std::size_t h = a.shape()[1];
  const std::size_t w = a.shape()[2];
  const std::size_t plane = h * w;
  std::vector<double> v(a.value().data() + k * plane,
                        a.value().data() + (k + 1) * plane);
  return Var::make(Tensor({h, w}, std::move(v)), {a}, [k, plane](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    for (std::size_t i = 0; i < plane; ++i) (*g)[k * plane + i] += self.grad[i];
  });
}

Var concat_columns(const Var& a, const Var& b) {
  require_rank(a, 2, "concat_columns");
  require_rank(b, 2, "concat_columns");
  const std::size_t rows = a.shape()[0];
  if (b.shape()[0] != rows) {
    throw std::invalid_argument("concat_columns: " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
  const std::size_t ca = a.shape()[1];
  const std::size_t cb = b.shape()[1];
  Tensor out({rows, ca + cb}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ca; ++c) out[r * (ca + cb) + c] = a.value()[r * ca + c];
    for (std::size_t c = 0; c < cb; ++c) {
      out[r * (ca + cb) + ca + c] = b.value()[r * cb + c];
    }
  }
  return Var::make(std::move(out), {a, b}, [rows, ca, cb](Node& self) {
    Tensor* ga = grad_buffer(self.input(0));
    Tensor* gb = grad_buffer(self.input(1));
    for (std::size_t r = 0; r < rows; ++r) {
      if (ga) {
        for (std::size_t c = 0; c < ca; ++c) (*ga)[r * ca + c] += self.grad[r * (ca + cb) + c];
      }
      if (gb) {
        for (std::size_t c = 0; c < cb; ++c) {
          (*gb)[r * cb + c] += self.grad[r * (ca + cb) + ca + c];
        }
      }
    }
  });
}

Var reshape(const Var& a, const Shape& shape) {
  if (shape_size(shape) != a.value().size()) {
    throw std::invalid_argument("reshape: " + shape_string(a.shape()) + " -> " +
                                shape_string(shape));
  }
  return Var::make(a.value().reshaped(shape), {a}, [](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
  });
}

Var flip_gradient(const Var& a) {
  return Var::make(a.value(), {a}, [](Node& self) {
    Tensor* g = grad_buffer(self.input(0));
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] -= self.grad[i];
  });
}

}  // namespace sdcn
