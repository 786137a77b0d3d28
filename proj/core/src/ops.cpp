/* Copyright 2026 The GuidedMix Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "guidedmix/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "guidedmix/error.hpp"

namespace guidedmix::ops {
namespace {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

void require_rank4(const Tensor& t, const char* what) {
  if (t.rank() != 4) {
    throw ValidationError(std::string(what) + " expects an NCHW tensor, got " +
                          shape_string(t.shape()));
  }
}

struct ConvGeometry {
  int channels, height, width, kernel, stride, pad, out_h, out_w;
  int rows() const { return channels * kernel * kernel; }
  int positions() const { return out_h * out_w; }
};

void im2col(const double* x, const ConvGeometry& g, double* col) {
  const int k = g.kernel;
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* row = col + static_cast<std::size_t>((c * k + ki) * k + kj) * g.positions();
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          double* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * g.height + ih) * g.width;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride - g.pad + kj;
            dst[ow] = (iw < 0 || iw >= g.width) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

void col2im(const double* col, const ConvGeometry& g, double* x) {
  const int k = g.kernel;
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* row =
            col + static_cast<std::size_t>((c * k + ki) * k + kj) * g.positions();
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.height) continue;
          double* dst = x + (static_cast<std::size_t>(c) * g.height + ih) * g.width;
          const double* src = row + oh * g.out_w;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

// Per-axis bilinear taps for half-pixel-centre resampling.
struct Taps {
  std::vector<int> lo, hi;
  std::vector<double> w_lo, w_hi;
};

Taps bilinear_taps(int in, int out) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.w_lo.resize(out);
  t.w_hi.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const int hi = std::min(lo + 1, in - 1);
    const double frac = src - lo;
    t.lo[o] = lo;
    t.hi[o] = hi;
    t.w_hi[o] = frac;
    t.w_lo[o] = 1.0 - frac;
  }
  return t;
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank4(xv, "conv2d input");
  require_rank4(wv, "conv2d weight");
  const int n_batch = xv.dim(0);
  const int cout = wv.dim(0);
  const int k = wv.dim(2);
  if (wv.dim(1) != xv.dim(1) || wv.dim(3) != k) {
    throw ValidationError("conv2d weight " + shape_string(wv.shape()) +
                          " incompatible with input " + shape_string(xv.shape()));
  }
  if (stride < 1 || pad < 0) throw ConfigurationError("conv2d stride/pad out of range");
  ConvGeometry g{xv.dim(1), xv.dim(2), xv.dim(3), k, stride, pad, 0, 0};
  g.out_h = (g.height + 2 * pad - k) / stride + 1;
  g.out_w = (g.width + 2 * pad - k) / stride + 1;
  if (g.out_h < 1 || g.out_w < 1) {
    throw ValidationError("conv2d input " + shape_string(xv.shape()) + " too small for kernel");
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.value().size() != static_cast<std::size_t>(cout))) {
    throw ValidationError("conv2d bias length mismatch");
  }
  const bool direct = k == 1 && stride == 1 && pad == 0;
  const int rows = g.rows();
  const int positions = g.positions();
  const std::size_t in_per = static_cast<std::size_t>(g.channels) * g.height * g.width;
  const std::size_t col_per = static_cast<std::size_t>(rows) * positions;
  auto cols = std::make_shared<std::vector<double>>(direct ? 0 : col_per * n_batch);

  Tensor out({n_batch, cout, g.out_h, g.out_w});
  ConstMapRM w_mat(wv.data(), cout, rows);
  for (int n = 0; n < n_batch; ++n) {
    const double* col = xv.data() + n * in_per;
    if (!direct) {
      double* dst = cols->data() + n * col_per;
      im2col(xv.data() + n * in_per, g, dst);
      col = dst;
    }
    MapRM y(out.data() + static_cast<std::size_t>(n) * cout * positions, cout, positions);
    y.noalias() = w_mat * ConstMapRM(col, rows, positions);
    if (has_bias) {
      for (int c = 0; c < cout; ++c) y.row(c).array() += bias.value()[c];
    }
  }

  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return Var::from_op(std::move(out), inputs, [g, cols, direct, has_bias, n_batch, cout, rows,
                                               positions, in_per, col_per](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    ConstMapRM w_mat(wn.value.data(), cout, rows);
    std::vector<double> dcol(xn.requires_grad && !direct ? col_per : 0);
    for (int n = 0; n < n_batch; ++n) {
      ConstMapRM dy(self.grad.data() + static_cast<std::size_t>(n) * cout * positions, cout,
                    positions);
      const double* col = direct ? xn.value.data() + n * in_per : cols->data() + n * col_per;
      if (wn.requires_grad) {
        MapRM dw(wn.grad_buffer().data(), cout, rows);
        dw.noalias() += dy * ConstMapRM(col, rows, positions).transpose();
      }
      if (has_bias && self.inputs[2]->requires_grad) {
        double* db = self.inputs[2]->grad_buffer().data();
        for (int c = 0; c < cout; ++c) db[c] += dy.row(c).sum();
      }
      if (xn.requires_grad) {
        double* dx = xn.grad_buffer().data() + n * in_per;
        if (direct) {
          MapRM(dx, rows, positions).noalias() += w_mat.transpose() * dy;
        } else {
          MapRM(dcol.data(), rows, positions).noalias() = w_mat.transpose() * dy;
          col2im(dcol.data(), g, dx);
        }
      }
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.storage()) v = v > 0.0 ? v : 0.0;
  return Var::from_op(std::move(out), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor softmax_channels(const Tensor& x) {
  if (x.rank() != 4) throw ValidationError("softmax_channels expects NCHW, got " + shape_string(x.shape()));
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor out = x;
  for (int b = 0; b < n; ++b) {
    double* base = out.data() + static_cast<std::size_t>(b) * c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      double top = base[p];
      for (int k = 1; k < c; ++k) top = std::max(top, base[k * plane + p]);
      double sum = 0.0;
      for (int k = 0; k < c; ++k) {
        double& v = base[k * plane + p];
        v = std::exp(v - top);
        sum += v;
      }
      for (int k = 0; k < c; ++k) base[k * plane + p] /= sum;
    }
  }
  return out;
}

Var softmax_channels(const Var& x) {
  Tensor out = softmax_channels(x.value());
  return Var::from_op(std::move(out), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    const int n = self.value.dim(0), c = self.value.dim(1);
    const std::size_t plane = static_cast<std::size_t>(self.value.dim(2)) * self.value.dim(3);
    for (int b = 0; b < n; ++b) {
      const std::size_t off = static_cast<std::size_t>(b) * c * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        double dot = 0.0;
        for (int k = 0; k < c; ++k) {
          const std::size_t i = off + k * plane + p;
          dot += self.grad[i] * self.value[i];
        }
        for (int k = 0; k < c; ++k) {
          const std::size_t i = off + k * plane + p;
          g[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ValidationError("add shape mismatch " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return Var::from_op(std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      Tensor& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.storage()) v *= factor;
  return Var::from_op(std::move(out), {x}, [factor](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  require_rank4(parts.front().value(), "concat_channels");
  int channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
      throw ValidationError("concat_channels spatial mismatch " + shape_string(first) + " vs " +
                            shape_string(s));
    }
    channels += s[1];
  }
  const int n_batch = first[0];
  const std::size_t plane = static_cast<std::size_t>(first[2]) * first[3];
  Tensor out({n_batch, channels, first[2], first[3]});
  std::size_t offset = 0;
  for (int n = 0; n < n_batch; ++n) {
    for (const auto& p : parts) {
      const std::size_t len = p.shape()[1] * plane;
      const double* src = p.value().data() + n * len;
      std::copy(src, src + len, out.data() + offset);
      offset += len;
    }
  }
  return Var::from_op(std::move(out), parts, [n_batch, plane](Node& self) {
    std::size_t offset = 0;
    for (int n = 0; n < n_batch; ++n) {
      for (auto& in : self.inputs) {
        const std::size_t len = in->value.dim(1) * plane;
        if (in->requires_grad) {
          double* dst = in->grad_buffer().data() + n * len;
          const double* src = self.grad.data() + offset;
          for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
        }
        offset += len;
      }
    }
  });
}

Var adaptive_avg_pool(const Var& x, int out_h, int out_w) {
  const Tensor& xv = x.value();
  require_rank4(xv, "adaptive_avg_pool");
  if (out_h < 1 || out_w < 1) throw ConfigurationError("adaptive_avg_pool output must be >= 1");
  const int nb = xv.dim(0), ch = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  auto bounds = [](int i, int in, int out) {
    const int start = (i * in) / out;
    const int end = ((i + 1) * in + out - 1) / out;
    return std::pair{start, end};
  };
  Tensor out({nb, ch, out_h, out_w});
  for (int n = 0; n < nb; ++n) {
    for (int c = 0; c < ch; ++c) {
      for (int oy = 0; oy < out_h; ++oy) {
        const auto [y0, y1] = bounds(oy, h, out_h);
        for (int ox = 0; ox < out_w; ++ox) {
          const auto [x0, x1] = bounds(ox, w, out_w);
          double sum = 0.0;
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) sum += xv.at(n, c, y, xx);
          out.at(n, c, oy, ox) = sum / ((y1 - y0) * (x1 - x0));
        }
      }
    }
  }
  return Var::from_op(std::move(out), {x}, [=](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < nb; ++n) {
      for (int c = 0; c < ch; ++c) {
        for (int oy = 0; oy < out_h; ++oy) {
          const auto [y0, y1] = bounds(oy, h, out_h);
          for (int ox = 0; ox < out_w; ++ox) {
            const auto [x0, x1] = bounds(ox, w, out_w);
            const double share = self.grad.at(n, c, oy, ox) / ((y1 - y0) * (x1 - x0));
            for (int y = y0; y < y1; ++y)
              for (int xx = x0; xx < x1; ++xx) g.at(n, c, y, xx) += share;
          }
        }
      }
    }
  });
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  const Tensor& xv = x.value();
  require_rank4(xv, "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw ConfigurationError("resize_bilinear output must be >= 1");
  const int nb = xv.dim(0), ch = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (h == out_h && w == out_w) return x;
  auto ty = std::make_shared<Taps>(bilinear_taps(h, out_h));
  auto tx = std::make_shared<Taps>(bilinear_taps(w, out_w));
  Tensor out({nb, ch, out_h, out_w});
  for (int n = 0; n < nb; ++n) {
    for (int c = 0; c < ch; ++c) {
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          out.at(n, c, oy, ox) =
              ty->w_lo[oy] * (tx->w_lo[ox] * xv.at(n, c, ty->lo[oy], tx->lo[ox]) +
                              tx->w_hi[ox] * xv.at(n, c, ty->lo[oy], tx->hi[ox])) +
              ty->w_hi[oy] * (tx->w_lo[ox] * xv.at(n, c, ty->hi[oy], tx->lo[ox]) +
                              tx->w_hi[ox] * xv.at(n, c, ty->hi[oy], tx->hi[ox]));
        }
      }
    }
  }
  return Var::from_op(std::move(out), {x}, [=](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < nb; ++n) {
      for (int c = 0; c < ch; ++c) {
        for (int oy = 0; oy < out_h; ++oy) {
          for (int ox = 0; ox < out_w; ++ox) {
            const double go = self.grad.at(n, c, oy, ox);
            g.at(n, c, ty->lo[oy], tx->lo[ox]) += go * ty->w_lo[oy] * tx->w_lo[ox];
            g.at(n, c, ty->lo[oy], tx->hi[ox]) += go * ty->w_lo[oy] * tx->w_hi[ox];
            g.at(n, c, ty->hi[oy], tx->lo[ox]) += go * ty->w_hi[oy] * tx->w_lo[ox];
            g.at(n, c, ty->hi[oy], tx->hi[ox]) += go * ty->w_hi[oy] * tx->w_hi[ox];
          }
        }
      }
    }
  });
}

Tensor pixel_shuffle(const Tensor& x, int r) {
  require_rank4(x, "pixel_shuffle");
  if (r < 1) throw ValidationError("pixel_shuffle factor must be >= 1");
  const int nb = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (cin % (r * r) != 0) {
    throw ValidationError("pixel_shuffle: " + std::to_string(cin) +
                          " channels not divisible by r^2 = " + std::to_string(r * r));
  }
  const int cout = cin / (r * r);
  Tensor out({nb, cout, h * r, w * r});
  for (int n = 0; n < nb; ++n)
    for (int c = 0; c < cout; ++c)
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx)
          for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
              out.at(n, c, y * r + dy, xx * r + dx) = x.at(n, c * r * r + dy * r + dx, y, xx);
  return out;
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
  require_rank4(x, "pixel_unshuffle");
  if (r < 1) throw ValidationError("pixel_unshuffle factor must be >= 1");
  const int nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % r != 0 || w % r != 0) throw ValidationError("pixel_unshuffle: spatial size not divisible");
  Tensor out({nb, c * r * r, h / r, w / r});
  for (int n = 0; n < nb; ++n)
    for (int ch = 0; ch < c; ++ch)
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx)
          for (int y = 0; y < h / r; ++y)
            for (int xx = 0; xx < w / r; ++xx)
              out.at(n, ch * r * r + dy * r + dx, y, xx) = x.at(n, ch, y * r + dy, xx * r + dx);
  return out;
}

Var pixel_shuffle(const Var& x, int r) {
  Tensor out = pixel_shuffle(x.value(), r);
  return Var::from_op(std::move(out), {x}, [r](Node& self) {
    Tensor back = pixel_unshuffle(self.grad, r);
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += back[i];
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& xv = x.value();
  require_rank4(xv, "global_avg_pool");
  const int nb = xv.dim(0), ch = xv.dim(1);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor out({nb, ch});
  for (int n = 0; n < nb; ++n) {
    for (int c = 0; c < ch; ++c) {
      const double* p = xv.data() + (static_cast<std::size_t>(n) * ch + c) * plane;
      double sum = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      out[n * ch + c] = sum / plane;
    }
  }
  return Var::from_op(std::move(out), {x}, [nb, ch, plane](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < nb; ++n) {
      for (int c = 0; c < ch; ++c) {
        const double share = self.grad[n * ch + c] / plane;
        double* p = g.data() + (static_cast<std::size_t>(n) * ch + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] += share;
      }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1)) {
    throw ValidationError("linear: input " + shape_string(xv.shape()) + " vs weight " +
                          shape_string(wv.shape()));
  }
  const int nb = xv.dim(0), d = xv.dim(1), k = wv.dim(0);
  if (bias.defined() && bias.value().size() != static_cast<std::size_t>(k)) {
    throw ValidationError("linear: bias length mismatch");
  }
  Tensor out({nb, k});
  MapRM y(out.data(), nb, k);
  y.noalias() = ConstMapRM(xv.data(), nb, d) * ConstMapRM(wv.data(), k, d).transpose();
  if (bias.defined()) {
    for (int n = 0; n < nb; ++n)
      for (int j = 0; j < k; ++j) y(n, j) += bias.value()[j];
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Var::from_op(std::move(out), inputs, [nb, d, k](Node& self) {
    ConstMapRM dy(self.grad.data(), nb, k);
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    if (xn.requires_grad) {
      MapRM(xn.grad_buffer().data(), nb, d).noalias() += dy * ConstMapRM(wn.value.data(), k, d);
    }
    if (wn.requires_grad) {
      MapRM(wn.grad_buffer().data(), k, d).noalias() +=
          dy.transpose() * ConstMapRM(xn.value.data(), nb, d);
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      double* db = self.inputs[2]->grad_buffer().data();
      for (int j = 0; j < k; ++j) db[j] += dy.col(j).sum();
    }
  });
}

namespace {

// Row-softmax of Q^T K for one sample, written into `a` (P x P).
void softmax_attention(const double* q, const double* k, int ck, int p, MatrixRM& a) {
  a.noalias() = ConstMapRM(q, ck, p).transpose() * ConstMapRM(k, ck, p);
  for (int n = 0; n < p; ++n) {
    auto row = a.row(n);
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

}  // namespace

Tensor attention_weights(const Tensor& q, const Tensor& k, int n) {
  require_rank4(q, "attention query");
  if (q.shape() != k.shape()) throw ValidationError("attention: query/key shape mismatch");
  const int ck = q.dim(1), p = q.dim(2) * q.dim(3);
  MatrixRM a(p, p);
  const std::size_t per = static_cast<std::size_t>(ck) * p;
  softmax_attention(q.data() + n * per, k.data() + n * per, ck, p, a);
  Tensor out({p, p});
  MapRM(out.data(), p, p) = a;
  return out;
}

Var attention_aggregate(const Var& q, const Var& k, const Var& v) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  require_rank4(qv, "attention query");
  require_rank4(vv, "attention value");
  if (qv.shape() != kv.shape() || vv.dim(0) != qv.dim(0) || vv.dim(2) != qv.dim(2) ||
      vv.dim(3) != qv.dim(3)) {
    throw ValidationError("attention: incompatible q/k/v shapes " + shape_string(qv.shape()) +
                          ", " + shape_string(vv.shape()));
  }
  const int nb = qv.dim(0), ck = qv.dim(1), cv = vv.dim(1), p = qv.dim(2) * qv.dim(3);
  const std::size_t qk_per = static_cast<std::size_t>(ck) * p;
  const std::size_t v_per = static_cast<std::size_t>(cv) * p;
  auto attn = std::make_shared<std::vector<MatrixRM>>(nb, MatrixRM(p, p));
  Tensor out(vv.shape());
  for (int n = 0; n < nb; ++n) {
    MatrixRM& a = (*attn)[n];
    softmax_attention(qv.data() + n * qk_per, kv.data() + n * qk_per, ck, p, a);
    MapRM(out.data() + n * v_per, cv, p).noalias() =
        ConstMapRM(vv.data() + n * v_per, cv, p) * a.transpose();
  }
  return Var::from_op(std::move(out), {q, k, v},
                      [attn, nb, ck, cv, p, qk_per, v_per](Node& self) {
    Node& qn = *self.inputs[0];
    Node& kn = *self.inputs[1];
    Node& vn = *self.inputs[2];
    MatrixRM d_attn(p, p);
    for (int n = 0; n < nb; ++n) {
      const MatrixRM& a = (*attn)[n];
      ConstMapRM g(self.grad.data() + n * v_per, cv, p);
      ConstMapRM val(vn.value.data() + n * v_per, cv, p);
      if (vn.requires_grad) {
        MapRM(vn.grad_buffer().data() + n * v_per, cv, p).noalias() += g * a;
      }
      if (!qn.requires_grad && !kn.requires_grad) continue;
      d_attn.noalias() = g.transpose() * val;
      for (int r = 0; r < p; ++r) {
        const double dot = d_attn.row(r).dot(a.row(r));
        d_attn.row(r) = a.row(r).array() * (d_attn.row(r).array() - dot);
      }
      ConstMapRM qm(qn.value.data() + n * qk_per, ck, p);
      ConstMapRM km(kn.value.data() + n * qk_per, ck, p);
      if (qn.requires_grad) {
        MapRM(qn.grad_buffer().data() + n * qk_per, ck, p).noalias() += km * d_attn.transpose();
      }
      if (kn.requires_grad) {
        MapRM(kn.grad_buffer().data() + n * qk_per, ck, p).noalias() += qm * d_attn;
      }
    }
  });
}

Var gather_batch(const Var& x, const std::vector<int>& indices) {
  const Tensor& xv = x.value();
  if (xv.rank() < 1) throw ValidationError("gather_batch on scalar");
  const int nb = xv.dim(0);
  const std::size_t per = nb == 0 ? 0 : xv.size() / nb;
  Shape shape = xv.shape();
  shape[0] = static_cast<int>(indices.size());
  Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= nb) throw ValidationError("gather_batch index out of range");
    std::copy(xv.data() + indices[i] * per, xv.data() + (indices[i] + 1) * per,
              out.data() + i * per);
  }
  return Var::from_op(std::move(out), {x}, [indices, per](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < indices.size(); ++i) {
      double* dst = g.data() + indices[i] * per;
      const double* src = self.grad.data() + i * per;
      for (std::size_t j = 0; j < per; ++j) dst[j] += src[j];
    }
  });
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights) {
  if (terms.size() != weights.size()) throw ValidationError("weighted_sum arity mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) total += weights[i] * terms[i].item();
  return Var::from_op(Tensor({1}, std::vector<double>{total}), terms, [weights](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      if (self.inputs[i]->requires_grad) self.inputs[i]->grad_buffer()[0] += weights[i] * self.grad[0];
    }
  });
}

}  // namespace guidedmix::ops
