// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/diffcore/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace laqd::diff {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using Strided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CStrided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

FaultSite g_fault_site = FaultSite::none;
double g_fault_factor = 1.0;

constexpr double kInvSqrt2 = 0.70710678118654752440;

double fault(FaultSite site) { return g_fault_site == site ? g_fault_factor : 1.0; }

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 1 && t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

CMapMat cmap(const Tensor& t) { return CMapMat(t.data(), t.rows(), t.cols()); }
MapMat gmap(double* p, const Tensor& like) { return MapMat(p, like.rows(), like.cols()); }

}  // namespace

void SeqLayout::check() const {
  if (valid.size() != batch) {
    throw ShapeError("SeqLayout: " + std::to_string(valid.size()) + " valid lengths for batch " +
                     std::to_string(batch));
  }
  for (auto v : valid) {
    if (v > length) throw ShapeError("SeqLayout: valid length exceeds padded length");
  }
}

SeqLayout conv_output_layout(const SeqLayout& in, std::size_t kernel, std::size_t stride) {
  auto out_len = [&](std::size_t n) -> std::size_t { return n >= kernel ? (n - kernel) / stride + 1 : 0; };
  SeqLayout out;
  out.batch = in.batch;
  out.length = out_len(in.length);
  out.valid.reserve(in.batch);
  for (auto v : in.valid) out.valid.push_back(out_len(v));
  return out;
}

ScopedGradientFault::ScopedGradientFault(FaultSite site, double factor)
    : prev_site_(g_fault_site), prev_factor_(g_fault_factor) {
  g_fault_site = site;
  g_fault_factor = factor;
}

ScopedGradientFault::~ScopedGradientFault() {
  g_fault_site = prev_site_;
  g_fault_factor = prev_factor_;
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dims differ, " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  Tensor out({av.rows(), bv.cols()});
  MapMat(out.data(), av.rows(), bv.cols()).noalias() = cmap(av) * cmap(bv);
  Graph& g = a.graph();
  return g.record(std::move(out), {a, b}, [a, b, &g](const Tensor& go) {
    const double f = fault(FaultSite::matmul);
    CMapMat G(go.data(), go.rows(), go.cols());
    if (double* ga = g.grad_buffer(a)) {
      gmap(ga, a.value()).noalias() += f * (G * cmap(b.value()).transpose());
    }
    if (double* gb = g.grad_buffer(b)) {
      gmap(gb, b.value()).noalias() += f * (cmap(a.value()).transpose() * G);
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_matrix(av, "transpose");
  Tensor out({av.cols(), av.rows()});
  MapMat(out.data(), av.cols(), av.rows()) = cmap(av).transpose();
  Graph& g = a.graph();
  return g.record(std::move(out), {a}, [a, &g](const Tensor& go) {
    if (double* ga = g.grad_buffer(a)) gmap(ga, a.value()) += cmap(go).transpose();
  });
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.add_(b.value());
  Graph& g = a.graph();
  return g.record(std::move(out), {a, b}, [a, b, &g](const Tensor& go) {
    const std::size_t n = go.size();
    if (double* ga = g.grad_buffer(a)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
    }
    if (double* gb = g.grad_buffer(b)) {
      for (std::size_t i = 0; i < n; ++i) gb[i] += go[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out.add_(b.value(), -1.0);
  Graph& g = a.graph();
  return g.record(std::move(out), {a, b}, [a, b, &g](const Tensor& go) {
    const std::size_t n = go.size();
    if (double* ga = g.grad_buffer(a)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
    }
    if (double* gb = g.grad_buffer(b)) {
      for (std::size_t i = 0; i < n; ++i) gb[i] -= go[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Graph& g = a.graph();
  return g.record(std::move(out), {a, b}, [a, b, &g](const Tensor& go) {
    const std::size_t n = go.size();
    if (double* ga = g.grad_buffer(a)) {
      const Tensor& bv = b.value();
      for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * bv[i];
    }
    if (double* gb = g.grad_buffer(b)) {
      const Tensor& av = a.value();
      for (std::size_t i = 0; i < n; ++i) gb[i] += go[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (auto& x : out.values()) x *= s;
  Graph& g = a.graph();
  return g.record(std::move(out), {a}, [a, s, &g](const Tensor& go) {
    if (double* ga = g.grad_buffer(a)) {
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += s * go[i];
    }
  });
}

Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  require_matrix(xv, "add_bias");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (bias.size() != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not fit " + shape_str(xv.shape()));
  }
  Tensor out = xv;
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  }
  Graph& g = x.graph();
  return g.record(std::move(out), {x, bias}, [x, bias, m, n, &g](const Tensor& go) {
    if (double* gx = g.grad_buffer(x)) {
      for (std::size_t i = 0; i < m * n; ++i) gx[i] += go[i];
    }
    if (double* gb = g.grad_buffer(bias)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
      }
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  Graph& g = a.graph();
  return g.record(std::move(out), {a}, [a, &g](const Tensor& go) {
    if (double* ga = g.grad_buffer(a)) {
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
  });
}

Var stop_gradient(Var a) { return a.graph().constant(a.value()); }

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  Graph& g = a.graph();
  return g.record(Tensor::scalar(s), {a}, [a, &g](const Tensor& go) {
    if (double* ga = g.grad_buffer(a)) {
      const double d = go[0];
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += d;
    }
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var weighted_sum(Var a, std::vector<double> w) {
  if (w.size() != a.size()) {
    throw ShapeError("weighted_sum: " + std::to_string(w.size()) + " weights for " + shape_str(a.shape()));
  }
  double s = 0.0;
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * av[i];
  Graph& g = a.graph();
  return g.record(Tensor::scalar(s), {a}, [a, w = std::move(w), &g](const Tensor& go) {
    if (double* ga = g.grad_buffer(a)) {
      for (std::size_t i = 0; i < w.size(); ++i) ga[i] += w[i] * go[0];
    }
  });
}

Var softmax_rows(Var x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "softmax_rows");
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = xv.data() + i * n;
    double* o = out.data() + i * n;
    const double mx = *std::max_element(r, r + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(r[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  Graph& g = x.graph();
  Tensor saved = out;
  return g.record(std::move(out), {x}, [x, m, n, p = std::move(saved), &g](const Tensor& go) {
    double* gx = g.grad_buffer(x);
    if (!gx) return;
    for (std::size_t i = 0; i < m; ++i) {
      const double* pr = p.data() + i * n;
      const double* gr = go.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += pr[j] * gr[j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += pr[j] * (gr[j] - dot);
    }
  });
}

Var log_softmax_rows(Var x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "log_softmax_rows");
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out(xv.shape());
  Tensor probs(xv.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = xv.data() + i * n;
    const double mx = *std::max_element(r, r + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(r[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = r[j] - lz;
      probs[i * n + j] = std::exp(r[j] - lz);
    }
  }
  Graph& g = x.graph();
  return g.record(std::move(out), {x}, [x, m, n, p = std::move(probs), &g](const Tensor& go) {
    double* gx = g.grad_buffer(x);
    if (!gx) return;
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += go[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += go[i * n + j] - p[i * n + j] * s;
    }
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm_rows");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gamma.size() != n || beta.size() != n) throw ShapeError("layer_norm_rows: gamma/beta size must equal cols");
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(m);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = xv.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += r[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (r[j] - mu) * inv_std[i];
      xhat[i * n + j] = h;
      out[i * n + j] = h * gv[j] + bv[j];
    }
  }
  Graph& g = x.graph();
  return g.record(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std), &g](const Tensor& go) {
                    const Tensor& gv = gamma.value();
                    if (double* gg = g.grad_buffer(gamma)) {
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) gg[j] += go[i * n + j] * xhat[i * n + j];
                    }
                    if (double* gb = g.grad_buffer(beta)) {
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
                    }
                    double* gx = g.grad_buffer(x);
                    if (!gx) return;
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (std::size_t i = 0; i < m; ++i) {
                      double s1 = 0.0, s2 = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double d = go[i * n + j] * gv[j];
                        s1 += d;
                        s2 += d * xhat[i * n + j];
                      }
                      for (std::size_t j = 0; j < n; ++j) {
                        const double d = go[i * n + j] * gv[j];
                        gx[i * n + j] += inv_std[i] * (d - s1 * inv_n - xhat[i * n + j] * s2 * inv_n);
                      }
                    }
                  });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  Graph& g = x.graph();
  return g.record(std::move(out), {x}, [x, &g](const Tensor& go) {
    double* gx = g.grad_buffer(x);
    if (!gx) return;
    const double f = fault(FaultSite::gelu);
    const Tensor& xv = x.value();
    const double c = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;  // 1/sqrt(2*pi)
    for (std::size_t i = 0; i < go.size(); ++i) {
      const double v = xv[i];
      const double d = 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * c * std::exp(-0.5 * v * v);
      gx[i] += f * go[i] * d;
    }
  });
}

Var tanh(Var x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::tanh(v);
  Graph& g = x.graph();
  Tensor saved = out;
  return g.record(std::move(out), {x}, [x, y = std::move(saved), &g](const Tensor& go) {
    if (double* gx = g.grad_buffer(x)) {
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * (1.0 - y[i] * y[i]);
    }
  });
}

Var sqrt(Var x, double eps) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::sqrt(v + eps);
  Graph& g = x.graph();
  Tensor saved = out;
  return g.record(std::move(out), {x}, [x, y = std::move(saved), &g](const Tensor& go) {
    if (double* gx = g.grad_buffer(x)) {
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * 0.5 / y[i];
    }
  });
}

Var pick(Var x, std::vector<std::size_t> cols) {
  const Tensor& xv = x.value();
  require_matrix(xv, "pick");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (cols.size() != m) throw ShapeError("pick: need one column index per row");
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    if (cols[i] >= n) throw ShapeError("pick: column index out of range");
    out[i] = xv[i * n + cols[i]];
  }
  Graph& g = x.graph();
  return g.record(std::move(out), {x}, [x, n, cols = std::move(cols), &g](const Tensor& go) {
    if (double* gx = g.grad_buffer(x)) {
      for (std::size_t i = 0; i < cols.size(); ++i) gx[i * n + cols[i]] += go[i];
    }
  });
}

Var gather_rows(Var x, std::vector<std::size_t> rows) {
  const Tensor& xv = x.value();
  require_matrix(xv, "gather_rows");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (rows.empty()) throw ShapeError("gather_rows: empty index list");
  Tensor out({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " + shape_str(xv.shape()));
    }
    std::copy_n(xv.data() + rows[i] * n, n, out.data() + i * n);
  }
  Graph& g = x.graph();
  return g.record(std::move(out), {x}, [x, n, rows = std::move(rows), &g](const Tensor& go) {
    if (double* gx = g.grad_buffer(x)) {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        double* dst = gx + rows[i] * n;
        const double* src = go.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
      }
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_rows");
    if (p.cols() != n) throw ShapeError("concat_rows: column counts differ");
    m += p.rows();
  }
  Tensor out({m, n});
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.size(), out.data() + off);
    off += p.size();
  }
  Graph& g = parts.front().graph();
  return g.record(std::move(out), parts, [parts, &g](const Tensor& go) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      if (double* gp = g.grad_buffer(p)) {
        for (std::size_t i = 0; i < p.size(); ++i) gp[i] += go[off + i];
      }
      off += p.size();
    }
  });
}

Var sq_dist_rows(Var a, Var b) {
  require_same(a.value(), b.value(), "sq_dist_rows");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "sq_dist_rows");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = av[i * n + j] - bv[i * n + j];
      s += d * d;
    }
    out[i] = s;
  }
  Graph& g = a.graph();
  return g.record(std::move(out), {a, b}, [a, b, m, n, &g](const Tensor& go) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    double* ga = g.grad_buffer(a);
    double* gb = g.grad_buffer(b);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double d = 2.0 * go[i] * (av[i * n + j] - bv[i * n + j]);
        if (ga) ga[i * n + j] += d;
        if (gb) gb[i * n + j] -= d;
      }
    }
  });
}

Var sq_l2(Var a, Var b) { return sum(sq_dist_rows(reshape(a, {1, a.size()}), reshape(b, {1, b.size()}))); }

Var im2col1d(Var x, const SeqLayout& in, std::size_t kernel, std::size_t stride) {
  in.check();
  const Tensor& xv = x.value();
  require_matrix(xv, "im2col1d");
  if (xv.rows() != in.rows()) throw ShapeError("im2col1d: row count does not match layout");
  if (kernel == 0 || stride == 0) throw ShapeError("im2col1d: kernel and stride must be positive");
  const SeqLayout out_layout = conv_output_layout(in, kernel, stride);
  if (out_layout.length == 0) {
    throw ShapeError("im2col1d: padded length " + std::to_string(in.length) + " shorter than kernel " +
                     std::to_string(kernel));
  }
  const std::size_t c = xv.cols(), w = kernel * c, tout = out_layout.length;
  Tensor out({in.batch * tout, w});
  for (std::size_t b = 0; b < in.batch; ++b) {
    for (std::size_t t = 0; t < tout; ++t) {
      const double* src = xv.data() + (b * in.length + t * stride) * c;
      std::copy_n(src, w, out.data() + (b * tout + t) * w);
    }
  }
  Graph& g = x.graph();
  const std::size_t batch = in.batch, len = in.length;
  return g.record(std::move(out), {x}, [x, batch, len, tout, stride, w, c, &g](const Tensor& go) {
    double* gx = g.grad_buffer(x);
    if (!gx) return;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < tout; ++t) {
        double* dst = gx + (b * len + t * stride) * c;
        const double* src = go.data() + (b * tout + t) * w;
        for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
      }
    }
  });
}

Var masked_mean_rows(Var x, const SeqLayout& layout) {
  layout.check();
  const Tensor& xv = x.value();
  require_matrix(xv, "masked_mean_rows");
  if (xv.rows() != layout.rows()) throw ShapeError("masked_mean_rows: row count does not match layout");
  const std::size_t c = xv.cols();
  Tensor out({layout.batch, c});
  for (std::size_t b = 0; b < layout.batch; ++b) {
    const std::size_t nv = layout.valid[b];
    if (nv == 0) throw ShapeError("masked_mean_rows: sample " + std::to_string(b) + " has no valid rows");
    double* o = out.data() + b * c;
    for (std::size_t t = 0; t < nv; ++t) {
      const double* r = xv.data() + (b * layout.length + t) * c;
      for (std::size_t j = 0; j < c; ++j) o[j] += r[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= static_cast<double>(nv);
  }
  Graph& g = x.graph();
  return g.record(std::move(out), {x}, [x, layout, c, &g](const Tensor& go) {
    double* gx = g.grad_buffer(x);
    if (!gx) return;
    for (std::size_t b = 0; b < layout.batch; ++b) {
      const std::size_t nv = layout.valid[b];
      const double inv = 1.0 / static_cast<double>(nv);
      for (std::size_t t = 0; t < nv; ++t) {
        double* dst = gx + (b * layout.length + t) * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += go[b * c + j] * inv;
      }
    }
  });
}

Var segment_softmax(Var scores, const SeqLayout& layout) {
  layout.check();
  const Tensor& sv = scores.value();
  if (sv.size() != layout.rows()) throw ShapeError("segment_softmax: score count does not match layout");
  Tensor out({layout.rows(), 1});
  for (std::size_t b = 0; b < layout.batch; ++b) {
    const std::size_t nv = layout.valid[b];
    if (nv == 0) throw ShapeError("segment_softmax: sample " + std::to_string(b) + " has no valid rows");
    const double* s = sv.data() + b * layout.length;
    double* o = out.data() + b * layout.length;
    const double mx = *std::max_element(s, s + nv);
    double z = 0.0;
    for (std::size_t t = 0; t < nv; ++t) z += (o[t] = std::exp(s[t] - mx));
    for (std::size_t t = 0; t < nv; ++t) o[t] /= z;
  }
  Graph& g = scores.graph();
  Tensor saved = out;
  return g.record(std::move(out), {scores}, [scores, layout, p = std::move(saved), &g](const Tensor& go) {
    double* gs = g.grad_buffer(scores);
    if (!gs) return;
    for (std::size_t b = 0; b < layout.batch; ++b) {
      const std::size_t base = b * layout.length;
      double dot = 0.0;
      for (std::size_t t = 0; t < layout.valid[b]; ++t) dot += p[base + t] * go[base + t];
      for (std::size_t t = 0; t < layout.valid[b]; ++t) gs[base + t] += p[base + t] * (go[base + t] - dot);
    }
  });
}

Var segment_weighted_sum(Var w, Var x, const SeqLayout& layout) {
  layout.check();
  const Tensor& wv = w.value();
  const Tensor& xv = x.value();
  require_matrix(xv, "segment_weighted_sum");
  if (wv.size() != layout.rows() || xv.rows() != layout.rows()) {
    throw ShapeError("segment_weighted_sum: inputs do not match layout");
  }
  const std::size_t c = xv.cols();
  Tensor out({layout.batch, c});
  for (std::size_t b = 0; b < layout.batch; ++b) {
    double* o = out.data() + b * c;
    for (std::size_t t = 0; t < layout.valid[b]; ++t) {
      const std::size_t r = b * layout.length + t;
      for (std::size_t j = 0; j < c; ++j) o[j] += wv[r] * xv[r * c + j];
    }
  }
  Graph& g = x.graph();
  return g.record(std::move(out), {w, x}, [w, x, layout, c, &g](const Tensor& go) {
    double* gw = g.grad_buffer(w);
    double* gx = g.grad_buffer(x);
    const Tensor& wv = w.value();
    const Tensor& xv = x.value();
    for (std::size_t b = 0; b < layout.batch; ++b) {
      const double* gr = go.data() + b * c;
      for (std::size_t t = 0; t < layout.valid[b]; ++t) {
        const std::size_t r = b * layout.length + t;
        if (gw) {
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += gr[j] * xv[r * c + j];
          gw[r] += s;
        }
        if (gx) {
          for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += wv[r] * gr[j];
        }
      }
    }
  });
}

Var attention(Var q, Var k, Var v, const AttentionSpec& spec) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  require_matrix(qv, "attention");
  const std::size_t d = qv.cols();
  if (kv.cols() != d || vv.cols() != d) throw ShapeError("attention: q/k/v widths differ");
  if (qv.rows() != spec.batch * spec.q_len || kv.rows() != spec.batch * spec.k_len || vv.rows() != kv.rows()) {
    throw ShapeError("attention: row counts do not match batch layout");
  }
  if (spec.heads == 0 || d % spec.heads != 0) throw ShapeError("attention: width not divisible by heads");
  if (spec.k_valid.size() != spec.batch) throw ShapeError("attention: need one key length per sample");
  if (spec.causal && spec.q_len != spec.k_len) throw ShapeError("attention: causal mode needs q_len == k_len");
  const std::size_t dh = d / spec.heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor out({qv.rows(), d});
  // probs[b*heads + h] holds the q_len x kv attention matrix.
  std::vector<RowMat> probs(spec.batch * spec.heads);
  for (std::size_t b = 0; b < spec.batch; ++b) {
    const std::size_t nk = spec.k_valid[b];
    if (nk == 0 || nk > spec.k_len) {
      throw ShapeError("attention: sample " + std::to_string(b) + " has every key masked");
    }
    for (std::size_t h = 0; h < spec.heads; ++h) {
      CStrided Q(qv.data() + b * spec.q_len * d + h * dh, spec.q_len, dh, Eigen::OuterStride<>(d));
      CStrided K(kv.data() + b * spec.k_len * d + h * dh, nk, dh, Eigen::OuterStride<>(d));
      CStrided V(vv.data() + b * spec.k_len * d + h * dh, nk, dh, Eigen::OuterStride<>(d));
      RowMat S = (Q * K.transpose()) * sc;
      for (std::size_t i = 0; i < spec.q_len; ++i) {
        const std::size_t lim = spec.causal ? std::min(nk, i + 1) : nk;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < lim; ++j) mx = std::max(mx, S(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < lim; ++j) z += (S(i, j) = std::exp(S(i, j) - mx));
        for (std::size_t j = 0; j < lim; ++j) S(i, j) /= z;
        for (std::size_t j = lim; j < nk; ++j) S(i, j) = 0.0;
      }
      Strided O(out.data() + b * spec.q_len * d + h * dh, spec.q_len, dh, Eigen::OuterStride<>(d));
      O.noalias() = S * V;
      probs[b * spec.heads + h] = std::move(S);
    }
  }
  Graph& g = q.graph();
  return g.record(std::move(out), {q, k, v}, [q, k, v, spec, d, dh, sc, probs = std::move(probs), &g](const Tensor& go) {
    double* gq = g.grad_buffer(q);
    double* gk = g.grad_buffer(k);
    double* gv = g.grad_buffer(v);
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    for (std::size_t b = 0; b < spec.batch; ++b) {
      const std::size_t nk = spec.k_valid[b];
      for (std::size_t h = 0; h < spec.heads; ++h) {
        const RowMat& P = probs[b * spec.heads + h];
        const std::size_t qo = b * spec.q_len * d + h * dh;
        const std::size_t ko = b * spec.k_len * d + h * dh;
        CStrided G(go.data() + qo, spec.q_len, dh, Eigen::OuterStride<>(d));
        CStrided V(vv.data() + ko, nk, dh, Eigen::OuterStride<>(d));
        if (gv) {
          Strided GV(gv + ko, nk, dh, Eigen::OuterStride<>(d));
          GV.noalias() += P.transpose() * G;
        }
        if (!gq && !gk) continue;
        RowMat dP = G * V.transpose();
        // Softmax backward, row by row.
        for (Eigen::Index i = 0; i < dP.rows(); ++i) {
          const double dot = P.row(i).dot(dP.row(i));
          dP.row(i) = (P.row(i).array() * (dP.row(i).array() - dot)).matrix();
        }
        dP *= sc;
        if (gq) {
          CStrided K(kv.data() + ko, nk, dh, Eigen::OuterStride<>(d));
          Strided GQ(gq + qo, spec.q_len, dh, Eigen::OuterStride<>(d));
          GQ.noalias() += dP * K;
        }
        if (gk) {
          CStrided Q(qv.data() + qo, spec.q_len, dh, Eigen::OuterStride<>(d));
          Strided GK(gk + ko, nk, dh, Eigen::OuterStride<>(d));
          GK.noalias() += dP.transpose() * Q;
        }
      }
    }
  });
}

}  // namespace laqd::diff
