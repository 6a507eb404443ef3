// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include "triad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "triad/error.hpp"

namespace triad {

namespace {

using detail::Node;
using detail::make_result;

// Gradient buffer of parent `i`, or nullptr when that parent needs none.
double* parent_grad(Node& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? p.grad_buffer().data() : nullptr;
}

const std::vector<double>& parent_data(const Node& self, std::size_t i) { return self.parents[i]->data; }

bool is_suffix(const Shape& full, const Shape& suffix) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

void require_broadcastable(const Tensor& a, const Tensor& b, const char* op) {
  if (!is_suffix(a.shape(), b.shape())) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(b.shape()) + " onto " +
                         shape_string(a.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

std::size_t last_dim(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw DimensionError(std::string(op) + " needs at least one axis");
  return x.shape().back();
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_broadcastable(a, b, "add");
  const auto& ad = a.data();
  const auto& bd = b.data();
  const std::size_t nb = bd.size();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i % nb];
  return make_result(a.shape(), std::move(out), {a, b},
                     [nb](Node& self) {
                       const auto& g = self.grad;
                       if (auto* ga = parent_grad(self, 0)) {
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       }
                       if (auto* gb = parent_grad(self, 1)) {
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i];
                       }
                     },
                     "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_broadcastable(a, b, "sub");
  const auto& ad = a.data();
  const auto& bd = b.data();
  const std::size_t nb = bd.size();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i % nb];
  return make_result(a.shape(), std::move(out), {a, b},
                     [nb](Node& self) {
                       const auto& g = self.grad;
                       if (auto* ga = parent_grad(self, 0)) {
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       }
                       if (auto* gb = parent_grad(self, 1)) {
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] -= g[i];
                       }
                     },
                     "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_broadcastable(a, b, "mul");
  const auto& ad = a.data();
  const auto& bd = b.data();
  const std::size_t nb = bd.size();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i % nb];
  return make_result(a.shape(), std::move(out), {a, b},
                     [nb](Node& self) {
                       const auto& g = self.grad;
                       const auto& ad = parent_data(self, 0);
                       const auto& bd = parent_data(self, 1);
                       if (auto* ga = parent_grad(self, 0)) {
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i % nb];
                       }
                       if (auto* gb = parent_grad(self, 1)) {
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i] * ad[i];
                       }
                     },
                     "mul");
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result(x.shape(), std::move(out), {x},
                     [factor](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * factor;
                     },
                     "scale");
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw DimensionError("mul_scalar expects a one-element factor, got " + shape_string(s.shape()));
  const double f = s.data()[0];
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= f;
  return make_result(x.shape(), std::move(out), {x, s},
                     [](Node& self) {
                       const auto& g = self.grad;
                       const auto& xd = parent_data(self, 0);
                       const double f = parent_data(self, 1)[0];
                       if (auto* gx = parent_grad(self, 0)) {
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * f;
                       }
                       if (auto* gs = parent_grad(self, 1)) {
                         double acc = 0.0;
                         for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xd[i];
                         gs[0] += acc;
                       }
                     },
                     "mul_scalar");
}

Tensor exp(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.data()[i]);
  return make_result(x.shape(), std::move(out), {x},
                     [](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * self.data[i];
                     },
                     "exp");
}

Tensor log(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    if (!(v > 0.0)) throw NumericError("log of non-positive value " + std::to_string(v));
    out[i] = std::log(v);
  }
  return make_result(x.shape(), std::move(out), {x},
                     [](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       const auto& xd = parent_data(self, 0);
                       for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] / xd[i];
                     },
                     "log");
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  }
  return make_result(x.shape(), std::move(out), {x},
                     [](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       const auto& xd = parent_data(self, 0);
                       const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         const double v = xd[i];
                         const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
                         const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                         gx[i] += self.grad[i] * (cdf + v * pdf);
                       }
                     },
                     "gelu");
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result({}, {acc}, {x},
                     [](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       const double g = self.grad[0];
                       const auto n = self.parents[0]->data.size();
                       for (std::size_t i = 0; i < n; ++i) gx[i] += g;
                     },
                     "sum");
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  const auto s = split_at(x.shape(), axis);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto& xd = x.data();
  const double inv = 1.0 / static_cast<double>(s.n);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.n; ++j) {
      const double* src = xd.data() + (o * s.n + j) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t t = 0; t < s.inner; ++t) dst[t] += src[t];
    }
  }
  for (auto& v : out) v *= inv;
  return make_result(std::move(shape), std::move(out), {x},
                     [s, inv](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         const double* g = self.grad.data() + o * s.inner;
                         for (std::size_t j = 0; j < s.n; ++j) {
                           double* dst = gx + (o * s.n + j) * s.inner;
                           for (std::size_t t = 0; t < s.inner; ++t) dst[t] += g[t] * inv;
                         }
                       }
                     },
                     "mean_axis");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " + shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const auto& ad = a.data();
  const auto& bd = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* c = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ad[i * k + p];
      const double* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b},
                     [m, k, n](Node& self) {
                       const auto& g = self.grad;
                       const auto& ad = parent_data(self, 0);
                       const auto& bd = parent_data(self, 1);
                       if (auto* ga = parent_grad(self, 0)) {
                         for (std::size_t i = 0; i < m; ++i) {
                           const double* gi = g.data() + i * n;
                           for (std::size_t p = 0; p < k; ++p) {
                             const double* brow = bd.data() + p * n;
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j) acc += gi[j] * brow[j];
                             ga[i * k + p] += acc;
                           }
                         }
                       }
                       if (auto* gb = parent_grad(self, 1)) {
                         for (std::size_t i = 0; i < m; ++i) {
                           const double* gi = g.data() + i * n;
                           for (std::size_t p = 0; p < k; ++p) {
                             const double aip = ad[i * k + p];
                             double* brow = gb + p * n;
                             for (std::size_t j = 0; j < n; ++j) brow[j] += aip * gi[j];
                           }
                         }
                       }
                     },
                     "matmul");
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() == 0 || x.shape().back() != weight.dim(0)) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " does not match weight " +
                         shape_string(weight.shape()));
  }
  const std::size_t in = weight.dim(0), out_dim = weight.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) + " does not match weight " +
                         shape_string(weight.shape()));
  }
  const std::size_t rows = x.size() / in;
  const auto& xd = x.data();
  const auto& wd = weight.data();
  std::vector<double> out(rows * out_dim, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double* y = out.data() + r * out_dim;
    if (bias.defined()) std::copy(bias.data().begin(), bias.data().end(), y);
    for (std::size_t p = 0; p < in; ++p) {
      const double xv = xd[r * in + p];
      const double* wrow = wd.data() + p * out_dim;
      for (std::size_t j = 0; j < out_dim; ++j) y[j] += xv * wrow[j];
    }
  }
  Shape shape = x.shape();
  shape.back() = out_dim;
  std::vector<Tensor> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(shape), std::move(out), std::move(parents),
                     [rows, in, out_dim](Node& self) {
                       const auto& g = self.grad;
                       const auto& xd = parent_data(self, 0);
                       const auto& wd = parent_data(self, 1);
                       if (auto* gx = parent_grad(self, 0)) {
                         for (std::size_t r = 0; r < rows; ++r) {
                           const double* gr = g.data() + r * out_dim;
                           for (std::size_t p = 0; p < in; ++p) {
                             const double* wrow = wd.data() + p * out_dim;
                             double acc = 0.0;
                             for (std::size_t j = 0; j < out_dim; ++j) acc += gr[j] * wrow[j];
                             gx[r * in + p] += acc;
                           }
                         }
                       }
                       if (auto* gw = parent_grad(self, 1)) {
                         for (std::size_t r = 0; r < rows; ++r) {
                           const double* gr = g.data() + r * out_dim;
                           for (std::size_t p = 0; p < in; ++p) {
                             const double xv = xd[r * in + p];
                             double* wrow = gw + p * out_dim;
                             for (std::size_t j = 0; j < out_dim; ++j) wrow[j] += xv * gr[j];
                           }
                         }
                       }
                       if (self.parents.size() > 2) {
                         if (auto* gb = parent_grad(self, 2)) {
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* gr = g.data() + r * out_dim;
                             for (std::size_t j = 0; j < out_dim; ++j) gb[j] += gr[j];
                           }
                         }
                       }
                     },
                     "linear");
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto s = split_at(x.shape(), axis);
  const auto& xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t t = 0; t < s.inner; ++t) {
      const std::size_t base = o * s.n * s.inner + t;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.n; ++j) m = std::max(m, xd[base + j * s.inner]);
      if (!std::isfinite(m)) throw NumericError("softmax of non-finite input");
      double z = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const double e = std::exp(xd[base + j * s.inner] - m);
        out[base + j * s.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < s.n; ++j) out[base + j * s.inner] /= z;
    }
  }
  return make_result(x.shape(), std::move(out), {x},
                     [s](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       const auto& y = self.data;
                       const auto& g = self.grad;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t t = 0; t < s.inner; ++t) {
                           const std::size_t base = o * s.n * s.inner + t;
                           double dot = 0.0;
                           for (std::size_t j = 0; j < s.n; ++j) dot += y[base + j * s.inner] * g[base + j * s.inner];
                           for (std::size_t j = 0; j < s.n; ++j) {
                             const auto idx = base + j * s.inner;
                             gx[idx] += y[idx] * (g[idx] - dot);
                           }
                         }
                       }
                     },
                     "softmax");
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const auto s = split_at(x.shape(), axis);
  const auto& xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t t = 0; t < s.inner; ++t) {
      const std::size_t base = o * s.n * s.inner + t;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.n; ++j) m = std::max(m, xd[base + j * s.inner]);
      if (!std::isfinite(m)) throw NumericError("log_softmax of non-finite input");
      double z = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) z += std::exp(xd[base + j * s.inner] - m);
      const double lse = m + std::log(z);
      for (std::size_t j = 0; j < s.n; ++j) out[base + j * s.inner] = xd[base + j * s.inner] - lse;
    }
  }
  return make_result(x.shape(), std::move(out), {x},
                     [s](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       const auto& y = self.data;
                       const auto& g = self.grad;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t t = 0; t < s.inner; ++t) {
                           const std::size_t base = o * s.n * s.inner + t;
                           double gsum = 0.0;
                           for (std::size_t j = 0; j < s.n; ++j) gsum += g[base + j * s.inner];
                           for (std::size_t j = 0; j < s.n; ++j) {
                             const auto idx = base + j * s.inner;
                             gx[idx] += g[idx] - std::exp(y[idx]) * gsum;
                           }
                         }
                       }
                     },
                     "log_softmax");
}

Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> mask) {
  const std::size_t n = last_dim(x, "masked_softmax");
  if (mask.size() != x.size()) {
    throw DimensionError("masked_softmax: mask has " + std::to_string(mask.size()) + " entries for input " +
                         shape_string(x.shape()));
  }
  const std::size_t rows = x.size() / n;
  const auto& xd = x.data();
  std::vector<double> out(xd.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (mask[r * n + j]) m = std::max(m, xd[r * n + j]);
    }
    if (m == -std::numeric_limits<double>::infinity()) {
      throw ContractError("masked_softmax: row " + std::to_string(r) + " has no unmasked entry");
    }
    if (!std::isfinite(m)) throw NumericError("masked_softmax of non-finite input");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask[r * n + j]) continue;
      const double e = std::exp(xd[r * n + j] - m);
      out[r * n + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] /= z;
  }
  return make_result(x.shape(), std::move(out), {x},
                     [rows, n](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       const auto& y = self.data;
                       const auto& g = self.grad;
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += y[r * n + j] * g[r * n + j];
                         for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
                       }
                     },
                     "masked_softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t n = last_dim(x, "layer_norm");
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    throw DimensionError("layer_norm: affine parameters " + shape_string(gamma.shape()) + "/" +
                         shape_string(beta.shape()) + " do not match input " + shape_string(x.shape()));
  }
  const std::size_t rows = x.size() / n;
  const auto& xd = x.data();
  const auto& gd = gamma.data();
  const auto& bd = beta.data();
  std::vector<double> out(xd.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = (row[j] - mu) * rs * gd[j] + bd[j];
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [rows, n, rstd](Node& self) {
                       const auto& g = self.grad;
                       const auto& xd = parent_data(self, 0);
                       const auto& gd = parent_data(self, 1);
                       auto* gx = parent_grad(self, 0);
                       auto* ggamma = parent_grad(self, 1);
                       auto* gbeta = parent_grad(self, 2);
                       std::vector<double> xhat(n), dxhat(n);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* row = xd.data() + r * n;
                         const double* gr = g.data() + r * n;
                         double mu = 0.0;
                         for (std::size_t j = 0; j < n; ++j) mu += row[j];
                         mu /= static_cast<double>(n);
                         const double rs = (*rstd)[r];
                         double mean_d = 0.0, mean_dx = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           xhat[j] = (row[j] - mu) * rs;
                           dxhat[j] = gr[j] * gd[j];
                           mean_d += dxhat[j];
                           mean_dx += dxhat[j] * xhat[j];
                           if (ggamma) ggamma[j] += gr[j] * xhat[j];
                           if (gbeta) gbeta[j] += gr[j];
                         }
                         mean_d /= static_cast<double>(n);
                         mean_dx /= static_cast<double>(n);
                         if (gx) {
                           for (std::size_t j = 0; j < n; ++j) {
                             gx[r * n + j] += rs * (dxhat[j] - mean_d - xhat[j] * mean_dx);
                           }
                         }
                       }
                     },
                     "layer_norm");
}

Tensor l2_normalize(const Tensor& x) {
  const std::size_t n = last_dim(x, "l2_normalize");
  const std::size_t rows = x.size() / n;
  const auto& xd = x.data();
  std::vector<double> out(xd.size());
  auto norms = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += xd[r * n + j] * xd[r * n + j];
    const double norm = std::max(std::sqrt(ss), 1e-12);
    (*norms)[r] = norm;
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xd[r * n + j] / norm;
  }
  return make_result(x.shape(), std::move(out), {x},
                     [rows, n, norms](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       const auto& y = self.data;
                       const auto& g = self.grad;
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += y[r * n + j] * g[r * n + j];
                         const double inv = 1.0 / (*norms)[r];
                         for (std::size_t j = 0; j < n; ++j) {
                           gx[r * n + j] += (g[r * n + j] - y[r * n + j] * dot) * inv;
                         }
                       }
                     },
                     "l2_normalize");
}

Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids, const Shape& index_shape) {
  if (table.rank() != 2) throw DimensionError("embedding table must be 2-D, got " + shape_string(table.shape()));
  if (numel(index_shape) != ids.size()) {
    throw DimensionError("embedding: " + std::to_string(ids.size()) + " ids for index shape " +
                         shape_string(index_shape));
  }
  const std::size_t vocab = table.dim(0), width = table.dim(1);
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("token id " + std::to_string(ids[i]) + " outside vocabulary of size " + std::to_string(vocab));
    }
    rows[i] = static_cast<std::size_t>(ids[i]);
  }
  std::vector<double> out(ids.size() * width);
  const auto& td = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(td.data() + rows[i] * width, width, out.data() + i * width);
  }
  Shape shape = index_shape;
  shape.push_back(width);
  return make_result(std::move(shape), std::move(out), {table},
                     [rows = std::move(rows), width](Node& self) {
                       auto* gt = parent_grad(self, 0);
                       for (std::size_t i = 0; i < rows.size(); ++i) {
                         const double* g = self.grad.data() + i * width;
                         double* dst = gt + rows[i] * width;
                         for (std::size_t j = 0; j < width; ++j) dst[j] += g[j];
                       }
                     },
                     "embedding");
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy expects [N, V] logits, got " + shape_string(logits.shape()));
  const std::size_t rows = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) +
                         " rows");
  }
  std::vector<std::size_t> t(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab) {
      throw IndexError("target " + std::to_string(targets[r]) + " outside vocabulary of size " + std::to_string(vocab));
    }
    t[r] = static_cast<std::size_t>(targets[r]);
  }
  const auto& xd = logits.data();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * vocab;
    const double m = *std::max_element(row, row + vocab);
    if (!std::isfinite(m)) throw NumericError("cross_entropy of non-finite logits");
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - m);
    total += m + std::log(z) - row[t[r]];
  }
  return make_result({}, {total / static_cast<double>(rows)}, {logits},
                     [t = std::move(t), rows, vocab](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       const auto& xd = self.parents[0]->data;
                       const double g = self.grad[0] / static_cast<double>(rows);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* row = xd.data() + r * vocab;
                         const double m = *std::max_element(row, row + vocab);
                         double z = 0.0;
                         for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - m);
                         for (std::size_t j = 0; j < vocab; ++j) gx[r * vocab + j] += g * std::exp(row[j] - m) / z;
                         gx[r * vocab + t[r]] -= g;
                       }
                     },
                     "cross_entropy");
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  return make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), {x},
                     [](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
                     },
                     "reshape");
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_string(x.shape()));
  const std::size_t m = x.shape()[x.rank() - 2], n = x.shape()[x.rank() - 1];
  const std::size_t batch = x.size() / (m * n);
  const auto& xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[b * m * n + j * m + i] = xd[b * m * n + i * n + j];
    }
  }
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  return make_result(std::move(shape), std::move(out), {x},
                     [batch, m, n](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t j = 0; j < n; ++j) {
                             gx[b * m * n + i * n + j] += self.grad[b * m * n + j * m + i];
                           }
                         }
                       }
                     },
                     "transpose");
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat axis " + std::to_string(axis) + " out of range");
  Shape shape = ref;
  shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = ref;
    if (a.size() != b.size()) throw DimensionError("concat: rank mismatch " + shape_string(a) + " vs " + shape_string(b));
    a[axis] = b[axis] = 0;
    if (a != b) throw DimensionError("concat: " + shape_string(p.shape()) + " incompatible with " + shape_string(ref));
    shape[axis] += p.shape()[axis];
  }
  const auto s = split_at(shape, axis);
  for (const auto& p : parts) widths.push_back(p.shape()[axis] * s.inner);
  const std::size_t row = s.n * s.inner;
  std::vector<double> out(numel(shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pd = parts[k].data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pd.data() + o * widths[k], widths[k], out.data() + o * row + offset);
    }
    offset += widths[k];
  }
  return make_result(std::move(shape), std::move(out), parts,
                     [widths, outer = s.outer, row](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         if (auto* gp = parent_grad(self, k)) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = self.grad.data() + o * row + offset;
                             double* dst = gp + o * widths[k];
                             for (std::size_t j = 0; j < widths[k]; ++j) dst[j] += src[j];
                           }
                         }
                         offset += widths[k];
                       }
                     },
                     "concat");
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto s = split_at(x.shape(), axis);
  if (begin >= end || end > s.n) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for axis " +
                         std::to_string(axis) + " of " + shape_string(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = end - begin;
  const std::size_t width = (end - begin) * s.inner;
  const std::size_t row = s.n * s.inner;
  const std::size_t start = begin * s.inner;
  std::vector<double> out(s.outer * width);
  const auto& xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) std::copy_n(xd.data() + o * row + start, width, out.data() + o * width);
  return make_result(std::move(shape), std::move(out), {x},
                     [outer = s.outer, width, row, start](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       for (std::size_t o = 0; o < outer; ++o) {
                         const double* src = self.grad.data() + o * width;
                         double* dst = gx + o * row + start;
                         for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
                       }
                     },
                     "slice");
}

Tensor diagonal(const Tensor& x) {
  if (x.rank() != 2 || x.dim(0) != x.dim(1)) {
    throw DimensionError("diagonal expects a square matrix, got " + shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i * n + i;
  return gather(x, std::move(idx), {n});
}

Tensor gather(const Tensor& x, std::vector<std::size_t> indices, Shape shape) {
  if (numel(shape) != indices.size()) {
    throw DimensionError("gather: " + std::to_string(indices.size()) + " indices for shape " + shape_string(shape));
  }
  std::vector<double> out(indices.size());
  const auto& xd = x.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= xd.size()) throw IndexError("gather index " + std::to_string(indices[i]) + " out of range");
    out[i] = xd[indices[i]];
  }
  return make_result(std::move(shape), std::move(out), {x},
                     [indices = std::move(indices)](Node& self) {
                       auto* gx = parent_grad(self, 0);
                       for (std::size_t i = 0; i < indices.size(); ++i) gx[indices[i]] += self.grad[i];
                     },
                     "gather");
}

AttentionMask AttentionMask::full(std::size_t queries, std::size_t keys) {
  return {1, queries, keys, std::vector<std::uint8_t>(queries * keys, 1)};
}

AttentionMask AttentionMask::causal(std::size_t length) {
  AttentionMask m{1, length, length, std::vector<std::uint8_t>(length * length, 0)};
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m.allowed[i * length + j] = 1;
  }
  return m;
}

AttentionMask AttentionMask::key_padding(std::span<const std::uint8_t> key_valid, std::size_t batch,
                                         std::size_t queries) {
  if (batch == 0 || key_valid.size() % batch != 0) throw DimensionError("key_padding: flags do not divide into batch");
  const std::size_t keys = key_valid.size() / batch;
  AttentionMask m{batch, queries, keys, std::vector<std::uint8_t>(batch * queries * keys)};
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t q = 0; q < queries; ++q) {
      std::copy_n(key_valid.data() + b * keys, keys, m.allowed.data() + (b * queries + q) * keys);
    }
  }
  return m;
}

Tensor attention(const Tensor& query, const Tensor& key, const Tensor& value, std::size_t heads,
                 const AttentionMask& mask) {
  if (query.rank() != 3 || key.rank() != 3 || value.shape() != key.shape() || query.dim(0) != key.dim(0) ||
      query.dim(2) != key.dim(2)) {
    throw DimensionError("attention: incompatible query " + shape_string(query.shape()) + ", key " +
                         shape_string(key.shape()) + ", value " + shape_string(value.shape()));
  }
  const std::size_t batch = query.dim(0), lq = query.dim(1), lk = key.dim(1), width = query.dim(2);
  if (heads == 0 || width % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(width) + " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  if (mask.queries != lq || mask.keys != lk || (mask.batch != 1 && mask.batch != batch)) {
    throw DimensionError("attention: mask geometry does not match " + std::to_string(lq) + "x" + std::to_string(lk));
  }
  const std::size_t hd = width / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(hd));
  const auto& qd = query.data();
  const auto& kd = key.data();
  const auto& vd = value.data();
  auto probs = std::make_shared<std::vector<double>>(batch * heads * lq * lk, 0.0);
  std::vector<double> out(batch * lq * width, 0.0);
  std::vector<double> scores(lk);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < lq; ++i) {
        const double* qi = qd.data() + (b * lq + i) * width + h * hd;
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < lk; ++j) {
          if (!mask.at(b, i, j)) continue;
          const double* kj = kd.data() + (b * lk + j) * width + h * hd;
          double s = 0.0;
          for (std::size_t t = 0; t < hd; ++t) s += qi[t] * kj[t];
          scores[j] = s * scale_factor;
          m = std::max(m, scores[j]);
        }
        if (m == -std::numeric_limits<double>::infinity()) continue;
        double* p = probs->data() + ((b * heads + h) * lq + i) * lk;
        double z = 0.0;
        for (std::size_t j = 0; j < lk; ++j) {
          if (!mask.at(b, i, j)) continue;
          p[j] = std::exp(scores[j] - m);
          z += p[j];
        }
        double* oi = out.data() + (b * lq + i) * width + h * hd;
        for (std::size_t j = 0; j < lk; ++j) {
          if (!mask.at(b, i, j)) continue;
          p[j] /= z;
          const double* vj = vd.data() + (b * lk + j) * width + h * hd;
          for (std::size_t t = 0; t < hd; ++t) oi[t] += p[j] * vj[t];
        }
      }
    }
  }
  return make_result(
      {batch, lq, width}, std::move(out), {query, key, value},
      [=](Node& self) {
        const auto& g = self.grad;
        const auto& qd = parent_data(self, 0);
        const auto& kd = parent_data(self, 1);
        const auto& vd = parent_data(self, 2);
        auto* gq = parent_grad(self, 0);
        auto* gk = parent_grad(self, 1);
        auto* gv = parent_grad(self, 2);
        std::vector<double> dp(lk);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < lq; ++i) {
              const double* p = probs->data() + ((b * heads + h) * lq + i) * lk;
              const double* gi = g.data() + (b * lq + i) * width + h * hd;
              double dot = 0.0;
              for (std::size_t j = 0; j < lk; ++j) {
                if (p[j] == 0.0) {
                  dp[j] = 0.0;
                  continue;
                }
                const double* vj = vd.data() + (b * lk + j) * width + h * hd;
                double acc = 0.0;
                for (std::size_t t = 0; t < hd; ++t) acc += gi[t] * vj[t];
                dp[j] = acc;
                dot += p[j] * acc;
                if (gv) {
                  double* gvj = gv + (b * lk + j) * width + h * hd;
                  for (std::size_t t = 0; t < hd; ++t) gvj[t] += p[j] * gi[t];
                }
              }
              const double* qi = qd.data() + (b * lq + i) * width + h * hd;
              double* gqi = gq ? gq + (b * lq + i) * width + h * hd : nullptr;
              for (std::size_t j = 0; j < lk; ++j) {
                if (p[j] == 0.0) continue;
                const double ds = p[j] * (dp[j] - dot) * scale_factor;
                const double* kj = kd.data() + (b * lk + j) * width + h * hd;
                if (gqi) {
                  for (std::size_t t = 0; t < hd; ++t) gqi[t] += ds * kj[t];
                }
                if (gk) {
                  double* gkj = gk + (b * lk + j) * width + h * hd;
                  for (std::size_t t = 0; t < hd; ++t) gkj[t] += ds * qi[t];
                }
              }
            }
          }
        }
      },
      "attention");
}

namespace {

struct SimilarityGeometry {
  std::size_t queries, query_rows, targets, target_rows, width;
};

// Row/column maxima of the token similarity matrix for one (query, target) pair.
void pair_maxima(const SimilarityGeometry& g, const double* q, const std::uint8_t* qm, const double* x,
                 const std::uint8_t* xm, std::vector<double>& sim, std::vector<std::size_t>& row_arg,
                 std::vector<std::size_t>& col_arg) {
  for (std::size_t i = 0; i < g.query_rows; ++i) {
    if (!qm[i]) continue;
    for (std::size_t j = 0; j < g.target_rows; ++j) {
      if (!xm[j]) continue;
      double s = 0.0;
      for (std::size_t t = 0; t < g.width; ++t) s += q[i * g.width + t] * x[j * g.width + t];
      sim[i * g.target_rows + j] = s;
    }
  }
  for (std::size_t i = 0; i < g.query_rows; ++i) {
    if (!qm[i]) continue;
    std::size_t best = g.target_rows;
    for (std::size_t j = 0; j < g.target_rows; ++j) {
      if (xm[j] && (best == g.target_rows || sim[i * g.target_rows + j] > sim[i * g.target_rows + best])) best = j;
    }
    row_arg[i] = best;
  }
  for (std::size_t j = 0; j < g.target_rows; ++j) {
    if (!xm[j]) continue;
    std::size_t best = g.query_rows;
    for (std::size_t i = 0; i < g.query_rows; ++i) {
      if (qm[i] && (best == g.query_rows || sim[i * g.target_rows + j] > sim[best * g.target_rows + j])) best = i;
    }
    col_arg[j] = best;
  }
}

std::vector<std::uint8_t> mask_or_all(std::span<const std::uint8_t> mask, std::size_t n, const char* what) {
  if (mask.empty()) return std::vector<std::uint8_t>(n, 1);
  if (mask.size() != n) {
    throw DimensionError(std::string("fine_similarity_matrix: ") + what + " mask has " + std::to_string(mask.size()) +
                         " entries, expected " + std::to_string(n));
  }
  return {mask.begin(), mask.end()};
}

void require_nonempty_items(const std::vector<std::uint8_t>& mask, std::size_t items, std::size_t rows,
                            const char* what) {
  for (std::size_t b = 0; b < items; ++b) {
    if (std::none_of(mask.begin() + static_cast<std::ptrdiff_t>(b * rows),
                     mask.begin() + static_cast<std::ptrdiff_t>((b + 1) * rows), [](auto v) { return v != 0; })) {
      throw ContractError(std::string("fine similarity: ") + what + " item " + std::to_string(b) +
                          " has no unmasked rows");
    }
  }
}

}  // namespace

Tensor fine_similarity_matrix(const Tensor& query, std::span<const std::uint8_t> query_mask,
                              const Tensor& query_weights, const Tensor& target,
                              std::span<const std::uint8_t> target_mask, const Tensor& target_weights) {
  if (query.rank() != 3 || target.rank() != 3 || query.dim(2) != target.dim(2)) {
    throw DimensionError("fine_similarity_matrix: incompatible query " + shape_string(query.shape()) + " and target " +
                         shape_string(target.shape()));
  }
  const SimilarityGeometry geo{query.dim(0), query.dim(1), target.dim(0), target.dim(1), query.dim(2)};
  if (query_weights.shape() != Shape{geo.queries, geo.query_rows} ||
      target_weights.shape() != Shape{geo.targets, geo.target_rows}) {
    throw DimensionError("fine_similarity_matrix: weights " + shape_string(query_weights.shape()) + "/" +
                         shape_string(target_weights.shape()) + " do not match rows");
  }
  auto qmask = std::make_shared<std::vector<std::uint8_t>>(
      mask_or_all(query_mask, geo.queries * geo.query_rows, "query"));
  auto xmask = std::make_shared<std::vector<std::uint8_t>>(
      mask_or_all(target_mask, geo.targets * geo.target_rows, "target"));
  require_nonempty_items(*qmask, geo.queries, geo.query_rows, "query");
  require_nonempty_items(*xmask, geo.targets, geo.target_rows, "target");

  const auto& qd = query.data();
  const auto& xd = target.data();
  const auto& wq = query_weights.data();
  const auto& wx = target_weights.data();
  std::vector<double> out(geo.queries * geo.targets);
  std::vector<double> sim(geo.query_rows * geo.target_rows);
  std::vector<std::size_t> row_arg(geo.query_rows), col_arg(geo.target_rows);
  for (std::size_t b = 0; b < geo.queries; ++b) {
    const double* q = qd.data() + b * geo.query_rows * geo.width;
    const std::uint8_t* qm = qmask->data() + b * geo.query_rows;
    for (std::size_t k = 0; k < geo.targets; ++k) {
      const double* x = xd.data() + k * geo.target_rows * geo.width;
      const std::uint8_t* xm = xmask->data() + k * geo.target_rows;
      pair_maxima(geo, q, qm, x, xm, sim, row_arg, col_arg);
      double text_side = 0.0, target_side = 0.0;
      for (std::size_t i = 0; i < geo.query_rows; ++i) {
        if (qm[i]) text_side += wq[b * geo.query_rows + i] * sim[i * geo.target_rows + row_arg[i]];
      }
      for (std::size_t j = 0; j < geo.target_rows; ++j) {
        if (xm[j]) target_side += wx[k * geo.target_rows + j] * sim[col_arg[j] * geo.target_rows + j];
      }
      out[b * geo.targets + k] = 0.5 * text_side + 0.5 * target_side;
    }
  }
  return make_result(
      {geo.queries, geo.targets}, std::move(out), {query, query_weights, target, target_weights},
      [geo, qmask, xmask](Node& self) {
        const auto& qd = parent_data(self, 0);
        const auto& wq = parent_data(self, 1);
        const auto& xd = parent_data(self, 2);
        const auto& wx = parent_data(self, 3);
        auto* gq = parent_grad(self, 0);
        auto* gwq = parent_grad(self, 1);
        auto* gx = parent_grad(self, 2);
        auto* gwx = parent_grad(self, 3);
        std::vector<double> sim(geo.query_rows * geo.target_rows);
        std::vector<std::size_t> row_arg(geo.query_rows), col_arg(geo.target_rows);
        const std::size_t w = geo.width;
        for (std::size_t b = 0; b < geo.queries; ++b) {
          const double* q = qd.data() + b * geo.query_rows * w;
          const std::uint8_t* qm = qmask->data() + b * geo.query_rows;
          for (std::size_t k = 0; k < geo.targets; ++k) {
            const double g = 0.5 * self.grad[b * geo.targets + k];
            if (g == 0.0) continue;
            const double* x = xd.data() + k * geo.target_rows * w;
            const std::uint8_t* xm = xmask->data() + k * geo.target_rows;
            pair_maxima(geo, q, qm, x, xm, sim, row_arg, col_arg);
            for (std::size_t i = 0; i < geo.query_rows; ++i) {
              if (!qm[i]) continue;
              const std::size_t j = row_arg[i];
              const double weight = wq[b * geo.query_rows + i];
              if (gwq) gwq[b * geo.query_rows + i] += g * sim[i * geo.target_rows + j];
              if (gq) {
                for (std::size_t t = 0; t < w; ++t) gq[(b * geo.query_rows + i) * w + t] += g * weight * x[j * w + t];
              }
              if (gx) {
                for (std::size_t t = 0; t < w; ++t) gx[(k * geo.target_rows + j) * w + t] += g * weight * q[i * w + t];
              }
            }
            for (std::size_t j = 0; j < geo.target_rows; ++j) {
              if (!xm[j]) continue;
              const std::size_t i = col_arg[j];
              const double weight = wx[k * geo.target_rows + j];
              if (gwx) gwx[k * geo.target_rows + j] += g * sim[i * geo.target_rows + j];
              if (gq) {
                for (std::size_t t = 0; t < w; ++t) gq[(b * geo.query_rows + i) * w + t] += g * weight * x[j * w + t];
              }
              if (gx) {
                for (std::size_t t = 0; t < w; ++t) gx[(k * geo.target_rows + j) * w + t] += g * weight * q[i * w + t];
              }
            }
          }
        }
      },
      "fine_similarity_matrix");
}

}  // namespace triad
