#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sigte/errors.hpp"
#include "sigte/random.hpp"
#include "sigte/tensor.hpp"

// Differentiable primitives. Every op takes the Tape first, computes its
// forward value eagerly and records a backward closure when any input
// requires a gradient. Rank-1 tensors are treated as a single row.
namespace sigte {

namespace detail {

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

inline void require_finite(const Tensor& t, const char* op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

inline void accumulate(const Tensor& target, std::span<const double> delta) {
  if (!target.requires_grad()) return;
  auto g = target.mutable_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

// c += a * b with a: m x k, b: k x n (all row-major).
inline void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a[i * k + t];
      if (av == 0.0) continue;
      const double* brow = b.data() + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c += a * b^T with a: m x k, b: n x k.
inline void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[j * k + t];
      c[i * n + j] += s;
    }
  }
}

// c += a^T * b with a: k x m, b: k x n.
inline void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t t = 0; t < k; ++t) {
    const double* brow = b.data() + t * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[t * m + i];
      if (av == 0.0) continue;
      double* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents disagree for " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor c(Shape{m, n});
  detail::gemm_nn(a.data(), b.data(), c.data(), m, k, n);
  if (tape.tracks({&a, &b})) {
    c.set_requires_grad(true);
    const bool corrupt = tape.fault() == Fault::matmul_grad;
    tape.record("matmul", {a, b}, c, [a, b, c, m, k, n, corrupt]() mutable {
      auto gc = c.grad();
      if (a.requires_grad()) detail::gemm_nt(gc, b.data(), a.mutable_grad(), m, n, k);
      if (b.requires_grad()) {
        if (corrupt) {
          std::vector<double> tmp(k * n, 0.0);
          detail::gemm_tn(a.data(), gc, tmp, k, m, n);
          auto gb = b.mutable_grad();
          for (std::size_t i = 0; i < tmp.size(); ++i) gb[i] += 1.5 * tmp[i];
        } else {
          detail::gemm_tn(a.data(), gc, b.mutable_grad(), k, m, n);
        }
      }
    });
  }
  return c;
}

inline Tensor transpose(Tape& tape, const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  if (tape.tracks({&a})) {
    out.set_requires_grad(true);
    tape.record("transpose", {a}, out, [a, out, m, n]() mutable {
      auto ga = a.mutable_grad();
      auto go = out.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
    });
  }
  return out;
}

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  if (tape.tracks({&a, &b})) {
    out.set_requires_grad(true);
    tape.record("add", {a, b}, out, [a, b, out]() mutable {
      detail::accumulate(a, out.grad());
      detail::accumulate(b, out.grad());
    });
  }
  return out;
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  if (tape.tracks({&a, &b})) {
    out.set_requires_grad(true);
    tape.record("sub", {a, b}, out, [a, b, out]() mutable {
      detail::accumulate(a, out.grad());
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        auto go = out.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

// Elementwise product.
inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  if (tape.tracks({&a, &b})) {
    out.set_requires_grad(true);
    tape.record("mul", {a, b}, out, [a, b, out]() mutable {
      auto go = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * a[i];
      }
    });
  }
  return out;
}

inline Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  if (tape.tracks({&a})) {
    out.set_requires_grad(true);
    tape.record("scale", {a}, out, [a, out, factor]() mutable {
      auto ga = a.mutable_grad();
      auto go = out.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * go[i];
    });
  }
  return out;
}

// a: [m x n] or [n], bias: [n], broadcast over rows.
inline Tensor add_bias(Tape& tape, const Tensor& a, const Tensor& bias) {
  if (bias.rank() != 1 || bias.dim(0) != a.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(a.shape()));
  }
  const std::size_t m = a.size() / a.cols(), n = a.cols();
  Tensor out(a.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + bias[j];
  if (tape.tracks({&a, &bias})) {
    out.set_requires_grad(true);
    tape.record("add_bias", {a, bias}, out, [a, bias, out, m, n]() mutable {
      auto go = out.grad();
      detail::accumulate(a, go);
      if (bias.requires_grad()) {
        auto gb = bias.mutable_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
      }
    });
  }
  return out;
}

// x W + b, position-wise. bias may be undefined.
inline Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias = {}) {
  Tensor y = matmul(tape, x, weight);
  return bias.defined() ? add_bias(tape, y, bias) : y;
}

inline Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (tape.tracks({&a})) {
    out.set_requires_grad(true);
    tape.record("sum", {a}, out, [a, out]() mutable {
      const double g = out.grad()[0];
      for (double& v : a.mutable_grad()) v += g;
    });
  }
  return out;
}

// Column means of a matrix: [m x n] -> [n].
inline Tensor mean_rows(Tape& tape, const Tensor& a) {
  detail::require_matrix(a, "mean_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a.at(i, j);
  for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(m);
  if (tape.tracks({&a})) {
    out.set_requires_grad(true);
    tape.record("mean_rows", {a}, out, [a, out, m, n]() mutable {
      auto ga = a.mutable_grad();
      auto go = out.grad();
      const double inv = 1.0 / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j] * inv;
    });
  }
  return out;
}

// Row i of a matrix as a vector.
inline Tensor select_row(Tape& tape, const Tensor& a, std::size_t row) {
  detail::require_matrix(a, "select_row");
  if (row >= a.dim(0)) throw DimensionError("select_row: row out of range");
  const std::size_t n = a.dim(1);
  Tensor out(Shape{n});
  for (std::size_t j = 0; j < n; ++j) out[j] = a.at(row, j);
  if (tape.tracks({&a})) {
    out.set_requires_grad(true);
    tape.record("select_row", {a}, out, [a, out, row, n]() mutable {
      auto ga = a.mutable_grad();
      auto go = out.grad();
      for (std::size_t j = 0; j < n; ++j) ga[row * n + j] += go[j];
    });
  }
  return out;
}

inline Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  Tensor out(std::move(shape), a.values());
  if (tape.tracks({&a})) {
    out.set_requires_grad(true);
    tape.record("reshape", {a}, out, [a, out]() mutable { detail::accumulate(a, out.grad()); });
  }
  return out;
}

// Concatenate matrices with equal row counts along the feature axis.
inline Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: nothing to concatenate");
  const std::size_t m = parts.front().size() / parts.front().cols();
  std::size_t width = 0;
  for (const auto& p : parts) {
    if (p.size() / p.cols() != m) throw DimensionError("concat_cols: row counts differ");
    width += p.cols();
  }
  Shape shape = parts.front().rank() == 2 ? Shape{m, width} : Shape{width};
  Tensor out(shape);
  std::size_t offset = 0;
  bool track = false;
  for (const auto& p : parts) {
    const std::size_t n = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * width + offset + j] = p[i * n + j];
    offset += n;
    track = track || tape.tracks({&p});
  }
  if (track) {
    out.set_requires_grad(true);
    tape.record("concat_cols", parts, out, [parts, out, m, width]() mutable {
      auto go = out.grad();
      std::size_t offset = 0;
      for (auto& p : parts) {
        const std::size_t n = p.cols();
        if (p.requires_grad()) {
          auto gp = p.mutable_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gp[i * n + j] += go[i * width + offset + j];
        }
        offset += n;
      }
    });
  }
  return out;
}

// Zero-pad (or keep) the feature axis to `width` columns.
inline Tensor pad_cols(Tape& tape, const Tensor& a, std::size_t width) {
  const std::size_t n = a.cols();
  if (width < n) throw DimensionError("pad_cols: target width smaller than input");
  const std::size_t m = a.size() / n;
  Shape shape = a.rank() == 2 ? Shape{m, width} : Shape{width};
  Tensor out(shape);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * width + j] = a[i * n + j];
  if (tape.tracks({&a})) {
    out.set_requires_grad(true);
    tape.record("pad_cols", {a}, out, [a, out, m, n, width]() mutable {
      auto ga = a.mutable_grad();
      auto go = out.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[i * width + j];
    });
  }
  return out;
}

// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(Tape& tape, const Tensor& x) {
  detail::require_finite(x, "softmax_rows");
  const std::size_t n = x.cols(), m = x.size() / n;
  Tensor y(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[i * n + j] = std::exp(x[i * n + j] - mx);
      z += y[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] /= z;
  }
  if (tape.tracks({&x})) {
    y.set_requires_grad(true);
    tape.record("softmax_rows", {x}, y, [x, y, m, n]() mutable {
      auto gx = x.mutable_grad();
      auto gy = y.grad();
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[i * n + j] * y[i * n + j];
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (gy[i * n + j] - dot);
      }
    });
  }
  return y;
}

// Row-wise log-softmax via log-sum-exp.
inline Tensor log_softmax_rows(Tape& tape, const Tensor& x) {
  detail::require_finite(x, "log_softmax_rows");
  const std::size_t n = x.cols(), m = x.size() / n;
  Tensor y(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x[i * n + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x[i * n + j] - lse;
  }
  if (tape.tracks({&x})) {
    y.set_requires_grad(true);
    tape.record("log_softmax_rows", {x}, y, [x, y, m, n]() mutable {
      auto gx = x.mutable_grad();
      auto gy = y.grad();
      for (std::size_t i = 0; i < m; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += gy[i * n + j];
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gy[i * n + j] - std::exp(y[i * n + j]) * total;
      }
    });
  }
  return y;
}

// max(0, x); the subgradient at 0 is 0.
inline Tensor relu(Tape& tape, const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  if (tape.tracks({&x})) {
    y.set_requires_grad(true);
    tape.record("relu", {x}, y, [x, y]() mutable {
      auto gx = x.mutable_grad();
      auto gy = y.grad();
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (x[i] > 0.0) gx[i] += gy[i];
    });
  }
  return y;
}

// Normalizes every vector along the last axis, then applies gain and bias.
inline Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t d = x.cols(), m = x.size() / d;
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain/bias width does not match " + shape_string(x.shape()));
  }
  Tensor y(x.shape());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x[i * d + j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x[i * d + j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (x[i * d + j] - mean) * inv_std[i];
      y[i * d + j] = gain[j] * xhat[i * d + j] + bias[j];
    }
  }
  if (tape.tracks({&x, &gain, &bias})) {
    y.set_requires_grad(true);
    tape.record("layer_norm", {x, gain, bias}, y,
                [x, gain, bias, y, xhat = std::move(xhat), inv_std = std::move(inv_std), m, d]() mutable {
                  auto gy = y.grad();
                  if (gain.requires_grad()) {
                    auto gg = gain.mutable_grad();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < d; ++j) gg[j] += gy[i * d + j] * xhat[i * d + j];
                  }
                  if (bias.requires_grad()) {
                    auto gb = bias.mutable_grad();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < d; ++j) gb[j] += gy[i * d + j];
                  }
                  if (x.requires_grad()) {
                    auto gx = x.mutable_grad();
                    const double inv_d = 1.0 / static_cast<double>(d);
                    for (std::size_t i = 0; i < m; ++i) {
                      double mean_g = 0.0, mean_gx = 0.0;
                      for (std::size_t j = 0; j < d; ++j) {
                        const double g = gy[i * d + j] * gain[j];
                        mean_g += g;
                        mean_gx += g * xhat[i * d + j];
                      }
                      mean_g *= inv_d;
                      mean_gx *= inv_d;
                      for (std::size_t j = 0; j < d; ++j) {
                        const double g = gy[i * d + j] * gain[j];
                        gx[i * d + j] += inv_std[i] * (g - mean_g - xhat[i * d + j] * mean_gx);
                      }
                    }
                  }
                });
  }
  return y;
}

// Inverted dropout: survivors are scaled by 1/(1-p) at training time, so
// inference is the identity.
inline Tensor dropout(Tape& tape, const Tensor& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    y[i] = x[i] * mask[i];
  }
  if (tape.tracks({&x})) {
    y.set_requires_grad(true);
    tape.record("dropout", {x}, y, [x, y, mask = std::move(mask)]() mutable {
      auto gx = x.mutable_grad();
      auto gy = y.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * mask[i];
    });
  }
  return y;
}

// weight * (-log softmax(logits)[label]) for a single logit vector.
inline Tensor cross_entropy(Tape& tape, const Tensor& logits, std::size_t label, double weight = 1.0) {
  if (logits.rank() != 1) throw DimensionError("cross_entropy: logits must be a vector");
  if (label >= logits.size()) {
    throw DataError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                    std::to_string(logits.size()) + ")");
  }
  Tensor logp = log_softmax_rows(tape, logits);
  Tensor picked = Tensor::scalar(-weight * logp[label]);
  if (tape.tracks({&logp})) {
    picked.set_requires_grad(true);
    tape.record("nll", {logp}, picked, [logp, picked, label, weight]() mutable {
      logp.mutable_grad()[label] -= weight * picked.grad()[0];
    });
  }
  return picked;
}

// (pred - target)^2 for a single-element prediction.
inline Tensor squared_error(Tape& tape, const Tensor& pred, double target) {
  if (pred.size() != 1) throw DimensionError("squared_error: prediction must have one element");
  const double diff = pred[0] - target;
  Tensor out = Tensor::scalar(diff * diff);
  if (tape.tracks({&pred})) {
    out.set_requires_grad(true);
    tape.record("squared_error", {pred}, out, [pred, out, diff]() mutable {
      pred.mutable_grad()[0] += 2.0 * diff * out.grad()[0];
    });
  }
  return out;
}

}  // namespace sigte
