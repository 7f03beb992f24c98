#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sigte/errors.hpp"
#include "sigte/ops.hpp"
#include "sigte/tensor.hpp"

// Truncated path signatures of piecewise-linear paths.
//
// Coefficients are stored without the constant level-0 term, level by level
// (level 1 first), and in lexicographic multi-index order inside a level:
// the level-k entry for (i_1, ..., i_k) sits at
//   level_offset(d, k) + sum_j i_j * d^(k-j)        (0-based channel indices).
// Paths are sample points joined by straight segments with unit time steps;
// no time channel is added.
namespace sigte::sig {

// d^k, throwing OverflowError if it does not fit in size_t.
inline std::size_t checked_pow(std::size_t d, std::size_t k) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < k; ++i) {
    if (d != 0 && r > std::numeric_limits<std::size_t>::max() / d) {
      throw OverflowError("signature dimension overflows: " + std::to_string(d) + "^" + std::to_string(k));
    }
    r *= d;
  }
  return r;
}

// Number of stored coefficients, sum_{k=1..order} d^k.
inline std::size_t sig_dim(std::size_t d, std::size_t order) {
  if (d == 0 || order == 0) throw ContractError("sig_dim: channels and order must be positive");
  std::size_t total = 0;
  for (std::size_t k = 1; k <= order; ++k) {
    const std::size_t level = checked_pow(d, k);
    if (total > std::numeric_limits<std::size_t>::max() - level) {
      throw OverflowError("signature dimension overflows for d=" + std::to_string(d) +
                          ", order=" + std::to_string(order));
    }
    total += level;
  }
  return total;
}

inline std::size_t level_size(std::size_t d, std::size_t k) { return checked_pow(d, k); }

// Start of the level-k block (k >= 1) in the flat layout.
inline std::size_t level_offset(std::size_t d, std::size_t k) { return k <= 1 ? 0 : sig_dim(d, k - 1); }

// Column labels such as "S(1)", "S(1,2)" with 1-based channel indices.
inline std::vector<std::string> coefficient_labels(std::size_t d, std::size_t order) {
  std::vector<std::string> labels;
  labels.reserve(sig_dim(d, order));
  std::vector<std::size_t> idx;
  for (std::size_t k = 1; k <= order; ++k) {
    idx.assign(k, 0);
    const std::size_t n = level_size(d, k);
    for (std::size_t flat = 0; flat < n; ++flat) {
      std::size_t rem = flat;
      for (std::size_t j = k; j-- > 0;) {
        idx[j] = rem % d;
        rem /= d;
      }
      std::string s = "S(";
      for (std::size_t j = 0; j < k; ++j) {
        if (j) s += ',';
        s += std::to_string(idx[j] + 1);
      }
      labels.push_back(s + ")");
    }
  }
  return labels;
}

class TruncatedSignature {
 public:
  // The trivial signature (all stored levels zero).
  TruncatedSignature(std::size_t channels, std::size_t order)
      : channels_(channels), order_(order), coeffs_(sig_dim(channels, order), 0.0) {}

  TruncatedSignature(std::size_t channels, std::size_t order, std::vector<double> coeffs)
      : channels_(channels), order_(order), coeffs_(std::move(coeffs)) {
    if (coeffs_.size() != sig_dim(channels, order)) {
      throw DimensionError("signature of d=" + std::to_string(channels) + ", order=" + std::to_string(order) +
                           " needs " + std::to_string(sig_dim(channels, order)) + " coefficients");
    }
  }

  std::size_t channels() const noexcept { return channels_; }
  std::size_t order() const noexcept { return order_; }
  std::size_t size() const noexcept { return coeffs_.size(); }

  std::span<const double> coeffs() const noexcept { return coeffs_; }
  std::span<double> coeffs() noexcept { return coeffs_; }

  std::span<const double> level(std::size_t k) const {
    return std::span<const double>(coeffs_).subspan(level_offset(channels_, k), level_size(channels_, k));
  }
  std::span<double> level(std::size_t k) {
    return std::span<double>(coeffs_).subspan(level_offset(channels_, k), level_size(channels_, k));
  }

  // Coefficient for a 0-based multi-index.
  double at(std::span<const std::size_t> multi_index) const {
    std::size_t flat = 0;
    for (auto i : multi_index) flat = flat * channels_ + i;
    return level(multi_index.size())[flat];
  }

 private:
  std::size_t channels_;
  std::size_t order_;
  std::vector<double> coeffs_;
};

namespace detail {

// Level k = delta^{(x)k} / k!, built as level_{k-1} (x) delta / k.
inline void segment_into(std::span<const double> delta, std::size_t order, std::span<double> out) {
  const std::size_t d = delta.size();
  std::copy(delta.begin(), delta.end(), out.begin());
  for (std::size_t k = 2; k <= order; ++k) {
    const std::size_t prev_off = level_offset(d, k - 1), prev_n = level_size(d, k - 1);
    const std::size_t off = level_offset(d, k);
    const double inv_k = 1.0 / static_cast<double>(k);
    for (std::size_t p = 0; p < prev_n; ++p) {
      const double base = out[prev_off + p] * inv_k;
      for (std::size_t q = 0; q < d; ++q) out[off + p * d + q] = base * delta[q];
    }
  }
}

// out = a (x) b truncated; level 0 of both operands is the implicit 1.
// out must not alias a or b.
inline void chen_into(std::span<const double> a, std::span<const double> b, std::size_t d, std::size_t order,
                      std::span<double> out) {
  for (std::size_t k = 1; k <= order; ++k) {
    const std::size_t off = level_offset(d, k), n = level_size(d, k);
    for (std::size_t x = 0; x < n; ++x) out[off + x] = a[off + x] + b[off + x];
    for (std::size_t i = 1; i < k; ++i) {
      const std::size_t j = k - i;
      const std::size_t ai = level_offset(d, i), ni = level_size(d, i);
      const std::size_t bj = level_offset(d, j), nj = level_size(d, j);
      for (std::size_t p = 0; p < ni; ++p) {
        const double av = a[ai + p];
        if (av == 0.0) continue;
        double* dst = out.data() + off + p * nj;
        const double* src = b.data() + bj;
        for (std::size_t q = 0; q < nj; ++q) dst[q] += av * src[q];
      }
    }
  }
}

// Adjoint of chen_into: accumulates into ga, gb given gc.
inline void chen_backward(std::span<const double> a, std::span<const double> b, std::span<const double> gc,
                          std::size_t d, std::size_t order, std::span<double> ga, std::span<double> gb) {
  for (std::size_t k = 1; k <= order; ++k) {
    const std::size_t off = level_offset(d, k), n = level_size(d, k);
    for (std::size_t x = 0; x < n; ++x) {
      ga[off + x] += gc[off + x];
      gb[off + x] += gc[off + x];
    }
    for (std::size_t i = 1; i < k; ++i) {
      const std::size_t j = k - i;
      const std::size_t ai = level_offset(d, i), ni = level_size(d, i);
      const std::size_t bj = level_offset(d, j), nj = level_size(d, j);
      for (std::size_t p = 0; p < ni; ++p) {
        const double* g = gc.data() + off + p * nj;
        double acc = 0.0;
        for (std::size_t q = 0; q < nj; ++q) {
          acc += g[q] * b[bj + q];
          gb[bj + q] += g[q] * a[ai + p];
        }
        ga[ai + p] += acc;
      }
    }
  }
}

// Adjoint of segment_into: accumulates d<upstream, segment(delta)>/d delta.
// `seg` is the forward value; `gseg` is consumed as scratch.
inline void segment_backward(std::span<const double> delta, std::span<const double> seg, std::span<double> gseg,
                             std::size_t order, std::span<double> gdelta) {
  const std::size_t d = delta.size();
  for (std::size_t k = order; k >= 2; --k) {
    const std::size_t prev_off = level_offset(d, k - 1), prev_n = level_size(d, k - 1);
    const std::size_t off = level_offset(d, k);
    const double inv_k = 1.0 / static_cast<double>(k);
    for (std::size_t p = 0; p < prev_n; ++p) {
      double acc = 0.0;
      for (std::size_t q = 0; q < d; ++q) {
        const double g = gseg[off + p * d + q] * inv_k;
        acc += g * delta[q];
        gdelta[q] += g * seg[prev_off + p];
      }
      gseg[prev_off + p] += acc;
    }
  }
  for (std::size_t q = 0; q < d; ++q) gdelta[q] += gseg[q];
}

inline void require_path(const Tensor& path, const char* op) {
  if (path.rank() != 2) {
    throw DimensionError(std::string(op) + ": path must be [L x d], got " + shape_string(path.shape()));
  }
}

// All prefix signatures of a path, rows 0..L-1, row 0 trivial.
inline std::vector<double> prefix_signatures(const Tensor& path, std::size_t order) {
  const std::size_t len = path.dim(0), d = path.dim(1), n = sig_dim(d, order);
  std::vector<double> rows(len * n, 0.0);
  std::vector<double> delta(d), seg(n);
  for (std::size_t t = 1; t < len; ++t) {
    for (std::size_t c = 0; c < d; ++c) delta[c] = path.at(t, c) - path.at(t - 1, c);
    segment_into(delta, order, seg);
    chen_into(std::span<const double>(rows).subspan((t - 1) * n, n), seg, d, order,
              std::span<double>(rows).subspan(t * n, n));
  }
  return rows;
}

}  // namespace detail

inline TruncatedSignature segment_signature(std::span<const double> delta, std::size_t order) {
  if (delta.empty()) throw ContractError("segment_signature: empty increment");
  for (double v : delta) {
    if (!std::isfinite(v)) throw NumericError("segment_signature: non-finite increment");
  }
  TruncatedSignature s(delta.size(), order);
  detail::segment_into(delta, order, s.coeffs());
  return s;
}

inline TruncatedSignature chen_product(const TruncatedSignature& a, const TruncatedSignature& b) {
  if (a.channels() != b.channels() || a.order() != b.order()) {
    throw ContractError("chen_product: operands differ in channels or order");
  }
  TruncatedSignature out(a.channels(), a.order());
  detail::chen_into(a.coeffs(), b.coeffs(), a.channels(), a.order(), out.coeffs());
  return out;
}

// Signature of the whole path; a single point gives the trivial signature.
inline TruncatedSignature signature(const Tensor& path, std::size_t order) {
  detail::require_path(path, "signature");
  const std::size_t d = path.dim(1), n = sig_dim(d, order);
  auto rows = detail::prefix_signatures(path, order);
  return TruncatedSignature(d, order, std::vector<double>(rows.end() - static_cast<std::ptrdiff_t>(n), rows.end()));
}

// Row t holds the signature of points[0..t].
inline Tensor stream_signature(const Tensor& path, std::size_t order) {
  detail::require_path(path, "stream_signature");
  const std::size_t len = path.dim(0), n = sig_dim(path.dim(1), order);
  return Tensor(Shape{len, n}, detail::prefix_signatures(path, order));
}

// Gradient of <upstream, output> with respect to every path point, where the
// output is the whole-path signature (upstream [sig_dim]) or the stream of
// prefix signatures (upstream [L x sig_dim]).
inline Tensor signature_backward(const Tensor& path, std::size_t order, const Tensor& upstream) {
  detail::require_path(path, "signature_backward");
  const std::size_t len = path.dim(0), d = path.dim(1), n = sig_dim(d, order);
  const bool stream = upstream.rank() == 2;
  if (stream ? (upstream.dim(0) != len || upstream.dim(1) != n) : (upstream.rank() != 1 || upstream.size() != n)) {
    throw ContractError("signature_backward: upstream gradient " + shape_string(upstream.shape()) +
                        " does not match signature output of path " + shape_string(path.shape()));
  }
  Tensor grad(Shape{len, d});
  if (len == 1) return grad;

  auto prefixes = detail::prefix_signatures(path, order);
  std::vector<double> running(n, 0.0);  // gradient w.r.t. prefix signature t
  if (!stream) {
    auto u = upstream.data();
    std::copy(u.begin(), u.end(), running.begin());
  }
  std::vector<double> delta(d), seg(n), gprev(n), gseg(n), gdelta(d);
  for (std::size_t t = len - 1; t >= 1; --t) {
    if (stream) {
      for (std::size_t x = 0; x < n; ++x) running[x] += upstream.at(t, x);
    }
    for (std::size_t c = 0; c < d; ++c) delta[c] = path.at(t, c) - path.at(t - 1, c);
    detail::segment_into(delta, order, seg);
    std::fill(gprev.begin(), gprev.end(), 0.0);
    std::fill(gseg.begin(), gseg.end(), 0.0);
    std::fill(gdelta.begin(), gdelta.end(), 0.0);
    detail::chen_backward(std::span<const double>(prefixes).subspan((t - 1) * n, n), seg, running, d, order, gprev,
                          gseg);
    detail::segment_backward(delta, seg, gseg, order, gdelta);
    for (std::size_t c = 0; c < d; ++c) {
      grad.at(t, c) += gdelta[c];
      grad.at(t - 1, c) -= gdelta[c];
    }
    running.swap(gprev);
  }
  return grad;
}

enum class SignatureMode { stream, pooled };

// Differentiable signature primitive: [L x d] -> [L x sig_dim] (stream) or
// [sig_dim] (pooled).
inline Tensor signature_transform(Tape& tape, const Tensor& path, std::size_t order, SignatureMode mode) {
  detail::require_path(path, "signature_transform");
  const std::size_t len = path.dim(0), n = sig_dim(path.dim(1), order);
  auto rows = detail::prefix_signatures(path, order);
  Tensor out = mode == SignatureMode::stream
                   ? Tensor(Shape{len, n}, std::move(rows))
                   : Tensor(Shape{n}, std::vector<double>(rows.end() - static_cast<std::ptrdiff_t>(n), rows.end()));
  if (tape.tracks({&path})) {
    out.set_requires_grad(true);
    tape.record("signature", {path}, out, [path, out, order]() mutable {
      Tensor upstream(out.shape(), std::vector<double>(out.grad().begin(), out.grad().end()));
      Tensor g = signature_backward(path, order, upstream);
      sigte::detail::accumulate(path, g.data());
    });
  }
  return out;
}

}  // namespace sigte::sig
