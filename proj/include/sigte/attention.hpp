#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sigte/errors.hpp"
#include "sigte/ops.hpp"
#include "sigte/random.hpp"
#include "sigte/signature.hpp"
#include "sigte/tensor.hpp"

namespace sigte {

using sig::SignatureMode;

struct SigAttentionConfig {
  std::size_t d_model = 768;
  std::size_t heads = 8;
  std::size_t d_presig = 32;
  std::size_t sig_order = 2;
  SignatureMode mode = SignatureMode::stream;

  std::size_t d_k() const { return d_model / heads; }
  std::size_t sig_dim() const { return sig::sig_dim(d_presig, sig_order); }

  void validate() const {
    if (d_model == 0 || heads == 0 || d_presig == 0 || sig_order == 0) {
      throw ConfigError("attention: d_model, heads, d_presig and sig_order must be positive");
    }
    if (d_model % heads != 0) {
      throw ConfigError("attention: d_model " + std::to_string(d_model) + " is not divisible by " +
                        std::to_string(heads) + " heads");
    }
    (void)sig_dim();
  }
};

// What sits where the signature transform normally is. `identity` is the
// ablation: the reduced path itself, zero-padded to sig_dim columns.
enum class SignatureMap { signature, identity };

// Uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)).
inline Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor w(Shape{fan_in, fan_out}, true);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w.data()) v = rng.uniform(-a, a);
  return w;
}

inline Tensor zeros_param(std::size_t n) { return Tensor(Shape{n}, true); }

struct HeadParams {
  Tensor wq, wk, wv;  // d_model x d_k
  Tensor wx;          // d_model x d_presig, input branch
  Tensor wr;          // d_k x d_presig, attention branch
  Tensor br;          // d_presig

  static HeadParams init(const SigAttentionConfig& cfg, Rng& rng) {
    HeadParams h;
    h.wq = xavier_uniform(cfg.d_model, cfg.d_k(), rng);
    h.wk = xavier_uniform(cfg.d_model, cfg.d_k(), rng);
    h.wv = xavier_uniform(cfg.d_model, cfg.d_k(), rng);
    h.wx = xavier_uniform(cfg.d_model, cfg.d_presig, rng);
    h.wr = xavier_uniform(cfg.d_k(), cfg.d_presig, rng);
    h.br = zeros_param(cfg.d_presig);
    return h;
  }

  std::vector<Tensor> parameters() const { return {wq, wk, wv, wx, wr, br}; }
  std::vector<std::string> parameter_names() const { return {"wq", "wk", "wv", "wx", "wr", "br"}; }
};

// softmax(Q K^T / sqrt(d_k)) V.
inline Tensor scaled_dot_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw ContractError("attention: Q, K, V must be matrices");
  }
  if (q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0) || q.dim(0) != k.dim(0)) {
    throw ContractError("attention: incompatible shapes Q" + shape_string(q.shape()) + " K" +
                        shape_string(k.shape()) + " V" + shape_string(v.shape()));
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor scores = scale(tape, matmul(tape, q, transpose(tape, k)), inv_sqrt);
  return matmul(tape, softmax_rows(tape, scores), v);
}

// Signature of the position-wise reduced path x W + b. Stream mode gives
// [L x sig_dim], pooled mode [sig_dim]. `bias` may be undefined.
inline Tensor reduced_sig(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias,
                          std::size_t order, SignatureMode mode, SignatureMap map = SignatureMap::signature) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(0)) {
    throw DimensionError("reduced_sig: input " + shape_string(x.shape()) + " does not match weight " +
                         shape_string(weight.shape()));
  }
  Tensor path = linear(tape, x, weight, bias);
  if (map == SignatureMap::signature) return sig::signature_transform(tape, path, order, mode);
  const std::size_t width = sig::sig_dim(weight.dim(1), order);
  if (mode == SignatureMode::stream) return pad_cols(tape, path, width);
  return pad_cols(tape, mean_rows(tape, path), width);
}

// ReducedSig(Attention(Q, K, V)) for one head; Q, K, V already projected.
inline Tensor sig_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v, const HeadParams& head,
                            const SigAttentionConfig& cfg, SignatureMap map = SignatureMap::signature) {
  Tensor attended = scaled_dot_attention(tape, q, k, v);
  return reduced_sig(tape, attended, head.wr, head.br, cfg.sig_order, cfg.mode, map);
}

// Per head: ReducedSig(X Wx) + SigAttention(X Wq, X Wk, X Wv); heads are
// concatenated along the feature axis. Output [L x h*sig_dim] (stream) or
// [h*sig_dim] (pooled).
inline Tensor additive_multi_head(Tape& tape, const Tensor& x, const std::vector<HeadParams>& heads,
                                  const SigAttentionConfig& cfg, SignatureMap map = SignatureMap::signature) {
  if (x.rank() != 2 || x.dim(1) != cfg.d_model) {
    throw DimensionError("additive_multi_head: input " + shape_string(x.shape()) + " is not [L x " +
                         std::to_string(cfg.d_model) + "]");
  }
  if (heads.size() != cfg.heads) throw ContractError("additive_multi_head: head count mismatch");
  std::vector<Tensor> outputs;
  outputs.reserve(heads.size());
  for (const auto& head : heads) {
    Tensor input_branch = reduced_sig(tape, x, head.wx, Tensor{}, cfg.sig_order, cfg.mode, map);
    Tensor q = matmul(tape, x, head.wq);
    Tensor k = matmul(tape, x, head.wk);
    Tensor v = matmul(tape, x, head.wv);
    Tensor attention_branch = sig_attention(tape, q, k, v, head, cfg, map);
    outputs.push_back(add(tape, input_branch, attention_branch));
  }
  return outputs.size() == 1 ? outputs.front() : concat_cols(tape, outputs);
}

}  // namespace sigte
