#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sigte/attention.hpp"
#include "sigte/errors.hpp"
#include "sigte/ops.hpp"
#include "sigte/random.hpp"
#include "sigte/tensor.hpp"

namespace sigte {

// How a stream of per-position outputs becomes one prediction input.
enum class Pooling { mean, last, first };

struct STEConfig {
  SigAttentionConfig attention;
  std::size_t n_layers = 1;
  std::size_t d_ff_hidden = 0;  // 0 means d_model
  double p_drop = 0.1;
  bool use_positional_encoding = true;
  bool use_signature = true;
  Pooling pooling = Pooling::mean;
  double layer_norm_eps = 1e-5;

  std::size_t d_model() const { return attention.d_model; }
  std::size_t ff_hidden() const { return d_ff_hidden == 0 ? attention.d_model : d_ff_hidden; }
  std::size_t concat_width() const { return attention.heads * attention.sig_dim(); }
  SignatureMap signature_map() const { return use_signature ? SignatureMap::signature : SignatureMap::identity; }

  void validate() const {
    attention.validate();
    if (n_layers == 0) throw ConfigError("encoder: n_layers must be at least 1");
    if (!(p_drop >= 0.0 && p_drop < 1.0)) throw ConfigError("encoder: p_drop must lie in [0, 1)");
    if (attention.mode == SignatureMode::pooled && n_layers != 1) {
      throw ConfigError("encoder: pooled signature mode requires n_layers = 1");
    }
    if (use_positional_encoding && attention.d_model % 2 != 0) {
      throw ConfigError("encoder: positional encoding needs an even d_model");
    }
    if (!(layer_norm_eps > 0.0)) throw ConfigError("encoder: layer_norm_eps must be positive");
  }

  // Small configuration used by tests, gradcheck and the desk-scale runs.
  static STEConfig toy() {
    STEConfig cfg;
    cfg.attention.d_model = 8;
    cfg.attention.heads = 2;
    cfg.attention.d_presig = 2;
    cfg.attention.sig_order = 2;
    return cfg;
  }
};

struct STELayerParams {
  std::vector<HeadParams> heads;
  Tensor w_ff1, b_ff1;    // (h*sig_dim) x d_model
  Tensor w_ff2a, b_ff2a;  // d_model x d_ff_hidden
  Tensor w_ff2b, b_ff2b;  // d_ff_hidden x d_model
  Tensor ln_gain, ln_bias;

  static STELayerParams init(const STEConfig& cfg, Rng& rng) {
    STELayerParams p;
    for (std::size_t i = 0; i < cfg.attention.heads; ++i) p.heads.push_back(HeadParams::init(cfg.attention, rng));
    const std::size_t d = cfg.d_model(), hid = cfg.ff_hidden();
    p.w_ff1 = xavier_uniform(cfg.concat_width(), d, rng);
    p.b_ff1 = zeros_param(d);
    p.w_ff2a = xavier_uniform(d, hid, rng);
    p.b_ff2a = zeros_param(hid);
    p.w_ff2b = xavier_uniform(hid, d, rng);
    p.b_ff2b = zeros_param(d);
    p.ln_gain = Tensor(Shape{d}, std::vector<double>(d, 1.0), true);
    p.ln_bias = zeros_param(d);
    return p;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (const auto& h : heads) {
      auto hp = h.parameters();
      out.insert(out.end(), hp.begin(), hp.end());
    }
    out.insert(out.end(), {w_ff1, b_ff1, w_ff2a, b_ff2a, w_ff2b, b_ff2b, ln_gain, ln_bias});
    return out;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < heads.size(); ++i) {
      for (const auto& n : heads[i].parameter_names()) out.push_back("head" + std::to_string(i) + "." + n);
    }
    out.insert(out.end(), {"w_ff1", "b_ff1", "w_ff2a", "b_ff2a", "w_ff2b", "b_ff2b", "ln_gain", "ln_bias"});
    return out;
  }
};

// Sinusoidal table: PE[t, 2i] = sin(t / 10000^(2i/d)), PE[t, 2i+1] = cos(...).
inline Tensor positional_encoding(std::size_t length, std::size_t d_model) {
  if (length == 0) throw ContractError("positional_encoding: length must be positive");
  if (d_model == 0 || d_model % 2 != 0) throw ConfigError("positional_encoding: d_model must be even");
  Tensor pe(Shape{length, d_model});
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(t) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe.at(t, 2 * i) = std::sin(angle);
      pe.at(t, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

// One STE layer:
//   s1 = dropout(AdditiveMultiHead(x))
//   s2 = dropout(s1 W_ff1 + b)
//   s3 = layer_norm(s2 + dropout(dropout(relu(s2 W_ff2a + b)) W_ff2b + b))
// Residual and layer norm wrap only the third sub-layer. In pooled mode the
// single signature row flows through as a [1 x d_model] matrix.
inline Tensor ste_layer_forward(Tape& tape, const Tensor& x, const STELayerParams& params, const STEConfig& cfg,
                                bool training, Rng& rng) {
  const double p = cfg.p_drop;
  Tensor heads = additive_multi_head(tape, x, params.heads, cfg.attention, cfg.signature_map());
  if (heads.rank() == 1) heads = reshape(tape, heads, Shape{1, heads.size()});
  Tensor s1 = dropout(tape, heads, p, training, rng);
  Tensor s2 = dropout(tape, linear(tape, s1, params.w_ff1, params.b_ff1), p, training, rng);
  Tensor hidden = dropout(tape, relu(tape, linear(tape, s2, params.w_ff2a, params.b_ff2a)), p, training, rng);
  Tensor ff = dropout(tape, linear(tape, hidden, params.w_ff2b, params.b_ff2b), p, training, rng);
  return layer_norm(tape, add(tape, s2, ff), params.ln_gain, params.ln_bias, cfg.layer_norm_eps);
}

inline std::vector<STELayerParams> init_encoder(const STEConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<STELayerParams> layers;
  for (std::size_t i = 0; i < cfg.n_layers; ++i) layers.push_back(STELayerParams::init(cfg, rng));
  return layers;
}

// Positional encoding (if enabled) followed by the layer stack. Returns
// [L x d_model] in stream mode, [d_model] in pooled mode.
inline Tensor encoder_forward(Tape& tape, const Tensor& embeddings, const std::vector<STELayerParams>& layers,
                              const STEConfig& cfg, bool training, Rng& rng) {
  cfg.validate();
  if (embeddings.rank() != 2 || embeddings.dim(1) != cfg.d_model()) {
    throw DimensionError("encoder: embeddings " + shape_string(embeddings.shape()) + " are not [L x " +
                         std::to_string(cfg.d_model()) + "]");
  }
  if (layers.size() != cfg.n_layers) throw ContractError("encoder: layer count does not match config");
  Tensor h = embeddings;
  if (cfg.use_positional_encoding) h = add(tape, h, positional_encoding(embeddings.dim(0), cfg.d_model()));
  for (const auto& layer : layers) h = ste_layer_forward(tape, h, layer, cfg, training, rng);
  if (cfg.attention.mode == SignatureMode::pooled) return reshape(tape, h, Shape{cfg.d_model()});
  return h;
}

inline Tensor pool_sequence(Tape& tape, const Tensor& x, Pooling pooling) {
  if (x.rank() == 1) return x;
  switch (pooling) {
    case Pooling::mean:
      return mean_rows(tape, x);
    case Pooling::last:
      return select_row(tape, x, x.dim(0) - 1);
    case Pooling::first:
      return select_row(tape, x, 0);
  }
  throw ContractError("pool_sequence: unknown pooling");
}

}  // namespace sigte
