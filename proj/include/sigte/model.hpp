#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sigte/dataset.hpp"
#include "sigte/encoder.hpp"
#include "sigte/heads.hpp"
#include "sigte/metrics.hpp"

namespace sigte {

// Full model, its two ablations, and the encoder-free baseline that feeds a
// single pooled embedding (first position as the [CLS] surrogate by
// default) straight into the heads.
enum class Variant { ste, ste_no_pe, ste_no_st, baseline };

inline std::string_view variant_key(Variant v) {
  switch (v) {
    case Variant::ste:
      return "ste";
    case Variant::ste_no_pe:
      return "ste_no_pe";
    case Variant::ste_no_st:
      return "ste_no_st";
    case Variant::baseline:
      return "baseline";
  }
  return "?";
}

inline std::string_view variant_label(Variant v) {
  switch (v) {
    case Variant::ste:
      return "STE";
    case Variant::ste_no_pe:
      return "STE w/o PE";
    case Variant::ste_no_st:
      return "STE w/o ST";
    case Variant::baseline:
      return "Baseline";
  }
  return "?";
}

inline Variant parse_variant(std::string_view key) {
  for (auto v : {Variant::ste, Variant::ste_no_pe, Variant::ste_no_st, Variant::baseline})
    if (variant_key(v) == key) return v;
  throw ConfigError("unknown model variant '" + std::string(key) + "'");
}

// Encoder config with the variant's ablation switches applied.
inline STEConfig variant_config(STEConfig cfg, Variant v) {
  if (v == Variant::ste_no_pe) cfg.use_positional_encoding = false;
  if (v == Variant::ste_no_st) cfg.use_signature = false;
  return cfg;
}

struct Model {
  Variant variant = Variant::ste;
  STEConfig config;  // with ablation switches applied
  Pooling baseline_pooling = Pooling::first;
  std::vector<STELayerParams> layers;  // empty for the baseline
  HeadsParams heads;

  // Encoder and heads draw from separate named streams so every variant
  // starts from the same head weights and every encoder variant from the
  // same encoder weights.
  static Model init(const STEConfig& base, Variant v, std::uint64_t seed, Pooling baseline_pooling = Pooling::first) {
    Model m;
    m.variant = v;
    m.config = variant_config(base, v);
    m.config.validate();
    m.baseline_pooling = baseline_pooling;
    if (v != Variant::baseline) {
      Rng enc = Rng::stream(seed, "init.encoder");
      m.layers = init_encoder(m.config, enc);
    }
    Rng head = Rng::stream(seed, "init.heads");
    m.heads = HeadsParams::init(m.config.d_model(), head);
    return m;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (const auto& l : layers) {
      auto p = l.parameters();
      out.insert(out.end(), p.begin(), p.end());
    }
    auto h = heads.parameters();
    out.insert(out.end(), h.begin(), h.end());
    return out;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < layers.size(); ++i)
      for (const auto& n : layers[i].parameter_names()) out.push_back("layer" + std::to_string(i) + "." + n);
    for (const auto& n : heads.parameter_names()) out.push_back("heads." + n);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.size();
    return n;
  }

  // Representation fed to the heads: [d_model].
  Tensor represent(Tape& tape, const Tensor& embeddings, bool training, Rng& rng) const {
    if (variant == Variant::baseline) return pool_sequence(tape, embeddings, baseline_pooling);
    return pool_sequence(tape, encoder_forward(tape, embeddings, layers, config, training, rng), config.pooling);
  }

  HeadsOutput forward(Tape& tape, const Tensor& embeddings, bool training, Rng& rng) const {
    return heads_forward(tape, represent(tape, embeddings, training, rng), heads, training, config.p_drop, rng);
  }

  Prediction predict(const Tensor& embeddings) const {
    Tape tape(false);
    Rng unused(0);
    auto out = forward(tape, embeddings, false, unused);
    auto argmax = [](const Tensor& t) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < t.size(); ++i)
        if (t[i] > t[best]) best = i;
      return best;
    };
    return {out.quantity.item(), argmax(out.tag_logits), argmax(out.indication_logits)};
  }
};

inline Prediction label_of(const PrescriptionRecord& r) {
  auto t = r.targets();
  return {t.quantity, t.tag, t.indication};
}

inline RunMetrics evaluate_model(const Model& model, const std::vector<PrescriptionRecord>& records,
                                 const std::vector<std::size_t>& indices) {
  std::vector<Prediction> preds, labels;
  for (auto i : indices) {
    preds.push_back(model.predict(records.at(i).embeddings));
    labels.push_back(label_of(records[i]));
  }
  return evaluate_metrics(preds, labels);
}

}  // namespace sigte
