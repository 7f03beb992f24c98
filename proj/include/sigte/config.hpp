#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigte/dataset.hpp"
#include "sigte/encoder.hpp"
#include "sigte/errors.hpp"
#include "sigte/experiment.hpp"
#include "sigte/model.hpp"
#include "sigte/training.hpp"

namespace sigte {

// Where the records come from: a JSONL file, or the synthetic generator.
struct DataSource {
  std::string path;
  std::size_t synth_n = 200;
  SynthSpec synth;

  bool synthetic() const { return path.empty(); }
};

// Everything a CLI run needs. All randomness derives from `seed`.
struct AppConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "sigte-out";
  std::size_t threads = 1;
  DataSource data;
  STEConfig model;
  TrainOptions training;
  Pooling baseline_pooling = Pooling::first;
  std::vector<double> learning_rates{3e-5, 5e-5};
  std::size_t n_triplets = 10;
  std::vector<TaskWeights> triplets;  // explicit triplets override sampling
  std::size_t n_seeds = 10;
  std::vector<std::uint64_t> seeds;  // explicit seeds override derivation
  std::size_t folds = 5;
  std::vector<Variant> variants{Variant::ste, Variant::baseline};

  GridSpec grid() const {
    GridSpec g;
    g.learning_rates = learning_rates;
    g.triplets = triplets.empty() ? sample_triplets(n_triplets, seed) : triplets;
    g.seeds = seeds.empty() ? derive_seeds(n_seeds, seed) : seeds;
    return g;
  }

  ExperimentSpec experiment() const {
    ExperimentSpec spec;
    spec.model = model;
    spec.variants = variants;
    spec.grid = grid();
    spec.training = training;
    spec.folds = folds;
    spec.threads = threads;
    spec.baseline_pooling = baseline_pooling;
    return spec;
  }

  EmbedOptions embed() const { return {model.d_model(), seed}; }

  std::vector<PrescriptionRecord> load_records() const {
    if (!data.synthetic()) return load_dataset(data.path, embed());
    SynthSpec spec = data.synth;
    spec.embed_dim = model.d_model();
    return synth_dataset(data.synth_n, seed, spec);
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::string_view section, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + std::string(section) + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("config: unknown key '" + key + "' in " + std::string(section));
  }
}

template <typename T>
void read(const nlohmann::json& j, std::string_view key, T& out, std::string_view section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(std::string(key)).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: bad value for '" + std::string(key) + "' in " + std::string(section));
  }
}

inline std::array<double, kNumClasses> read_shares(const nlohmann::json& j, std::string_view what) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "uniform") return kUniformShares;
    if (s == "corpus") return what == "tag_shares" ? kCorpusTagShares : kCorpusIndicationShares;
  }
  if (j.is_array() && j.size() == kNumClasses) {
    std::array<double, kNumClasses> out{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (!j[c].is_number()) break;
      out[c] = j[c].get<double>();
      if (c + 1 == kNumClasses) return out;
    }
  }
  throw ConfigError("config: '" + std::string(what) + "' must be \"uniform\", \"corpus\" or 5 numbers");
}

inline std::string mode_name(SignatureMode m) { return m == SignatureMode::stream ? "stream" : "pooled"; }

inline SignatureMode parse_mode(const std::string& s) {
  if (s == "stream") return SignatureMode::stream;
  if (s == "pooled") return SignatureMode::pooled;
  throw ConfigError("config: signature mode must be \"stream\" or \"pooled\"");
}

inline std::string pooling_name(Pooling p) {
  switch (p) {
    case Pooling::mean:
      return "mean";
    case Pooling::last:
      return "last";
    case Pooling::first:
      return "first";
  }
  return "?";
}

inline Pooling parse_pooling(const std::string& s) {
  if (s == "mean") return Pooling::mean;
  if (s == "last") return Pooling::last;
  if (s == "first" || s == "cls") return Pooling::first;
  throw ConfigError("config: pooling must be \"mean\", \"last\" or \"first\"");
}

}  // namespace detail

inline nlohmann::ordered_json model_config_json(const STEConfig& c) {
  return {{"d_model", c.attention.d_model},
          {"heads", c.attention.heads},
          {"d_presig", c.attention.d_presig},
          {"sig_order", c.attention.sig_order},
          {"mode", detail::mode_name(c.attention.mode)},
          {"n_layers", c.n_layers},
          {"d_ff_hidden", c.ff_hidden()},
          {"p_drop", c.p_drop},
          {"positional_encoding", c.use_positional_encoding},
          {"signature", c.use_signature},
          {"pooling", detail::pooling_name(c.pooling)},
          {"layer_norm_eps", c.layer_norm_eps}};
}

inline STEConfig parse_model_config(const nlohmann::json& j, STEConfig c = {}) {
  detail::check_keys(j, "model",
                     {"d_model", "heads", "d_presig", "sig_order", "mode", "n_layers", "d_ff_hidden", "p_drop",
                      "positional_encoding", "signature", "pooling", "layer_norm_eps"});
  detail::read(j, "d_model", c.attention.d_model, "model");
  detail::read(j, "heads", c.attention.heads, "model");
  detail::read(j, "d_presig", c.attention.d_presig, "model");
  detail::read(j, "sig_order", c.attention.sig_order, "model");
  if (j.contains("mode")) {
    std::string m;
    detail::read(j, "mode", m, "model");
    c.attention.mode = detail::parse_mode(m);
  }
  detail::read(j, "n_layers", c.n_layers, "model");
  detail::read(j, "d_ff_hidden", c.d_ff_hidden, "model");
  detail::read(j, "p_drop", c.p_drop, "model");
  detail::read(j, "positional_encoding", c.use_positional_encoding, "model");
  detail::read(j, "signature", c.use_signature, "model");
  if (j.contains("pooling")) {
    std::string p;
    detail::read(j, "pooling", p, "model");
    c.pooling = detail::parse_pooling(p);
  }
  detail::read(j, "layer_norm_eps", c.layer_norm_eps, "model");
  c.validate();
  return c;
}

inline DataSource parse_data_source(const nlohmann::json& d) {
  DataSource out;
  detail::check_keys(d, "data", {"path", "synth"});
  detail::read(d, "path", out.path, "data");
  if (d.contains("synth")) {
    if (!out.path.empty()) throw ConfigError("config: data.path and data.synth are mutually exclusive");
    const auto& s = d["synth"];
    detail::check_keys(s, "data.synth",
                       {"n", "order_task", "tag_shares", "indication_shares", "min_filler", "max_filler", "vocabulary"});
    detail::read(s, "n", out.synth_n, "data.synth");
    detail::read(s, "order_task", out.synth.order_task, "data.synth");
    if (s.contains("tag_shares")) out.synth.tag_shares = detail::read_shares(s["tag_shares"], "tag_shares");
    if (s.contains("indication_shares")) {
      out.synth.indication_shares = detail::read_shares(s["indication_shares"], "indication_shares");
    }
    detail::read(s, "min_filler", out.synth.min_filler, "data.synth");
    detail::read(s, "max_filler", out.synth.max_filler, "data.synth");
    detail::read(s, "vocabulary", out.synth.vocabulary, "data.synth");
  }
  return out;
}

inline nlohmann::ordered_json data_source_json(const DataSource& d) {
  if (!d.synthetic()) return {{"path", d.path}};
  return {{"synth",
           {{"n", d.synth_n},
            {"order_task", d.synth.order_task},
            {"tag_shares", d.synth.tag_shares},
            {"indication_shares", d.synth.indication_shares},
            {"min_filler", d.synth.min_filler},
            {"max_filler", d.synth.max_filler},
            {"vocabulary", d.synth.vocabulary}}}};
}

// Strict parse: unknown keys anywhere are rejected.
inline AppConfig parse_config(const nlohmann::json& j) {
  AppConfig c;
  detail::check_keys(j, "config",
                     {"seed", "output_dir", "threads", "data", "model", "training", "grid", "folds", "variants"});
  detail::read(j, "seed", c.seed, "config");
  detail::read(j, "output_dir", c.output_dir, "config");
  detail::read(j, "threads", c.threads, "config");
  detail::read(j, "folds", c.folds, "config");
  if (j.contains("data")) c.data = parse_data_source(j["data"]);
  if (j.contains("model")) c.model = parse_model_config(j["model"]);
  if (j.contains("training")) {
    const auto& t = j["training"];
    detail::check_keys(t, "training",
                       {"batch_size", "max_epochs", "patience", "class_weights", "baseline_pooling", "adam"});
    detail::read(t, "batch_size", c.training.batch_size, "training");
    detail::read(t, "max_epochs", c.training.max_epochs, "training");
    detail::read(t, "patience", c.training.patience, "training");
    if (t.contains("class_weights")) {
      const auto& cw = t["class_weights"];
      if (cw.is_boolean()) {
        if (cw.get<bool>()) c.training.class_weights = ClassWeights{};
      } else {
        detail::check_keys(cw, "training.class_weights", {"quantity_tag", "indication"});
        ClassWeights w;
        detail::read(cw, "quantity_tag", w.tag, "training.class_weights");
        detail::read(cw, "indication", w.indication, "training.class_weights");
        c.training.class_weights = w;
      }
    }
    if (t.contains("baseline_pooling")) {
      std::string p;
      detail::read(t, "baseline_pooling", p, "training");
      c.baseline_pooling = detail::parse_pooling(p);
    }
    if (t.contains("adam")) {
      const auto& a = t["adam"];
      detail::check_keys(a, "training.adam", {"beta1", "beta2", "eps"});
      detail::read(a, "beta1", c.training.adam.beta1, "training.adam");
      detail::read(a, "beta2", c.training.adam.beta2, "training.adam");
      detail::read(a, "eps", c.training.adam.eps, "training.adam");
    }
  }
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    detail::check_keys(g, "grid", {"learning_rates", "n_triplets", "triplets", "n_seeds", "seeds"});
    detail::read(g, "learning_rates", c.learning_rates, "grid");
    detail::read(g, "n_triplets", c.n_triplets, "grid");
    detail::read(g, "n_seeds", c.n_seeds, "grid");
    detail::read(g, "seeds", c.seeds, "grid");
    if (g.contains("triplets")) {
      std::vector<std::vector<double>> raw;
      detail::read(g, "triplets", raw, "grid");
      for (const auto& t : raw) {
        if (t.size() != 3) throw ConfigError("config: each task-weight triplet needs 3 numbers");
        c.triplets.push_back({t[0], t[1], t[2]});
      }
    }
  }
  if (j.contains("variants")) {
    std::vector<std::string> names;
    detail::read(j, "variants", names, "config");
    c.variants.clear();
    for (const auto& n : names) c.variants.push_back(parse_variant(n));
  }
  if (c.threads == 0) throw ConfigError("config: threads must be positive");
  c.training.validate();
  c.grid().validate();
  return c;
}

inline AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

}  // namespace sigte
