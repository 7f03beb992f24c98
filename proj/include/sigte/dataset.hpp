#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigte/errors.hpp"
#include "sigte/heads.hpp"
#include "sigte/random.hpp"
#include "sigte/tensor.hpp"

namespace sigte {

enum class QuantityTag { standard, prn, appp, complex, not_specified };
enum class Indication { cardiac, tremors, migraine, other, na };

inline constexpr std::array<std::string_view, kNumClasses> kTagNames{"Standard", "PRN", "APPP", "Complex", "NS"};
inline constexpr std::array<std::string_view, kNumClasses> kIndicationNames{"Cardiac", "Tremors", "Migraine",
                                                                            "Others", "NA"};

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  out.erase(std::remove_if(out.begin(), out.end(), [](char c) { return c == ' ' || c == '_' || c == '-'; }),
            out.end());
  return out;
}

}  // namespace detail

inline QuantityTag parse_quantity_tag(std::string_view text) {
  const std::string s = detail::lower(text);
  if (s == "standard") return QuantityTag::standard;
  if (s == "prn") return QuantityTag::prn;
  if (s == "appp" || s == "asperpreviousprescription") return QuantityTag::appp;
  if (s == "complex") return QuantityTag::complex;
  if (s == "ns" || s == "notspecified") return QuantityTag::not_specified;
  throw DataError("quantity_tag: unknown class '" + std::string(text) + "'");
}

inline Indication parse_indication(std::string_view text) {
  const std::string s = detail::lower(text);
  if (s == "cardiac") return Indication::cardiac;
  if (s == "tremors" || s == "tremor") return Indication::tremors;
  if (s == "migraine") return Indication::migraine;
  if (s == "other" || s == "others") return Indication::other;
  if (s == "na" || s == "notannotated") return Indication::na;
  throw DataError("indication: unknown class '" + std::string(text) + "'");
}

inline std::string_view tag_name(QuantityTag t) { return kTagNames[static_cast<std::size_t>(t)]; }
inline std::string_view indication_name(Indication i) { return kIndicationNames[static_cast<std::size_t>(i)]; }

struct PrescriptionRecord {
  std::string id;
  std::vector<std::string> tokens;  // may be empty when embeddings were given directly
  Tensor embeddings;                // L x d_model
  double quantity = 0.0;
  QuantityTag tag = QuantityTag::standard;
  Indication indication = Indication::na;

  Targets targets() const {
    return {quantity, static_cast<std::size_t>(tag), static_cast<std::size_t>(indication)};
  }
};

// Each distinct token maps to a fixed unit-norm vector drawn from a generator
// seeded by (seed, token). Stands in for a pretrained sentence encoder.
inline Tensor toy_embed(const std::vector<std::string>& tokens, std::size_t d_model, std::uint64_t seed) {
  if (tokens.empty()) throw DataError("toy_embed: empty token list");
  if (d_model == 0) throw ConfigError("toy_embed: d_model must be positive");
  Tensor out(Shape{tokens.size(), d_model});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    Rng rng(splitmix64(seed) ^ fnv1a(tokens[t]));
    double norm = 0.0;
    for (std::size_t c = 0; c < d_model; ++c) {
      out.at(t, c) = rng.normal();
      norm += out.at(t, c) * out.at(t, c);
    }
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < d_model; ++c) out.at(t, c) /= norm;
  }
  return out;
}

struct EmbedOptions {
  std::size_t d_model = 768;
  std::uint64_t seed = 0;
};

inline void validate_quantity(double q) {
  if (!std::isfinite(q) || q < 0.0) throw DataError("quantity: must be a finite non-negative number");
  const double twice = 2.0 * q;
  if (twice != std::floor(twice)) throw DataError("quantity: " + std::to_string(q) + " is not a multiple of 0.5");
}

// JSONL, one object per line:
//   {"id": str, "tokens": [str] | "embeddings": [[float]], "quantity": float,
//    "quantity_tag": str, "indication": str}
// Blank lines are skipped. Embeddings, when absent, come from toy_embed.
inline std::vector<PrescriptionRecord> read_dataset(std::istream& in, const EmbedOptions& embed) {
  static const std::set<std::string> known{"id", "tokens", "embeddings", "quantity", "quantity_tag", "indication"};
  std::vector<PrescriptionRecord> records;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(lineno, "record must be a JSON object");
    auto field_error = [&](const std::string& field, const std::string& why) {
      return DataError("line " + std::to_string(lineno) + ": field '" + field + "': " + why);
    };
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) throw field_error(key, "unknown field");
    }
    PrescriptionRecord r;
    if (!j.contains("id") || !j["id"].is_string()) throw field_error("id", "missing or not a string");
    r.id = j["id"].get<std::string>();
    if (!seen.insert(r.id).second) throw field_error("id", "duplicate id '" + r.id + "'");

    if (j.contains("tokens")) {
      if (!j["tokens"].is_array()) throw field_error("tokens", "must be an array of strings");
      for (const auto& t : j["tokens"]) {
        if (!t.is_string()) throw field_error("tokens", "must be an array of strings");
        r.tokens.push_back(t.get<std::string>());
      }
    }
    if (j.contains("embeddings")) {
      const auto& rows = j["embeddings"];
      if (!rows.is_array() || rows.empty()) throw field_error("embeddings", "must be a non-empty array of rows");
      r.embeddings = Tensor(Shape{rows.size(), embed.d_model});
      for (std::size_t t = 0; t < rows.size(); ++t) {
        if (!rows[t].is_array() || rows[t].size() != embed.d_model) {
          throw field_error("embeddings", "row " + std::to_string(t) + " does not have width " +
                                              std::to_string(embed.d_model));
        }
        for (std::size_t c = 0; c < embed.d_model; ++c) {
          if (!rows[t][c].is_number()) throw field_error("embeddings", "non-numeric entry");
          r.embeddings.at(t, c) = rows[t][c].get<double>();
          if (!std::isfinite(r.embeddings.at(t, c))) throw field_error("embeddings", "non-finite entry");
        }
      }
    } else {
      if (r.tokens.empty()) throw field_error("tokens", "need a non-empty token list or embeddings");
      r.embeddings = toy_embed(r.tokens, embed.d_model, embed.seed);
    }

    if (!j.contains("quantity") || !j["quantity"].is_number()) throw field_error("quantity", "missing or not a number");
    r.quantity = j["quantity"].get<double>();
    try {
      validate_quantity(r.quantity);
      if (!j.contains("quantity_tag") || !j["quantity_tag"].is_string()) {
        throw DataError("quantity_tag: missing or not a string");
      }
      r.tag = parse_quantity_tag(j["quantity_tag"].get<std::string>());
      if (!j.contains("indication") || !j["indication"].is_string()) {
        throw DataError("indication: missing or not a string");
      }
      r.indication = parse_indication(j["indication"].get<std::string>());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<PrescriptionRecord> load_dataset(const std::string& path, const EmbedOptions& embed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  return read_dataset(in, embed);
}

// Writes tokens when a record has them, raw embeddings otherwise.
inline void write_dataset(std::ostream& out, const std::vector<PrescriptionRecord>& records) {
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    if (!r.tokens.empty()) {
      j["tokens"] = r.tokens;
    } else {
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t t = 0; t < r.embeddings.dim(0); ++t) {
        std::vector<double> row(r.embeddings.data().begin() + t * r.embeddings.dim(1),
                                r.embeddings.data().begin() + (t + 1) * r.embeddings.dim(1));
        rows.push_back(row);
      }
      j["embeddings"] = rows;
    }
    j["quantity"] = r.quantity;
    j["quantity_tag"] = std::string(tag_name(r.tag));
    j["indication"] = std::string(indication_name(r.indication));
    out << j.dump() << '\n';
  }
}

// Class proportions from the annotated prescription corpus (3852 records).
inline constexpr std::array<double, kNumClasses> kCorpusTagShares{3489 / 3852.0, 89 / 3852.0, 40 / 3852.0,
                                                                  29 / 3852.0, 205 / 3852.0};
inline constexpr std::array<double, kNumClasses> kCorpusIndicationShares{2980 / 3852.0, 81 / 3852.0, 69 / 3852.0,
                                                                         15 / 3852.0, 707 / 3852.0};
inline constexpr std::array<double, kNumClasses> kUniformShares{0.2, 0.2, 0.2, 0.2, 0.2};

struct SynthSpec {
  std::array<double, kNumClasses> tag_shares = kCorpusTagShares;
  std::array<double, kNumClasses> indication_shares = kCorpusIndicationShares;
  // Keyword task: the tag is a keyword token. Order task: three marker
  // tokens are always present and the tag is the index of their relative
  // order, so a bag of tokens carries no tag information.
  bool order_task = false;
  std::size_t min_filler = 2;
  std::size_t max_filler = 6;
  std::size_t vocabulary = 20;
  std::size_t embed_dim = 768;
};

// Lexicographic permutations of the markers (a, b, c), one per tag class.
inline constexpr std::array<std::array<char, 3>, kNumClasses> kMarkerOrders{
    {{'a', 'b', 'c'}, {'a', 'c', 'b'}, {'b', 'a', 'c'}, {'b', 'c', 'a'}, {'c', 'a', 'b'}}};

inline constexpr std::string_view kStartToken = "<s>";
inline constexpr double kMaxSynthQuantity = 4.0;

namespace detail {

// Largest-remainder apportionment of n items to the given shares.
inline std::array<std::size_t, kNumClasses> quotas(std::size_t n, const std::array<double, kNumClasses>& shares) {
  double total = 0.0;
  for (double s : shares) {
    if (!(s >= 0.0)) throw ConfigError("synth: class shares must be non-negative");
    total += s;
  }
  if (!(total > 0.0)) throw ConfigError("synth: class shares must not all be zero");
  std::array<std::size_t, kNumClasses> q{};
  std::array<double, kNumClasses> rem{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double exact = static_cast<double>(n) * shares[c] / total;
    q[c] = static_cast<std::size_t>(std::floor(exact));
    rem[c] = exact - static_cast<double>(q[c]);
    assigned += q[c];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumClasses; ++c)
      if (rem[c] > rem[best]) best = c;
    ++q[best];
    rem[best] = -1.0;
    ++assigned;
  }
  return q;
}

inline std::vector<std::size_t> label_list(std::size_t n, const std::array<double, kNumClasses>& shares, Rng& rng) {
  auto q = quotas(n, shares);
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < kNumClasses; ++c) labels.insert(labels.end(), q[c], c);
  rng.shuffle(std::span<std::size_t>(labels));
  return labels;
}

inline std::string quantity_token(double q) { return "qty_" + std::to_string(static_cast<int>(2.0 * q)); }

constexpr std::array<std::string_view, kNumClasses> kTagKeywords{"tag_standard", "tag_prn", "tag_appp",
                                                                 "tag_complex", "tag_ns"};
constexpr std::array<std::string_view, 4> kIndicationKeywords{"ind_cardiac", "ind_tremors", "ind_migraine",
                                                              "ind_other"};

}  // namespace detail

// Deterministic synthetic corpus whose labels are planted in the tokens:
//   quantity    token "qty_<2q>" (absent, with quantity 0, for NS in the keyword task)
//   indication  keyword token, none for NA
//   tag         keyword token, or marker order in the order task
inline std::vector<PrescriptionRecord> synth_dataset(std::size_t n, std::uint64_t seed, const SynthSpec& spec) {
  if (n < 10) throw DataError("synth: need at least 10 records");
  if (spec.min_filler > spec.max_filler || spec.vocabulary == 0) throw ConfigError("synth: bad filler settings");
  Rng rng = Rng::stream(seed, "synth");
  const auto tags = detail::label_list(n, spec.tag_shares, rng);
  const auto inds = detail::label_list(n, spec.indication_shares, rng);
  const std::size_t steps = static_cast<std::size_t>(2.0 * kMaxSynthQuantity);
  std::vector<PrescriptionRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PrescriptionRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%05zu", i);
    r.id = id;
    r.tag = static_cast<QuantityTag>(tags[i]);
    r.indication = static_cast<Indication>(inds[i]);
    const bool has_quantity = spec.order_task || r.tag != QuantityTag::not_specified;
    r.quantity = has_quantity ? 0.5 * static_cast<double>(1 + rng.below(steps)) : 0.0;

    std::vector<std::string> body;
    const std::size_t fillers = spec.min_filler + rng.below(spec.max_filler - spec.min_filler + 1);
    for (std::size_t f = 0; f < fillers; ++f) body.push_back("w" + std::to_string(rng.below(spec.vocabulary)));
    if (has_quantity) body.push_back(detail::quantity_token(r.quantity));
    if (r.indication != Indication::na) {
      body.emplace_back(detail::kIndicationKeywords[static_cast<std::size_t>(r.indication)]);
    }
    if (!spec.order_task) body.emplace_back(detail::kTagKeywords[tags[i]]);
    rng.shuffle(std::span<std::string>(body));
    if (spec.order_task) {
      // Insert the markers at sorted random slots, in the order of the tag.
      std::vector<std::size_t> slots;
      for (int m = 0; m < 3; ++m) slots.push_back(rng.below(body.size() + 1));
      std::sort(slots.begin(), slots.end());
      for (int m = 2; m >= 0; --m) {
        body.insert(body.begin() + static_cast<std::ptrdiff_t>(slots[m]),
                    std::string("m_") + kMarkerOrders[tags[i]][m]);
      }
    }
    r.tokens.emplace_back(kStartToken);
    r.tokens.insert(r.tokens.end(), body.begin(), body.end());
    r.embeddings = toy_embed(r.tokens, spec.embed_dim, seed);
    out.push_back(std::move(r));
  }
  return out;
}

struct PlantedLabels {
  double quantity = 0.0;
  QuantityTag tag = QuantityTag::not_specified;
  Indication indication = Indication::na;
};

// Reads the planted labels back from the tokens.
inline PlantedLabels decode_planted(const std::vector<std::string>& tokens, bool order_task) {
  PlantedLabels p;
  std::string markers;
  for (const auto& t : tokens) {
    if (t.rfind("qty_", 0) == 0) p.quantity = 0.5 * std::stoi(t.substr(4));
    for (std::size_t c = 0; c < detail::kIndicationKeywords.size(); ++c)
      if (t == detail::kIndicationKeywords[c]) p.indication = static_cast<Indication>(c);
    for (std::size_t c = 0; c < kNumClasses; ++c)
      if (t == detail::kTagKeywords[c]) p.tag = static_cast<QuantityTag>(c);
    if (t.size() == 3 && t.rfind("m_", 0) == 0) markers.push_back(t[2]);
  }
  if (order_task) {
    for (std::size_t c = 0; c < kNumClasses; ++c)
      if (markers == std::string(kMarkerOrders[c].begin(), kMarkerOrders[c].end())) p.tag = static_cast<QuantityTag>(c);
  }
  return p;
}

}  // namespace sigte
