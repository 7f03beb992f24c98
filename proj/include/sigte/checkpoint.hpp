#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigte/config.hpp"
#include "sigte/errors.hpp"
#include "sigte/experiment.hpp"
#include "sigte/model.hpp"

namespace sigte {

// Binary layout:
//   8 bytes   magic "SIGTECK1"
//   8 bytes   header length n, little-endian uint64
//   n bytes   JSON header (model config, variant, tensor names/shapes/offsets, metadata)
//   rest      parameter values, little-endian float64, in header order
inline constexpr char kCheckpointMagic[8] = {'S', 'I', 'G', 'T', 'E', 'C', 'K', '1'};

struct Checkpoint {
  Model model;
  EmbedOptions embed;
  std::vector<std::string> test_ids;
  RunMetrics test_metrics;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
};

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  const auto params = ck.model.parameters();
  const auto names = ck.model.parameter_names();
  nlohmann::ordered_json header;
  header["variant"] = std::string(variant_key(ck.model.variant));
  header["model"] = model_config_json(ck.model.config);
  header["baseline_pooling"] = detail::pooling_name(ck.model.baseline_pooling);
  header["embed"] = {{"d_model", ck.embed.d_model}, {"seed", ck.embed.seed}};
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.push_back({{"name", names[i]}, {"shape", params[i].shape()}, {"offset", offset}});
    offset += params[i].size();
  }
  header["tensors"] = tensors;
  header["test_ids"] = ck.test_ids;
  header["test_metrics"] = metrics_json(ck.test_metrics);
  header["metadata"] = ck.metadata;
  const std::string text = header.dump();
  out.write(kCheckpointMagic, 8);
  detail::put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params)
    for (double v : p.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw DataError("checkpoint: write failed");
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, ck);
}

inline Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw DataError("checkpoint: bad magic, not a checkpoint file");
  }
  const std::uint64_t len = detail::get_u64(in);
  if (len > (std::uint64_t{1} << 32)) throw DataError("checkpoint: implausible header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    Checkpoint ck;
    const STEConfig cfg = parse_model_config(header.at("model"));
    const Variant variant = parse_variant(header.at("variant").get<std::string>());
    const Pooling pooling = detail::parse_pooling(header.at("baseline_pooling").get<std::string>());
    // Shapes come from the config; initialization values are overwritten.
    ck.model = Model::init(cfg, Variant::ste, 0, pooling);
    ck.model.variant = variant;
    ck.model.config = cfg;
    if (variant == Variant::baseline) ck.model.layers.clear();
    ck.embed.d_model = header.at("embed").at("d_model").get<std::size_t>();
    ck.embed.seed = header.at("embed").at("seed").get<std::uint64_t>();
    ck.test_ids = header.at("test_ids").get<std::vector<std::string>>();
    ck.test_metrics = metrics_from_json(header.at("test_metrics"));
    ck.metadata = header.value("metadata", nlohmann::json::object());
    const auto params = ck.model.parameters();
    const auto names = ck.model.parameter_names();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != params.size()) throw IncompatibleError("checkpoint: tensor count does not match its config");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (tensors[i].at("name").get<std::string>() != names[i] ||
          tensors[i].at("shape").get<Shape>() != params[i].shape()) {
        throw IncompatibleError("checkpoint: tensor '" + tensors[i].at("name").get<std::string>() +
                                "' does not match its config");
      }
      for (double& v : Tensor(params[i]).data()) v = std::bit_cast<double>(detail::get_u64(in));
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

// Throws IncompatibleError when the configured model differs from the one
// stored in the checkpoint (ablation switches aside, which the variant sets).
inline void require_compatible(const Checkpoint& ck, const STEConfig& configured) {
  const auto expected = model_config_json(variant_config(configured, ck.model.variant));
  const auto stored = model_config_json(ck.model.config);
  if (expected != stored) {
    throw IncompatibleError("checkpoint model " + stored.dump() + " does not match configured model " +
                            expected.dump());
  }
}

}  // namespace sigte
