#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sigte/checkpoint.hpp"
#include "sigte/config.hpp"
#include "sigte/dataset.hpp"
#include "sigte/errors.hpp"
#include "sigte/experiment.hpp"
#include "sigte/signature.hpp"
#include "sigte/verify.hpp"

namespace sigte {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

inline constexpr const char* kOutputDirEnv = "SIGTE_OUTPUT_DIR";

// Published reference values for the signature width. Entries with a unit
// suffix are rounded; exact entries must match the computed width.
struct DimReference {
  std::size_t d, order;
  std::string printed;
};

inline const std::vector<DimReference>& dim_reference_table() {
  static const std::vector<DimReference> table{
      {512, 1, "512"}, {512, 2, "262K"}, {256, 2, "66K"}, {128, 2, "16K"}, {128, 3, "2M"},
      {64, 2, "4K"},   {64, 3, "266K"},  {32, 2, "1057"}, {32, 3, "34K"},  {16, 2, "272"},
      {16, 3, "4K"},   {8, 2, "72"},     {8, 3, "584"},   {8, 4, "5K"},    {4, 4, "340"},
      {4, 5, "1365"},  {4, 6, "5K"},     {2, 9, "1022"},  {2, 10, "2K"},   {2, 12, "8K"}};
  return table;
}

// An abbreviated entry is consistent when the computed width lies within one
// unit of it, since the source mixes rounding and truncation.
inline bool dim_reference_consistent(std::size_t computed, const std::string& printed) {
  double unit = 1.0;
  std::string digits = printed;
  if (!digits.empty() && (digits.back() == 'K' || digits.back() == 'M')) {
    unit = digits.back() == 'K' ? 1e3 : 1e6;
    digits.pop_back();
  }
  const double value = std::stod(digits) * unit;
  if (unit == 1.0) return static_cast<double>(computed) == value;
  return std::abs(static_cast<double>(computed) - value) < unit;
}

inline std::string dim_table_text() {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> notes;
  for (const auto& r : dim_reference_table()) {
    const std::size_t n = sig::sig_dim(r.d, r.order);
    const bool ok = dim_reference_consistent(n, r.printed);
    rows.push_back({std::to_string(r.d), std::to_string(r.order), std::to_string(n), r.printed + (ok ? "" : " *")});
    if (!ok) {
      notes.push_back(fmt::format("* d_presig={} order={}: sum of d^k is {}, reference prints {}", r.d, r.order, n,
                                  r.printed));
    }
  }
  std::string out = detail::aligned_table({"d_presig", "order", "d_sig", "reference"}, rows);
  for (const auto& n : notes) out += n + '\n';
  return out;
}

// One point per row, comma-separated, every row the same width. Blank lines
// are skipped; row numbers in errors count physical lines from 1.
inline Tensor read_path_csv(std::istream& in) {
  std::vector<double> values;
  std::size_t width = 0, rows = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t cols = 0, start = 0;
    while (true) {
      const std::size_t end = std::min(line.find(',', start), line.size());
      std::string cell = line.substr(start, end - start);
      const auto first = cell.find_first_not_of(" \t"), last = cell.find_last_not_of(" \t");
      cell = first == std::string::npos ? "" : cell.substr(first, last - first + 1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError(line_no, fmt::format("column {}: '{}' is not a finite number", cols + 1, cell));
      }
      values.push_back(v);
      ++cols;
      if (end == line.size()) break;
      start = end + 1;
    }
    if (rows == 0) width = cols;
    if (cols != width) throw ParseError(line_no, fmt::format("expected {} columns, found {}", width, cols));
    ++rows;
  }
  if (rows == 0) throw DataError("path CSV has no rows");
  return Tensor(Shape{rows, width}, std::move(values));
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + '"';
}

inline void write_signature_csv(std::ostream& out, const Tensor& coefficients, std::size_t d, std::size_t order) {
  const auto labels = sig::coefficient_labels(d, order);
  for (std::size_t i = 0; i < labels.size(); ++i) out << (i ? "," : "") << csv_quote(labels[i]);
  out << '\n';
  const std::size_t width = labels.size(), rows = coefficients.size() / width;
  const auto v = coefficients.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) out << (c ? "," : "") << fmt::format("{}", v[r * width + c]);
    out << '\n';
  }
}

inline std::string gradient_report_text(const GradientReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : report.components) {
    const auto& w = c.worst();
    rows.push_back({c.component, std::to_string(c.cases.size()), fmt::format("{:.3e}", w.result.worst_rel_error),
                    fmt::format("{}: {}[{}]", w.name, w.result.worst_leaf, w.result.worst_index),
                    c.passed() ? "ok" : "FAIL"});
  }
  return detail::aligned_table({"component", "cases", "worst rel err", "at", "status"}, rows);
}

namespace detail {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::size_t> threads;
  int verbosity = 0;
};

// flag > environment (output directory only) > config file > defaults
inline AppConfig resolve_config(const GlobalOptions& g) {
  AppConfig cfg = g.config_path.empty() ? AppConfig{} : load_config(g.config_path);
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) cfg.output_dir = env;
  if (g.output_dir) cfg.output_dir = *g.output_dir;
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads) {
    if (*g.threads == 0) throw ConfigError("--threads must be positive");
    cfg.threads = *g.threads;
  }
  return cfg;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f || !(f << text)) throw DataError("cannot write '" + path.string() + "'");
}

inline bool same_metrics(const RunMetrics& a, const RunMetrics& b) {
  return metrics_json(a).dump() == metrics_json(b).dump();
}

inline int cmd_train(const GlobalOptions& g, const std::vector<std::string>& ablate, const std::string& data_path,
                     std::ostream& out, std::ostream& err) {
  AppConfig cfg = resolve_config(g);
  if (!data_path.empty()) cfg.data = DataSource{data_path, cfg.data.synth_n, cfg.data.synth};
  for (const auto& a : ablate) {
    const Variant v = a == "pe" ? Variant::ste_no_pe : Variant::ste_no_st;
    if (std::find(cfg.variants.begin(), cfg.variants.end(), v) == cfg.variants.end()) cfg.variants.push_back(v);
  }
  const auto records = cfg.load_records();
  const ExperimentSpec spec = cfg.experiment();
  const auto t0 = std::chrono::steady_clock::now();
  if (g.verbosity > 0) {
    err << fmt::format("{} records, {} variants x {} seeds x {} grid points x {} folds\n", records.size(),
                       spec.variants.size(), spec.grid.seeds.size(), spec.grid.points().size(), spec.folds);
  }
  const ExperimentReport report = run_experiment(records, spec);
  if (g.verbosity > 0) {
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    err << fmt::format("experiment finished in {:.1f} s\n", dt.count());
  }

  const std::filesystem::path dir(cfg.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir / "checkpoints", ec);
  if (ec) throw DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
  write_text(dir / "report.json", report_json(report).dump(2) + '\n');
  write_text(dir / "report.txt", report_table(report));
  write_text(dir / "quantity_tag_per_class.txt", tag_class_table(report));
  write_text(dir / "indication_per_class.txt", indication_class_table(report));

  // Checkpoints hold the first seed's first CV iteration at its selected grid
  // point. Runs are deterministic, so retraining reproduces the recorded run.
  const auto points = spec.grid.points();
  for (std::size_t v = 0; v < spec.variants.size(); ++v) {
    const RunKey key{v, 0, report.variants[v].chosen_grid.at(0), 0};
    const TrainedRun run = train_run(records, spec, key);
    const auto& recorded = *std::find_if(report.runs.begin(), report.runs.end(), [&](const RunRecord& r) {
      return r.key.variant == key.variant && r.key.seed == key.seed && r.key.grid == key.grid &&
             r.key.fold == key.fold;
    });
    if (!same_metrics(run.test, recorded.test)) {
      throw NumericError("retrained run for checkpoint differs from the recorded run");
    }
    Checkpoint ck{run.model, cfg.embed(), {}, run.test, nlohmann::ordered_json::object()};
    for (auto i : run.split.test) ck.test_ids.push_back(records[i].id);
    ck.metadata["seed"] = spec.grid.seeds[0];
    ck.metadata["grid_point"] = grid_point_json(points[key.grid]);
    ck.metadata["test_fold"] = key.fold;
    ck.metadata["best_epoch"] = run.training.best_epoch;
    ck.metadata["data"] = data_source_json(cfg.data);
    save_checkpoint((dir / "checkpoints" / (std::string(variant_key(spec.variants[v])) + ".ckpt")).string(), ck);
  }
  out << report_table(report) << '\n' << tag_class_table(report) << '\n' << indication_class_table(report);
  out << "wrote " << dir.string() << "/{report.json,report.txt,quantity_tag_per_class.txt,"
      << "indication_per_class.txt,checkpoints/}\n";
  return kExitOk;
}

inline int cmd_eval(const GlobalOptions& g, const std::string& checkpoint_path, const std::string& data_path,
                    bool expect_recorded, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  AppConfig cfg;
  if (!g.config_path.empty()) {
    cfg = resolve_config(g);
    require_compatible(ck, cfg.model);
  } else if (ck.metadata.contains("data")) {
    cfg.data = parse_data_source(ck.metadata["data"]);
  }
  // Embeddings are a function of the seed, so reproduce the training one.
  cfg.seed = g.seed ? *g.seed : ck.embed.seed;
  cfg.model = ck.model.config;
  if (cfg.model.d_model() != ck.embed.d_model) throw IncompatibleError("checkpoint embedding width mismatch");
  if (!data_path.empty()) cfg.data = DataSource{data_path, cfg.data.synth_n, cfg.data.synth};
  const auto records = cfg.load_records();
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < records.size(); ++i) by_id[records[i].id] = i;
  std::vector<std::size_t> indices;
  for (const auto& id : ck.test_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("test record '" + id + "' not found in the dataset");
    indices.push_back(it->second);
  }
  const RunMetrics m = evaluate_model(ck.model, records, indices);
  const bool match = same_metrics(m, ck.test_metrics);
  nlohmann::ordered_json j;
  j["variant"] = std::string(variant_key(ck.model.variant));
  j["records"] = indices.size();
  j["metrics"] = metrics_json(m);
  j["matches_recorded"] = match;
  out << j.dump(2) << '\n';
  return expect_recorded && !match ? kExitNumeric : kExitOk;
}

}  // namespace detail

// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Signature transformer encoder toolkit"};
  app.require_subcommand(1);
  detail::GlobalOptions g;
  app.add_option("-c,--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("-o,--output-dir", g.output_dir, "Override the output directory");
  app.add_option("--threads", g.threads, "Worker threads for training runs");
  app.add_flag("-v,--verbose", g.verbosity, "Progress messages on stderr");

  std::size_t dim_d = 0, dim_order = 0;
  bool dim_table = false;
  auto* sigdim = app.add_subcommand("sigdim", "Truncated signature width for D channels at order N");
  sigdim->add_option("D", dim_d, "channels");
  sigdim->add_option("N", dim_order, "truncation order");
  sigdim->add_flag("--table", dim_table, "Print the reference table of widths");

  std::string sig_path;
  std::size_t sig_order = 0;
  bool sig_stream = false;
  auto* sig = app.add_subcommand("sig", "Signature coefficients of a CSV path");
  sig->add_option("path", sig_path, "CSV, one point per row ('-' for stdin)")->required();
  sig->add_option("-n,--order", sig_order, "truncation order")->required();
  sig->add_flag("--stream", sig_stream, "One row per prefix");

  std::string fault_name = "none";
  std::size_t grad_length = 3;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck->add_option("--inject-fault", fault_name, "Corrupt a backward rule (test hook)")
      ->check(CLI::IsMember({"none", "matmul"}));
  gradcheck->add_option("--length", grad_length, "Sequence length for the encoder check")->check(CLI::Range(1, 64));

  std::optional<std::size_t> synth_n;
  bool synth_order = false;
  std::string synth_shares = "corpus", synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic JSONL dataset");
  synth->add_option("-n,--records", synth_n, "Number of records");
  synth->add_flag("--order-task", synth_order, "Labels depend on marker order");
  synth->add_option("--shares", synth_shares, "Class proportions")->check(CLI::IsMember({"corpus", "uniform"}));
  synth->add_option("--out", synth_out, "Output file (default stdout)");

  std::vector<std::string> ablate;
  std::string train_data;
  auto* train = app.add_subcommand("train", "Cross-validated experiment; writes reports and checkpoints");
  train->add_option("--ablate", ablate, "Add ablation rows")->check(CLI::IsMember({"pe", "st"}));
  train->add_option("--data", train_data, "JSONL dataset (overrides config)");

  std::string ck_path, eval_data;
  bool expect_recorded = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on its test records");
  eval->add_option("--checkpoint", ck_path, "Checkpoint file")->required();
  eval->add_option("--data", eval_data, "JSONL dataset (default: the one recorded in the checkpoint)");
  eval->add_flag("--expect-recorded", expect_recorded, "Exit 3 unless metrics equal the recorded ones");

  for (auto* sub : {sigdim, sig, gradcheck, synth, train, eval}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sigdim) {
      if (dim_table) {
        out << dim_table_text();
        return kExitOk;
      }
      if (sigdim->count("D") == 0 || sigdim->count("N") == 0) throw ConfigError("sigdim needs D and N (or --table)");
      out << sig::sig_dim(dim_d, dim_order) << '\n';
      return kExitOk;
    }
    if (*sig) {
      Tensor path;
      if (sig_path == "-") {
        path = read_path_csv(std::cin);
      } else {
        std::ifstream f(sig_path);
        if (!f) throw DataError("cannot open '" + sig_path + "'");
        path = read_path_csv(f);
      }
      if (sig_order == 0) throw ConfigError("--order must be positive");
      const std::size_t d = path.shape()[1];
      if (sig_stream) {
        write_signature_csv(out, sig::stream_signature(path, sig_order), d, sig_order);
      } else {
        const auto s = sig::signature(path, sig_order);
        const auto c = s.coeffs();
        write_signature_csv(out, Tensor(Shape{1, c.size()}, std::vector<double>(c.begin(), c.end())), d, sig_order);
      }
      return kExitOk;
    }
    if (*gradcheck) {
      const STEConfig cfg = g.config_path.empty() ? STEConfig::toy() : resolve_config(g).model;
      const std::uint64_t seed = g.seed ? *g.seed : (g.config_path.empty() ? 0 : resolve_config(g).seed);
      const auto report =
          run_gradient_suite(cfg, seed, fault_name == "matmul" ? Fault::matmul_grad : Fault::none, grad_length);
      out << gradient_report_text(report);
      if (report.passed()) return kExitOk;
      for (const auto& c : report.components) {
        for (const auto& k : c.cases) {
          if (k.result.passed) continue;
          err << fmt::format("gradcheck failed: component {}, case {}, tensor {}[{}]: analytic {:.6e}, numeric "
                             "{:.6e}, rel err {:.3e}\n",
                             c.component, k.name, k.result.worst_leaf, k.result.worst_index, k.result.analytic,
                             k.result.numeric, k.result.worst_rel_error);
        }
      }
      return kExitNumeric;
    }
    if (*synth) {
      const AppConfig cfg = resolve_config(g);
      SynthSpec spec = cfg.data.synth;
      if (synth_order) spec.order_task = true;
      if (synth_shares == "uniform") spec.tag_shares = spec.indication_shares = kUniformShares;
      spec.embed_dim = cfg.model.d_model();
      auto records = synth_dataset(synth_n.value_or(cfg.data.synth_n), cfg.seed, spec);
      if (synth_out.empty()) {
        write_dataset(out, records);
      } else {
        std::ofstream f(synth_out);
        if (!f) throw DataError("cannot write '" + synth_out + "'");
        write_dataset(f, records);
      }
      return kExitOk;
    }
    if (*train) return detail::cmd_train(g, ablate, train_data, out, err);
    if (*eval) return detail::cmd_eval(g, ck_path, eval_data, expect_recorded, out);
  } catch (const IncompatibleError& e) {
    err << "incompatible: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const OverflowError& e) {
    err << "overflow: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace sigte
