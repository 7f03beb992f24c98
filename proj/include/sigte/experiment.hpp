#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sigte/dataset.hpp"
#include "sigte/folds.hpp"
#include "sigte/metrics.hpp"
#include "sigte/model.hpp"
#include "sigte/training.hpp"

namespace sigte {

struct GridPoint {
  double learning_rate = 0.0;
  TaskWeights weights;
};

// Learning rates x task-weight triplets, repeated for every seed.
struct GridSpec {
  std::vector<double> learning_rates{3e-5, 5e-5};
  std::vector<TaskWeights> triplets;
  std::vector<std::uint64_t> seeds;

  // Points in learning-rate-major order.
  std::vector<GridPoint> points() const {
    std::vector<GridPoint> out;
    for (double lr : learning_rates)
      for (const auto& w : triplets) out.push_back({lr, w});
    return out;
  }

  void validate() const {
    if (learning_rates.empty() || triplets.empty() || seeds.empty()) {
      throw ConfigError("grid: learning rates, triplets and seeds must all be non-empty");
    }
    for (double lr : learning_rates)
      if (!(lr >= 0.0)) throw ConfigError("grid: learning rates must be >= 0");
    for (const auto& w : triplets) w.validate();
  }
};

// Uniform samples from the 2-simplex: the gaps of two sorted uniforms.
inline std::vector<TaskWeights> sample_triplets(std::size_t n, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "grid");
  std::vector<TaskWeights> out;
  for (std::size_t i = 0; i < n; ++i) {
    double a = rng.uniform(), b = rng.uniform();
    if (a > b) std::swap(a, b);
    out.push_back({a, b - a, 1.0 - b});
  }
  return out;
}

inline std::vector<std::uint64_t> derive_seeds(std::size_t n, std::uint64_t seed) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(seed + i);
  return out;
}

struct ExperimentSpec {
  STEConfig model;
  std::vector<Variant> variants{Variant::ste, Variant::baseline};
  GridSpec grid;
  TrainOptions training;  // learning rate and task weights come from the grid
  std::size_t folds = 5;
  std::size_t threads = 1;
  Pooling baseline_pooling = Pooling::first;

  void validate() const {
    model.validate();
    grid.validate();
    training.validate();
    if (variants.empty()) throw ConfigError("experiment: no model variants");
    if (threads == 0) throw ConfigError("experiment: threads must be positive");
  }
};

struct RunKey {
  std::size_t variant = 0;  // index into spec.variants
  std::size_t seed = 0;     // index into grid.seeds
  std::size_t grid = 0;     // index into grid.points()
  std::size_t fold = 0;     // test fold of the CV iteration
};

struct RunRecord {
  RunKey key;
  RunMetrics test;
  double val_loss_uniform = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs = 0;
};

struct VariantResult {
  Variant variant = Variant::ste;
  RunMetrics aggregate;                   // mean over seeds
  std::vector<std::size_t> chosen_grid;   // per seed
  std::vector<RunMetrics> per_seed;       // mean over folds at the chosen point
};

struct ExperimentReport {
  std::size_t records = 0;
  std::size_t folds = 0;
  GridSpec grid;
  std::vector<VariantResult> variants;
  std::vector<RunRecord> runs;  // sorted by key
};

struct TrainedRun {
  Model model;
  TrainResult training;
  RunMetrics test;
  FoldSplit split;
};

// One CV iteration for one variant, seed and grid point. Initialization
// depends on the seed only; the fold plan on the seed; shuffling and
// dropout on (seed, fold).
inline TrainedRun train_run(const std::vector<PrescriptionRecord>& records, const ExperimentSpec& spec,
                            const RunKey& key) {
  const std::uint64_t seed = spec.grid.seeds.at(key.seed);
  const auto point = spec.grid.points().at(key.grid);
  FoldPlan plan = make_folds(records.size(), spec.folds, seed);
  TrainedRun run{Model::init(spec.model, spec.variants.at(key.variant), seed, spec.baseline_pooling), {}, {},
                 plan.split(key.fold)};
  assert_no_leakage(run.split, records);
  TrainOptions opt = spec.training;
  opt.adam.lr = point.learning_rate;
  opt.weights = point.weights;
  run.training = train_model(run.model, records, run.split.train, run.split.validation, opt,
                             splitmix64(seed) + key.fold);
  run.test = evaluate_model(run.model, records, run.split.test);
  return run;
}

namespace detail {

// Runs jobs [0, n) on `threads` workers; results land in caller-owned slots
// so completion order does not matter. Rethrows the lowest-index failure.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t count = std::max<std::size_t>(1, std::min(threads, n));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// Full protocol: every variant x seed x grid point x CV iteration. For each
// (variant, seed) the grid point with the lowest fold-mean validation loss
// (uniform task weights) is selected and its fold-mean test metrics kept;
// the variant's score is the mean over seeds.
inline ExperimentReport run_experiment(const std::vector<PrescriptionRecord>& records, const ExperimentSpec& spec) {
  spec.validate();
  if (records.size() < spec.folds) {
    throw DataError("experiment: " + std::to_string(records.size()) + " records cannot fill " +
                    std::to_string(spec.folds) + " folds");
  }
  const std::size_t n_var = spec.variants.size(), n_seed = spec.grid.seeds.size();
  const std::size_t n_grid = spec.grid.points().size(), n_fold = spec.folds;
  std::vector<RunKey> keys;
  for (std::size_t v = 0; v < n_var; ++v)
    for (std::size_t s = 0; s < n_seed; ++s)
      for (std::size_t g = 0; g < n_grid; ++g)
        for (std::size_t f = 0; f < n_fold; ++f) keys.push_back({v, s, g, f});

  ExperimentReport report;
  report.records = records.size();
  report.folds = n_fold;
  report.grid = spec.grid;
  report.runs.resize(keys.size());
  detail::parallel_for(keys.size(), spec.threads, [&](std::size_t i) {
    auto run = train_run(records, spec, keys[i]);
    report.runs[i] = {keys[i], run.test, run.training.best_val_loss_uniform, run.training.best_epoch,
                      run.training.history.size()};
  });

  auto at = [&](std::size_t v, std::size_t s, std::size_t g, std::size_t f) -> const RunRecord& {
    return report.runs[((v * n_seed + s) * n_grid + g) * n_fold + f];
  };
  for (std::size_t v = 0; v < n_var; ++v) {
    VariantResult vr;
    vr.variant = spec.variants[v];
    for (std::size_t s = 0; s < n_seed; ++s) {
      std::size_t best = 0;
      double best_loss = std::numeric_limits<double>::infinity();
      for (std::size_t g = 0; g < n_grid; ++g) {
        double mean = 0.0;
        for (std::size_t f = 0; f < n_fold; ++f) mean += at(v, s, g, f).val_loss_uniform / static_cast<double>(n_fold);
        if (mean < best_loss) {
          best_loss = mean;
          best = g;
        }
      }
      std::vector<RunMetrics> fold_metrics;
      for (std::size_t f = 0; f < n_fold; ++f) fold_metrics.push_back(at(v, s, best, f).test);
      vr.chosen_grid.push_back(best);
      vr.per_seed.push_back(average_metrics(fold_metrics));
    }
    vr.aggregate = average_metrics(vr.per_seed);
    report.variants.push_back(std::move(vr));
  }
  return report;
}

// Column order of the per-class tables.
inline constexpr std::array<QuantityTag, kNumClasses> kTagColumns{
    QuantityTag::standard, QuantityTag::appp, QuantityTag::prn, QuantityTag::complex, QuantityTag::not_specified};
inline constexpr std::array<Indication, kNumClasses> kIndicationColumns{
    Indication::cardiac, Indication::tremors, Indication::migraine, Indication::other, Indication::na};

inline nlohmann::ordered_json metrics_json(const RunMetrics& m) {
  nlohmann::ordered_json j;
  j["quantity_mse"] = m.quantity_mse;
  j["quantity_tag_macro_f1"] = m.tag_macro_f1;
  j["indication_macro_f1"] = m.indication_macro_f1;
  nlohmann::ordered_json tag, ind;
  for (auto t : kTagColumns) tag[std::string(tag_name(t))] = m.tag_f1.at(static_cast<std::size_t>(t));
  for (auto i : kIndicationColumns) ind[std::string(indication_name(i))] = m.indication_f1.at(static_cast<std::size_t>(i));
  j["quantity_tag_f1"] = tag;
  j["indication_f1"] = ind;
  j["count"] = m.count;
  return j;
}

inline RunMetrics metrics_from_json(const nlohmann::json& j) {
  RunMetrics m;
  m.quantity_mse = j.at("quantity_mse").get<double>();
  m.tag_macro_f1 = j.at("quantity_tag_macro_f1").get<double>();
  m.indication_macro_f1 = j.at("indication_macro_f1").get<double>();
  m.tag_f1.assign(kNumClasses, 0.0);
  m.indication_f1.assign(kNumClasses, 0.0);
  for (auto t : kTagColumns) m.tag_f1[static_cast<std::size_t>(t)] = j.at("quantity_tag_f1").at(std::string(tag_name(t)));
  for (auto i : kIndicationColumns)
    m.indication_f1[static_cast<std::size_t>(i)] = j.at("indication_f1").at(std::string(indication_name(i)));
  m.count = j.at("count").get<std::size_t>();
  return m;
}

inline nlohmann::ordered_json grid_point_json(const GridPoint& p) {
  return {{"learning_rate", p.learning_rate},
          {"task_weights", {p.weights.quantity, p.weights.tag, p.weights.indication}}};
}

inline nlohmann::ordered_json report_json(const ExperimentReport& r) {
  nlohmann::ordered_json j;
  j["records"] = r.records;
  j["folds"] = r.folds;
  j["seeds"] = r.grid.seeds;
  j["learning_rates"] = r.grid.learning_rates;
  nlohmann::ordered_json triplets = nlohmann::ordered_json::array();
  for (const auto& w : r.grid.triplets) triplets.push_back({w.quantity, w.tag, w.indication});
  j["task_weight_triplets"] = triplets;
  const auto points = r.grid.points();
  nlohmann::ordered_json models = nlohmann::ordered_json::array();
  for (const auto& v : r.variants) {
    nlohmann::ordered_json m;
    m["variant"] = std::string(variant_key(v.variant));
    m["model"] = std::string(variant_label(v.variant));
    m["mean_over_seeds"] = metrics_json(v.aggregate);
    nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < v.per_seed.size(); ++s) {
      nlohmann::ordered_json e;
      e["seed"] = r.grid.seeds[s];
      e["grid_point"] = grid_point_json(points[v.chosen_grid[s]]);
      e["mean_over_folds"] = metrics_json(v.per_seed[s]);
      seeds.push_back(e);
    }
    m["per_seed"] = seeds;
    models.push_back(m);
  }
  j["models"] = models;
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const auto& run : r.runs) {
    nlohmann::ordered_json e;
    e["variant"] = std::string(variant_key(r.variants.at(run.key.variant).variant));
    e["seed"] = r.grid.seeds[run.key.seed];
    e["grid_index"] = run.key.grid;
    e["test_fold"] = run.key.fold;
    e["best_epoch"] = run.best_epoch;
    e["epochs"] = run.epochs;
    e["val_loss_uniform"] = run.val_loss_uniform;
    e["test"] = metrics_json(run.test);
    runs.push_back(e);
  }
  j["runs"] = runs;
  return j;
}

namespace detail {

inline std::string aligned_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out += " | ";
      out += c == 0 ? fmt::format("{:<{}}", cells[c], width[c]) : fmt::format("{:>{}}", cells[c], width[c]);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + '\n';
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 3 * (width.size() - 1), '-') + '\n';
  for (const auto& r : rows) out += line(r);
  return out;
}

inline std::string num(double v) { return fmt::format("{:.4f}", v); }

}  // namespace detail

// Quantity MSE, Quantity-Tag macro-F1, Indication macro-F1 per model.
inline std::string report_table(const ExperimentReport& r) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& v : r.variants) {
    rows.push_back({std::string(variant_label(v.variant)), detail::num(v.aggregate.quantity_mse),
                    detail::num(v.aggregate.tag_macro_f1), detail::num(v.aggregate.indication_macro_f1)});
  }
  return detail::aligned_table({"Model", "Quantity (MSE)", "Quantity Tag (macro-F1)", "Indication (macro-F1)"}, rows);
}

// Per-class quantity-tag F1 followed by quantity MSE.
inline std::string tag_class_table(const ExperimentReport& r) {
  std::vector<std::string> header{"Model"};
  for (auto t : kTagColumns) header.emplace_back(tag_name(t));
  header.emplace_back("Quantity");
  std::vector<std::vector<std::string>> rows;
  for (const auto& v : r.variants) {
    std::vector<std::string> row{std::string(variant_label(v.variant))};
    for (auto t : kTagColumns) row.push_back(detail::num(v.aggregate.tag_f1.at(static_cast<std::size_t>(t))));
    row.push_back(detail::num(v.aggregate.quantity_mse));
    rows.push_back(row);
  }
  return detail::aligned_table(header, rows);
}

inline std::string indication_class_table(const ExperimentReport& r) {
  std::vector<std::string> header{"Model"};
  for (auto i : kIndicationColumns) header.emplace_back(indication_name(i));
  std::vector<std::vector<std::string>> rows;
  for (const auto& v : r.variants) {
    std::vector<std::string> row{std::string(variant_label(v.variant))};
    for (auto i : kIndicationColumns)
      row.push_back(detail::num(v.aggregate.indication_f1.at(static_cast<std::size_t>(i))));
    rows.push_back(row);
  }
  return detail::aligned_table(header, rows);
}

}  // namespace sigte
