#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sigte/errors.hpp"

namespace sigte {

struct F1Report {
  std::vector<double> per_class;
  double macro = 0.0;
};

// Unweighted mean of per-class F1. A class with no true positives (including
// one that is absent from both predictions and labels) scores 0.
inline F1Report macro_f1(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                         std::size_t classes) {
  if (predicted.size() != truth.size()) throw ContractError("macro_f1: prediction/label count mismatch");
  if (truth.empty()) throw DataError("macro_f1: empty evaluation set");
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] >= classes || truth[i] >= classes) throw DataError("macro_f1: label out of range");
    if (predicted[i] == truth[i]) {
      ++tp[truth[i]];
    } else {
      ++fp[predicted[i]];
      ++fn[truth[i]];
    }
  }
  F1Report r;
  r.per_class.resize(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    r.per_class[c] = tp[c] == 0 ? 0.0 : 2.0 * tp[c] / denom;
    r.macro += r.per_class[c];
  }
  r.macro /= static_cast<double>(classes);
  return r;
}

inline double mean_squared_error(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw ContractError("mse: prediction/label count mismatch");
  if (truth.empty()) throw DataError("mse: empty evaluation set");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = predicted[i] - truth[i];
    s += e * e;
  }
  return s / static_cast<double>(truth.size());
}

struct Prediction {
  double quantity = 0.0;
  std::size_t tag = 0;
  std::size_t indication = 0;
};

struct RunMetrics {
  double quantity_mse = 0.0;
  double tag_macro_f1 = 0.0;
  double indication_macro_f1 = 0.0;
  std::vector<double> tag_f1;
  std::vector<double> indication_f1;
  std::size_t count = 0;
};

inline RunMetrics evaluate_metrics(std::span<const Prediction> preds, std::span<const Prediction> labels,
                                   std::size_t classes = 5) {
  if (preds.size() != labels.size()) throw ContractError("evaluate_metrics: misaligned predictions");
  if (labels.empty()) throw DataError("evaluate_metrics: empty evaluation set");
  std::vector<double> pq, tq;
  std::vector<std::size_t> pt, tt, pi, ti;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    pq.push_back(preds[i].quantity);
    tq.push_back(labels[i].quantity);
    pt.push_back(preds[i].tag);
    tt.push_back(labels[i].tag);
    pi.push_back(preds[i].indication);
    ti.push_back(labels[i].indication);
  }
  RunMetrics m;
  m.count = labels.size();
  m.quantity_mse = mean_squared_error(pq, tq);
  auto tag = macro_f1(pt, tt, classes);
  auto ind = macro_f1(pi, ti, classes);
  m.tag_macro_f1 = tag.macro;
  m.tag_f1 = tag.per_class;
  m.indication_macro_f1 = ind.macro;
  m.indication_f1 = ind.per_class;
  return m;
}

// Entry-wise mean of several runs (count is summed).
inline RunMetrics average_metrics(std::span<const RunMetrics> runs) {
  if (runs.empty()) throw ContractError("average_metrics: no runs");
  RunMetrics out;
  out.tag_f1.assign(runs.front().tag_f1.size(), 0.0);
  out.indication_f1.assign(runs.front().indication_f1.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(runs.size());
  for (const auto& r : runs) {
    out.quantity_mse += r.quantity_mse * inv;
    out.tag_macro_f1 += r.tag_macro_f1 * inv;
    out.indication_macro_f1 += r.indication_macro_f1 * inv;
    for (std::size_t c = 0; c < out.tag_f1.size(); ++c) out.tag_f1[c] += r.tag_f1[c] * inv;
    for (std::size_t c = 0; c < out.indication_f1.size(); ++c) out.indication_f1[c] += r.indication_f1[c] * inv;
    out.count += r.count;
  }
  return out;
}

}  // namespace sigte
