#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "sigte/dataset.hpp"
#include "sigte/errors.hpp"
#include "sigte/random.hpp"

namespace sigte {

// Roles of the folds in one cross-validation iteration.
struct FoldSplit {
  std::vector<std::size_t> train, validation, test;  // record indices
};

// Record indices assigned to k disjoint folds. In iteration i, fold i is the
// test set, fold (i + 1) mod k the validation set and the rest train.
struct FoldPlan {
  std::vector<std::vector<std::size_t>> folds;

  std::size_t k() const { return folds.size(); }

  FoldSplit split(std::size_t iteration) const {
    if (iteration >= k()) throw ContractError("fold iteration out of range");
    FoldSplit s;
    const std::size_t val = (iteration + 1) % k();
    for (std::size_t f = 0; f < k(); ++f) {
      auto& target = f == iteration ? s.test : f == val ? s.validation : s.train;
      target.insert(target.end(), folds[f].begin(), folds[f].end());
    }
    return s;
  }
};

inline FoldPlan make_folds(std::size_t n_records, std::size_t k, std::uint64_t seed) {
  if (k < 3) throw ConfigError("cross-validation needs at least 3 folds (train, validation, test)");
  if (n_records < k) {
    throw DataError("cannot split " + std::to_string(n_records) + " records into " + std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(n_records);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::stream(seed, "folds");
  rng.shuffle(std::span<std::size_t>(order));
  FoldPlan plan;
  plan.folds.resize(k);
  for (std::size_t i = 0; i < n_records; ++i) plan.folds[i % k].push_back(order[i]);
  return plan;
}

// Throws if any record id appears in two roles of the split.
inline void assert_no_leakage(const FoldSplit& split, const std::vector<PrescriptionRecord>& records) {
  std::set<std::string> train, val;
  for (auto i : split.train) train.insert(records.at(i).id);
  for (auto i : split.validation) {
    if (train.count(records.at(i).id)) throw ContractError("fold leakage: '" + records[i].id + "' in train and validation");
    val.insert(records[i].id);
  }
  for (auto i : split.test) {
    const auto& id = records.at(i).id;
    if (train.count(id) || val.count(id)) throw ContractError("fold leakage: '" + id + "' in test and another role");
  }
}

}  // namespace sigte
