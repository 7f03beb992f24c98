#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sigte/tensor.hpp"

namespace sigte {

struct GradCheckOptions {
  double step = 1e-5;
  double rel_tol = 1e-4;
  // Denominator floor of the relative error, so entries whose true gradient
  // is ~0 are compared on an absolute scale of floor * rel_tol.
  double floor = 1e-3;
};

struct GradCheckResult {
  bool passed = true;
  double worst_rel_error = 0.0;
  std::string worst_leaf;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

struct NamedLeaf {
  std::string name;
  Tensor tensor;
};

// Compares tape gradients of a scalar function against central finite
// differences over every entry of every leaf. `fn` must rebuild the whole
// graph on the tape it is given and be deterministic (re-seed any dropout
// generator inside).
inline GradCheckResult check_gradients(const std::function<Tensor(Tape&)>& fn,
                                       std::vector<NamedLeaf> leaves,
                                       const GradCheckOptions& opt = {}, Fault fault = Fault::none) {
  for (auto& leaf : leaves) {
    leaf.tensor.set_requires_grad(true);
    leaf.tensor.clear_grad();
  }
  {
    Tape tape;
    tape.inject_fault(fault);
    Tensor loss = fn(tape);
    tape.backward(loss);
  }
  GradCheckResult result;
  Tape scratch(false);
  for (auto& leaf : leaves) {
    std::vector<double> analytic(leaf.tensor.size(), 0.0);
    if (leaf.tensor.has_grad()) {
      auto g = leaf.tensor.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
    auto data = leaf.tensor.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + opt.step;
      const double up = fn(scratch).item();
      data[i] = saved - opt.step;
      const double down = fn(scratch).item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), opt.floor});
      double err = std::abs(analytic[i] - numeric) / denom;
      if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
      ++result.entries_checked;
      if (result.entries_checked == 1 || err > result.worst_rel_error) {
        result.worst_rel_error = err;
        result.worst_leaf = leaf.name;
        result.worst_index = i;
        result.analytic = analytic[i];
        result.numeric = numeric;
      }
    }
  }
  result.passed = result.worst_rel_error <= opt.rel_tol;
  return result;
}

}  // namespace sigte
