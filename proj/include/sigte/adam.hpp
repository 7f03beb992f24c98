#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sigte/errors.hpp"
#include "sigte/tensor.hpp"

namespace sigte {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates, one pair of buffers per parameter.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t timestep = 0;

  static AdamState for_params(const std::vector<Tensor>& params) {
    AdamState state;
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
    return state;
  }
};

// One bias-corrected Adam update. Every parameter must carry a populated
// gradient; a missing one means it was not reached by the backward pass.
inline void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamOptions& opt) {
  if (state.m.size() != params.size()) throw ContractError("adam_step: state/parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw ContractError("adam_step: parameter " + std::to_string(i) + " has no gradient");
    }
    if (state.m[i].size() != params[i].size()) throw ContractError("adam_step: state shape mismatch");
  }
  ++state.timestep;
  const double t = static_cast<double>(state.timestep);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].data();
    auto g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

}  // namespace sigte
