#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sigte/encoder.hpp"
#include "sigte/gradcheck.hpp"
#include "sigte/heads.hpp"
#include "sigte/ops.hpp"
#include "sigte/random.hpp"
#include "sigte/signature.hpp"

namespace sigte {

struct GradCase {
  std::string name;
  GradCheckResult result;
};

// One row of the gradient report: the worst case of a component.
struct ComponentReport {
  std::string component;
  std::vector<GradCase> cases;

  bool passed() const {
    for (const auto& c : cases)
      if (!c.result.passed) return false;
    return true;
  }

  const GradCase& worst() const {
    std::size_t w = 0;
    for (std::size_t i = 1; i < cases.size(); ++i)
      if (cases[i].result.worst_rel_error > cases[w].result.worst_rel_error) w = i;
    return cases.at(w);
  }
};

struct GradientReport {
  std::vector<ComponentReport> components;

  bool passed() const {
    for (const auto& c : components)
      if (!c.passed()) return false;
    return true;
  }
};

namespace detail {

inline Tensor random_leaf(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape), true);
  for (double& v : t.data()) v = rng.uniform(-scale, scale);
  return t;
}

// Zero-initialized biases put the first stream position (whose signature is
// always zero) on a ReLU kink, where finite differences are meaningless.
inline void jitter_biases(const std::vector<Tensor>& params, Rng& rng) {
  for (const auto& p : params)
    if (p.rank() == 1)
      for (double& v : Tensor(p).data()) v += rng.uniform(-0.5, 0.5);
}

inline std::vector<NamedLeaf> named_leaves(const std::vector<Tensor>& params, const std::vector<std::string>& names,
                                           const std::string& prefix) {
  std::vector<NamedLeaf> out;
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back({prefix + names[i], params[i]});
  return out;
}

}  // namespace detail

// Every differentiable primitive, each behind a random linear readout so
// that no gradient is trivially constant.
inline ComponentReport check_core(std::uint64_t seed, Fault fault = Fault::none, const GradCheckOptions& opt = {}) {
  Rng rng = Rng::stream(seed, "verify.core");
  ComponentReport rep{"core", {}};
  auto run = [&](std::string name, Shape out_shape, const std::function<Tensor(Tape&)>& body,
                 std::vector<NamedLeaf> leaves) {
    Tensor readout = detail::random_leaf(out_shape, rng);
    readout.set_requires_grad(false);
    auto fn = [&](Tape& t) { return sum(t, mul(t, body(t), readout)); };
    rep.cases.push_back({std::move(name), check_gradients(fn, std::move(leaves), opt, fault)});
  };
  Tensor a = detail::random_leaf({3, 4}, rng), b = detail::random_leaf({4, 2}, rng);
  Tensor c = detail::random_leaf({3, 4}, rng), v = detail::random_leaf({4}, rng);
  Tensor g = detail::random_leaf({4}, rng), e = detail::random_leaf({3, 2}, rng);
  Tensor bias = detail::random_leaf({2}, rng);
  run("matmul", {3, 2}, [&](Tape& t) { return matmul(t, a, b); }, {{"a", a}, {"b", b}});
  run("transpose", {4, 3}, [&](Tape& t) { return transpose(t, a); }, {{"a", a}});
  run("add", {3, 4}, [&](Tape& t) { return add(t, a, c); }, {{"a", a}, {"c", c}});
  run("sub", {3, 4}, [&](Tape& t) { return sub(t, a, c); }, {{"a", a}, {"c", c}});
  run("mul", {3, 4}, [&](Tape& t) { return mul(t, a, c); }, {{"a", a}, {"c", c}});
  run("scale", {3, 4}, [&](Tape& t) { return scale(t, a, -1.7); }, {{"a", a}});
  run("add_bias", {3, 4}, [&](Tape& t) { return add_bias(t, a, v); }, {{"a", a}, {"v", v}});
  run("linear", {3, 2}, [&](Tape& t) { return linear(t, a, b, bias); }, {{"a", a}, {"b", b}, {"bias", bias}});
  run("mean_rows", {4}, [&](Tape& t) { return mean_rows(t, a); }, {{"a", a}});
  run("select_row", {4}, [&](Tape& t) { return select_row(t, a, 2); }, {{"a", a}});
  run("reshape", {2, 6}, [&](Tape& t) { return reshape(t, a, {2, 6}); }, {{"a", a}});
  run("concat_cols", {3, 6}, [&](Tape& t) { return concat_cols(t, {a, e}); }, {{"a", a}, {"e", e}});
  run("pad_cols", {3, 6}, [&](Tape& t) { return pad_cols(t, a, 6); }, {{"a", a}});
  run("softmax_rows", {3, 4}, [&](Tape& t) { return softmax_rows(t, a); }, {{"a", a}});
  run("log_softmax_rows", {3, 4}, [&](Tape& t) { return log_softmax_rows(t, a); }, {{"a", a}});
  run("relu", {3, 4}, [&](Tape& t) { return relu(t, a); }, {{"a", a}});
  run("layer_norm", {3, 4}, [&](Tape& t) { return layer_norm(t, a, g, v, 1e-5); }, {{"a", a}, {"g", g}, {"v", v}});
  run("dropout", {3, 4},
      [&](Tape& t) {
        Rng drop(seed);
        return dropout(t, a, 0.3, true, drop);
      },
      {{"a", a}});
  run("cross_entropy", {}, [&](Tape& t) { return cross_entropy(t, v, 2, 1.5); }, {{"v", v}});
  run("squared_error", {}, [&](Tape& t) { return squared_error(t, select_row(t, reshape(t, v, {4, 1}), 1), 0.75); },
      {{"v", v}});
  return rep;
}

// The signature transform in both modes across a spread of (d, N, L).
inline ComponentReport check_signature(std::uint64_t seed, Fault fault = Fault::none, const GradCheckOptions& opt = {}) {
  Rng rng = Rng::stream(seed, "verify.signature");
  ComponentReport rep{"signature", {}};
  struct Case {
    std::size_t d, order, length;
  };
  for (Case k : {Case{1, 3, 4}, Case{2, 2, 5}, Case{2, 3, 4}, Case{3, 3, 3}, Case{4, 2, 3}}) {
    for (auto mode : {SignatureMode::pooled, SignatureMode::stream}) {
      Tensor path = detail::random_leaf({k.length, k.d}, rng);
      const std::size_t width = sig::sig_dim(k.d, k.order);
      Tensor readout = detail::random_leaf(mode == SignatureMode::pooled ? Shape{width} : Shape{k.length, width}, rng);
      readout.set_requires_grad(false);
      auto fn = [&](Tape& t) { return sum(t, mul(t, signature_transform(t, path, k.order, mode), readout)); };
      std::string name = "d=" + std::to_string(k.d) + " N=" + std::to_string(k.order) + " L=" +
                         std::to_string(k.length) + (mode == SignatureMode::pooled ? " pooled" : " stream");
      rep.cases.push_back({name, check_gradients(fn, {{"path", path}}, opt, fault)});
    }
  }
  return rep;
}

// Full encoder plus heads and multitask loss, dropout active with a fixed
// mask, gradients checked on the input and on every parameter.
inline ComponentReport check_encoder(const STEConfig& cfg, std::size_t length, std::uint64_t seed,
                                     Fault fault = Fault::none, const GradCheckOptions& opt = {}) {
  cfg.validate();
  Rng rng = Rng::stream(seed, "verify.encoder");
  ComponentReport rep{"encoder", {}};
  auto layers = init_encoder(cfg, rng);
  auto heads = HeadsParams::init(cfg.d_model(), rng);
  std::vector<NamedLeaf> leaves;
  Tensor x = detail::random_leaf({length, cfg.d_model()}, rng, 0.5);
  leaves.push_back({"input", x});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    detail::jitter_biases(layers[i].parameters(), rng);
    auto l = detail::named_leaves(layers[i].parameters(), layers[i].parameter_names(),
                                  "layer" + std::to_string(i) + ".");
    leaves.insert(leaves.end(), l.begin(), l.end());
  }
  detail::jitter_biases(heads.parameters(), rng);
  auto h = detail::named_leaves(heads.parameters(), heads.parameter_names(), "heads.");
  leaves.insert(leaves.end(), h.begin(), h.end());
  const Targets target{2.5, 1, 3};
  auto fn = [&](Tape& t) {
    Rng drop(seed);
    Tensor pooled = pool_sequence(t, encoder_forward(t, x, layers, cfg, true, drop), cfg.pooling);
    return multitask_loss(t, heads_forward(t, pooled, heads, true, cfg.p_drop, drop), target, TaskWeights::uniform());
  };
  rep.cases.push_back({"ste+heads L=" + std::to_string(length), check_gradients(fn, leaves, opt, fault)});
  return rep;
}

inline GradientReport run_gradient_suite(const STEConfig& cfg, std::uint64_t seed, Fault fault = Fault::none,
                                         std::size_t length = 3) {
  GradientReport r;
  r.components.push_back(check_core(seed, fault));
  r.components.push_back(check_signature(seed, fault));
  r.components.push_back(check_encoder(cfg, length, seed, fault));
  return r;
}

}  // namespace sigte
