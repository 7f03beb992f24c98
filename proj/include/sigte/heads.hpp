#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sigte/attention.hpp"
#include "sigte/errors.hpp"
#include "sigte/ops.hpp"
#include "sigte/random.hpp"
#include "sigte/tensor.hpp"

namespace sigte {

inline constexpr std::size_t kNumClasses = 5;
inline constexpr std::size_t kQuantityHidden = 10;
inline constexpr std::size_t kIndicationHidden = 50;

// Three task predictors on top of a d_model representation:
//   quantity     d_model -> 10 -> 1, ReLU + dropout in between
//   quantity tag d_model -> 5
//   indication   d_model -> 50 -> 5, ReLU + dropout in between
struct HeadsParams {
  Tensor q_w1, q_b1, q_w2, q_b2;
  Tensor tag_w, tag_b;
  Tensor ind_w1, ind_b1, ind_w2, ind_b2;

  static HeadsParams init(std::size_t d_model, Rng& rng) {
    HeadsParams p;
    p.q_w1 = xavier_uniform(d_model, kQuantityHidden, rng);
    p.q_b1 = zeros_param(kQuantityHidden);
    p.q_w2 = xavier_uniform(kQuantityHidden, 1, rng);
    p.q_b2 = zeros_param(1);
    p.tag_w = xavier_uniform(d_model, kNumClasses, rng);
    p.tag_b = zeros_param(kNumClasses);
    p.ind_w1 = xavier_uniform(d_model, kIndicationHidden, rng);
    p.ind_b1 = zeros_param(kIndicationHidden);
    p.ind_w2 = xavier_uniform(kIndicationHidden, kNumClasses, rng);
    p.ind_b2 = zeros_param(kNumClasses);
    return p;
  }

  std::vector<Tensor> parameters() const {
    return {q_w1, q_b1, q_w2, q_b2, tag_w, tag_b, ind_w1, ind_b1, ind_w2, ind_b2};
  }
  std::vector<std::string> parameter_names() const {
    return {"q_w1", "q_b1", "q_w2", "q_b2", "tag_w", "tag_b", "ind_w1", "ind_b1", "ind_w2", "ind_b2"};
  }
};

struct HeadsOutput {
  Tensor quantity;           // [1]
  Tensor tag_logits;         // [5]
  Tensor indication_logits;  // [5]
};

inline HeadsOutput heads_forward(Tape& tape, const Tensor& rep, const HeadsParams& p, bool training, double p_drop,
                                 Rng& rng) {
  if (rep.size() != p.tag_w.dim(0)) {
    throw DimensionError("heads: representation " + shape_string(rep.shape()) + " does not match d_model " +
                         std::to_string(p.tag_w.dim(0)));
  }
  Tensor row = rep.rank() == 2 ? rep : reshape(tape, rep, Shape{1, rep.size()});
  HeadsOutput out;
  Tensor qh = dropout(tape, relu(tape, linear(tape, row, p.q_w1, p.q_b1)), p_drop, training, rng);
  out.quantity = reshape(tape, linear(tape, qh, p.q_w2, p.q_b2), Shape{1});
  out.tag_logits = reshape(tape, linear(tape, row, p.tag_w, p.tag_b), Shape{kNumClasses});
  Tensor ih = dropout(tape, relu(tape, linear(tape, row, p.ind_w1, p.ind_b1)), p_drop, training, rng);
  out.indication_logits = reshape(tape, linear(tape, ih, p.ind_w2, p.ind_b2), Shape{kNumClasses});
  return out;
}

// alpha * MSE + beta_tag * CE_tag + beta_ind * CE_ind, on the 2-simplex.
struct TaskWeights {
  double quantity = 1.0 / 3.0;
  double tag = 1.0 / 3.0;
  double indication = 1.0 / 3.0;

  void validate() const {
    for (double w : {quantity, tag, indication}) {
      if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("task weights must lie in [0, 1]");
    }
    if (std::abs(quantity + tag + indication - 1.0) > 1e-9) throw ConfigError("task weights must sum to 1");
  }

  static TaskWeights uniform() { return {}; }
};

// Optional per-class cross-entropy weights for the two classification tasks.
struct ClassWeights {
  std::array<double, kNumClasses> tag{1, 1, 1, 1, 1};
  std::array<double, kNumClasses> indication{1, 1, 1, 1, 1};
};

struct Targets {
  double quantity = 0.0;
  std::size_t tag = 0;
  std::size_t indication = 0;
};

inline double combine_task_losses(double mse, double ce_tag, double ce_ind, const TaskWeights& w) {
  w.validate();
  return w.quantity * mse + w.tag * ce_tag + w.indication * ce_ind;
}

inline Tensor multitask_loss(Tape& tape, const HeadsOutput& out, const Targets& target, const TaskWeights& w,
                             const ClassWeights* class_weights = nullptr) {
  w.validate();
  if (target.tag >= kNumClasses || target.indication >= kNumClasses) {
    throw DataError("multitask_loss: label index outside [0, 5)");
  }
  const double tag_w = class_weights ? class_weights->tag[target.tag] : 1.0;
  const double ind_w = class_weights ? class_weights->indication[target.indication] : 1.0;
  Tensor mse = squared_error(tape, out.quantity, target.quantity);
  Tensor ce_tag = cross_entropy(tape, out.tag_logits, target.tag, tag_w);
  Tensor ce_ind = cross_entropy(tape, out.indication_logits, target.indication, ind_w);
  return add(tape, add(tape, scale(tape, mse, w.quantity), scale(tape, ce_tag, w.tag)),
             scale(tape, ce_ind, w.indication));
}

}  // namespace sigte
