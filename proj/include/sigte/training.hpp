#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "sigte/adam.hpp"
#include "sigte/dataset.hpp"
#include "sigte/errors.hpp"
#include "sigte/model.hpp"

namespace sigte {

struct TrainOptions {
  std::size_t batch_size = 8;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  AdamOptions adam;
  TaskWeights weights;
  std::optional<ClassWeights> class_weights;

  void validate() const {
    if (batch_size == 0) throw ConfigError("training: batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("training: max_epochs must be positive");
    if (patience == 0) throw ConfigError("training: patience must be positive");
    if (!(adam.lr >= 0.0) || !std::isfinite(adam.lr)) throw ConfigError("training: learning rate must be >= 0");
    weights.validate();
  }
};

struct EpochRecord {
  std::size_t epoch = 0;      // 1-based
  double train_loss = 0.0;    // mean over batches, dropout active
  double val_loss = 0.0;      // eval mode, run's task weights
};

struct TrainResult {
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  // Validation loss of the returned parameters under uniform task weights,
  // comparable across grid points with different weights.
  double best_val_loss_uniform = std::numeric_limits<double>::infinity();
  std::size_t steps = 0;
  std::vector<EpochRecord> history;
};

// Mean eval-mode multitask loss over the given records.
inline double evaluate_loss(const Model& model, const std::vector<PrescriptionRecord>& records,
                            std::span<const std::size_t> indices, const TaskWeights& weights,
                            const ClassWeights* class_weights = nullptr) {
  if (indices.empty()) throw DataError("evaluate_loss: empty split");
  Tape tape(false);
  Rng unused(0);
  double total = 0.0;
  for (auto i : indices) {
    const auto& r = records.at(i);
    total += multitask_loss(tape, model.forward(tape, r.embeddings, false, unused), r.targets(), weights, class_weights)
                 .item();
  }
  return total / static_cast<double>(indices.size());
}

namespace detail {

inline std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.push_back(p.values());
  return out;
}

inline void restore(const std::vector<Tensor>& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto d = Tensor(params[i]).data();
    std::copy(values[i].begin(), values[i].end(), d.begin());
  }
}

}  // namespace detail

// Adam on the batch-mean multitask loss with early stopping on validation
// loss. Sequences are processed unpadded, one at a time, within a batch. On
// return `model` holds the parameters of the best validation epoch.
inline TrainResult train_model(Model& model, const std::vector<PrescriptionRecord>& records,
                               const std::vector<std::size_t>& train_idx, const std::vector<std::size_t>& val_idx,
                               const TrainOptions& opt, std::uint64_t seed) {
  opt.validate();
  if (train_idx.empty() || val_idx.empty()) throw DataError("train_model: empty train or validation split");
  const ClassWeights* cw = opt.class_weights ? &*opt.class_weights : nullptr;
  std::vector<Tensor> params = model.parameters();
  for (auto& p : params) p.set_requires_grad(true);
  AdamState state = AdamState::for_params(params);
  Rng shuffle_rng = Rng::stream(seed, "shuffle");
  Rng dropout_rng = Rng::stream(seed, "dropout");

  TrainResult result;
  auto best = detail::snapshot(params);
  std::vector<std::size_t> order = train_idx;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t end = std::min(order.size(), start + opt.batch_size);
      Tape tape;
      Tensor batch_loss;
      for (std::size_t b = start; b < end; ++b) {
        const auto& r = records.at(order[b]);
        Tensor l = multitask_loss(tape, model.forward(tape, r.embeddings, true, dropout_rng), r.targets(),
                                  opt.weights, cw);
        batch_loss = batch_loss.defined() ? add(tape, batch_loss, l) : l;
      }
      batch_loss = scale(tape, batch_loss, 1.0 / static_cast<double>(end - start));
      ++result.steps;
      if (!std::isfinite(batch_loss.item())) throw DivergenceError(result.steps, "non-finite training loss");
      for (auto& p : params) p.clear_grad();
      tape.backward(batch_loss);
      adam_step(params, state, opt.adam);
      epoch_loss += batch_loss.item();
      ++batches;
    }
    const double val = evaluate_loss(model, records, val_idx, opt.weights, cw);
    if (!std::isfinite(val)) throw DivergenceError(result.steps, "non-finite validation loss");
    result.history.push_back({epoch, epoch_loss / static_cast<double>(batches), val});
    if (val < result.best_val_loss) {
      result.best_val_loss = val;
      result.best_epoch = epoch;
      best = detail::snapshot(params);
      since_best = 0;
    } else if (++since_best >= opt.patience) {
      break;
    }
  }
  detail::restore(params, best);
  for (auto& p : params) p.clear_grad();
  result.best_val_loss_uniform = evaluate_loss(model, records, val_idx, TaskWeights::uniform(), cw);
  return result;
}

}  // namespace sigte
