// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "peftbench/microformer.hpp"

namespace peftbench {

/// One training sequence: model input tokens and per-position targets
/// (kIgnoreTarget where the loss is masked).
struct Example {
  std::vector<int> tokens;
  std::vector<int> targets;
};

/// Datasets below this many records default to 50 epochs, larger ones to 10.
inline constexpr std::size_t kSmallDatasetRecords = 5000;

std::size_t default_epochs(std::size_t n_records);

struct TrainConfig {
  double learning_rate = 5e-5;
  std::optional<std::size_t> epochs;  // unset: default_epochs(train size)
  std::size_t batch_size = 8;
  std::size_t early_stop_patience = 5;
  double min_improvement = 1e-4;
  double clip_norm = 1.0;  // 0 disables clipping
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c, std::size_t resolved_epochs);

struct TrainHistory {
  std::vector<double> train_loss;  // mean batch loss per epoch
  /// valid_loss[0] is measured before the first update; one entry per epoch after.
  std::vector<double> valid_loss;
  bool stopped_early = false;
  std::size_t best_check = 0;  // index into valid_loss
  double best_valid_loss = 0.0;
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;  // full-pass loss of the restored parameters
  std::size_t steps = 0;
};

nlohmann::json history_to_json(const TrainHistory& h);

/// Early stopping rule: a check improves when it beats the best so far by at
/// least min_improvement; training stops after `patience` consecutive checks
/// without improvement.
class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience, double min_improvement)
      : patience_(patience), min_improvement_(min_improvement) {}

  /// Records a check. Returns true when training should stop.
  bool observe(double loss);

  double best() const { return best_; }
  std::size_t best_index() const { return best_index_; }
  std::size_t checks() const { return checks_; }
  bool improved_last() const { return improved_last_; }

 private:
  std::size_t patience_;
  double min_improvement_;
  double best_ = 0.0;
  std::size_t best_index_ = 0;
  std::size_t checks_ = 0;
  std::size_t stale_ = 0;
  bool improved_last_ = false;
};

/// Adam moment buffers, one pair per unfrozen parameter.
class AdamState {
 public:
  /// Tracks the unfrozen entries of `params`; frozen ones get no buffers.
  explicit AdamState(const std::vector<Parameter*>& params);
  explicit AdamState(Microformer& model) : AdamState(model.parameters()) {}

  std::size_t step_count() const { return t_; }
  /// Number of parameter entries that carry moment buffers.
  std::size_t tracked_entries() const;

  /// Applies one update from the gradients currently stored in the parameters.
  void update(const TrainConfig& cfg);

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t t_ = 0;
};

/// Token-weighted mean loss over examples, no gradient.
double dataset_loss(const Microformer& model, const std::vector<Example>& data);

/// One optimizer step on `batch`: zero grads, accumulate the token-weighted
/// mean loss gradient, clip, Adam. Returns the batch loss. Throws NumericAbort
/// naming `batch_index` when the loss is not finite.
double train_step(Microformer& model, const std::vector<const Example*>& batch,
                  AdamState& state, const TrainConfig& cfg, std::size_t batch_index = 0);

/// Full loop with per-epoch validation, early stopping and best-parameter
/// restore. An empty valid set validates on the training set.
TrainHistory train(Microformer& model, const std::vector<Example>& train_set,
                   const std::vector<Example>& valid_set, const TrainConfig& cfg);

}  // namespace peftbench
