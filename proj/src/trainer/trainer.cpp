// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "peftbench/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "peftbench/error.hpp"

namespace peftbench {

std::size_t default_epochs(std::size_t n_records) {
  return n_records < kSmallDatasetRecords ? 50 : 10;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs && *epochs < 1) throw ConfigError("epochs must be at least 1");
}

nlohmann::json train_config_to_json(const TrainConfig& c, std::size_t resolved_epochs) {
  return {{"learning_rate", c.learning_rate},
          {"epochs", resolved_epochs},
          {"batch_size", c.batch_size},
          {"early_stop_patience", c.early_stop_patience},
          {"min_improvement", c.min_improvement},
          {"clip_norm", c.clip_norm},
          {"seed", c.seed},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps}};
}

nlohmann::json history_to_json(const TrainHistory& h) {
  return {{"train_loss", h.train_loss},
          {"valid_loss", h.valid_loss},
          {"stopped_early", h.stopped_early},
          {"best_check", h.best_check},
          {"best_valid_loss", h.best_valid_loss},
          {"initial_train_loss", h.initial_train_loss},
          {"final_train_loss", h.final_train_loss},
          {"steps", h.steps}};
}

bool EarlyStopper::observe(double loss) {
  ++checks_;
  if (checks_ == 1 || loss < best_ - min_improvement_) {
    best_ = loss;
    best_index_ = checks_ - 1;
    stale_ = 0;
    improved_last_ = true;
    return false;
  }
  improved_last_ = false;
  ++stale_;
  return stale_ >= patience_;
}

AdamState::AdamState(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    if (p->frozen) continue;
    params_.push_back(p);
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

std::size_t AdamState::tracked_entries() const {
  std::size_t n = 0;
  for (const Matrix& m : m_) n += m.size();
  return n;
}

void AdamState::update(const TrainConfig& cfg) {
  ++t_;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto value = params_[i]->value.data();
    auto grad = params_[i]->grad.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t k = 0; k < value.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * grad[k];
      v[k] = b2 * v[k] + (1.0 - b2) * grad[k] * grad[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      value[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

namespace {

std::size_t target_count(const Example& e) {
  return static_cast<std::size_t>(
      std::count_if(e.targets.begin(), e.targets.end(), [](int t) { return t != kIgnoreTarget; }));
}

void clip_gradients(Microformer& model, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  auto params = model.parameters();
  for (const Parameter* p : params) {
    if (p->frozen) continue;
    for (double g : p->grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (Parameter* p : params) {
    if (p->frozen) continue;
    for (double& g : p->grad.data()) g *= s;
  }
}

}  // namespace

double dataset_loss(const Microformer& model, const std::vector<Example>& data) {
  double total = 0.0;
  std::size_t count = 0;
  for (const Example& e : data) {
    const std::size_t n = target_count(e);
    if (n == 0) continue;
    total += model.loss(e.tokens, e.targets) * static_cast<double>(n);
    count += n;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

double train_step(Microformer& model, const std::vector<const Example*>& batch,
                  AdamState& state, const TrainConfig& cfg, std::size_t batch_index) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  std::size_t total = 0;
  for (const Example* e : batch) total += target_count(*e);
  model.zero_grad();
  double loss = 0.0;
  if (total > 0) {
    for (const Example* e : batch) {
      const std::size_t n = target_count(*e);
      if (n == 0) continue;
      const double w = static_cast<double>(n) / static_cast<double>(total);
      loss += w * model.loss_and_backward(e->tokens, e->targets, w);
    }
  }
  if (!std::isfinite(loss)) {
    throw NumericAbort("non-finite loss " + std::to_string(loss) + " at batch " +
                       std::to_string(batch_index));
  }
  clip_gradients(model, cfg.clip_norm);
  state.update(cfg);
  return loss;
}

TrainHistory train(Microformer& model, const std::vector<Example>& train_set,
                   const std::vector<Example>& valid_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw DataError("train: empty training set");
  const std::vector<Example>& valid = valid_set.empty() ? train_set : valid_set;
  const std::size_t epochs = cfg.epochs.value_or(default_epochs(train_set.size()));

  TrainHistory h;
  AdamState state(model);
  EarlyStopper stopper(cfg.early_stop_patience, cfg.min_improvement);

  h.initial_train_loss = dataset_loss(model, train_set);
  const double v0 = valid_set.empty() ? h.initial_train_loss : dataset_loss(model, valid);
  h.valid_loss.push_back(v0);
  stopper.observe(v0);
  std::vector<double> best_values = model.flat_values();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t batch_index = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    SeededRng shuffle(derive_seed(cfg.seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const Example*> batch;
      for (std::size_t j = start; j < std::min(order.size(), start + cfg.batch_size); ++j) {
        batch.push_back(&train_set[order[j]]);
      }
      epoch_loss += train_step(model, batch, state, cfg, batch_index++);
      ++batches;
    }
    h.train_loss.push_back(epoch_loss / static_cast<double>(batches));

    const double vl = dataset_loss(model, valid);
    if (!std::isfinite(vl)) {
      throw NumericAbort("non-finite validation loss after epoch " + std::to_string(epoch + 1));
    }
    h.valid_loss.push_back(vl);
    const bool stop = stopper.observe(vl);
    if (stopper.improved_last()) best_values = model.flat_values();
    if (stop) {
      h.stopped_early = true;
      break;
    }
  }

  model.set_flat_values(best_values);
  model.zero_grad();
  h.steps = state.step_count();
  h.best_check = stopper.best_index();
  h.best_valid_loss = stopper.best();
  h.final_train_loss = dataset_loss(model, train_set);
  return h;
}

}  // namespace peftbench
