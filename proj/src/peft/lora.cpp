// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "peftbench/error.hpp"
#include "peftbench/peft.hpp"

namespace peftbench {

Parameter::Parameter(std::string name, Matrix value, bool frozen)
    : name(std::move(name)),
      value(std::move(value)),
      grad(this->value.rows(), this->value.cols()),
      frozen(frozen) {}

std::string_view to_string(PeftMethod m) {
  switch (m) {
    case PeftMethod::full: return "full";
    case PeftMethod::lora: return "lora";
    case PeftMethod::compacter: return "compacter";
  }
  return "?";
}

std::optional<PeftMethod> parse_peft_method(std::string_view s) {
  if (s == "full") return PeftMethod::full;
  if (s == "lora") return PeftMethod::lora;
  if (s == "compacter") return PeftMethod::compacter;
  return std::nullopt;
}

std::string_view to_string(Activation a) {
  return a == Activation::gelu ? "gelu" : "linear";
}

std::optional<Activation> parse_activation(std::string_view s) {
  if (s == "gelu") return Activation::gelu;
  if (s == "linear") return Activation::linear;
  return std::nullopt;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double gelu_grad(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Matrix apply_activation(const Matrix& z, Activation act) {
  if (act == Activation::linear) return z;
  Matrix out = z;
  for (double& v : out.data()) v = gelu(v);
  return out;
}

Matrix activation_backward(const Matrix& z, const Matrix& dy, Activation act) {
  require_same_shape(z, dy, "activation_backward");
  if (act == Activation::linear) return dy;
  Matrix dz = dy;
  auto zd = z.data();
  auto out = dz.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= gelu_grad(zd[i]);
  return dz;
}

ParamBudget make_budget(std::size_t trainable, std::size_t total) {
  ParamBudget b;
  b.trainable = trainable;
  b.total = total;
  b.ratio = total == 0 ? 0.0 : static_cast<double>(trainable) / static_cast<double>(total);
  return b;
}

LoraAdapter::LoraAdapter(std::size_t in, std::size_t out, std::size_t rank,
                         const std::string& name, std::optional<double> scaling)
    : w_a(name + ".lora_a", Matrix(in, rank)),
      w_b(name + ".lora_b", Matrix(rank, out)),
      rank(rank),
      scaling(scaling.value_or(1.0 / static_cast<double>(rank))) {
  if (rank == 0) throw ConfigError("LoRA rank must be positive");
}

namespace {

void check_lora(const Matrix& w, const LoraAdapter& ad, const char* op) {
  if (ad.w_a.value.cols() != ad.rank || ad.w_b.value.rows() != ad.rank) {
    throw ShapeError(std::string(op) + ": adapter factors " + ad.w_a.value.shape_string() +
                     ", " + ad.w_b.value.shape_string() + " disagree with rank " +
                     std::to_string(ad.rank));
  }
  if (w.rows() != ad.in() || w.cols() != ad.out()) {
    throw ShapeError(std::string(op) + ": frozen weight " + w.shape_string() +
                     " does not match adapter (" + std::to_string(ad.in()) + "x" +
                     std::to_string(ad.out()) + ")");
  }
}

}  // namespace

Matrix lora_delta(const LoraAdapter& adapter) {
  return scale(low_rank_product(adapter.w_a.value, adapter.w_b.value), adapter.scaling);
}

Matrix lora_forward(const Matrix& x, const Matrix& w_frozen, const LoraAdapter& adapter) {
  check_lora(w_frozen, adapter, "lora_forward");
  if (x.cols() != w_frozen.rows()) {
    throw ShapeError("lora_forward: input " + x.shape_string() + " vs weight " +
                     w_frozen.shape_string());
  }
  Matrix y = matmul(x, w_frozen);
  const Matrix low = matmul(x, adapter.w_a.value);
  axpy_inplace(y, matmul(low, adapter.w_b.value), adapter.scaling);
  return y;
}

Matrix lora_merge(const Matrix& w_frozen, const LoraAdapter& adapter) {
  check_lora(w_frozen, adapter, "lora_merge");
  return add(w_frozen, lora_delta(adapter));
}

void init_lora(LoraAdapter& adapter, SeededRng& rng, double stddev) {
  adapter.w_a.value = rng.gaussian_matrix(adapter.in(), adapter.rank, stddev);
  adapter.w_b.value.fill(0.0);
}

}  // namespace peftbench
