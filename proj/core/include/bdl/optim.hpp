#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bdl/tensor.hpp"

namespace bdl {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerSettings sgd(double lr) { return {OptimizerKind::kSgd, lr}; }
  static OptimizerSettings adam(double lr, double beta1 = 0.9, double beta2 = 0.999) {
    return {OptimizerKind::kAdam, lr, beta1, beta2};
  }
};

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

// Owns the per-parameter moments; the parameters themselves are borrowed and
// must outlive the optimizer.
class Optimizer {
 public:
  Optimizer(OptimizerSettings settings, std::vector<Tensor*> params);

  // Applies one update from the populated gradients, then clears them.
  // Throws ContractError if a gradient is missing and NumericsError if any
  // parameter becomes non-finite.
  void step();

  std::uint64_t step_count() const { return steps_; }
  const OptimizerSettings& settings() const { return settings_; }
  const std::vector<std::vector<float>>& first_moments() const { return m_; }
  const std::vector<std::vector<float>>& second_moments() const { return v_; }

 private:
  OptimizerSettings settings_;
  std::vector<Tensor*> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::uint64_t steps_ = 0;
};

}  // namespace bdl
