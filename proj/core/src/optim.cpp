#include "bdl/optim.hpp"

#include <cmath>

#include "bdl/errors.hpp"

namespace bdl {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ValidationError("unknown optimizer '" + name + "'");
}

Optimizer::Optimizer(OptimizerSettings settings, std::vector<Tensor*> params)
    : settings_(settings), params_(std::move(params)) {
  if (!(settings_.learning_rate > 0.0)) throw ContractError("learning rate must be positive");
  if (settings_.kind == OptimizerKind::kAdam) {
    for (const Tensor* p : params_) {
      m_.emplace_back(p->size(), 0.0f);
      v_.emplace_back(p->size(), 0.0f);
    }
  }
}

void Optimizer::step() {
  for (const Tensor* p : params_) {
    if (!p->has_grad()) throw ContractError("optimizer step on a parameter without gradient");
  }
  ++steps_;
  const double lr = settings_.learning_rate;
  bool nonfinite = false;

  if (settings_.kind == OptimizerKind::kSgd) {
    for (Tensor* p : params_) {
      auto& g = p->grad();
      auto data = p->data();
      for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(data[i] - lr * g[i]);
      if (!p->all_finite()) nonfinite = true;
    }
  } else {
    // Bias corrections folded into two per-step constants; the element loop
    // stays in float so it vectorizes.
    const double b1 = settings_.beta1, b2 = settings_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
    const float ob1 = static_cast<float>(1.0 - b1), ob2 = static_cast<float>(1.0 - b2);
    const float step = static_cast<float>(lr / c1);
    const float inv_c2 = static_cast<float>(1.0 / std::sqrt(c2));
    const float eps = static_cast<float>(settings_.epsilon);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor* p = params_[k];
      const float* g = p->grad().data();
      float* data = p->data().data();
      float* m = m_[k].data();
      float* v = v_[k].data();
      const std::size_t n = p->size();
      // x - x is 0 for finite x and NaN otherwise.
      float poison = 0.0f;
      for (std::size_t i = 0; i < n; ++i) {
        const float gi = g[i];
        m[i] = fb1 * m[i] + ob1 * gi;
        v[i] = fb2 * v[i] + ob2 * gi * gi;
        data[i] -= step * m[i] / (std::sqrt(v[i]) * inv_c2 + eps);
        poison += data[i] - data[i];
      }
      if (poison != 0.0f) nonfinite = true;
    }
  }

  for (Tensor* p : params_) p->clear_grad();
  if (nonfinite) throw NumericsError("non-finite parameter after optimizer step " + std::to_string(steps_));
}

}  // namespace bdl
