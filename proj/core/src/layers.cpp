#include "bdl/layers.hpp"

#include <cmath>

#include "bdl/errors.hpp"

namespace bdl {

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kTanh: return "tanh";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "tanh") return Activation::kTanh;
  throw FormatError("unknown activation '" + name + "'");
}

Var apply_activation(Graph& g, Var x, Activation act) {
  switch (act) {
    case Activation::kIdentity: return x;
    case Activation::kRelu: return g.relu(x);
    case Activation::kLeakyRelu: return g.leaky_relu(x, kLeakySlope);
    case Activation::kSigmoid: return g.sigmoid(x);
    case Activation::kTanh: return g.tanh(x);
  }
  return x;
}

Var dense_layer(Graph& g, Var input, Var weights, Var bias, Activation act) {
  const Tensor& x = g.value(input);
  const Tensor& w = g.value(weights);
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
    throw DimensionError("dense layer: input " + shape_str(x.shape()) + " does not fit weights " +
                         shape_str(w.shape()));
  }
  return apply_activation(g, g.add_row_bias(g.matmul(input, weights), bias), act);
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0, fan_in = in;
  for (const auto& l : layers) {
    n += fan_in * l.out + l.out;
    fan_in = l.out;
  }
  return n;
}

Mlp::Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  if (spec_.in == 0 || spec_.layers.empty()) throw ContractError("mlp needs an input size and at least one layer");
  std::size_t fan_in = spec_.in;
  for (const auto& l : spec_.layers) {
    if (l.out == 0) throw ContractError("mlp layer width must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<float> w(fan_in * l.out), b(l.out);
    for (auto& v : w) v = static_cast<float>(rng.uniform(-bound, bound));
    for (auto& v : b) v = static_cast<float>(rng.uniform(-bound, bound));
    weights_.emplace_back(Shape{fan_in, l.out}, std::move(w));
    biases_.emplace_back(Shape{l.out}, std::move(b));
    weights_.back().set_requires_grad(true);
    biases_.back().set_requires_grad(true);
    fan_in = l.out;
  }
}

BoundMlp Mlp::bind(Graph& g, bool trainable) {
  if (!trainable) return static_cast<const Mlp&>(*this).bind(g);
  BoundMlp b{this, {}, {}};
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    b.weights.push_back(g.param(weights_[i]));
    b.biases.push_back(g.param(biases_[i]));
  }
  return b;
}

BoundMlp Mlp::bind(Graph& g) const {
  BoundMlp b{this, {}, {}};
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    b.weights.push_back(g.borrow(weights_[i]));
    b.biases.push_back(g.borrow(biases_[i]));
  }
  return b;
}

Var Mlp::forward(Graph& g, const BoundMlp& bound, Var x, std::size_t depth) {
  const auto& layers = bound.mlp->spec_.layers;
  const std::size_t n = std::min(depth, layers.size());
  for (std::size_t i = 0; i < n; ++i) {
    x = dense_layer(g, x, bound.weights[i], bound.biases[i], layers[i].activation);
  }
  return x;
}

Tensor Mlp::infer(const Tensor& batch, std::size_t depth) const {
  Graph g;
  auto bound = bind(g);
  auto x = g.borrow(batch);
  return g.value(forward(g, bound, x, depth));
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back(&weights_[i]);
    out.push_back(&biases_[i]);
  }
  return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back(&weights_[i]);
    out.push_back(&biases_[i]);
  }
  return out;
}

std::vector<float> Mlp::flatten() const {
  std::vector<float> out;
  out.reserve(spec_.parameter_count());
  for (const Tensor* p : parameters()) out.insert(out.end(), p->data().begin(), p->data().end());
  return out;
}

void Mlp::load_flat(std::span<const float> values) {
  if (values.size() != spec_.parameter_count()) {
    throw LengthError("mlp expects " + std::to_string(spec_.parameter_count()) + " parameters, got " +
                      std::to_string(values.size()));
  }
  std::size_t off = 0;
  for (Tensor* p : parameters()) {
    Tensor loaded(p->shape(), std::vector<float>(values.begin() + off, values.begin() + off + p->size()));
    loaded.set_requires_grad(true);
    *p = std::move(loaded);
    off += p->size();
  }
}

}  // namespace bdl
