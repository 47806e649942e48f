#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bdl/graph.hpp"
#include "bdl/rng.hpp"
#include "bdl/tensor.hpp"

namespace bdl {

enum class Activation { kIdentity, kRelu, kLeakyRelu, kSigmoid, kTanh };

inline constexpr float kLeakySlope = 0.2f;

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

Var apply_activation(Graph& g, Var x, Activation act);

// activation(input . weights + bias); input is batch x in, weights in x out,
// bias has out elements.
Var dense_layer(Graph& g, Var input, Var weights, Var bias, Activation act);

struct LayerSpec {
  std::size_t out = 0;
  Activation activation = Activation::kIdentity;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct MlpSpec {
  std::size_t in = 0;
  std::vector<LayerSpec> layers;

  std::size_t out() const { return layers.empty() ? in : layers.back().out; }
  std::size_t parameter_count() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

class Mlp;

// An Mlp's parameters registered on one graph, so several forward passes in
// that graph share the same leaves.
struct BoundMlp {
  const Mlp* mlp = nullptr;
  std::vector<Var> weights;
  std::vector<Var> biases;
};

// Stack of dense layers with weights initialized uniformly in
// +-1/sqrt(fan_in).
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, Rng& rng);

  const MlpSpec& spec() const { return spec_; }
  std::size_t input_dim() const { return spec_.in; }
  std::size_t output_dim() const { return spec_.out(); }

  // trainable=true registers the parameters as gradient-receiving leaves;
  // otherwise they enter the graph as read-only constants.
  BoundMlp bind(Graph& g, bool trainable);
  BoundMlp bind(Graph& g) const;

  // Runs the first `depth` layers (all when depth is npos).
  static Var forward(Graph& g, const BoundMlp& bound, Var x, std::size_t depth = static_cast<std::size_t>(-1));

  // Graph-free convenience: batch x in -> batch x out.
  Tensor infer(const Tensor& batch, std::size_t depth = static_cast<std::size_t>(-1)) const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  std::vector<float> flatten() const;
  void load_flat(std::span<const float> values);

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.spec_ == b.spec_ && a.weights_ == b.weights_ && a.biases_ == b.biases_;
  }

 private:
  MlpSpec spec_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

}  // namespace bdl
