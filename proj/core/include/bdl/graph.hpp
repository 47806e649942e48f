#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bdl/tensor.hpp"

namespace bdl {

// Lower clamp applied to every log() input.
inline constexpr float kLogClamp = 1e-7f;

// Handle to a node of one particular Graph.
struct Var {
  std::uint64_t graph = 0;
  std::uint32_t id = 0;
};

enum class OpKind : std::uint8_t {
  kParam,
  kConstant,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kSigmoid,
  kTanh,
  kRelu,
  kLeakyRelu,
  kLog,
  kNeg,
  kScale,
  kShift,
  kClamp,
  kAddRowBias,
  kSum,
  kMean,
  kSoftmaxXent,
};

const char* op_name(OpKind op);

// Reverse-mode tape. Nodes are appended in creation order and every node only
// refers to earlier ones, so the tape is acyclic and backward() is a single
// reverse sweep. A Graph is single-owner: it can be moved, not copied.
//
// Borrowed tensors (param(), borrow()) must outlive the graph.
class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  std::uint64_t id() const { return id_; }
  std::size_t size() const { return nodes_.size(); }

  // Trainable leaf; backward() accumulates into t.grad(). t must have
  // requires_grad set.
  Var param(Tensor& t);
  // Non-trainable leaf holding its own copy.
  Var constant(Tensor t);
  // Non-trainable leaf reading t in place.
  Var borrow(const Tensor& t);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var sigmoid(Var x);
  Var tanh(Var x);
  Var relu(Var x);
  Var leaky_relu(Var x, float slope);
  // Natural log with inputs clamped to [kLogClamp, inf).
  Var log(Var x);
  Var neg(Var x);
  Var scale(Var x, float factor);
  Var shift(Var x, float offset);
  // Gradient passes where lo <= x <= hi, zero elsewhere.
  Var clamp(Var x, float lo, float hi);
  // x: batch x n, bias: n (any shape of n elements); adds bias to every row.
  Var add_row_bias(Var x, Var bias);
  Var sum(Var x);
  Var mean(Var x);
  // Mean cross-entropy of row-wise softmax(logits) against integer labels.
  Var softmax_cross_entropy(Var logits, std::span<const int> labels);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() loss w.r.t. v (zeros if v did not
  // require a gradient).
  std::vector<float> grad(Var v) const;

  // Propagates d(loss)/d(node) to every node; trainable leaves receive the
  // result in their tensor's grad buffer (zero-filled if unreachable).
  void backward(Var loss);

  // Node ids in the order the last backward() visited them.
  const std::vector<std::uint32_t>& last_backward_order() const { return backward_order_; }

 private:
  struct Node {
    OpKind op = OpKind::kConstant;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    float p0 = 0.0f;
    float p1 = 0.0f;
    bool needs_grad = false;
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor* param = nullptr;
    std::vector<int> labels;
    std::vector<float> saved;
    std::vector<float> grad;
  };

  const Node& node(Var v) const;
  const Tensor& val(std::uint32_t id) const;
  static Node make_node(OpKind op, std::uint32_t a = 0, std::uint32_t b = 0);
  Var push(Node n);
  Var unary(OpKind op, Var x, float p0 = 0.0f, float p1 = 0.0f);
  Var binary_elementwise(OpKind op, Var a, Var b);
  void backprop_node(std::uint32_t id);
  std::vector<float>& grad_buffer(std::uint32_t id);

  std::uint64_t id_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> backward_order_;
};

}  // namespace bdl
