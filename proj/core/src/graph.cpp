#include "bdl/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>

#include "bdl/errors.hpp"

namespace bdl {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::atomic<std::uint64_t> next_graph_id{1};

float sigmoidf(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

bool is_scalar_like(const Tensor& t) { return t.size() == 1; }

}  // namespace

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kParam: return "param";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kLog: return "log";
    case OpKind::kNeg: return "neg";
    case OpKind::kScale: return "scale";
    case OpKind::kShift: return "shift";
    case OpKind::kClamp: return "clamp";
    case OpKind::kAddRowBias: return "add_row_bias";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSoftmaxXent: return "softmax_cross_entropy";
  }
  return "?";
}

Graph::Graph() : id_(next_graph_id.fetch_add(1)) {}

const Graph::Node& Graph::node(Var v) const {
  if (v.graph != id_) throw ContractError("variable belongs to a different graph");
  if (v.id >= nodes_.size()) throw ContractError("variable id out of range");
  return nodes_[v.id];
}

const Tensor& Graph::val(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.borrowed ? *n.borrowed : (n.param ? *n.param : n.owned);
}

const Tensor& Graph::value(Var v) const {
  node(v);
  return val(v.id);
}

Graph::Node Graph::make_node(OpKind op, std::uint32_t a, std::uint32_t b) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  return n;
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{id_, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::param(Tensor& t) {
  if (!t.requires_grad()) throw ContractError("param() needs a tensor with requires_grad set");
  Node n = make_node(OpKind::kParam);
  n.param = &t;
  n.needs_grad = true;
  return push(std::move(n));
}

Var Graph::constant(Tensor t) {
  Node n = make_node(OpKind::kConstant);
  n.owned = std::move(t);
  return push(std::move(n));
}

Var Graph::borrow(const Tensor& t) {
  Node n = make_node(OpKind::kConstant);
  n.borrowed = &t;
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  const Tensor& ta = val(a.id);
  const Tensor& tb = val(b.id);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_str(ta.shape()) + " x " + shape_str(tb.shape()));
  }
  const auto m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  std::vector<float> out(m * n);
  MapMat(out.data(), m, n).noalias() = ConstMapMat(ta.data().data(), m, k) * ConstMapMat(tb.data().data(), k, n);
  Node r = make_node(OpKind::kMatMul, a.id, b.id);
  r.needs_grad = na.needs_grad || nb.needs_grad;
  r.owned = Tensor(Tensor::Unchecked{}, {m, n}, std::move(out));
  return push(std::move(r));
}

Var Graph::binary_elementwise(OpKind op, Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  const Tensor& ta = val(a.id);
  const Tensor& tb = val(b.id);
  const bool same = ta.shape() == tb.shape();
  if (!same && !is_scalar_like(ta) && !is_scalar_like(tb)) {
    throw DimensionError(std::string(op_name(op)) + " shape mismatch: " + shape_str(ta.shape()) + " vs " +
                         shape_str(tb.shape()));
  }
  const Tensor& big = (same || !is_scalar_like(ta)) ? ta : tb;
  const std::size_t n = big.size();
  const std::size_t sa = ta.size() == n ? 1 : 0;
  const std::size_t sb = tb.size() == n ? 1 : 0;
  std::vector<float> out(n);
  const float* pa = ta.data().data();
  const float* pb = tb.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const float x = pa[i * sa];
    const float y = pb[i * sb];
    switch (op) {
      case OpKind::kAdd: out[i] = x + y; break;
      case OpKind::kSub: out[i] = x - y; break;
      case OpKind::kMul: out[i] = x * y; break;
      default: throw ContractError("not a binary op");
    }
  }
  Node r = make_node(op, a.id, b.id);
  r.needs_grad = na.needs_grad || nb.needs_grad;
  r.owned = Tensor(Tensor::Unchecked{}, big.shape(), std::move(out));
  return push(std::move(r));
}

Var Graph::add(Var a, Var b) { return binary_elementwise(OpKind::kAdd, a, b); }
Var Graph::sub(Var a, Var b) { return binary_elementwise(OpKind::kSub, a, b); }
Var Graph::mul(Var a, Var b) { return binary_elementwise(OpKind::kMul, a, b); }

Var Graph::unary(OpKind op, Var x, float p0, float p1) {
  const Node& nx = node(x);
  const Tensor& tx = val(x.id);
  const float* in = tx.data().data();
  const std::size_t n = tx.size();
  std::vector<float> out(n);
  switch (op) {
    case OpKind::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = sigmoidf(in[i]);
      break;
    case OpKind::kTanh:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
      break;
    case OpKind::kRelu:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
      break;
    case OpKind::kLeakyRelu:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : p0 * in[i];
      break;
    case OpKind::kLog:
      for (std::size_t i = 0; i < n; ++i) {
        const float c = std::max(in[i], kLogClamp);
        if (!(c > 0.0f)) throw DomainError("log of non-positive value after clamping");
        out[i] = std::log(c);
      }
      break;
    case OpKind::kNeg:
      for (std::size_t i = 0; i < n; ++i) out[i] = -in[i];
      break;
    case OpKind::kScale:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] * p0;
      break;
    case OpKind::kShift:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] + p0;
      break;
    case OpKind::kClamp:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::clamp(in[i], p0, p1);
      break;
    default:
      throw ContractError("not a unary op");
  }
  Node r = make_node(op, x.id);
  r.p0 = p0;
  r.p1 = p1;
  r.needs_grad = nx.needs_grad;
  r.owned = Tensor(Tensor::Unchecked{}, tx.shape(), std::move(out));
  return push(std::move(r));
}

Var Graph::sigmoid(Var x) { return unary(OpKind::kSigmoid, x); }
Var Graph::tanh(Var x) { return unary(OpKind::kTanh, x); }
Var Graph::relu(Var x) { return unary(OpKind::kRelu, x); }
Var Graph::leaky_relu(Var x, float slope) { return unary(OpKind::kLeakyRelu, x, slope); }
Var Graph::log(Var x) { return unary(OpKind::kLog, x); }
Var Graph::neg(Var x) { return unary(OpKind::kNeg, x); }
Var Graph::scale(Var x, float factor) { return unary(OpKind::kScale, x, factor); }
Var Graph::shift(Var x, float offset) { return unary(OpKind::kShift, x, offset); }

Var Graph::clamp(Var x, float lo, float hi) {
  if (!(lo <= hi)) throw ContractError("clamp needs lo <= hi");
  return unary(OpKind::kClamp, x, lo, hi);
}

Var Graph::add_row_bias(Var x, Var bias) {
  const Node& nx = node(x);
  const Node& nb = node(bias);
  const Tensor& tx = val(x.id);
  const Tensor& tb = val(bias.id);
  if (tx.rank() != 2 || tb.size() != tx.dim(1)) {
    throw DimensionError("bias of shape " + shape_str(tb.shape()) + " does not fit rows of " + shape_str(tx.shape()));
  }
  const auto rows = tx.dim(0), cols = tx.dim(1);
  std::vector<float> out(tx.data().begin(), tx.data().end());
  const float* pb = tb.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    float* row = out.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += pb[c];
  }
  Node r = make_node(OpKind::kAddRowBias, x.id, bias.id);
  r.needs_grad = nx.needs_grad || nb.needs_grad;
  r.owned = Tensor(Tensor::Unchecked{}, tx.shape(), std::move(out));
  return push(std::move(r));
}

Var Graph::sum(Var x) {
  const Node& nx = node(x);
  double acc = 0.0;
  for (float v : val(x.id).data()) acc += v;
  Node r = make_node(OpKind::kSum, x.id);
  r.needs_grad = nx.needs_grad;
  r.owned = Tensor(Tensor::Unchecked{}, {}, {static_cast<float>(acc)});
  return push(std::move(r));
}

Var Graph::mean(Var x) {
  const Node& nx = node(x);
  const Tensor& tx = val(x.id);
  double acc = 0.0;
  for (float v : tx.data()) acc += v;
  Node r = make_node(OpKind::kMean, x.id);
  r.needs_grad = nx.needs_grad;
  r.owned = Tensor(Tensor::Unchecked{}, {}, {static_cast<float>(acc / static_cast<double>(tx.size()))});
  return push(std::move(r));
}

Var Graph::softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Node& nl = node(logits);
  const Tensor& tl = val(logits.id);
  if (tl.rank() != 2 || tl.dim(0) != labels.size()) {
    throw DimensionError("softmax_cross_entropy: logits " + shape_str(tl.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const auto rows = tl.dim(0), cols = tl.dim(1);
  std::vector<float> probs(rows * cols);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= cols) throw RangeError("label out of range");
    const float* z = tl.data().data() + r * cols;
    const float zmax = *std::max_element(z, z + cols);
    double denom = 0.0;
    for (std::size_t c = 0; c < cols; ++c) denom += std::exp(static_cast<double>(z[c] - zmax));
    for (std::size_t c = 0; c < cols; ++c) {
      probs[r * cols + c] = static_cast<float>(std::exp(static_cast<double>(z[c] - zmax)) / denom);
    }
    loss += std::log(denom) - static_cast<double>(z[label] - zmax);
  }
  Node r = make_node(OpKind::kSoftmaxXent, logits.id);
  r.needs_grad = nl.needs_grad;
  r.labels.assign(labels.begin(), labels.end());
  r.saved = std::move(probs);
  r.owned = Tensor(Tensor::Unchecked{}, {}, {static_cast<float>(loss / static_cast<double>(rows))});
  return push(std::move(r));
}

std::vector<float>& Graph::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(val(id).size(), 0.0f);
  return n.grad;
}

std::vector<float> Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return std::vector<float>(val(v.id).size(), 0.0f);
  return n.grad;
}

void Graph::backward(Var loss) {
  const Node& nl = node(loss);
  if (val(loss.id).size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(val(loss.id).shape()));
  }
  (void)nl;
  for (auto& n : nodes_) n.grad.clear();
  backward_order_.clear();
  grad_buffer(loss.id)[0] = 1.0f;

  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    backward_order_.push_back(id);
    if (!n.needs_grad) continue;
    if (n.op == OpKind::kParam) {
      auto& dst = n.param->has_grad() ? n.param->grad() : n.param->zero_grad();
      if (!n.grad.empty()) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
      }
      continue;
    }
    if (n.grad.empty()) continue;
    backprop_node(id);
  }
  // Trainable leaves created after the loss are unreachable; they still get a
  // zero gradient.
  for (std::uint32_t id = loss.id + 1; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (n.op == OpKind::kParam && !n.param->has_grad()) n.param->zero_grad();
  }
}

void Graph::backprop_node(std::uint32_t id) {
  Node& n = nodes_[id];
  const std::vector<float>& g = n.grad;
  const Tensor& out = n.owned;
  const std::size_t len = g.size();

  auto want = [&](std::uint32_t in) { return nodes_[in].needs_grad; };

  switch (n.op) {
    case OpKind::kMatMul: {
      const Tensor& ta = val(n.a);
      const Tensor& tb = val(n.b);
      const auto m = ta.dim(0), k = ta.dim(1), c = tb.dim(1);
      ConstMapMat dc(g.data(), m, c);
      if (want(n.a)) {
        auto& ga = grad_buffer(n.a);
        MapMat(ga.data(), m, k).noalias() += dc * ConstMapMat(tb.data().data(), k, c).transpose();
      }
      if (want(n.b)) {
        auto& gb = grad_buffer(n.b);
        MapMat(gb.data(), k, c).noalias() += ConstMapMat(ta.data().data(), m, k).transpose() * dc;
      }
      break;
    }
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      const Tensor& ta = val(n.a);
      const Tensor& tb = val(n.b);
      const float sign_b = n.op == OpKind::kSub ? -1.0f : 1.0f;
      for (int side = 0; side < 2; ++side) {
        const std::uint32_t in = side == 0 ? n.a : n.b;
        if (!want(in)) continue;
        const Tensor& self = side == 0 ? ta : tb;
        const Tensor& other = side == 0 ? tb : ta;
        const std::size_t so = other.size() == len ? 1 : 0;
        const float* po = other.data().data();
        // Scalar operands accumulate the reduced gradient in double.
        if (self.size() != len) {
          double acc = 0.0;
          for (std::size_t i = 0; i < len; ++i) {
            const float local = n.op == OpKind::kMul ? po[i * so] : (side == 0 ? 1.0f : sign_b);
            acc += static_cast<double>(g[i]) * local;
          }
          grad_buffer(in)[0] += static_cast<float>(acc);
        } else {
          auto& gi = grad_buffer(in);
          for (std::size_t i = 0; i < len; ++i) {
            const float local = n.op == OpKind::kMul ? po[i * so] : (side == 0 ? 1.0f : sign_b);
            gi[i] += g[i] * local;
          }
        }
      }
      break;
    }
    case OpKind::kSigmoid: {
      auto& gi = grad_buffer(n.a);
      const float* y = out.data().data();
      for (std::size_t i = 0; i < len; ++i) gi[i] += g[i] * y[i] * (1.0f - y[i]);
      break;
    }
    case OpKind::kTanh: {
      auto& gi = grad_buffer(n.a);
      const float* y = out.data().data();
      for (std::size_t i = 0; i < len; ++i) gi[i] += g[i] * (1.0f - y[i] * y[i]);
      break;
    }
    case OpKind::kRelu: {
      auto& gi = grad_buffer(n.a);
      const float* x = val(n.a).data().data();
      for (std::size_t i = 0; i < len; ++i) gi[i] += x[i] > 0.0f ? g[i] : 0.0f;
      break;
    }
    case OpKind::kLeakyRelu: {
      auto& gi = grad_buffer(n.a);
      const float* x = val(n.a).data().data();
      for (std::size_t i = 0; i < len; ++i) gi[i] += x[i] > 0.0f ? g[i] : n.p0 * g[i];
      break;
    }
    case OpKind::kLog: {
      auto& gi = grad_buffer(n.a);
      const float* x = val(n.a).data().data();
      for (std::size_t i = 0; i < len; ++i) gi[i] += x[i] >= kLogClamp ? g[i] / x[i] : 0.0f;
      break;
    }
    case OpKind::kNeg: {
      auto& gi = grad_buffer(n.a);
      for (std::size_t i = 0; i < len; ++i) gi[i] -= g[i];
      break;
    }
    case OpKind::kScale: {
      auto& gi = grad_buffer(n.a);
      for (std::size_t i = 0; i < len; ++i) gi[i] += g[i] * n.p0;
      break;
    }
    case OpKind::kShift: {
      auto& gi = grad_buffer(n.a);
      for (std::size_t i = 0; i < len; ++i) gi[i] += g[i];
      break;
    }
    case OpKind::kClamp: {
      auto& gi = grad_buffer(n.a);
      const float* x = val(n.a).data().data();
      for (std::size_t i = 0; i < len; ++i) gi[i] += (x[i] >= n.p0 && x[i] <= n.p1) ? g[i] : 0.0f;
      break;
    }
    case OpKind::kAddRowBias: {
      const Tensor& tx = val(n.a);
      const auto rows = tx.dim(0), cols = tx.dim(1);
      if (want(n.a)) {
        auto& gx = grad_buffer(n.a);
        for (std::size_t i = 0; i < len; ++i) gx[i] += g[i];
      }
      if (want(n.b)) {
        auto& gb = grad_buffer(n.b);
        std::vector<double> acc(cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
          const float* row = g.data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) acc[c] += row[c];
        }
        for (std::size_t c = 0; c < cols; ++c) gb[c] += static_cast<float>(acc[c]);
      }
      break;
    }
    case OpKind::kSum: {
      auto& gi = grad_buffer(n.a);
      for (auto& v : gi) v += g[0];
      break;
    }
    case OpKind::kMean: {
      auto& gi = grad_buffer(n.a);
      const float s = static_cast<float>(static_cast<double>(g[0]) / static_cast<double>(gi.size()));
      for (auto& v : gi) v += s;
      break;
    }
    case OpKind::kSoftmaxXent: {
      auto& gi = grad_buffer(n.a);
      const auto rows = n.labels.size();
      const auto cols = gi.size() / rows;
      const float s = static_cast<float>(static_cast<double>(g[0]) / static_cast<double>(rows));
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const float onehot = static_cast<int>(c) == n.labels[r] ? 1.0f : 0.0f;
          gi[r * cols + c] += s * (n.saved[r * cols + c] - onehot);
        }
      }
      break;
    }
    case OpKind::kParam:
    case OpKind::kConstant:
      break;
  }
}

}  // namespace bdl
