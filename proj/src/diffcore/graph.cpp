#include "uattr/diffcore/graph.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace uattr::diff {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Affine: return "affine";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softmax: return "softmax";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::Abs: return "abs";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Clamp: return "clamp";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Graph construction

NodeId Graph::push(Node node) {
  if (node.arity >= 1) check_id(node.lhs);
  if (node.arity >= 2) check_id(node.rhs);
  nodes_.push_back(std::move(node));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Graph::check_id(NodeId id) const {
  if (id.index >= nodes_.size()) throw DiffError("node id " + std::to_string(id.index) + " is not part of this graph");
}

NodeId Graph::leaf(std::string name) {
  Node n;
  n.op = Op::Leaf;
  n.name = std::move(name);
  auto id = push(std::move(n));
  leaves_.push_back(id);
  return id;
}

NodeId Graph::constant(Tensor value, std::string name) {
  if (!value.all_finite()) throw NonFiniteError("constant '" + name + "' holds non-finite values");
  Node n;
  n.op = Op::Constant;
  n.name = std::move(name);
  n.constant = std::move(value);
  return push(std::move(n));
}

namespace {

Graph::Node unary(Op op, NodeId a, double p0 = 0.0, double p1 = 0.0) {
  Graph::Node n;
  n.op = op;
  n.lhs = a;
  n.arity = 1;
  n.p0 = p0;
  n.p1 = p1;
  return n;
}

Graph::Node binary(Op op, NodeId a, NodeId b) {
  Graph::Node n;
  n.op = op;
  n.lhs = a;
  n.rhs = b;
  n.arity = 2;
  return n;
}

}  // namespace

NodeId Graph::matmul(NodeId a, NodeId b) { return push(binary(Op::MatMul, a, b)); }
NodeId Graph::add(NodeId a, NodeId b) { return push(binary(Op::Add, a, b)); }
NodeId Graph::sub(NodeId a, NodeId b) { return push(binary(Op::Sub, a, b)); }
NodeId Graph::mul(NodeId a, NodeId b) { return push(binary(Op::Mul, a, b)); }
NodeId Graph::div(NodeId a, NodeId b) { return push(binary(Op::Div, a, b)); }
NodeId Graph::affine(NodeId a, double scale, double shift) { return push(unary(Op::Affine, a, scale, shift)); }
NodeId Graph::relu(NodeId a) { return push(unary(Op::Relu, a)); }
NodeId Graph::sigmoid(NodeId a) { return push(unary(Op::Sigmoid, a)); }
NodeId Graph::softmax(NodeId a) { return push(unary(Op::Softmax, a)); }
NodeId Graph::log(NodeId a) { return push(unary(Op::Log, a)); }
NodeId Graph::exp(NodeId a) { return push(unary(Op::Exp, a)); }
NodeId Graph::abs(NodeId a) { return push(unary(Op::Abs, a)); }
NodeId Graph::sum(NodeId a) { return push(unary(Op::Sum, a)); }
NodeId Graph::mean(NodeId a) { return push(unary(Op::Mean, a)); }

NodeId Graph::clamp(NodeId a, double lo, double hi) {
  if (!(lo <= hi)) throw DiffError("clamp bounds out of order");
  return push(unary(Op::Clamp, a, lo, hi));
}

void Graph::set_output(NodeId id) {
  check_id(id);
  output_ = id;
}

NodeId Graph::output() const {
  if (output_) return *output_;
  if (nodes_.empty()) throw DiffError("empty graph has no output");
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

bool Graph::is_leaf(NodeId id) const { return id.index < nodes_.size() && nodes_[id.index].op == Op::Leaf; }

std::string Graph::describe(NodeId id) const {
  const auto& n = node(id);
  std::string s = "node #" + std::to_string(id.index) + " (" + op_name(n.op);
  if (!n.name.empty()) s += " '" + n.name + "'";
  return s + ")";
}

const Tensor* Bindings::find(NodeId leaf) const {
  auto it = values_.find(leaf.index);
  return it == values_.end() ? nullptr : it->second;
}

// ---------------------------------------------------------------------------
// Kernels

namespace {

enum class Broadcast { Same, Scalar, Row };

Broadcast broadcast_mode(const Graph& g, NodeId id, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.size() == 1) return Broadcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols() && b.rank() <= 2) {
    return a.rows() == 1 ? Broadcast::Same : Broadcast::Row;
  }
  throw ShapeError(g.describe(id) + ": cannot broadcast " + shape_string(b.shape()) + " onto " +
                   shape_string(a.shape()));
}

inline double bval(const Tensor& b, Broadcast mode, std::size_t i, std::size_t cols) {
  switch (mode) {
    case Broadcast::Same: return b[i];
    case Broadcast::Scalar: return b[0];
    case Broadcast::Row: return b[i % cols];
  }
  return 0.0;
}

// Reduces a gradient of the left operand's shape onto the right operand's shape.
Tensor reduce_to(const Tensor& grad, const Tensor& like, Broadcast mode) {
  Tensor out(like.shape());
  switch (mode) {
    case Broadcast::Same:
      std::copy(grad.data().begin(), grad.data().end(), out.data().begin());
      break;
    case Broadcast::Scalar: {
      double s = 0.0;
      for (double v : grad.data()) s += v;
      out[0] = s;
      break;
    }
    case Broadcast::Row: {
      const auto cols = grad.cols();
      for (std::size_t i = 0; i < grad.size(); ++i) out[i % cols] += grad[i];
      break;
    }
  }
  return out;
}

// C[m,n] (+)= A[m,k] * B[k,n]
void mm(const Tensor& a, const Tensor& b, Tensor& c) {
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto cd = c.data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = cd.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      const double* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[k,n] (+)= A[m,k]^T * G[m,n]
void mm_tn(const Tensor& a, const Tensor& g, Tensor& c) {
  const auto m = a.dim(0), k = a.dim(1), n = g.dim(1);
  auto cd = c.data();
  auto ad = a.data();
  auto gd = g.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = gd.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      double* crow = cd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

// C[m,k] (+)= G[m,n] * B[k,n]^T
void mm_nt(const Tensor& g, const Tensor& b, Tensor& c) {
  const auto m = g.dim(0), n = g.dim(1), k = b.dim(0);
  auto cd = c.data();
  auto gd = g.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = gd.data() + i * n;
    double* crow = cd.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = bd.data() + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      crow[p] += s;
    }
  }
}

inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void accumulate(Tensor& into, const Tensor& delta) {
  auto d = into.data();
  auto s = delta.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Forward

Evaluation::Evaluation(const Graph& graph, const Bindings& bindings) : graph_(&graph) {
  const auto count = graph.node_count();
  const auto out = graph.output();
  needed_.assign(count, false);
  needed_[out.index] = true;
  for (std::size_t i = out.index + 1; i-- > 0;) {
    if (!needed_[i]) continue;
    const auto& n = graph.node(NodeId{static_cast<std::uint32_t>(i)});
    if (n.arity >= 1) needed_[n.lhs.index] = true;
    if (n.arity >= 2) needed_[n.rhs.index] = true;
  }

  owned_.resize(count);
  values_.assign(count, nullptr);

  for (auto leaf : graph.leaves()) {
    if (!needed_[leaf.index]) values_[leaf.index] = bindings.find(leaf);
  }

  for (std::uint32_t i = 0; i <= out.index; ++i) {
    if (!needed_[i]) continue;
    const NodeId id{i};
    const auto& n = graph.node(id);
    if (n.op == Op::Leaf) {
      const Tensor* bound = bindings.find(id);
      if (!bound) throw UnknownLeafError(graph.describe(id) + " is not bound");
      if (!bound->all_finite()) throw NonFiniteError(graph.describe(id) + " bound to non-finite values");
      values_[i] = bound;
      continue;
    }
    if (n.op == Op::Constant) {
      values_[i] = &n.constant;
      continue;
    }

    const Tensor& a = *values_[n.lhs.index];
    Tensor out_value;
    switch (n.op) {
      case Op::MatMul: {
        const Tensor& b = *values_[n.rhs.index];
        if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
          throw ShapeError(graph.describe(id) + ": cannot multiply " + shape_string(a.shape()) + " by " +
                           shape_string(b.shape()));
        }
        out_value = Tensor({a.dim(0), b.dim(1)});
        mm(a, b, out_value);
        break;
      }
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: {
        const Tensor& b = *values_[n.rhs.index];
        const auto mode = broadcast_mode(graph, id, a, b);
        out_value = Tensor(a.shape());
        const auto cols = a.cols();
        for (std::size_t k = 0; k < a.size(); ++k) {
          const double bv = bval(b, mode, k, cols);
          double r = 0.0;
          switch (n.op) {
            case Op::Add: r = a[k] + bv; break;
            case Op::Sub: r = a[k] - bv; break;
            case Op::Mul: r = a[k] * bv; break;
            default: r = a[k] / std::max(bv, kLogFloor); break;
          }
          out_value[k] = r;
        }
        break;
      }
      case Op::Affine:
        out_value = Tensor(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) out_value[k] = n.p0 * a[k] + n.p1;
        break;
      case Op::Relu:
        out_value = Tensor(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) out_value[k] = a[k] > 0.0 ? a[k] : 0.0;
        break;
      case Op::Sigmoid:
        out_value = Tensor(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) out_value[k] = sigmoid_scalar(a[k]);
        break;
      case Op::Softmax: {
        out_value = Tensor(a.shape());
        const auto cols = a.cols();
        for (std::size_t r = 0; r < a.rows(); ++r) {
          const double* in = a.data().data() + r * cols;
          double* o = out_value.data().data() + r * cols;
          const double mx = *std::max_element(in, in + cols);
          double z = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            o[c] = std::exp(in[c] - mx);
            z += o[c];
          }
          for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
        }
        break;
      }
      case Op::Log:
        out_value = Tensor(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) out_value[k] = std::log(std::max(a[k], kLogFloor));
        break;
      case Op::Exp:
        out_value = Tensor(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) out_value[k] = std::exp(a[k]);
        break;
      case Op::Abs:
        out_value = Tensor(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) out_value[k] = std::fabs(a[k]);
        break;
      case Op::Sum:
      case Op::Mean: {
        double s = 0.0;
        for (double v : a.data()) s += v;
        if (n.op == Op::Mean) s /= static_cast<double>(a.size());
        out_value = Tensor::scalar(s);
        break;
      }
      case Op::Clamp:
        out_value = Tensor(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) out_value[k] = std::clamp(a[k], n.p0, n.p1);
        break;
      case Op::Leaf:
      case Op::Constant:
        break;
    }
    if (!out_value.all_finite()) throw NonFiniteError(graph.describe(id) + " produced a non-finite value");
    owned_[i] = std::move(out_value);
    values_[i] = &owned_[i];
  }
}

const Tensor& Evaluation::value(NodeId id) const {
  if (id.index >= values_.size() || !values_[id.index]) {
    throw DiffError(graph_->describe(id) + " was not evaluated");
  }
  return *values_[id.index];
}

// ---------------------------------------------------------------------------
// Reverse mode

std::vector<Tensor> Evaluation::backward(const std::vector<NodeId>& wrt) const {
  return backward(graph_->output(), wrt);
}

std::vector<Tensor> Evaluation::backward(NodeId out, const std::vector<NodeId>& wrt) const {
  const Graph& g = *graph_;
  const Tensor& out_value = value(out);
  if (out_value.size() != 1) {
    throw DiffError("gradient requires a scalar output; " + g.describe(out) + " has shape " +
                    shape_string(out_value.shape()));
  }
  const auto count = g.node_count();
  std::vector<bool> depends(count, false);
  for (auto w : wrt) {
    if (!g.is_leaf(w)) throw UnknownLeafError("node #" + std::to_string(w.index) + " is not a registered leaf");
    depends[w.index] = true;
  }
  for (std::uint32_t i = 0; i <= out.index; ++i) {
    const auto& n = g.node(NodeId{i});
    if (n.arity >= 1 && depends[n.lhs.index]) depends[i] = true;
    if (n.arity >= 2 && depends[n.rhs.index]) depends[i] = true;
  }

  std::vector<Tensor> adj(count);
  std::vector<bool> has(count, false);
  auto push_adj = [&](NodeId id, Tensor&& delta) {
    if (!depends[id.index]) return;
    if (!has[id.index]) {
      adj[id.index] = std::move(delta);
      has[id.index] = true;
    } else {
      accumulate(adj[id.index], delta);
    }
  };

  if (depends[out.index]) {
    adj[out.index] = Tensor(out_value.shape(), 1.0);
    has[out.index] = true;
  }

  for (std::uint32_t i = out.index + 1; i-- > 0;) {
    if (!has[i] || !needed_[i]) continue;
    const NodeId id{i};
    const auto& n = g.node(id);
    if (n.arity == 0) continue;
    const Tensor& gout = adj[i];
    const Tensor& a = value(n.lhs);
    const Tensor& y = value(id);
    const bool da = depends[n.lhs.index];
    const bool db = n.arity == 2 && depends[n.rhs.index];

    switch (n.op) {
      case Op::MatMul: {
        const Tensor& b = value(n.rhs);
        if (da) {
          Tensor ga(a.shape());
          mm_nt(gout, b, ga);
          push_adj(n.lhs, std::move(ga));
        }
        if (db) {
          Tensor gb(b.shape());
          mm_tn(a, gout, gb);
          push_adj(n.rhs, std::move(gb));
        }
        break;
      }
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: {
        const Tensor& b = value(n.rhs);
        const auto mode = broadcast_mode(g, id, a, b);
        const auto cols = a.cols();
        if (da) {
          Tensor ga(a.shape());
          for (std::size_t k = 0; k < a.size(); ++k) {
            const double bv = bval(b, mode, k, cols);
            switch (n.op) {
              case Op::Add:
              case Op::Sub: ga[k] = gout[k]; break;
              case Op::Mul: ga[k] = gout[k] * bv; break;
              default: ga[k] = gout[k] / std::max(bv, kLogFloor); break;
            }
          }
          push_adj(n.lhs, std::move(ga));
        }
        if (db) {
          Tensor gfull(a.shape());
          for (std::size_t k = 0; k < a.size(); ++k) {
            const double bv = bval(b, mode, k, cols);
            switch (n.op) {
              case Op::Add: gfull[k] = gout[k]; break;
              case Op::Sub: gfull[k] = -gout[k]; break;
              case Op::Mul: gfull[k] = gout[k] * a[k]; break;
              default: gfull[k] = bv > kLogFloor ? -gout[k] * a[k] / (bv * bv) : 0.0; break;
            }
          }
          push_adj(n.rhs, reduce_to(gfull, b, mode));
        }
        break;
      }
      case Op::Affine: {
        Tensor ga(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) ga[k] = n.p0 * gout[k];
        push_adj(n.lhs, std::move(ga));
        break;
      }
      case Op::Relu: {
        Tensor ga(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) ga[k] = a[k] > 0.0 ? gout[k] : 0.0;
        push_adj(n.lhs, std::move(ga));
        break;
      }
      case Op::Sigmoid: {
        Tensor ga(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) ga[k] = gout[k] * y[k] * (1.0 - y[k]);
        push_adj(n.lhs, std::move(ga));
        break;
      }
      case Op::Softmax: {
        Tensor ga(a.shape());
        const auto cols = a.cols();
        for (std::size_t r = 0; r < a.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += gout[r * cols + c] * y[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            const auto k = r * cols + c;
            ga[k] = y[k] * (gout[k] - dot);
          }
        }
        push_adj(n.lhs, std::move(ga));
        break;
      }
      case Op::Log: {
        Tensor ga(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) ga[k] = a[k] >= kLogFloor ? gout[k] / a[k] : 0.0;
        push_adj(n.lhs, std::move(ga));
        break;
      }
      case Op::Exp: {
        Tensor ga(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) ga[k] = gout[k] * y[k];
        push_adj(n.lhs, std::move(ga));
        break;
      }
      case Op::Abs: {
        Tensor ga(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) {
          ga[k] = a[k] > 0.0 ? gout[k] : (a[k] < 0.0 ? -gout[k] : 0.0);
        }
        push_adj(n.lhs, std::move(ga));
        break;
      }
      case Op::Sum:
      case Op::Mean: {
        const double scale = n.op == Op::Mean ? 1.0 / static_cast<double>(a.size()) : 1.0;
        push_adj(n.lhs, Tensor(a.shape(), gout[0] * scale));
        break;
      }
      case Op::Clamp: {
        Tensor ga(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) ga[k] = (a[k] > n.p0 && a[k] < n.p1) ? gout[k] : 0.0;
        push_adj(n.lhs, std::move(ga));
        break;
      }
      case Op::Leaf:
      case Op::Constant:
        break;
    }
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (auto w : wrt) {
    const Tensor* leaf_value = values_[w.index];
    if (!leaf_value) {
      throw UnknownLeafError(g.describe(w) + " is not bound");
    }
    result.push_back(has[w.index] ? adj[w.index] : Tensor(leaf_value->shape()));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Forward mode

Tensor Evaluation::jvp(NodeId wrt, const Tensor& direction) const {
  const Graph& g = *graph_;
  if (!g.is_leaf(wrt)) throw UnknownLeafError("node #" + std::to_string(wrt.index) + " is not a registered leaf");
  const auto out = g.output();
  const Tensor* leaf_value = wrt.index < values_.size() ? values_[wrt.index] : nullptr;
  if (!leaf_value) return Tensor(value(out).shape());
  if (direction.size() != leaf_value->size()) {
    throw ShapeError("direction of shape " + shape_string(direction.shape()) + " does not match " + g.describe(wrt) +
                     " of shape " + shape_string(leaf_value->shape()));
  }

  const auto count = g.node_count();
  std::vector<Tensor> tan(count);
  std::vector<bool> has(count, false);
  tan[wrt.index] = direction.reshaped(leaf_value->shape());
  has[wrt.index] = true;

  for (std::uint32_t i = wrt.index + 1; i <= out.index; ++i) {
    if (!needed_[i]) continue;
    const NodeId id{i};
    const auto& n = g.node(id);
    if (n.arity == 0) continue;
    const bool ta = has[n.lhs.index];
    const bool tb = n.arity == 2 && has[n.rhs.index];
    if (!ta && !tb) continue;
    const Tensor& a = value(n.lhs);
    const Tensor& y = value(id);
    Tensor t(y.shape());

    switch (n.op) {
      case Op::MatMul: {
        const Tensor& b = value(n.rhs);
        if (ta) mm(tan[n.lhs.index], b, t);
        if (tb) mm(a, tan[n.rhs.index], t);
        break;
      }
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: {
        const Tensor& b = value(n.rhs);
        const auto mode = broadcast_mode(g, id, a, b);
        const auto cols = a.cols();
        for (std::size_t k = 0; k < a.size(); ++k) {
          const double bv = bval(b, mode, k, cols);
          const double dav = ta ? tan[n.lhs.index][k] : 0.0;
          const double dbv = tb ? bval(tan[n.rhs.index], mode, k, cols) : 0.0;
          switch (n.op) {
            case Op::Add: t[k] = dav + dbv; break;
            case Op::Sub: t[k] = dav - dbv; break;
            case Op::Mul: t[k] = dav * bv + a[k] * dbv; break;
            default: {
              const double bc = std::max(bv, kLogFloor);
              t[k] = dav / bc - (bv > kLogFloor ? a[k] * dbv / (bc * bc) : 0.0);
              break;
            }
          }
        }
        break;
      }
      case Op::Affine: {
        const Tensor& da = tan[n.lhs.index];
        for (std::size_t k = 0; k < a.size(); ++k) t[k] = n.p0 * da[k];
        break;
      }
      case Op::Relu: {
        const Tensor& da = tan[n.lhs.index];
        for (std::size_t k = 0; k < a.size(); ++k) t[k] = a[k] > 0.0 ? da[k] : 0.0;
        break;
      }
      case Op::Sigmoid: {
        const Tensor& da = tan[n.lhs.index];
        for (std::size_t k = 0; k < a.size(); ++k) t[k] = da[k] * y[k] * (1.0 - y[k]);
        break;
      }
      case Op::Softmax: {
        const Tensor& da = tan[n.lhs.index];
        const auto cols = a.cols();
        for (std::size_t r = 0; r < a.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += da[r * cols + c] * y[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            const auto k = r * cols + c;
            t[k] = y[k] * (da[k] - dot);
          }
        }
        break;
      }
      case Op::Log: {
        const Tensor& da = tan[n.lhs.index];
        for (std::size_t k = 0; k < a.size(); ++k) t[k] = a[k] >= kLogFloor ? da[k] / a[k] : 0.0;
        break;
      }
      case Op::Exp: {
        const Tensor& da = tan[n.lhs.index];
        for (std::size_t k = 0; k < a.size(); ++k) t[k] = da[k] * y[k];
        break;
      }
      case Op::Abs: {
        const Tensor& da = tan[n.lhs.index];
        for (std::size_t k = 0; k < a.size(); ++k) t[k] = a[k] > 0.0 ? da[k] : (a[k] < 0.0 ? -da[k] : 0.0);
        break;
      }
      case Op::Sum:
      case Op::Mean: {
        double s = 0.0;
        for (double v : tan[n.lhs.index].data()) s += v;
        if (n.op == Op::Mean) s /= static_cast<double>(a.size());
        t[0] = s;
        break;
      }
      case Op::Clamp: {
        const Tensor& da = tan[n.lhs.index];
        for (std::size_t k = 0; k < a.size(); ++k) t[k] = (a[k] > n.p0 && a[k] < n.p1) ? da[k] : 0.0;
        break;
      }
      case Op::Leaf:
      case Op::Constant:
        break;
    }
    tan[i] = std::move(t);
    has[i] = true;
  }
  return has[out.index] ? tan[out.index] : Tensor(value(out).shape());
}

// ---------------------------------------------------------------------------

Tensor forward(const Graph& graph, const Bindings& bindings) { return Evaluation(graph, bindings).output(); }

Tensor gradient(const Graph& graph, const Bindings& bindings, NodeId wrt) {
  if (!graph.is_leaf(wrt)) throw UnknownLeafError("node #" + std::to_string(wrt.index) + " is not a registered leaf");
  Evaluation eval(graph, bindings);
  return std::move(eval.backward({wrt}).front());
}

Tensor directional_derivative(const Graph& graph, const Bindings& bindings, NodeId wrt, const Tensor& direction) {
  Evaluation eval(graph, bindings);
  return eval.jvp(wrt, direction);
}

}  // namespace uattr::diff
