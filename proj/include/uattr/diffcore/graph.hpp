#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "uattr/diffcore/tensor.hpp"

namespace uattr::diff {

struct NodeId {
  std::uint32_t index = 0;
  auto operator<=>(const NodeId&) const = default;
};

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,
  Div,
  Affine,
  Relu,
  Sigmoid,
  Softmax,
  Log,
  Exp,
  Abs,
  Sum,
  Mean,
  Clamp,
};

const char* op_name(Op op);

class DiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public DiffError {
 public:
  using DiffError::DiffError;
};

class NonFiniteError : public DiffError {
 public:
  using DiffError::DiffError;
};

class UnknownLeafError : public DiffError {
 public:
  using DiffError::DiffError;
};

/// Lower bound applied to log arguments and division denominators.
inline constexpr double kLogFloor = 1e-12;

/// Append-only expression graph over dense tensors.
///
/// Nodes are added in topological order by construction. Shapes are not
/// fixed at build time; they are resolved from the bound leaves on every
/// forward pass, so one graph serves any batch size.
///
/// Broadcasting for the binary elementwise ops is one-sided: the right
/// operand may be a single value, a row `[k]`/`[1,k]` repeated over the rows
/// of a `[b,k]` left operand, or exactly the left operand's shape.
class Graph {
 public:
  struct Node {
    Op op = Op::Leaf;
    NodeId lhs{};
    NodeId rhs{};
    std::uint8_t arity = 0;
    double p0 = 0.0;
    double p1 = 0.0;
    std::string name;
    Tensor constant;
  };

  NodeId leaf(std::string name);
  NodeId constant(Tensor value, std::string name = {});

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  /// scale * a + shift, elementwise.
  NodeId affine(NodeId a, double scale, double shift);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  /// Softmax over the last axis (per row for matrices).
  NodeId softmax(NodeId a);
  NodeId log(NodeId a);
  NodeId exp(NodeId a);
  NodeId abs(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId clamp(NodeId a, double lo, double hi);

  /// Marks the node returned by forward(). Defaults to the last node added.
  void set_output(NodeId id);
  NodeId output() const;

  const Node& node(NodeId id) const { return nodes_.at(id.index); }
  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<NodeId>& leaves() const { return leaves_; }
  bool is_leaf(NodeId id) const;

  /// Human-readable description used in error messages.
  std::string describe(NodeId id) const;

 private:
  NodeId push(Node node);
  void check_id(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> leaves_;
  std::optional<NodeId> output_;
};

/// Leaf-to-tensor bindings for one evaluation.
///
/// Bindings do not own the tensors; every bound tensor must outlive the
/// forward/backward calls that use it.
class Bindings {
 public:
  void bind(NodeId leaf, const Tensor& value) { values_[leaf.index] = &value; }
  void bind(NodeId leaf, Tensor&&) = delete;

  const Tensor* find(NodeId leaf) const;

 private:
  std::unordered_map<std::uint32_t, const Tensor*> values_;
};

/// Forward pass results; caches every intermediate for backward().
class Evaluation {
 public:
  Evaluation(const Graph& graph, const Bindings& bindings);
  Evaluation(const Evaluation&) = delete;
  Evaluation& operator=(const Evaluation&) = delete;
  Evaluation(Evaluation&&) noexcept = default;
  Evaluation& operator=(Evaluation&&) noexcept = default;

  const Graph& graph() const { return *graph_; }
  const Tensor& value(NodeId id) const;
  const Tensor& output() const { return value(graph_->output()); }

  /// Reverse-mode gradients of the scalar output with respect to each leaf in `wrt`.
  std::vector<Tensor> backward(const std::vector<NodeId>& wrt) const;
  /// Same, starting from any evaluated scalar node instead of the output.
  std::vector<Tensor> backward(NodeId from, const std::vector<NodeId>& wrt) const;

  /// Forward-mode Jacobian-vector product of the output along `direction` at leaf `wrt`.
  Tensor jvp(NodeId wrt, const Tensor& direction) const;

 private:
  const Graph* graph_;
  std::vector<bool> needed_;
  std::vector<Tensor> owned_;
  std::vector<const Tensor*> values_;
};

Tensor forward(const Graph& graph, const Bindings& bindings);
Tensor gradient(const Graph& graph, const Bindings& bindings, NodeId wrt);
Tensor directional_derivative(const Graph& graph, const Bindings& bindings, NodeId wrt,
                              const Tensor& direction);

}  // namespace uattr::diff
