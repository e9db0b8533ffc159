#pragma once

#include <limits>
#include <memory>
#include <unordered_map>
#include <vector>

#include "moehealth/parameter.hpp"
#include "moehealth/types.hpp"

namespace moehealth {

using NodeId = std::int32_t;

class Tape;

/// One value in a recorded computation. Subclasses implement reverse-mode
/// gradient propagation by reading their own grad() and accumulating into the
/// grads of their input nodes.
class Node {
 public:
  explicit Node(Matrix value)
      : value_(std::move(value)), grad_(Matrix::Zero(value_.rows(), value_.cols())) {}
  virtual ~Node() = default;

  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  virtual const Matrix& value() const { return value_; }
  Matrix& grad() { return grad_; }

  virtual void backward(Tape&) {}

  /// Distance to the nearest gradient discontinuity of this op (e.g. a ReLU
  /// kink), infinity for smooth ops. Finite-difference checks use the tape
  /// minimum to reject instances sitting on a kink.
  virtual real_t boundary_margin() const { return std::numeric_limits<real_t>::infinity(); }

 protected:
  Node() = default;

  Matrix value_;
  Matrix grad_;
};

/// Reverse-mode computation tape. Holds one mini-batch worth of nodes; inputs
/// always precede outputs, so the reverse sweep of backward() is topological.
/// Parameter reuse maps to a single leaf node per parameter, which makes
/// gradient accumulation across uses automatic.
class Tape {
 public:
  NodeId push(std::unique_ptr<Node> node);

  Node& node(NodeId id) { return *nodes_[static_cast<std::size_t>(id)]; }
  const Matrix& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]->value(); }
  real_t scalar(NodeId id) const;

  std::size_t size() const { return nodes_.size(); }

  /// Leaf node bound to a parameter; repeated calls return the same node.
  /// Its backward() adds the accumulated grad into Parameter::gradient.
  NodeId leaf(Parameter& p);

  /// Propagates d(root)/d(node) into every node, then into parameter
  /// gradient slots. The root must be a scalar recorded on this tape.
  void backward(NodeId root);

  /// Minimum boundary_margin() over all recorded nodes.
  real_t min_boundary_margin() const;

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
  std::unordered_map<const Parameter*, NodeId> param_nodes_;
};

// -- Generic differentiable ops. Builders return the id of the pushed node. --

/// Non-differentiable data input.
NodeId constant(Tape& t, Matrix value);

/// W * x + b with a node input.
NodeId affine(Tape& t, NodeId weight, NodeId bias, NodeId x);
/// W * x + b with a raw data input (no gradient flows into x).
NodeId affine(Tape& t, NodeId weight, NodeId bias, const Vector& x);
/// W * x without a bias term.
NodeId matvec(Tape& t, NodeId weight, NodeId x);

NodeId relu(Tape& t, NodeId x);
NodeId sigmoid(Tape& t, NodeId x);
NodeId softmax(Tape& t, NodeId x);

/// Vertical concatenation of column vectors.
NodeId concat(Tape& t, const std::vector<NodeId>& parts);

NodeId add(Tape& t, NodeId a, NodeId b);
NodeId scale(Tape& t, NodeId x, real_t factor);

/// Sum of all entries (scalar output).
NodeId sum(Tape& t, NodeId x);

}  // namespace moehealth
