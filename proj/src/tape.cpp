#include "moehealth/tape.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "moehealth/errors.hpp"
#include "moehealth/math.hpp"

namespace moehealth {

namespace {

class ParamNode final : public Node {
 public:
  explicit ParamNode(Parameter& p) : param_(&p) {
    grad_ = Matrix::Zero(p.rows(), p.cols());
  }

  const Matrix& value() const override { return param_->values; }

  void backward(Tape&) override { param_->gradient += grad_; }

 private:
  Parameter* param_;
};

class ConstNode final : public Node {
 public:
  explicit ConstNode(Matrix v) : Node(std::move(v)) {}
};

class AffineNode final : public Node {
 public:
  AffineNode(Tape& t, NodeId weight, NodeId bias, NodeId x)
      : weight_(weight), bias_(bias), x_(x) {
    const Matrix& w = t.value(weight);
    const Matrix& b = t.value(bias);
    const Matrix& in = t.value(x);
    check_shapes(w, b, in);
    value_ = b;
    value_.noalias() += w * in;
    grad_ = Matrix::Zero(value_.rows(), value_.cols());
  }

  void backward(Tape& t) override {
    const Matrix& w = t.value(weight_);
    const Matrix& in = t.value(x_);
    t.node(weight_).grad().noalias() += grad_ * in.transpose();
    t.node(bias_).grad() += grad_;
    t.node(x_).grad().noalias() += w.transpose() * grad_;
  }

  static void check_shapes(const Matrix& w, const Matrix& b, const Matrix& in) {
    if (w.cols() != in.rows() || in.cols() != 1 || w.rows() != b.rows() || b.cols() != 1) {
      throw ShapeError("affine: W is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                       ", b is " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) +
                       ", x is " + std::to_string(in.rows()) + "x" + std::to_string(in.cols()));
    }
  }

 private:
  NodeId weight_, bias_, x_;
};

// Bias-free matrix-vector product W * x.
class MatVecNode final : public Node {
 public:
  MatVecNode(Tape& t, NodeId weight, NodeId x) : weight_(weight), x_(x) {
    const Matrix& w = t.value(weight);
    const Matrix& in = t.value(x);
    if (w.cols() != in.rows() || in.cols() != 1) {
      throw ShapeError("matvec: W is " + std::to_string(w.rows()) + "x" +
                       std::to_string(w.cols()) + ", x is " + std::to_string(in.rows()) + "x" +
                       std::to_string(in.cols()));
    }
    value_.noalias() = w * in;
    grad_ = Matrix::Zero(value_.rows(), value_.cols());
  }

  void backward(Tape& t) override {
    const Matrix& w = t.value(weight_);
    const Matrix& in = t.value(x_);
    t.node(weight_).grad().noalias() += grad_ * in.transpose();
    t.node(x_).grad().noalias() += w.transpose() * grad_;
  }

 private:
  NodeId weight_, x_;
};

// Affine map applied to raw (non-differentiable) input data.
class AffineDataNode final : public Node {
 public:
  AffineDataNode(Tape& t, NodeId weight, NodeId bias, Vector x)
      : weight_(weight), bias_(bias), x_(std::move(x)) {
    const Matrix& w = t.value(weight);
    const Matrix& b = t.value(bias);
    AffineNode::check_shapes(w, b, x_);
    value_ = b;
    value_.noalias() += w * x_;
    grad_ = Matrix::Zero(value_.rows(), value_.cols());
  }

  void backward(Tape& t) override {
    t.node(weight_).grad().noalias() += grad_ * x_.transpose();
    t.node(bias_).grad() += grad_;
  }

 private:
  NodeId weight_, bias_;
  Vector x_;
};

class ReluNode final : public Node {
 public:
  ReluNode(Tape& t, NodeId x)
      : Node(t.value(x).cwiseMax(0.0)),
        x_(x),
        kink_distance_(t.value(x).array().abs().minCoeff()) {}

  void backward(Tape& t) override {
    const Matrix& in = t.value(x_);
    t.node(x_).grad().array() += (in.array() > 0.0).cast<real_t>() * grad_.array();
  }

  real_t boundary_margin() const override { return kink_distance_; }

 private:
  NodeId x_;
  real_t kink_distance_;
};

class SigmoidNode final : public Node {
 public:
  SigmoidNode(Tape& t, NodeId x)
      : Node((1.0 + (-t.value(x).array()).exp()).inverse().matrix()), x_(x) {}

  void backward(Tape& t) override {
    t.node(x_).grad().array() += value_.array() * (1.0 - value_.array()) * grad_.array();
  }

 private:
  NodeId x_;
};

class SoftmaxNode final : public Node {
 public:
  SoftmaxNode(Tape& t, NodeId x) : Node(moehealth::softmax(t.value(x))), x_(x) {}

  void backward(Tape& t) override {
    const real_t dot = (grad_.array() * value_.array()).sum();
    t.node(x_).grad().array() += value_.array() * (grad_.array() - dot);
  }

 private:
  NodeId x_;
};

class ConcatNode final : public Node {
 public:
  ConcatNode(Tape& t, std::vector<NodeId> parts) : parts_(std::move(parts)) {
    Index total = 0;
    for (NodeId id : parts_) {
      if (t.value(id).cols() != 1) throw ShapeError("concat: inputs must be column vectors");
      total += t.value(id).rows();
    }
    value_.resize(total, 1);
    Index at = 0;
    for (NodeId id : parts_) {
      const Index n = t.value(id).rows();
      value_.block(at, 0, n, 1) = t.value(id);
      at += n;
    }
    grad_ = Matrix::Zero(total, 1);
  }

  void backward(Tape& t) override {
    Index at = 0;
    for (NodeId id : parts_) {
      const Index n = t.value(id).rows();
      t.node(id).grad() += grad_.block(at, 0, n, 1);
      at += n;
    }
  }

 private:
  std::vector<NodeId> parts_;
};

class AddNode final : public Node {
 public:
  AddNode(Tape& t, NodeId a, NodeId b) : a_(a), b_(b) {
    if (t.value(a).rows() != t.value(b).rows() || t.value(a).cols() != t.value(b).cols()) {
      throw ShapeError("add: operand shapes differ");
    }
    value_ = t.value(a) + t.value(b);
    grad_ = Matrix::Zero(value_.rows(), value_.cols());
  }

  void backward(Tape& t) override {
    t.node(a_).grad() += grad_;
    t.node(b_).grad() += grad_;
  }

 private:
  NodeId a_, b_;
};

class ScaleNode final : public Node {
 public:
  ScaleNode(Tape& t, NodeId x, real_t factor) : Node(t.value(x) * factor), x_(x), factor_(factor) {}

  void backward(Tape& t) override { t.node(x_).grad() += factor_ * grad_; }

 private:
  NodeId x_;
  real_t factor_;
};

class SumNode final : public Node {
 public:
  SumNode(Tape& t, NodeId x) : x_(x) {
    value_ = Matrix::Constant(1, 1, t.value(x).sum());
    grad_ = Matrix::Zero(1, 1);
  }

  void backward(Tape& t) override {
    t.node(x_).grad().array() += grad_(0, 0);
  }

 private:
  NodeId x_;
};

}  // namespace

NodeId Tape::push(std::unique_ptr<Node> node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

real_t Tape::scalar(NodeId id) const {
  const Matrix& v = value(id);
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("scalar: node value is " + std::to_string(v.rows()) + "x" +
                     std::to_string(v.cols()));
  }
  return v(0, 0);
}

NodeId Tape::leaf(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return it->second;
  const NodeId id = push(std::make_unique<ParamNode>(p));
  param_nodes_.emplace(&p, id);
  return id;
}

void Tape::backward(NodeId root) {
  if (nodes_.empty()) {
    throw ValueError("backward: no forward pass recorded on this tape");
  }
  if (root < 0 || static_cast<std::size_t>(root) >= nodes_.size()) {
    throw ValueError("backward: root node is not on this tape");
  }
  Node& r = node(root);
  if (r.value().rows() != 1 || r.value().cols() != 1) {
    throw ValueError("backward: loss node is not a scalar");
  }
  r.grad()(0, 0) = 1.0;
  for (std::size_t i = static_cast<std::size_t>(root) + 1; i-- > 0;) {
    nodes_[i]->backward(*this);
  }
}

real_t Tape::min_boundary_margin() const {
  real_t margin = std::numeric_limits<real_t>::infinity();
  for (const auto& n : nodes_) {
    margin = std::min(margin, n->boundary_margin());
  }
  return margin;
}

NodeId constant(Tape& t, Matrix value) {
  return t.push(std::make_unique<ConstNode>(std::move(value)));
}

NodeId affine(Tape& t, NodeId weight, NodeId bias, NodeId x) {
  return t.push(std::make_unique<AffineNode>(t, weight, bias, x));
}

NodeId affine(Tape& t, NodeId weight, NodeId bias, const Vector& x) {
  return t.push(std::make_unique<AffineDataNode>(t, weight, bias, x));
}

NodeId matvec(Tape& t, NodeId weight, NodeId x) {
  return t.push(std::make_unique<MatVecNode>(t, weight, x));
}

NodeId relu(Tape& t, NodeId x) { return t.push(std::make_unique<ReluNode>(t, x)); }

NodeId sigmoid(Tape& t, NodeId x) { return t.push(std::make_unique<SigmoidNode>(t, x)); }

NodeId softmax(Tape& t, NodeId x) { return t.push(std::make_unique<SoftmaxNode>(t, x)); }

NodeId concat(Tape& t, const std::vector<NodeId>& parts) {
  return t.push(std::make_unique<ConcatNode>(t, parts));
}

NodeId add(Tape& t, NodeId a, NodeId b) { return t.push(std::make_unique<AddNode>(t, a, b)); }

NodeId scale(Tape& t, NodeId x, real_t factor) {
  return t.push(std::make_unique<ScaleNode>(t, x, factor));
}

NodeId sum(Tape& t, NodeId x) { return t.push(std::make_unique<SumNode>(t, x)); }

}  // namespace moehealth
