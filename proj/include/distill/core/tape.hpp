#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "distill/core/errors.hpp"

namespace distill::core {

/// Dense row-major 2-D tensor. Every sequence in the library is laid out
/// T x C (one row per snippet); 3-D convolution kernels are stored as
/// k stacked Cin x Cout blocks, i.e. a (k*Cin) x Cout matrix.
template <typename Scalar>
using Tensor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class OpKind : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddConstant,
  kMatMul,
  kTranspose,
  kRelu,
  kSigmoid,
  kSoftplus,
  kAbs,
  kSquare,
  kReduce,
  kDilatedConv,
  kRowNormalize,
  kRowDot,
  kCenterColumns,
  kGram,
  kUpperTriangle,
  kDiffRows,
  kDetach,
};

template <typename Scalar>
class BasicTape;

/// Handle to a node on a tape. Cheap to copy; valid as long as its tape lives.
template <typename Scalar>
class BasicVar {
 public:
  BasicVar() = default;
  BasicVar(BasicTape<Scalar>* tape, std::size_t index) : tape_(tape), index_(index) {}

  BasicTape<Scalar>* tape() const { return tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<Scalar>& value() const { return tape_->value(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const { return tape_->requires_grad(*this); }

  /// Value of a 1x1 node.
  Scalar item() const {
    if (rows() != 1 || cols() != 1) throw StructuralError("item() on a non-scalar node");
    return value()(0, 0);
  }

 private:
  BasicTape<Scalar>* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Arena of differentiable nodes recorded in evaluation order, so reverse
/// index order is a valid reverse topological order. Nodes that do not
/// depend on any gradient-requiring leaf carry no backward closure and never
/// receive an adjoint.
///
/// A tape is confined to one thread. Closures hold the tape by address, so
/// tapes are neither copyable nor movable.
template <typename Scalar>
class BasicTape {
 public:
  using Matrix = Tensor<Scalar>;
  using Var = BasicVar<Scalar>;
  using BackwardFn = std::function<void(BasicTape&, std::size_t self)>;

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  Var leaf(Matrix value, bool requires_grad = true) {
    check_finite(value, OpKind::kLeaf);
    nodes_.push_back(Node{OpKind::kLeaf, std::move(value), Matrix(), {}, nullptr, requires_grad});
    return Var(this, nodes_.size() - 1);
  }

  Var constant(Matrix value) { return leaf(std::move(value), false); }

  /// Appends an op node. The backward closure is dropped when no parent
  /// requires a gradient.
  Var record(OpKind kind, Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
    return record(kind, std::move(value), std::vector<Var>(parents), std::move(backward));
  }

  Var record(OpKind kind, Matrix value, std::vector<Var> parents, BackwardFn backward) {
    check_finite(value, kind);
    bool needs_grad = false;
    std::vector<std::size_t> ids;
    ids.reserve(parents.size());
    for (const Var& p : parents) {
      if (p.tape() != this) throw StructuralError("operand belongs to a different tape");
      needs_grad = needs_grad || nodes_[p.index()].requires_grad;
      ids.push_back(p.index());
    }
    nodes_.push_back(Node{kind, std::move(value), Matrix(), std::move(ids),
                          needs_grad ? std::move(backward) : nullptr, needs_grad});
    return Var(this, nodes_.size() - 1);
  }

  const Matrix& value(const Var& v) const { return nodes_.at(v.index()).value; }
  bool requires_grad(const Var& v) const { return nodes_.at(v.index()).requires_grad; }
  OpKind kind(const Var& v) const { return nodes_.at(v.index()).kind; }
  const std::vector<std::size_t>& parents(const Var& v) const { return nodes_.at(v.index()).parents; }
  std::size_t size() const { return nodes_.size(); }

  /// Accumulated adjoint; zeros of the value's shape when none reached it.
  Matrix grad(const Var& v) const {
    const Node& n = nodes_.at(v.index());
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool has_grad(const Var& v) const { return nodes_.at(v.index()).grad.size() != 0; }

  /// Adjoint of the node being back-propagated. Only meaningful inside a
  /// backward closure.
  const Matrix& adjoint(std::size_t self) const { return nodes_[self].grad; }

  template <typename Derived>
  void accumulate(const Var& target, const Eigen::MatrixBase<Derived>& contribution) {
    Node& n = nodes_[target.index()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = contribution;
    } else {
      n.grad += contribution;
    }
  }

  /// Reverse sweep from a 1x1 root. Adjoints accumulate across calls; call
  /// zero_grad() in between for fresh gradients.
  void backward(const Var& root) {
    if (root.tape() != this) throw StructuralError("backward root belongs to a different tape");
    const Node& r = nodes_.at(root.index());
    if (r.value.rows() != 1 || r.value.cols() != 1) {
      throw StructuralError("backward requires a scalar root, got " + std::to_string(r.value.rows()) + "x" +
                            std::to_string(r.value.cols()));
    }
    accumulate(root, Matrix::Ones(1, 1));
    for (std::size_t i = root.index() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(*this, i);
    }
  }

  void zero_grad() {
    for (Node& n : nodes_) n.grad.resize(0, 0);
  }

 private:
  struct Node {
    OpKind kind;
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad;
  };

  static void check_finite(const Matrix& value, OpKind kind) {
    if (!value.allFinite()) {
      throw NumericalError("non-finite value produced by op " + std::to_string(static_cast<int>(kind)));
    }
  }

  std::vector<Node> nodes_;
};

using Tape = BasicTape<double>;
using Var = BasicVar<double>;
using Matrix = Tensor<double>;

}  // namespace distill::core
