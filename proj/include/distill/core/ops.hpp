#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "distill/core/tape.hpp"

namespace distill::core {

namespace detail {

template <typename Scalar>
void require_same_shape(const BasicVar<Scalar>& a, const BasicVar<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw StructuralError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
  }
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar stable_softplus(Scalar x) {
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Arithmetic

template <typename Scalar>
BasicVar<Scalar> add(const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  return a.tape()->record(OpKind::kAdd, a.value() + b.value(), {a, b}, [a, b](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate(a, t.adjoint(self));
    t.accumulate(b, t.adjoint(self));
  });
}

template <typename Scalar>
BasicVar<Scalar> sub(const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  return a.tape()->record(OpKind::kSub, a.value() - b.value(), {a, b}, [a, b](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate(a, t.adjoint(self));
    t.accumulate(b, -t.adjoint(self));
  });
}

/// Elementwise (Hadamard) product.
template <typename Scalar>
BasicVar<Scalar> mul(const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) {
  detail::require_same_shape(a, b, "mul");
  return a.tape()->record(OpKind::kMul, a.value().cwiseProduct(b.value()), {a, b},
                          [a, b](BasicTape<Scalar>& t, std::size_t self) {
                            const auto& g = t.adjoint(self);
                            t.accumulate(a, g.cwiseProduct(b.value()));
                            t.accumulate(b, g.cwiseProduct(a.value()));
                          });
}

template <typename Scalar>
BasicVar<Scalar> scale(const BasicVar<Scalar>& a, Scalar factor) {
  return a.tape()->record(OpKind::kScale, a.value() * factor, {a}, [a, factor](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate(a, t.adjoint(self) * factor);
  });
}

template <typename Scalar>
BasicVar<Scalar> add_constant(const BasicVar<Scalar>& a, Scalar offset) {
  Tensor<Scalar> out = a.value().array() + offset;
  return a.tape()->record(OpKind::kAddConstant, std::move(out), {a}, [a](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate(a, t.adjoint(self));
  });
}

template <typename Scalar>
BasicVar<Scalar> matmul(const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw StructuralError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                          std::to_string(b.rows()) + ")");
  }
  return a.tape()->record(OpKind::kMatMul, a.value() * b.value(), {a, b}, [a, b](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.adjoint(self);
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

template <typename Scalar>
BasicVar<Scalar> transpose(const BasicVar<Scalar>& a) {
  return a.tape()->record(OpKind::kTranspose, a.value().transpose(), {a}, [a](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate(a, t.adjoint(self).transpose());
  });
}

template <typename Scalar>
BasicVar<Scalar> operator+(const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) { return add(a, b); }
template <typename Scalar>
BasicVar<Scalar> operator-(const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
BasicVar<Scalar> operator-(const BasicVar<Scalar>& a) { return scale(a, Scalar(-1)); }
template <typename Scalar>
BasicVar<Scalar> operator*(Scalar s, const BasicVar<Scalar>& a) { return scale(a, s); }

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

template <typename Scalar>
BasicVar<Scalar> relu(const BasicVar<Scalar>& a) {
  Tensor<Scalar> out = a.value().cwiseMax(Scalar(0));
  return a.tape()->record(OpKind::kRelu, std::move(out), {a}, [a](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate(a, (a.value().array() > Scalar(0)).select(t.adjoint(self), Scalar(0)).matrix());
  });
}

template <typename Scalar>
BasicVar<Scalar> sigmoid(const BasicVar<Scalar>& a) {
  Tensor<Scalar> out = a.value().unaryExpr([](Scalar x) { return detail::stable_sigmoid(x); });
  return a.tape()->record(OpKind::kSigmoid, out, {a}, [a, out](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate(a, (t.adjoint(self).array() * out.array() * (Scalar(1) - out.array())).matrix());
  });
}

/// log(1 + e^x), evaluated without overflow.
template <typename Scalar>
BasicVar<Scalar> softplus(const BasicVar<Scalar>& a) {
  Tensor<Scalar> out = a.value().unaryExpr([](Scalar x) { return detail::stable_softplus(x); });
  return a.tape()->record(OpKind::kSoftplus, std::move(out), {a}, [a](BasicTape<Scalar>& t, std::size_t self) {
    Tensor<Scalar> d = a.value().unaryExpr([](Scalar x) { return detail::stable_sigmoid(x); });
    t.accumulate(a, t.adjoint(self).cwiseProduct(d));
  });
}

/// |x|, with subgradient 0 at the origin.
template <typename Scalar>
BasicVar<Scalar> absolute(const BasicVar<Scalar>& a) {
  return a.tape()->record(OpKind::kAbs, a.value().cwiseAbs(), {a}, [a](BasicTape<Scalar>& t, std::size_t self) {
    Tensor<Scalar> sign = a.value().unaryExpr([](Scalar x) { return Scalar((x > 0) - (x < 0)); });
    t.accumulate(a, t.adjoint(self).cwiseProduct(sign));
  });
}

template <typename Scalar>
BasicVar<Scalar> square(const BasicVar<Scalar>& a) {
  return a.tape()->record(OpKind::kSquare, a.value().cwiseAbs2(), {a}, [a](BasicTape<Scalar>& t, std::size_t self) {
    t.accumulate(a, Scalar(2) * t.adjoint(self).cwiseProduct(a.value()));
  });
}

struct Elementwise {
  enum class Kind { kRelu, kSigmoid, kAddConstant, kScale };
  Kind kind;
  double parameter = 0.0;

  static Elementwise Relu() { return {Kind::kRelu}; }
  static Elementwise Sigmoid() { return {Kind::kSigmoid}; }
  static Elementwise AddConstant(double c) { return {Kind::kAddConstant, c}; }
  static Elementwise Scale(double s) { return {Kind::kScale, s}; }
};

template <typename Scalar>
BasicVar<Scalar> apply_elementwise(const BasicVar<Scalar>& a, const Elementwise& fn) {
  if (!std::isfinite(fn.parameter)) throw NumericalError("apply_elementwise: non-finite parameter");
  switch (fn.kind) {
    case Elementwise::Kind::kRelu: return relu(a);
    case Elementwise::Kind::kSigmoid: return sigmoid(a);
    case Elementwise::Kind::kAddConstant: return add_constant(a, static_cast<Scalar>(fn.parameter));
    case Elementwise::Kind::kScale: return scale(a, static_cast<Scalar>(fn.parameter));
  }
  throw StructuralError("apply_elementwise: unknown function");
}

// ---------------------------------------------------------------------------
// Reductions

/// kTime reduces over rows (T x C -> 1 x C), kChannel over columns
/// (T x C -> T x 1), kAll over everything (-> 1 x 1).
enum class Axis { kTime, kChannel, kAll };
enum class ReduceKind { kSum, kMean };

template <typename Scalar>
BasicVar<Scalar> reduce(const BasicVar<Scalar>& a, Axis axis, ReduceKind kind) {
  const auto& x = a.value();
  const Eigen::Index extent = axis == Axis::kTime ? x.rows() : axis == Axis::kChannel ? x.cols() : x.size();
  if (kind == ReduceKind::kMean && extent == 0) throw DegenerateInputError("reduce: mean over a zero-extent axis");
  const Scalar factor = kind == ReduceKind::kMean ? Scalar(1) / static_cast<Scalar>(extent) : Scalar(1);

  Tensor<Scalar> out;
  switch (axis) {
    case Axis::kTime: out = x.colwise().sum() * factor; break;
    case Axis::kChannel: out = x.rowwise().sum() * factor; break;
    case Axis::kAll: out = Tensor<Scalar>::Constant(1, 1, x.sum() * factor); break;
  }
  return a.tape()->record(OpKind::kReduce, std::move(out), {a}, [a, axis, factor](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.adjoint(self);
    const Eigen::Index rows = a.rows(), cols = a.cols();
    switch (axis) {
      case Axis::kTime: t.accumulate(a, (g * factor).replicate(rows, 1)); break;
      case Axis::kChannel: t.accumulate(a, (g * factor).replicate(1, cols)); break;
      case Axis::kAll: t.accumulate(a, Tensor<Scalar>::Constant(rows, cols, g(0, 0) * factor)); break;
    }
  });
}

template <typename Scalar>
BasicVar<Scalar> sum(const BasicVar<Scalar>& a) { return reduce(a, Axis::kAll, ReduceKind::kSum); }

template <typename Scalar>
BasicVar<Scalar> mean(const BasicVar<Scalar>& a) { return reduce(a, Axis::kAll, ReduceKind::kMean); }

// ---------------------------------------------------------------------------
// Temporal convolution

/// Same-length dilated 1-D convolution over time.
///
/// `kernel` holds k taps stacked vertically, tap j occupying rows
/// [j*Cin, (j+1)*Cin); tap j reads input row t + (j - (k-1)/2) * dilation.
/// Out-of-range rows are zero.
template <typename Scalar>
BasicVar<Scalar> dilated_conv1d(const BasicVar<Scalar>& input, const BasicVar<Scalar>& kernel, int dilation) {
  const Eigen::Index steps = input.rows();
  const Eigen::Index cin = input.cols();
  if (dilation < 1) throw StructuralError("dilated_conv1d: dilation must be >= 1");
  if (cin == 0 || kernel.rows() % cin != 0) {
    throw StructuralError("dilated_conv1d: kernel rows " + std::to_string(kernel.rows()) +
                          " not a multiple of input channels " + std::to_string(cin));
  }
  const Eigen::Index taps = kernel.rows() / cin;
  if (taps % 2 == 0) throw StructuralError("dilated_conv1d: kernel size must be odd");
  const Eigen::Index half = (taps - 1) / 2;

  auto tap_range = [steps](Eigen::Index offset) {
    const Eigen::Index begin = std::max<Eigen::Index>(0, -offset);
    const Eigen::Index end = std::min<Eigen::Index>(steps, steps - offset);
    return std::pair{begin, std::max<Eigen::Index>(end - begin, 0)};
  };

  Tensor<Scalar> columns = Tensor<Scalar>::Zero(steps, taps * cin);
  for (Eigen::Index j = 0; j < taps; ++j) {
    const Eigen::Index offset = (j - half) * dilation;
    const auto [begin, count] = tap_range(offset);
    if (count > 0) columns.block(begin, j * cin, count, cin) = input.value().block(begin + offset, 0, count, cin);
  }
  Tensor<Scalar> out = columns * kernel.value();

  return input.tape()->record(
      OpKind::kDilatedConv, std::move(out), {input, kernel},
      [input, kernel, columns = std::move(columns), taps, half, cin, dilation, tap_range](BasicTape<Scalar>& t,
                                                                                       std::size_t self) {
        const auto& g = t.adjoint(self);
        if (kernel.requires_grad()) t.accumulate(kernel, columns.transpose() * g);
        if (input.requires_grad()) {
          const Tensor<Scalar> dcols = g * kernel.value().transpose();
          Tensor<Scalar> dx = Tensor<Scalar>::Zero(input.rows(), cin);
          for (Eigen::Index j = 0; j < taps; ++j) {
            const Eigen::Index offset = (j - half) * dilation;
            const auto [begin, count] = tap_range(offset);
            if (count > 0) dx.block(begin + offset, 0, count, cin) += dcols.block(begin, j * cin, count, cin);
          }
          t.accumulate(input, dx);
        }
      });
}

// ---------------------------------------------------------------------------
// Row-wise and statistical ops

/// L2-normalizes every row. Rows with norm <= eps map to zero and pass no
/// gradient.
template <typename Scalar>
BasicVar<Scalar> row_normalize(const BasicVar<Scalar>& a, Scalar eps = Scalar(1e-12)) {
  const auto& x = a.value();
  Tensor<Scalar> norms = x.rowwise().norm();
  Tensor<Scalar> out = Tensor<Scalar>::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (norms(r, 0) > eps) out.row(r) = x.row(r) / norms(r, 0);
  }
  return a.tape()->record(OpKind::kRowNormalize, out, {a}, [a, out, norms, eps](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.adjoint(self);
    Tensor<Scalar> dx = Tensor<Scalar>::Zero(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      if (norms(r, 0) <= eps) continue;
      const Scalar along = out.row(r).dot(g.row(r));
      dx.row(r) = (g.row(r) - along * out.row(r)) / norms(r, 0);
    }
    t.accumulate(a, dx);
  });
}

/// Per-row inner product: T x C, T x C -> T x 1.
template <typename Scalar>
BasicVar<Scalar> row_dot(const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) {
  detail::require_same_shape(a, b, "row_dot");
  Tensor<Scalar> out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return a.tape()->record(OpKind::kRowDot, std::move(out), {a, b}, [a, b](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.adjoint(self);
    const Eigen::Index cols = a.cols();
    if (a.requires_grad()) t.accumulate(a, b.value().cwiseProduct(g.replicate(1, cols)));
    if (b.requires_grad()) t.accumulate(b, a.value().cwiseProduct(g.replicate(1, cols)));
  });
}

/// Subtracts each column's mean over time.
template <typename Scalar>
BasicVar<Scalar> center_columns(const BasicVar<Scalar>& a) {
  const auto& x = a.value();
  if (x.rows() == 0) throw DegenerateInputError("center_columns: empty input");
  Tensor<Scalar> out = x.rowwise() - x.colwise().mean();
  return a.tape()->record(OpKind::kCenterColumns, std::move(out), {a}, [a](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.adjoint(self);
    t.accumulate(a, g.rowwise() - g.colwise().mean());
  });
}

/// X^T X.
template <typename Scalar>
BasicVar<Scalar> gram(const BasicVar<Scalar>& a) {
  Tensor<Scalar> out = a.value().transpose() * a.value();
  return a.tape()->record(OpKind::kGram, std::move(out), {a}, [a](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.adjoint(self);
    t.accumulate(a, a.value() * (g + g.transpose()));
  });
}

/// Row-major entries on and above the diagonal of a square matrix, as a
/// 1 x n(n+1)/2 row.
template <typename Scalar>
BasicVar<Scalar> upper_triangle(const BasicVar<Scalar>& a) {
  const auto& m = a.value();
  if (m.rows() != m.cols()) throw StructuralError("upper_triangle: matrix is not square");
  const Eigen::Index n = m.rows();
  Tensor<Scalar> out(1, n * (n + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) out(0, k++) = m(i, j);
  }
  return a.tape()->record(OpKind::kUpperTriangle, std::move(out), {a}, [a, n](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.adjoint(self);
    Tensor<Scalar> dm = Tensor<Scalar>::Zero(n, n);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i; j < n; ++j) dm(i, j) = g(0, k++);
    }
    t.accumulate(a, dm);
  });
}

/// Consecutive-row differences: out(t) = x(t+1) - x(t), (T-1) x C.
template <typename Scalar>
BasicVar<Scalar> diff_rows(const BasicVar<Scalar>& a) {
  const auto& x = a.value();
  if (x.rows() < 2) throw DegenerateInputError("diff_rows: need at least two rows");
  const Eigen::Index n = x.rows() - 1;
  Tensor<Scalar> out = x.bottomRows(n) - x.topRows(n);
  return a.tape()->record(OpKind::kDiffRows, std::move(out), {a}, [a, n](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.adjoint(self);
    Tensor<Scalar> dx = Tensor<Scalar>::Zero(n + 1, g.cols());
    dx.bottomRows(n) += g;
    dx.topRows(n) -= g;
    t.accumulate(a, dx);
  });
}

/// Copies the value into a node that is cut off from the graph.
template <typename Scalar>
BasicVar<Scalar> detach(const BasicVar<Scalar>& a) {
  return a.tape()->record(OpKind::kDetach, a.value(), std::vector<BasicVar<Scalar>>{}, nullptr);
}

}  // namespace distill::core
