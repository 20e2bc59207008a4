#include "doctest.h"

#include <random>

#include "distill/core/binary_io.hpp"
#include "distill/core/gradcheck.hpp"
#include "distill/core/ops.hpp"

using namespace distill;
using core::Matrix;
using core::Tape;
using core::Var;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

Matrix row(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

// Direct definition of the same-length dilated convolution.
Matrix conv_reference(const Matrix& x, const Matrix& w, int dilation) {
  const Eigen::Index cin = x.cols(), taps = w.rows() / cin, half = (taps - 1) / 2;
  Matrix y = Matrix::Zero(x.rows(), w.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    for (Eigen::Index j = 0; j < taps; ++j) {
      const Eigen::Index src = t + (j - half) * dilation;
      if (src < 0 || src >= x.rows()) continue;
      for (Eigen::Index ci = 0; ci < cin; ++ci)
        for (Eigen::Index co = 0; co < w.cols(); ++co) y(t, co) += x(src, ci) * w(j * cin + ci, co);
    }
  return y;
}

}  // namespace

TEST_CASE("tape records leaves and propagates requires_grad") {
  Tape tape;
  Var a = tape.leaf(Matrix::Ones(2, 2));
  Var c = tape.constant(Matrix::Ones(2, 2));
  CHECK(a.requires_grad());
  CHECK_FALSE(c.requires_grad());
  CHECK((a + c).requires_grad());
  CHECK_FALSE((c + c).requires_grad());
  CHECK_FALSE(core::detach(a).requires_grad());
}

TEST_CASE("backward needs a scalar root and restarts after zero_grad") {
  Tape tape;
  Var a = tape.leaf(row({1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(a), StructuralError);
  Var s = core::sum(core::square(a));
  tape.backward(s);
  CHECK(tape.grad(a)(1, 0) == doctest::Approx(4.0));
  tape.zero_grad();
  CHECK_FALSE(tape.has_grad(a));
  tape.backward(s);
  CHECK(tape.grad(a)(1, 0) == doctest::Approx(4.0));
}

TEST_CASE("shared subexpression gradients follow the sum rule") {
  Tape tape;
  Var x = tape.leaf(row({0.5, -1.5, 2.0}));
  Var u = core::square(x);
  Var f = core::sum(u + u + core::mul(u, x));  // 2x^2 + x^3
  tape.backward(f);
  const Matrix g = tape.grad(x);
  for (Eigen::Index i = 0; i < 3; ++i) {
    const double v = x.value()(i, 0);
    CHECK(g(i, 0) == doctest::Approx(4 * v + 3 * v * v).epsilon(1e-12));
  }
}

TEST_CASE("non-finite values are rejected") {
  Tape tape;
  Matrix bad = Matrix::Zero(1, 1);
  bad(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(tape.leaf(bad), NumericalError);
  Var a = tape.leaf(Matrix::Constant(1, 1, 1e300));
  CHECK_THROWS_AS(core::mul(a, a), NumericalError);
}

TEST_CASE("shape mismatches raise structural errors") {
  Tape tape;
  Var a = tape.leaf(Matrix::Ones(2, 3));
  Var b = tape.leaf(Matrix::Ones(3, 2));
  CHECK_THROWS_AS(a + b, StructuralError);
  CHECK_THROWS_AS(core::matmul(a, a), StructuralError);
  CHECK_NOTHROW(core::matmul(a, b));
  Tape other;
  Var c = other.leaf(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(a + c, StructuralError);
}

TEST_CASE("reductions") {
  Tape tape;
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  Var a = tape.leaf(m);
  CHECK(core::reduce(a, core::Axis::kTime, core::ReduceKind::kSum).value() == (Matrix(1, 3) << 5, 7, 9).finished());
  CHECK(core::reduce(a, core::Axis::kChannel, core::ReduceKind::kMean).value() == (Matrix(2, 1) << 2, 5).finished());
  CHECK(core::mean(a).item() == doctest::Approx(3.5));
  Var empty = tape.leaf(Matrix(0, 3));
  CHECK_THROWS_AS(core::reduce(empty, core::Axis::kTime, core::ReduceKind::kMean), DegenerateInputError);
}

TEST_CASE("elementwise functions are stable at large magnitude") {
  Tape tape;
  Var a = tape.leaf(row({-800.0, 0.0, 800.0}));
  const Matrix s = core::sigmoid(a).value();
  CHECK(s(0, 0) == 0.0);
  CHECK(s(1, 0) == 0.5);
  CHECK(s(2, 0) == 1.0);
  const Matrix sp = core::softplus(a).value();
  CHECK(sp(0, 0) == 0.0);
  CHECK(sp(1, 0) == doctest::Approx(std::log(2.0)));
  CHECK(sp(2, 0) == doctest::Approx(800.0));
  CHECK(core::apply_elementwise(a, core::Elementwise::Relu()).value() == row({0.0, 0.0, 800.0}));
  CHECK(core::apply_elementwise(a, core::Elementwise::AddConstant(1.0)).value() == row({-799.0, 1.0, 801.0}));
}

TEST_CASE("dilated convolution hand example") {
  Tape tape;
  Var x = tape.constant(row({1, 2, 3, 4, 5}));
  Var w = tape.constant(row({1, 1, 1}));
  CHECK(core::dilated_conv1d(x, w, 1).value() == row({3, 6, 9, 12, 9}));
  CHECK(core::dilated_conv1d(x, w, 2).value() == row({4, 6, 9, 6, 8}));
  Var even = tape.constant(row({1, 1}));
  CHECK_THROWS_AS(core::dilated_conv1d(x, even, 1), StructuralError);
  CHECK_THROWS_AS(core::dilated_conv1d(x, w, 0), StructuralError);
}

TEST_CASE("dilated convolution matches the direct definition") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int steps = 2 + trial % 9, cin = 1 + trial % 4, cout = 1 + trial % 3, dilation = 1 << (trial % 4);
    const Matrix x = random_matrix(rng, steps, cin), w = random_matrix(rng, 3 * cin, cout);
    Tape tape;
    const Matrix y = core::dilated_conv1d(tape.constant(x), tape.constant(w), dilation).value();
    CHECK((y - conv_reference(x, w, dilation)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("dilated convolution is linear in its input") {
  std::mt19937_64 rng(11);
  const Matrix x1 = random_matrix(rng, 9, 3), x2 = random_matrix(rng, 9, 3), w = random_matrix(rng, 9, 2);
  Tape tape;
  auto conv = [&](const Matrix& x) { return core::dilated_conv1d(tape.constant(x), tape.constant(w), 2).value(); };
  const Matrix lhs = conv(2.5 * x1 - 0.75 * x2);
  const Matrix rhs = 2.5 * conv(x1) - 0.75 * conv(x2);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradients of every op pass finite differences") {
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(rng, 5, 3) + Matrix::Constant(5, 3, 0.05);
  const Matrix other = random_matrix(rng, 5, 3);
  const Matrix right = random_matrix(rng, 3, 4);
  const Matrix kernel = random_matrix(rng, 9, 2);
  const Matrix weights = random_matrix(rng, 5, 3);
  auto weighted = [&](Tape& t, const Var& v) {
    // A fixed random linear functional keeps every output entry relevant.
    Matrix wgt = Matrix::Ones(v.rows(), v.cols());
    for (Eigen::Index i = 0; i < wgt.size(); ++i) wgt.data()[i] = std::sin(1.0 + static_cast<double>(i));
    return core::sum(core::mul(v, t.constant(wgt)));
  };
  using Fn = std::function<Var(Tape&, const Var&)>;
  const std::vector<std::pair<const char*, Fn>> cases{
      {"add", [&](Tape& t, const Var& v) { return weighted(t, v + t.constant(other)); }},
      {"sub", [&](Tape& t, const Var& v) { return weighted(t, t.constant(other) - v); }},
      {"mul", [&](Tape& t, const Var& v) { return weighted(t, core::mul(v, v)); }},
      {"matmul", [&](Tape& t, const Var& v) { return weighted(t, core::matmul(v, t.constant(right))); }},
      {"transpose", [&](Tape& t, const Var& v) { return weighted(t, core::transpose(core::transpose(v))); }},
      {"sigmoid", [&](Tape& t, const Var& v) { return weighted(t, core::sigmoid(v)); }},
      {"softplus", [&](Tape& t, const Var& v) { return weighted(t, core::softplus(v)); }},
      {"relu", [&](Tape& t, const Var& v) { return weighted(t, core::relu(v)); }},
      {"absolute", [&](Tape& t, const Var& v) { return weighted(t, core::absolute(v)); }},
      {"reduce time", [&](Tape& t, const Var& v) {
         return weighted(t, core::matmul(t.constant(Matrix::Ones(5, 1)),
                                         core::reduce(v, core::Axis::kTime, core::ReduceKind::kMean)));
       }},
      {"reduce channel", [&](Tape& t, const Var& v) {
         return weighted(t, core::matmul(core::reduce(v, core::Axis::kChannel, core::ReduceKind::kSum),
                                         t.constant(Matrix::Ones(1, 3))));
       }},
      {"conv", [&](Tape& t, const Var& v) {
         return weighted(t, core::matmul(core::dilated_conv1d(v, t.constant(kernel), 2), t.constant(Matrix::Ones(2, 3))));
       }},
      {"row_normalize", [&](Tape& t, const Var& v) { return weighted(t, core::row_normalize(v)); }},
      {"row_dot", [&](Tape& t, const Var& v) {
         return weighted(t, core::matmul(core::row_dot(v, t.constant(other)), t.constant(Matrix::Ones(1, 3))));
       }},
      {"center_columns", [&](Tape& t, const Var& v) { return weighted(t, core::center_columns(v)); }},
      {"gram", [&](Tape& t, const Var& v) { return core::sum(core::mul(core::gram(v), t.constant(right.leftCols(3)))); }},
      {"upper_triangle", [&](Tape& t, const Var& v) {
         return core::sum(core::square(core::upper_triangle(core::gram(v))));
       }},
      {"diff_rows", [&](Tape& t, const Var& v) {
         return core::sum(core::mul(core::diff_rows(v), t.constant(weights.topRows(4))));
       }},
  };
  for (const auto& [name, fn] : cases) {
    CAPTURE(name);
    CHECK(core::finite_diff_check(fn, x, 1e-6) < 1e-6);
  }
}

TEST_CASE("detach blocks the gradient") {
  Tape tape;
  Var x = tape.leaf(row({1.0, 2.0}));
  Var f = core::sum(core::mul(core::detach(x), x));
  tape.backward(f);
  CHECK(tape.grad(x) == row({1.0, 2.0}));
}

TEST_CASE("binary reader reports truncation offsets") {
  core::ByteWriter w;
  w.magic("ABCD");
  w.u32(7);
  w.f64(1.5);
  const std::string bytes = w.bytes();
  core::ByteReader r(bytes);
  r.expect_magic("ABCD");
  CHECK(r.u32() == 7u);
  CHECK(r.f64() == 1.5);
  CHECK(r.at_end());

  core::ByteReader bad(bytes.substr(0, 10));
  bad.expect_magic("ABCD");
  bad.u32();
  try {
    bad.f64();
    FAIL("expected a FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 8);
  }
  core::ByteReader wrong(bytes);
  CHECK_THROWS_WITH_AS(wrong.expect_magic("WXYZ"), doctest::Contains("WXYZ"), FormatError);
}
