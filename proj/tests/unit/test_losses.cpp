#include "doctest.h"

#include <cmath>
#include <random>

#include "distill/core/gradcheck.hpp"
#include "distill/core/ops.hpp"
#include "distill/losses/losses.hpp"

using namespace distill;
using core::Matrix;
using core::Tape;
using core::Var;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

double cov_entry(const Matrix& f, Eigen::Index a, Eigen::Index b) {
  const Eigen::Index n = f.rows();
  double ma = 0, mb = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    ma += f(t, a);
    mb += f(t, b);
  }
  ma /= n;
  mb /= n;
  double s = 0;
  for (Eigen::Index t = 0; t < n; ++t) s += (f(t, a) - ma) * (f(t, b) - mb);
  return s / (n - 1);
}

std::vector<Var> constants(Tape& tape, const std::vector<Matrix>& ms) {
  std::vector<Var> out;
  for (const Matrix& m : ms) out.push_back(tape.constant(m));
  return out;
}

}  // namespace

TEST_CASE("atomic loss of identical unit vectors") {
  Tape tape;
  Matrix u(1, 3);
  u << 1.0, 0.0, 0.0;
  const std::vector<Var> s{tape.constant(u)}, t{tape.constant(u)};
  losses::SnippetPairing pairing;
  pairing.positives.emplace_back(0, 0);
  const double value = losses::atomic_loss(s, t, pairing, {1.0, 1.0, true}).item();
  CHECK(value == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))).epsilon(1e-14));
  CHECK(value == doctest::Approx(0.3133).epsilon(1e-4));
}

TEST_CASE("atomic loss with negatives matches a direct evaluation") {
  std::mt19937_64 rng(5);
  const Matrix s0 = random_matrix(rng, 4, 3), t0 = random_matrix(rng, 4, 3), t1 = random_matrix(rng, 3, 3);
  const double phi = 0.25, tau = 0.7;
  Tape tape;
  losses::SnippetPairing pairing;
  pairing.positives.emplace_back(0, 0);
  pairing.negatives.emplace_back(0, 1);
  const std::vector<Var> s{tape.constant(s0)}, t{tape.constant(t0), tape.constant(t1)};
  const double value = losses::atomic_loss(s, t, pairing, {phi, tau, false}).item();

  double pos = 0, neg = 0;
  for (int i = 0; i < 4; ++i) {
    const double hp = std::exp(s0.row(i).dot(t0.row(i)) / tau) / (std::exp(s0.row(i).dot(t0.row(i)) / tau) + phi);
    const double zn = s0.row(i).dot(t1.row(i % 3)) / tau;
    const double hn = std::exp(zn) / (std::exp(zn) + phi);
    pos += -std::log(hp) / 4;
    neg += -std::log(1 - hn) / 4;
  }
  CHECK(value == doctest::Approx(pos + neg).epsilon(1e-12));
}

TEST_CASE("atomic loss validates its configuration") {
  Tape tape;
  const std::vector<Var> s{tape.constant(Matrix::Ones(2, 2))};
  losses::SnippetPairing pairing;
  CHECK_THROWS_AS(losses::atomic_loss(s, s, pairing, {}), DegenerateInputError);
  pairing.positives.emplace_back(0, 0);
  CHECK_THROWS_AS(losses::atomic_loss(s, s, pairing, {0.0, 1.0, true}), ConfigError);
  CHECK_THROWS_AS(losses::atomic_loss(s, s, pairing, {1.0, -1.0, true}), ConfigError);
  pairing.positives.emplace_back(0, 3);
  CHECK_THROWS_AS(losses::atomic_loss(s, s, pairing, {}), StructuralError);
  CHECK_THROWS_AS(losses::corpus_phi(1, 0), ConfigError);
  CHECK(losses::corpus_phi(1, 200) == 0.005);
}

TEST_CASE("covariance hand example and brute force") {
  Tape tape;
  Matrix f(3, 2);
  f << 0, 0, 2, 2, 4, 4;
  const Matrix cov = losses::channel_covariance(tape.constant(f)).value();
  CHECK(cov == (Matrix(2, 2) << 4, 4, 4, 4).finished());

  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 25; ++trial) {
    const Matrix x = random_matrix(rng, 2 + trial % 7, 1 + trial % 5);
    const Matrix c = losses::channel_covariance(tape.constant(x)).value();
    for (Eigen::Index a = 0; a < x.cols(); ++a)
      for (Eigen::Index b = 0; b < x.cols(); ++b) CHECK(std::abs(c(a, b) - cov_entry(x, a, b)) < 1e-12);
  }
  CHECK_THROWS_AS(losses::channel_covariance(tape.constant(Matrix::Ones(1, 3))), DegenerateInputError);
}

TEST_CASE("covariance is invariant to snippet permutation and time reversal") {
  std::mt19937_64 rng(17);
  const Matrix x = random_matrix(rng, 9, 4);
  Matrix reversed = x.colwise().reverse();
  Matrix permuted(9, 4);
  const int order[] = {3, 0, 8, 5, 1, 7, 2, 6, 4};
  for (int t = 0; t < 9; ++t) permuted.row(t) = x.row(order[t]);
  Tape tape;
  const Matrix c = losses::channel_covariance(tape.constant(x)).value();
  CHECK((c - losses::channel_covariance(tape.constant(reversed)).value()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((c - losses::channel_covariance(tape.constant(permuted)).value()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cov mask keeps the upper triangle and rejects asymmetry") {
  Tape tape;
  Matrix m(3, 3);
  m << 1, 2, 3, 2, 4, 5, 3, 5, 6;
  const Matrix e = losses::cov_mask(tape.constant(m)).value();
  CHECK(e == (Matrix(1, 6) << 1, 2, 3, 4, 5, 6).finished());
  CHECK(losses::cov_unmask(e, 3) == m);
  Matrix skew = m;
  skew(0, 2) += 1e-6;
  CHECK_THROWS_AS(losses::cov_mask(tape.constant(skew)), NumericalError);
  CHECK_NOTHROW(losses::cov_mask(tape.constant(skew), 1e-5));
  CHECK_THROWS_AS(losses::cov_unmask(e, 4), StructuralError);
}

TEST_CASE("global loss is zero for identical inputs and grows with divergence") {
  std::mt19937_64 rng(19);
  const Matrix a = random_matrix(rng, 6, 3);
  Tape tape;
  const std::vector<Var> s{tape.constant(a)};
  CHECK(losses::global_loss(s, s).item() == 0.0);
  double previous = 0.0;
  for (double eps : {0.1, 0.5, 1.0, 2.0}) {
    const std::vector<Var> t{tape.constant(a * (1.0 + eps))};
    const double v = losses::global_loss(s, t).item();
    CHECK(v > previous);
    previous = v;
  }
  const std::vector<Var> t{tape.constant(random_matrix(rng, 6, 3))};
  const double mean_mode = losses::global_loss(s, t, losses::GlobalMode::kMean).item();
  const double sum_mode = losses::global_loss(s, t, losses::GlobalMode::kSum).item();
  CHECK(sum_mode == doctest::Approx(6.0 * mean_mode).epsilon(1e-12));
}

TEST_CASE("variation signal and the telescoping identity") {
  Tape tape;
  Matrix f(3, 2);
  f << 0, 1, 2, 3, 1, 1;
  const auto per_step = losses::variation_signal(tape.constant(f), losses::VariationMode::kPerStep);
  CHECK(per_step.values.value() == (Matrix(2, 1) << 4, -3).finished());
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(rng, 2 + trial % 8, 1 + trial % 5);
    const double scalar = losses::variation_signal(tape.constant(x), losses::VariationMode::kScalar).values.item();
    const double telescoped = (x.row(x.rows() - 1) - x.row(0)).sum() / static_cast<double>(x.rows() - 1);
    CHECK(std::abs(scalar - telescoped) < 1e-12);
  }
}

TEST_CASE("boundary loss") {
  std::mt19937_64 rng(29);
  Tape tape;
  const Matrix a = random_matrix(rng, 5, 3);
  const std::vector<Var> s{tape.constant(a)};
  CHECK(losses::boundary_loss(s, s).item() == 0.0);
  // A per-channel constant shift leaves the variation signal unchanged.
  const std::vector<Var> shifted{tape.constant(a.rowwise() + Matrix::Constant(1, 3, 2.0).row(0))};
  CHECK(losses::boundary_loss(s, shifted).item() < 1e-12);
  const auto vs = losses::variation_signal(s[0], losses::VariationMode::kPerStep);
  const auto vt = losses::variation_signal(s[0], losses::VariationMode::kScalar);
  CHECK_THROWS_AS(losses::boundary_distance(vt, vs), StructuralError);
}

TEST_CASE("classification loss") {
  Tape tape;
  const Var z = tape.constant(Matrix::Zero(2, 2));
  CHECK(losses::classification_loss(z, Matrix::Ones(2, 2)).item() == doctest::Approx(std::log(2.0)));
  Matrix big(1, 2);
  big << 40.0, -40.0;
  Matrix y(1, 2);
  y << 1.0, 0.0;
  CHECK(losses::classification_loss(tape.constant(big), y).item() < 1e-15);
  CHECK_THROWS_AS(losses::classification_loss(z, Matrix::Constant(2, 2, 0.5)), StructuralError);
  CHECK_THROWS_AS(losses::classification_loss(z, Matrix::Ones(2, 3)), StructuralError);
}

TEST_CASE("total loss weights the terms") {
  Tape tape;
  auto c = [&](double v) { return tape.constant(Matrix::Constant(1, 1, v)); };
  const losses::LossWeights w{300.0, 100.0, 5.0};
  CHECK(losses::total_loss(c(1), c(2), c(3), c(4), w).item() == 1 + 600 + 300 + 20);
  CHECK(losses::total_loss(1.0, 2.0, 3.0, 4.0, w) == 921.0);
  CHECK(losses::total_loss(1.5, 2.0, 3.0, 4.0, {0, 0, 0}) == 1.5);
  CHECK_THROWS_AS(losses::total_loss(1.0, 1.0, 1.0, 1.0, {-1.0, 0, 0}), ConfigError);
}

TEST_CASE("teacher features never receive gradient") {
  std::mt19937_64 rng(31);
  Tape tape;
  const Var s = tape.leaf(random_matrix(rng, 5, 3));
  const Var t = tape.leaf(random_matrix(rng, 5, 3));
  losses::SnippetPairing pairing;
  pairing.positives.emplace_back(0, 0);
  const std::vector<Var> sl{s}, tl{t};
  const Var total = losses::atomic_loss(sl, tl, pairing, {}) + losses::global_loss(sl, tl) + losses::boundary_loss(sl, tl);
  tape.backward(total);
  CHECK(tape.has_grad(s));
  CHECK_FALSE(tape.has_grad(t));
}

TEST_CASE("losses pass finite-difference checks") {
  std::mt19937_64 rng(37);
  const Matrix s = random_matrix(rng, 6, 4), t = random_matrix(rng, 6, 4), n = random_matrix(rng, 4, 4);
  losses::SnippetPairing pairing;
  pairing.positives.emplace_back(0, 0);
  pairing.negatives.emplace_back(0, 1);
  auto atomic = [&](Tape& tape, const Var& x) {
    const std::vector<Var> sl{x};
    return losses::atomic_loss(sl, constants(tape, {t, n}), pairing, {0.3, 0.8, true});
  };
  auto global = [&](Tape& tape, const Var& x) {
    const std::vector<Var> sl{x};
    return losses::global_loss(sl, constants(tape, {t}), losses::GlobalMode::kSum);
  };
  auto boundary = [&](Tape& tape, const Var& x) {
    const std::vector<Var> sl{x};
    return losses::boundary_loss(sl, constants(tape, {t}));
  };
  CHECK(core::finite_diff_check(atomic, s, 1e-6) < 1e-6);
  CHECK(core::finite_diff_check(global, s, 1e-6) < 1e-6);
  CHECK(core::finite_diff_check(boundary, s, 1e-6) < 1e-6);
}
