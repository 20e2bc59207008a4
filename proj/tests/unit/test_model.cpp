#include "doctest.h"

#include <filesystem>
#include <random>

#include "distill/core/binary_io.hpp"
#include "distill/model/temporal_filter.hpp"

using namespace distill;
using model::FilterShape;
using model::Matrix;

namespace {

Matrix random_matrix(std::uint64_t seed, Eigen::Index r, Eigen::Index c) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("distill_model_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("parameter count by construction") {
  const auto p = model::init_params(0, FilterShape{8, 4, 2, 2});
  CHECK(p.parameter_count() == 8 * 4 + 2 * (3 * 4 * 4 + 4 * 4) + 4 * 2);
  CHECK(p.parameter_count() == 168);
  CHECK(p.shape() == FilterShape{8, 4, 2, 2});
}

TEST_CASE("initialization is seeded and bounded by the fan-in") {
  const FilterShape shape{6, 5, 3, 3};
  const auto a = model::init_params(4, shape), b = model::init_params(4, shape), c = model::init_params(5, shape);
  CHECK(model::encode_checkpoint(a) == model::encode_checkpoint(b));
  CHECK(model::encode_checkpoint(a) != model::encode_checkpoint(c));
  for (const Matrix* m : a.tensors()) {
    const double bound = std::sqrt(1.0 / static_cast<double>(m->rows()));
    CHECK(m->cwiseAbs().maxCoeff() <= bound);
  }
}

TEST_CASE("fingerprints depend only on layers and channels") {
  const auto t = model::init_params(0, FilterShape{16, 8, 3, 4}, model::Role::kTeacher);
  const auto s = model::init_params(9, FilterShape{12, 8, 3, 4}, model::Role::kStudent);
  CHECK(t.fingerprint() == s.fingerprint());
  CHECK(t.fingerprint() == "L=4 C=8 dilations=1,2,4,8");
  CHECK(model::receptive_radius(5) == 32);
}

TEST_CASE("zero input and zero params give zero features and one-half probabilities") {
  const auto p = model::zero_params(FilterShape{3, 4, 2, 2});
  const auto f = model::forward_features(p, Matrix::Zero(6, 3));
  CHECK(f.features.isZero(0.0));
  CHECK(model::classify(p, f).isZero(0.0));
}

TEST_CASE("output shape follows the input length") {
  const auto p = model::init_params(1, FilterShape{3, 4, 2, 3});
  for (int steps : {2, 5, 17}) {
    const auto f = model::forward_features(p, random_matrix(steps, steps, 3));
    CHECK(f.features.rows() == steps);
    CHECK(f.features.cols() == 4);
  }
}

TEST_CASE("forward rejects mismatched and degenerate inputs") {
  const auto p = model::init_params(1, FilterShape{3, 4, 2, 2});
  CHECK_THROWS_AS(model::forward_features(p, Matrix::Zero(5, 4)), StructuralError);
  CHECK_THROWS_AS(model::forward_features(p, Matrix::Zero(1, 3)), DegenerateInputError);
}

TEST_CASE("a single-frame perturbation stays inside the receptive field") {
  const FilterShape shape{3, 4, 2, 3};
  const auto p = model::init_params(2, shape);
  const int steps = 40, radius = model::receptive_radius(shape.layers);
  const Matrix x = random_matrix(3, steps, 3);
  const Matrix base = model::forward_features(p, x).features;
  for (int t : {0, 7, 20, 39}) {
    Matrix y = x;
    y.row(t) += Matrix::Constant(1, 3, 0.5);
    const Matrix moved = model::forward_features(p, y).features;
    for (int s = 0; s < steps; ++s) {
      if (std::abs(s - t) > radius) {
        CAPTURE(t);
        CAPTURE(s);
        CHECK((moved.row(s) - base.row(s)).cwiseAbs().maxCoeff() == 0.0);
      }
    }
    CHECK((moved.row(t) - base.row(t)).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("classifier is linear in the features") {
  auto p = model::init_params(3, FilterShape{3, 4, 1, 1});
  p.classifier.setOnes();
  model::FeatureSequence f{model::Role::kStudent, 0, random_matrix(4, 6, 4)};
  const Matrix logits = model::classify(p, f);
  for (Eigen::Index t = 0; t < 6; ++t) CHECK(logits(t, 0) == doctest::Approx(f.features.row(t).sum()).epsilon(1e-14));

  model::FeatureSequence g{model::Role::kStudent, 0, random_matrix(5, 6, 4)};
  model::FeatureSequence mix{model::Role::kStudent, 0, 2.0 * f.features - 3.0 * g.features};
  const Matrix lhs = model::classify(p, mix), rhs = 2.0 * logits - 3.0 * model::classify(p, g);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("upsampling") {
  Matrix two(2, 1);
  two << 0.0, 2.0;
  const Matrix three = model::upsample_logits(two, 3);
  CHECK(three(0, 0) == 0.0);
  CHECK(three(1, 0) == 1.0);
  CHECK(three(2, 0) == 2.0);
  const Matrix x = random_matrix(6, 5, 3);
  CHECK(model::upsample_logits(x, 5) == x);
  const Matrix flat = model::upsample_logits(Matrix::Constant(4, 2, 1.25), 11);
  CHECK((flat.array() == 1.25).all());
  CHECK_THROWS_AS(model::upsample_logits(x, 4), StructuralError);
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto p = model::init_params(8, FilterShape{5, 3, 2, 2});
  const auto dir = temp_dir("ckpt");
  model::save_checkpoint(dir / "m.dsq", p);
  const auto q = model::load_checkpoint(dir / "m.dsq");
  CHECK(model::encode_checkpoint(q) == model::encode_checkpoint(p));

  std::string bytes = model::encode_checkpoint(p);
  CHECK(bytes.substr(0, 4) == "DSQ1");
  CHECK(bytes.size() == 4 + 4 * 4 + 8 * p.parameter_count());
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(model::decode_checkpoint(bad), doctest::Contains("DSQ1"), FormatError);
  CHECK_THROWS_AS(model::decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(model::decode_checkpoint(bytes + "x"), FormatError);
  CHECK_THROWS_AS(model::load_checkpoint(dir / "missing.dsq"), IoError);
}
