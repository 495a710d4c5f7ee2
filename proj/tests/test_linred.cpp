#include "doctest.h"

#include "cpnmor/error.hpp"
#include "cpnmor/linred.hpp"

#include <random>

using namespace cpnmor;

namespace {

SnapshotSet random_set(Eigen::Index d, Eigen::Index m, unsigned seed, bool weighted) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  SnapshotSet s;
  s.states.resize(d, m);
  for (Eigen::Index i = 0; i < s.states.size(); ++i) s.states.data()[i] = n01(rng);
  if (weighted) {
    std::uniform_real_distribution<double> w(0.2, 3.0);
    s.norm_weights = Eigen::VectorXd(d);
    for (auto& v : *s.norm_weights) v = w(rng);
  }
  return s;
}

double tail_energy(const Eigen::VectorXd& sigma, Eigen::Index n) {
  return sigma.tail(sigma.size() - n).squaredNorm();
}

}  // namespace

TEST_CASE("pca of a rank-one set") {
  SnapshotSet s;
  s.states = (Eigen::MatrixXd(2, 2) << 1, 0, 0, 0).finished();
  const ReducedBasis b = empirical_pca(s, XGeometry(2), false);
  CHECK(b.spectrum(0) == doctest::Approx(1.0));
  CHECK(std::abs(b.spectrum(1)) < 1e-14);
  CHECK(std::abs(b.basis(0, 0)) == doctest::Approx(1.0));

  SnapshotSet dup;
  dup.states = Eigen::MatrixXd::Ones(2, 2);
  const ReducedBasis bd = empirical_pca(dup, XGeometry(2), false);
  CHECK(bd.spectrum(0) == doctest::Approx(2.0));
  CHECK(std::abs(bd.spectrum(1)) < 1e-14);
}

TEST_CASE("pca tail identity and gram") {
  for (bool weighted : {false, true}) {
    for (bool center : {false, true}) {
      const SnapshotSet s = random_set(8, 5, 3 + weighted, weighted);
      const XGeometry g = XGeometry::from(s);
      const ReducedBasis b = empirical_pca(s, g, center);
      CHECK(gram_defect(b, g) < 1e-10);
      for (Eigen::Index n = 0; n <= b.rank(); ++n) {
        const double direct = residual_norms(b, n, s, g).squaredNorm();
        CHECK(direct == doctest::Approx(tail_energy(b.spectrum, n)).epsilon(1e-8).scale(1.0));
      }
      for (Eigen::Index i = 1; i < b.spectrum.size(); ++i) {
        CHECK(b.spectrum(i) <= b.spectrum(i - 1));
      }
    }
  }
}

TEST_CASE("pca works on the transpose side too") {
  const SnapshotSet s = random_set(4, 30, 11, true);
  const XGeometry g = XGeometry::from(s);
  const ReducedBasis b = empirical_pca(s, g, true);
  CHECK(gram_defect(b, g) < 1e-10);
  CHECK(residual_norms(b, b.rank(), s, g).maxCoeff() < 1e-10);
}

TEST_CASE("strong greedy") {
  SnapshotSet s;
  s.states = (Eigen::MatrixXd(2, 2) << 2, 0, 0, 1).finished();
  const ReducedBasis b = greedy_basis(s, XGeometry(2), false);
  REQUIRE(b.rank() == 2);
  CHECK(b.basis(0, 0) == doctest::Approx(1.0));
  CHECK(b.spectrum(0) == doctest::Approx(2.0));
  CHECK(b.spectrum(1) == doctest::Approx(1.0));

  SnapshotSet dup;
  dup.states = (Eigen::MatrixXd(2, 2) << 1, 1, 0, 0).finished();
  const ReducedBasis bd = greedy_basis(dup, XGeometry(2), false);
  CHECK(bd.rank() == 1);
  CHECK(bd.spectrum(1) < 1e-12);

  const SnapshotSet full = random_set(6, 6, 5, true);
  const XGeometry g = XGeometry::from(full);
  const ReducedBasis bf = greedy_basis(full, g, false);
  CHECK(bf.rank() == 6);
  CHECK(gram_defect(bf, g) < 1e-10);
  CHECK(residual_norms(bf, 6, full, g).maxCoeff() < 1e-10);
}

TEST_CASE("greedy picks the worst sample at every step") {
  const SnapshotSet s = random_set(10, 14, 21, true);
  const XGeometry g = XGeometry::from(s);
  const ReducedBasis b = greedy_basis(s, g, true);
  for (Eigen::Index k = 0; k < b.rank(); ++k) {
    const Eigen::VectorXd r = residual_norms(b, k, s, g);
    CHECK(b.spectrum(k) == doctest::Approx(r.maxCoeff()).epsilon(1e-10));
  }
}

TEST_CASE("truncation selection") {
  ReducedBasis b;
  b.mode = BasisMode::Pca;
  b.offset = Eigen::VectorXd::Zero(3);
  b.basis = Eigen::MatrixXd::Identity(3, 3);
  b.spectrum = Eigen::Vector3d(10.0, 1.0, 0.01);
  SnapshotSet s;
  s.states = Eigen::Matrix3d(Eigen::Vector3d(10.0, 1.0, 0.01).asDiagonal());
  const XGeometry g(3);
  const double e0 = std::sqrt(101.0001);
  // tail after N=1 is sqrt(1.0001) <= 1.1
  CHECK(select_rank(b, s, g, Setting::MeanSquared, 1.1 / e0) == 1);
  CHECK(select_rank(b, s, g, Setting::MeanSquared, 1e-9) == 3);
  CHECK(select_truncation(b, s, g, Setting::MeanSquared, 1.1 / e0 / 0.5, 0.5) == 1);

  b.mode = BasisMode::Greedy;
  b.basis = b.basis.leftCols(2).eval();
  b.spectrum = b.spectrum.head(2).eval();
  CHECK_THROWS_WITH_AS(select_rank(b, s, g, Setting::MeanSquared, 1e-6),
                       "epsilon budget requires N > rank; decrease beta or epsilon",
                       FeasibilityError);
}

TEST_CASE("relative truncation errors agree between ms spectrum and direct residuals") {
  const SnapshotSet s = random_set(7, 12, 9, false);
  const XGeometry g(7);
  const ReducedBasis b = empirical_pca(s, g, true);
  const Eigen::VectorXd rel = relative_truncation_errors(b, s, g, Setting::MeanSquared);
  const double e0 = empirical_zero_error(s, g, Setting::MeanSquared);
  for (Eigen::Index n = 0; n <= b.rank(); ++n) {
    CHECK(rel(n) == doctest::Approx(residual_norms(b, n, s, g).norm() / e0).epsilon(1e-8).scale(1.0));
  }
  const Eigen::VectorXd wc = relative_truncation_errors(b, s, g, Setting::WorstCase);
  const double e0w = empirical_zero_error(s, g, Setting::WorstCase);
  for (Eigen::Index n = 0; n <= b.rank(); ++n) {
    CHECK(wc(n) == doctest::Approx(residual_norms(b, n, s, g).maxCoeff() / e0w).epsilon(1e-10).scale(1.0));
  }
}

TEST_CASE("projection coefficients") {
  const SnapshotSet s = random_set(6, 9, 13, true);
  const XGeometry g = XGeometry::from(s);
  const ReducedBasis b = empirical_pca(s, g, true);
  const auto n = b.rank();
  CHECK(project_coeffs(b, n, b.offset, g).norm() < 1e-13);
  const Eigen::VectorXd u = b.offset + 2.0 * b.basis.col(0);
  const Eigen::VectorXd c = project_coeffs(b, n, u, g);
  CHECK(c(0) == doctest::Approx(2.0));
  CHECK(c.tail(n - 1).norm() < 1e-12);

  const Eigen::VectorXd v = Eigen::VectorXd::Random(6);
  const Eigen::VectorXd w = Eigen::VectorXd::Random(6);
  const double al = 0.7, be = -1.3;
  const Eigen::VectorXd lhs = project_coeffs(b, n, al * v + be * w - (al + be - 1.0) * b.offset, g);
  const Eigen::VectorXd rhs = al * project_coeffs(b, n, v, g) + be * project_coeffs(b, n, w, g);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);

  // Reconstruction: the residual is X-orthogonal to the basis.
  const Eigen::VectorXd cv = project_coeffs(b, n, v, g);
  const Eigen::VectorXd r = v - b.offset - b.basis * cv;
  CHECK(project_coeffs(b, n, b.offset + r, g).norm() < 1e-12);
}

TEST_CASE("provided bases must be orthonormal") {
  const XGeometry g(Eigen::Vector3d(1, 4, 1));
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(3, 2);
  phi(0, 0) = 1.0;
  phi(1, 1) = 0.5;
  CHECK_NOTHROW(provided_basis(Eigen::VectorXd::Zero(3), phi, g));
  phi(1, 1) = 1.0;
  CHECK_THROWS_AS(provided_basis(Eigen::VectorXd::Zero(3), phi, g), InputError);
}
