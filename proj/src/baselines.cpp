#include "cpnmor/baselines.hpp"

#include "cpnmor/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace cpnmor {

namespace {

/// Ridge solution W (nq x D) of min ||R - W^T F||^2 + lambda ||W||^2, R rows scaled.
Eigen::MatrixXd ridge_solve(const Eigen::MatrixXd& f, const Eigen::MatrixXd& r, double lambda) {
  Eigen::MatrixXd gram = f * f.transpose();
  gram.diagonal().array() += lambda;
  return gram.ldlt().solve(f * r.transpose());
}

double feature_energy(const Eigen::MatrixXd& f) {
  return f.rows() > 0 ? f.squaredNorm() / static_cast<double>(f.rows()) : 1.0;
}

}  // namespace

CpnModel fit_linear(const SnapshotSet& s, const XGeometry& geom, int n, bool center) {
  const ReducedBasis full = empirical_pca(s, geom, center);
  Eigen::Index rank = 0;
  while (rank < full.spectrum.size() && full.spectrum(rank) > 1e-13 * full.spectrum(0)) ++rank;
  if (n < 0 || n > rank) {
    throw FeasibilityError("n = " + std::to_string(n) + " exceeds the snapshot rank " +
                           std::to_string(rank));
  }
  CpnModel m;
  m.basis = full.truncated(n);
  for (int i = 1; i <= n; ++i) m.encoder_indices.push_back(i);
  m.setting = Setting::MeanSquared;
  m.config.center = center;
  m.config.basis = BasisChoice::Pca;
  m.config.n0 = n;
  m.zero_error = empirical_zero_error(s, geom, Setting::MeanSquared);
  m.achieved = evaluate(m, s, geom);
  return m;
}

Eigen::MatrixXd quadratic_features(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd q(n * (n + 1) / 2, a.cols());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) q.row(r++) = a.row(i).cwiseProduct(a.row(j));
  }
  return q;
}

std::vector<double> default_ridge_grid() {
  std::vector<double> g;
  for (int e = -10; e <= 0; ++e) g.push_back(std::pow(10.0, e));
  return g;
}

Eigen::MatrixXd QuadraticModel::encode_all(const Eigen::Ref<const Eigen::MatrixXd>& states,
                                           const XGeometry& geom) const {
  if (states.rows() != offset.size()) throw InputError("state dimension does not match model");
  const Eigen::VectorXd w = geom.weights();
  return phi_lin.transpose() * (w.asDiagonal() * (states.colwise() - offset));
}

Eigen::MatrixXd QuadraticModel::decode_all(const Eigen::Ref<const Eigen::MatrixXd>& a) const {
  if (a.rows() != n()) throw InputError("coefficient count does not match model");
  Eigen::MatrixXd out = phi_lin * a + phi_quad * quadratic_features(a);
  return out.colwise() + offset;
}

QuadraticModel fit_quadratic(const SnapshotSet& s, const XGeometry& geom, int n,
                             const std::vector<double>& ridge_grid, std::uint64_t seed,
                             bool center) {
  if (ridge_grid.empty()) throw InputError("ridge grid must not be empty");
  if (n < 1) throw InputError("quadratic manifold needs n >= 1");
  const CpnModel lin = fit_linear(s, geom, n, center);

  QuadraticModel qm;
  qm.offset = lin.basis.offset;
  qm.phi_lin = lin.basis.basis;
  const Eigen::MatrixXd a = qm.encode_all(s.states, geom);
  const Eigen::MatrixXd f = quadratic_features(a);
  // Residual targets in scaled coordinates, so that the Euclidean fit is the X fit.
  const Eigen::MatrixXd r =
      geom.scale((s.states.colwise() - qm.offset) - qm.phi_lin * a);
  const double energy = feature_energy(f);

  const Eigen::Index m = s.num_samples();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  constexpr int kFolds = 5;

  double best_err = std::numeric_limits<double>::infinity();
  double best_lambda = ridge_grid.front();
  for (double rel : ridge_grid) {
    const double lambda = rel * energy;
    double err = 0.0;
    for (int fold = 0; fold < kFolds && m >= kFolds; ++fold) {
      std::vector<Eigen::Index> tr, va;
      for (Eigen::Index k = 0; k < m; ++k) {
        (k % kFolds == fold ? va : tr).push_back(order[k]);
      }
      const Eigen::MatrixXd w = ridge_solve(f(Eigen::all, tr), r(Eigen::all, tr), lambda);
      err += (r(Eigen::all, va) - w.transpose() * f(Eigen::all, va)).squaredNorm();
    }
    if (err < best_err) {
      best_err = err;
      best_lambda = rel;
    }
  }
  qm.ridge = best_lambda;
  qm.phi_quad = geom.unscale(ridge_solve(f, r, best_lambda * energy).transpose());
  return qm;
}

double relative_error(const QuadraticModel& model, const SnapshotSet& data,
                      const XGeometry& geom, Setting setting) {
  const Eigen::MatrixXd recon = model.decode_all(model.encode_all(data.states, geom));
  const Eigen::VectorXd err = geom.column_norms(data.states - recon);
  const Eigen::VectorXd ref = geom.column_norms(data.states);
  return setting == Setting::MeanSquared ? err.norm() / ref.norm()
                                         : err.maxCoeff() / ref.maxCoeff();
}

}  // namespace cpnmor
