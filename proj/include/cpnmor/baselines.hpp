#pragma once

#include "cpnmor/cpn.hpp"

#include <cstdint>
#include <vector>

namespace cpnmor {

/// Affine PCA projection onto the first n modes, expressed as a CpnModel
/// without decoded coordinates (I = {1..n}).
CpnModel fit_linear(const SnapshotSet& s, const XGeometry& geom, int n, bool center = true);

/// D(a) = ubar + Phi_lin a + sum_{i<=j} a_i a_j phi_ij.
struct QuadraticModel {
  Eigen::VectorXd offset;
  Eigen::MatrixXd phi_lin;   // D x n
  Eigen::MatrixXd phi_quad;  // D x n(n+1)/2, columns ordered (i,j) lexicographically, i <= j
  double ridge = 0.0;        // selected regularization (relative to the mean feature energy)

  int n() const { return static_cast<int>(phi_lin.cols()); }
  /// Dimension of the affine space containing the decoder's range, n(n+3)/2.
  int ambient_dim() const { return n() * (n() + 3) / 2; }

  Eigen::MatrixXd encode_all(const Eigen::Ref<const Eigen::MatrixXd>& states,
                             const XGeometry& geom) const;
  Eigen::MatrixXd decode_all(const Eigen::Ref<const Eigen::MatrixXd>& a) const;
};

/// Quadratic features a_i a_j (i <= j) for each column of a.
Eigen::MatrixXd quadratic_features(const Eigen::Ref<const Eigen::MatrixXd>& a);

/// Default ridge grid {1e-10, 1e-9, ..., 1e0}.
std::vector<double> default_ridge_grid();

/// Quadratic manifold on the first n PCA modes; the ridge weight is chosen by
/// 5-fold cross-validation with folds shuffled from `seed`.
QuadraticModel fit_quadratic(const SnapshotSet& s, const XGeometry& geom, int n,
                             const std::vector<double>& ridge_grid, std::uint64_t seed = 0,
                             bool center = true);

/// Setting-matched relative reconstruction error of the quadratic decoder.
double relative_error(const QuadraticModel& model, const SnapshotSet& data,
                      const XGeometry& geom, Setting setting = Setting::MeanSquared);

}  // namespace cpnmor
