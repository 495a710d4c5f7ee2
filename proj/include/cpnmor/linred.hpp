#pragma once

#include "cpnmor/snapdata.hpp"

#include <Eigen/Dense>

namespace cpnmor {

enum class BasisMode { Pca, Greedy, Provided };

const char* to_string(BasisMode m);
BasisMode basis_mode_from_string(const std::string& s);

/// Offset plus X-orthonormal basis vectors, ordered by importance.
///
/// In Pca mode `spectrum` holds the singular values sigma_i of the (centered,
/// M_X^{1/2}-scaled) snapshot matrix. In Greedy mode spectrum[k] is the largest
/// sample residual after k basis vectors, so it has one more entry than `basis`
/// has columns. Provided bases carry no spectrum.
struct ReducedBasis {
  Eigen::VectorXd offset;
  Eigen::MatrixXd basis;
  Eigen::VectorXd spectrum;
  BasisMode mode = BasisMode::Pca;

  Eigen::Index dim_state() const { return basis.rows(); }
  Eigen::Index rank() const { return basis.cols(); }

  /// Copy restricted to the first n columns (spectrum kept whole).
  ReducedBasis truncated(Eigen::Index n) const;
};

ReducedBasis empirical_pca(const SnapshotSet& s, const XGeometry& geom, bool center);

/// Strong greedy (exact argmax over the discrete sample set) with repeated
/// Gram-Schmidt. Ties go to the smallest sample index.
ReducedBasis greedy_basis(const SnapshotSet& s, const XGeometry& geom, bool center);

/// Wraps user-supplied X-orthonormal columns; throws if they are not.
ReducedBasis provided_basis(Eigen::VectorXd offset, Eigen::MatrixXd basis,
                            const XGeometry& geom);

/// Per-sample ||r_N(u^(k))||_X for the first n basis vectors.
Eigen::VectorXd residual_norms(const ReducedBasis& b, Eigen::Index n, const SnapshotSet& s,
                               const XGeometry& geom);

/// Relative truncation error ||r_n||_p / e_p(0) for every n = 0..rank.
Eigen::VectorXd relative_truncation_errors(const ReducedBasis& b, const SnapshotSet& s,
                                           const XGeometry& geom, Setting setting);

/// Minimal N with ||r_N||_p <= tolerance * e_p(0). Throws FeasibilityError
/// when even the full basis misses the tolerance.
Eigen::Index select_rank(const ReducedBasis& b, const SnapshotSet& s, const XGeometry& geom,
                         Setting setting, double tolerance);

/// select_rank at tolerance beta * epsilon.
Eigen::Index select_truncation(const ReducedBasis& b, const SnapshotSet& s,
                               const XGeometry& geom, Setting setting, double epsilon,
                               double beta);

/// (phi_i, u - offset)_X for i < n.
Eigen::VectorXd project_coeffs(const ReducedBasis& b, Eigen::Index n,
                               const Eigen::Ref<const Eigen::VectorXd>& u,
                               const XGeometry& geom);

/// Column-wise project_coeffs: an n x m matrix of coefficients.
Eigen::MatrixXd project_all(const ReducedBasis& b, Eigen::Index n,
                            const Eigen::Ref<const Eigen::MatrixXd>& states,
                            const XGeometry& geom);

/// Max |Phi^T M_X Phi - I| entry.
double gram_defect(const ReducedBasis& b, const XGeometry& geom);

}  // namespace cpnmor
