#include "cpnmor/linred.hpp"

#include "cpnmor/error.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace cpnmor {

namespace {

Eigen::MatrixXd centered(const SnapshotSet& s, const Eigen::VectorXd& offset) {
  return s.states.colwise() - offset;
}

void check_basis_dims(const ReducedBasis& b, Eigen::Index n, Eigen::Index d) {
  if (n < 0 || n > b.rank()) {
    throw InputError("requested " + std::to_string(n) + " basis vectors but basis has rank " +
                     std::to_string(b.rank()));
  }
  if (d != b.dim_state()) {
    throw InputError("state dimension " + std::to_string(d) + " does not match basis dimension " +
                     std::to_string(b.dim_state()));
  }
}

}  // namespace

const char* to_string(BasisMode m) {
  switch (m) {
    case BasisMode::Pca: return "pca";
    case BasisMode::Greedy: return "greedy";
    case BasisMode::Provided: return "provided";
  }
  return "?";
}

BasisMode basis_mode_from_string(const std::string& s) {
  if (s == "pca") return BasisMode::Pca;
  if (s == "greedy") return BasisMode::Greedy;
  if (s == "provided") return BasisMode::Provided;
  throw InputError("unknown basis mode '" + s + "'");
}

ReducedBasis ReducedBasis::truncated(Eigen::Index n) const {
  check_basis_dims(*this, n, dim_state());
  ReducedBasis out;
  out.offset = offset;
  out.basis = basis.leftCols(n);
  out.spectrum = spectrum;
  out.mode = mode;
  return out;
}

ReducedBasis empirical_pca(const SnapshotSet& s, const XGeometry& geom, bool center) {
  s.validate();
  if (center && s.num_samples() < 2) throw InputError("centered PCA needs at least 2 samples");
  ReducedBasis b;
  b.mode = BasisMode::Pca;
  b.offset = center ? Eigen::VectorXd(s.states.rowwise().mean())
                    : Eigen::VectorXd::Zero(s.dim_state());
  const Eigen::MatrixXd a = geom.scale(centered(s, b.offset));
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU);
  if (!svd.singularValues().allFinite()) throw NumericalError("SVD of snapshot matrix failed");
  b.spectrum = svd.singularValues();
  b.basis = geom.unscale(svd.matrixU());
  return b;
}

ReducedBasis greedy_basis(const SnapshotSet& s, const XGeometry& geom, bool center) {
  s.validate();
  ReducedBasis b;
  b.mode = BasisMode::Greedy;
  b.offset = center ? Eigen::VectorXd(s.states.rowwise().mean())
                    : Eigen::VectorXd::Zero(s.dim_state());

  // Work in scaled coordinates where the X inner product is Euclidean.
  Eigen::MatrixXd residual = geom.scale(centered(s, b.offset));
  const double stop = 1e-13 * empirical_zero_error(s, geom, Setting::WorstCase);
  const Eigen::Index max_rank = std::min(s.dim_state(), s.num_samples());

  Eigen::MatrixXd q(s.dim_state(), max_rank);
  std::vector<double> deltas;
  Eigen::Index rank = 0;
  while (true) {
    const Eigen::VectorXd norms = residual.colwise().norm().transpose();
    Eigen::Index pick = 0;
    const double worst = norms.maxCoeff(&pick);  // first maximal index
    deltas.push_back(worst);
    if (rank == max_rank || worst < stop) break;

    Eigen::VectorXd v = residual.col(pick);
    for (int pass = 0; pass < 2; ++pass) {
      v -= q.leftCols(rank) * (q.leftCols(rank).transpose() * v);
    }
    const double nv = v.norm();
    if (nv <= stop) break;
    q.col(rank) = v / nv;
    residual -= q.col(rank) * (q.col(rank).transpose() * residual);
    ++rank;
  }
  b.basis = geom.unscale(q.leftCols(rank));
  b.spectrum = Eigen::Map<Eigen::VectorXd>(deltas.data(), static_cast<Eigen::Index>(deltas.size()));
  return b;
}

ReducedBasis provided_basis(Eigen::VectorXd offset, Eigen::MatrixXd basis,
                            const XGeometry& geom) {
  ReducedBasis b;
  b.mode = BasisMode::Provided;
  b.offset = std::move(offset);
  b.basis = std::move(basis);
  if (b.offset.size() != b.basis.rows() || b.basis.rows() != geom.dim()) {
    throw InputError("provided basis dimensions do not match the state dimension");
  }
  if (gram_defect(b, geom) > 1e-10) throw InputError("provided basis is not X-orthonormal");
  return b;
}

Eigen::VectorXd residual_norms(const ReducedBasis& b, Eigen::Index n, const SnapshotSet& s,
                               const XGeometry& geom) {
  check_basis_dims(b, n, s.dim_state());
  const Eigen::MatrixXd a = geom.scale(centered(s, b.offset));
  const Eigen::MatrixXd q = geom.scale(b.basis.leftCols(n));
  const Eigen::MatrixXd r = a - q * (q.transpose() * a);
  return r.colwise().norm().transpose();
}

Eigen::VectorXd relative_truncation_errors(const ReducedBasis& b, const SnapshotSet& s,
                                           const XGeometry& geom, Setting setting) {
  check_basis_dims(b, 0, s.dim_state());
  const double e0 = empirical_zero_error(s, geom, setting);
  const Eigen::Index r = b.rank();
  Eigen::VectorXd out(r + 1);

  if (setting == Setting::MeanSquared && b.mode == BasisMode::Pca && b.spectrum.size() >= r) {
    const Eigen::VectorXd lambda = b.spectrum.array().square();
    double tail = lambda.sum();
    for (Eigen::Index n = 0; n <= r; ++n) {
      if (n > 0) tail = lambda.tail(lambda.size() - n).sum();
      out(n) = std::sqrt(std::max(tail, 0.0)) / e0;
    }
    return out;
  }

  // Direct residual updates; each step removes one rank-one component.
  Eigen::MatrixXd residual = geom.scale(centered(s, b.offset));
  const Eigen::MatrixXd q = geom.scale(b.basis);
  for (Eigen::Index n = 0; n <= r; ++n) {
    const Eigen::VectorXd norms = residual.colwise().norm().transpose();
    out(n) = (setting == Setting::MeanSquared ? norms.norm() : norms.maxCoeff()) / e0;
    if (n < r) residual -= q.col(n) * (q.col(n).transpose() * residual);
  }
  return out;
}

Eigen::Index select_rank(const ReducedBasis& b, const SnapshotSet& s, const XGeometry& geom,
                         Setting setting, double tolerance) {
  const Eigen::VectorXd rel = relative_truncation_errors(b, s, geom, setting);
  for (Eigen::Index n = 0; n < rel.size(); ++n) {
    if (rel(n) <= tolerance) return n;
  }
  throw FeasibilityError("epsilon budget requires N > rank; decrease beta or epsilon");
}

Eigen::Index select_truncation(const ReducedBasis& b, const SnapshotSet& s,
                               const XGeometry& geom, Setting setting, double epsilon,
                               double beta) {
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  if (!(beta > 0.0 && beta < 1.0)) throw InputError("beta must lie in (0, 1)");
  return select_rank(b, s, geom, setting, beta * epsilon);
}

Eigen::VectorXd project_coeffs(const ReducedBasis& b, Eigen::Index n,
                               const Eigen::Ref<const Eigen::VectorXd>& u,
                               const XGeometry& geom) {
  check_basis_dims(b, n, u.size());
  const Eigen::VectorXd w = geom.weights();
  return b.basis.leftCols(n).transpose() * (w.asDiagonal() * (u - b.offset));
}

Eigen::MatrixXd project_all(const ReducedBasis& b, Eigen::Index n,
                            const Eigen::Ref<const Eigen::MatrixXd>& states,
                            const XGeometry& geom) {
  check_basis_dims(b, n, states.rows());
  const Eigen::MatrixXd q = geom.scale(b.basis.leftCols(n));
  return q.transpose() * geom.scale(states.colwise() - b.offset);
}

double gram_defect(const ReducedBasis& b, const XGeometry& geom) {
  if (b.rank() == 0) return 0.0;
  const Eigen::MatrixXd q = geom.scale(b.basis);
  const Eigen::MatrixXd g = q.transpose() * q;
  return (g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

}  // namespace cpnmor
