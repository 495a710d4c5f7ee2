#include "cpnmor/polyfit.hpp"

#include "cpnmor/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace cpnmor {

namespace {

/// Nonzero entries of a multi-index as (coordinate, degree) pairs.
using SparseIndex = std::vector<std::pair<int, int>>;

std::vector<SparseIndex> sparsify(std::span<const MultiIndex> indices) {
  std::vector<SparseIndex> out;
  out.reserve(indices.size());
  for (const auto& idx : indices) {
    SparseIndex s;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (idx[j] > 0) s.emplace_back(static_cast<int>(j), idx[j]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

int max_degree_of(std::span<const MultiIndex> indices) {
  int k = 0;
  for (const auto& idx : indices) {
    for (int v : idx) k = std::max(k, v);
  }
  return k;
}

/// Fills table(k, j) = legendre_eval(k, t_j) for k <= max_deg.
void legendre_table(int max_deg, const Eigen::Ref<const Eigen::VectorXd>& t,
                    Eigen::MatrixXd& table) {
  table.resize(max_deg + 1, t.size());
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    double p_prev = 1.0;
    double p_cur = t(j);
    table(0, j) = 1.0;
    if (max_deg >= 1) table(1, j) = std::sqrt(3.0) * p_cur;
    for (int k = 1; k < max_deg; ++k) {
      const double p_next = ((2.0 * k + 1.0) * t(j) * p_cur - k * p_prev) / (k + 1.0);
      p_prev = p_cur;
      p_cur = p_next;
      table(k + 1, j) = std::sqrt(2.0 * (k + 1) + 1.0) * p_cur;
    }
  }
}

double pair_norm(const Eigen::Ref<const Eigen::MatrixXd>& b, Eigen::Index k, Eigen::Index l,
                 std::span<const InputCoord> coords) {
  double enc = 0.0;
  double dec = 0.0;
  for (Eigen::Index j = 0; j < b.cols(); ++j) {
    const double diff = b(k, j) - b(l, j);
    if (coords[j].decoded) {
      dec = std::max(dec, std::abs(diff) / coords[j].gamma);
    } else {
      enc += diff * diff;
    }
  }
  return std::max(std::sqrt(enc), dec);
}

}  // namespace

double legendre_eval(int k, double t) {
  if (k < 0) throw InputError("Legendre degree must be non-negative");
  if (k == 0) return 1.0;
  double p_prev = 1.0;
  double p_cur = t;
  for (int n = 1; n < k; ++n) {
    const double p_next = ((2.0 * n + 1.0) * t * p_cur - n * p_prev) / (n + 1.0);
    p_prev = p_cur;
    p_cur = p_next;
  }
  return std::sqrt(2.0 * k + 1.0) * p_cur;
}

double Box::to_unit(Eigen::Index j, double x) const {
  if (constant[static_cast<std::size_t>(j)]) return 0.0;
  return (2.0 * x - (upper(j) + lower(j))) / (upper(j) - lower(j));
}

Box estimate_box(const Eigen::Ref<const Eigen::MatrixXd>& samples) {
  if (samples.rows() < 1) throw InputError("cannot estimate a box from zero samples");
  Box box;
  box.lower = samples.colwise().minCoeff().transpose();
  box.upper = samples.colwise().maxCoeff().transpose();
  box.constant.resize(static_cast<std::size_t>(samples.cols()));
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    const double width = box.upper(j) - box.lower(j);
    box.constant[j] = width <= 1e-12 * std::max(1.0, std::abs(box.lower(j)));
  }
  return box;
}

Eigen::MatrixXd design_matrix(std::span<const MultiIndex> indices, const Box& box,
                              const Eigen::Ref<const Eigen::MatrixXd>& x) {
  const Eigen::Index m = x.rows();
  const Eigen::Index d = x.cols();
  if (d != box.dim()) throw InputError("input dimension does not match the polynomial box");
  const auto sparse = sparsify(indices);
  const int max_deg = max_degree_of(indices);

  // tables[j](k, row) = normalized Legendre of degree k at scaled x(row, j)
  std::vector<Eigen::MatrixXd> tables(static_cast<std::size_t>(d));
  Eigen::VectorXd t(m);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index r = 0; r < m; ++r) t(r) = box.to_unit(j, x(r, j));
    legendre_table(max_deg, t, tables[j]);
  }

  Eigen::MatrixXd out(m, static_cast<Eigen::Index>(indices.size()));
  for (std::size_t c = 0; c < sparse.size(); ++c) {
    auto col = out.col(static_cast<Eigen::Index>(c));
    col.setOnes();
    for (const auto& [j, k] : sparse[c]) {
      col.array() *= tables[j].row(k).transpose().array();
    }
  }
  return out;
}

double PolynomialModel::operator()(std::span<const double> x) const {
  const Eigen::Map<const Eigen::RowVectorXd> row(x.data(), static_cast<Eigen::Index>(x.size()));
  return evaluate(row)(0);
}

Eigen::VectorXd PolynomialModel::evaluate(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (support.empty()) return Eigen::VectorXd::Zero(x.rows());
  return design_matrix(support, box, x) * coeffs;
}

int PolynomialModel::max_degree() const { return max_degree_of(support); }

LeastSquaresFit least_squares_min_norm(const Eigen::Ref<const Eigen::MatrixXd>& design,
                                       const Eigen::Ref<const Eigen::VectorXd>& y) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? 1e-12 * sv(0) : 0.0;
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > cutoff) ++rank;

  const Eigen::MatrixXd u = svd.matrixU().leftCols(rank);
  const Eigen::VectorXd uty = u.transpose() * y;
  LeastSquaresFit fit;
  fit.coeffs = svd.matrixV().leftCols(rank) *
               (uty.array() / sv.head(rank).array()).matrix();
  fit.fitted = u * uty;
  fit.leverages = u.rowwise().squaredNorm();
  return fit;
}

double loo_error(const Eigen::Ref<const Eigen::VectorXd>& y,
                 const Eigen::Ref<const Eigen::VectorXd>& fitted,
                 const Eigen::Ref<const Eigen::VectorXd>& leverages) {
  const Eigen::Index m = y.size();
  double acc = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    const double denom = 1.0 - leverages(k);
    if (denom <= 1e-10) return std::numeric_limits<double>::infinity();
    const double e = (y(k) - fitted(k)) / denom;
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(m));
}

SparseRegressor::SparseRegressor(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                 const IndexSetSpec& spec, std::size_t index_cap)
    : x_(x), spec_(spec), box_(estimate_box(x)), candidates_(), design_(),
      problem_(Eigen::MatrixXd(0, 0)) {
  const int d = static_cast<int>(x.cols());
  if (!x.allFinite()) throw InputError("fit_sparse: non-finite inputs");

  // Candidate set over the non-degenerate coordinates, embedded back into d dims.
  std::vector<int> live;
  for (int j = 0; j < d; ++j) {
    if (!box_.constant[j]) live.push_back(j);
  }
  if (live.empty()) {
    candidates_.emplace_back(static_cast<std::size_t>(d), 0);
  } else {
    const auto reduced = build_index_set(static_cast<int>(live.size()), spec, index_cap);
    candidates_.reserve(reduced.size());
    for (const auto& r : reduced.indices) {
      MultiIndex full(static_cast<std::size_t>(d), 0);
      for (std::size_t k = 0; k < live.size(); ++k) full[live[k]] = r[k];
      candidates_.push_back(std::move(full));
    }
  }
  design_ = design_matrix(candidates_, box_, x);
  problem_ = LarsProblem(design_);
}

SparseFit SparseRegressor::fit(const Eigen::Ref<const Eigen::VectorXd>& y) const {
  const Eigen::Index m = x_.rows();
  if (y.size() != m) throw InputError("fit_sparse: target length does not match sample count");
  if (!y.allFinite()) throw InputError("fit_sparse: non-finite targets");

  SparseFit out;
  out.model.dim = static_cast<int>(x_.cols());
  out.model.spec = spec_;
  out.model.box = box_;
  out.candidate_size = candidates_.size();

  const Eigen::Index cap = std::min<Eigen::Index>(
      std::max<Eigen::Index>(1, m / 2), static_cast<Eigen::Index>(candidates_.size()));
  const auto path = lasso_lars_path(problem_, y, cap);
  out.path_length = path.size();

  if (path.empty()) {
    // Zero target: the zero polynomial on the constant index.
    out.model.support = {candidates_.front()};
    out.model.coeffs = Eigen::VectorXd::Zero(1);
    out.loo_error = 0.0;
    return out;
  }

  double best_loo = std::numeric_limits<double>::infinity();
  for (const auto& pt : path) best_loo = std::min(best_loo, pt.loo);
  const double tie_tol = 1e-12 * std::max(best_loo, std::sqrt(y.squaredNorm() / m));
  const PathPoint* chosen = nullptr;
  for (const auto& pt : path) {
    if (!(pt.loo <= best_loo + tie_tol)) continue;
    if (!chosen || pt.support.size() < chosen->support.size()) chosen = &pt;
  }
  if (!chosen) chosen = &path.front();  // every LOO infinite

  // Store in candidate (graded-lex) order.
  std::vector<std::pair<Eigen::Index, double>> terms;
  for (std::size_t k = 0; k < chosen->support.size(); ++k) {
    terms.emplace_back(chosen->support[k], chosen->coeffs(static_cast<Eigen::Index>(k)));
  }
  std::sort(terms.begin(), terms.end());
  out.model.coeffs.resize(static_cast<Eigen::Index>(terms.size()));
  std::vector<Eigen::Index> columns;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    out.model.support.push_back(candidates_[terms[k].first]);
    out.model.coeffs(static_cast<Eigen::Index>(k)) = terms[k].second;
    columns.push_back(terms[k].first);
  }
  if (!out.model.coeffs.allFinite()) {
    out.model.coeffs = least_squares_min_norm(design_(Eigen::all, columns), y).coeffs;
  }
  out.loo_error = chosen->loo;
  return out;
}

SparseFit fit_sparse(const Eigen::Ref<const Eigen::MatrixXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& y, const IndexSetSpec& spec,
                     std::size_t index_cap) {
  if (x.rows() < 1) throw InputError("fit_sparse needs at least one sample");
  return SparseRegressor(x, spec, index_cap).fit(y);
}

double lipschitz_estimate(const Eigen::Ref<const Eigen::VectorXd>& f,
                          const Eigen::Ref<const Eigen::MatrixXd>& b,
                          std::span<const InputCoord> coords, std::size_t pair_budget,
                          std::uint64_t seed) {
  const Eigen::Index m = b.rows();
  if (f.size() != m) throw InputError("lipschitz_estimate: value count does not match samples");
  if (static_cast<Eigen::Index>(coords.size()) != b.cols()) {
    throw InputError("lipschitz_estimate: coordinate descriptors do not match input dimension");
  }
  for (const auto& c : coords) {
    if (c.decoded && !(c.gamma > 0.0)) {
      throw InputError("lipschitz_estimate: decoded coordinates need gamma > 0");
    }
  }
  if (m < 2) return 0.0;

  double best = 0.0;
  auto consider = [&](Eigen::Index k, Eigen::Index l) {
    const double den = pair_norm(b, k, l, coords);
    if (den < 1e-13) return;
    best = std::max(best, std::abs(f(k) - f(l)) / den);
  };

  for_each_pair(m, pair_budget, seed, consider);
  return best;
}

double lipschitz_estimate(const PolynomialModel& model, const Eigen::Ref<const Eigen::MatrixXd>& b,
                          std::span<const InputCoord> coords, std::size_t pair_budget,
                          std::uint64_t seed) {
  return lipschitz_estimate(model.evaluate(b), b, coords, pair_budget, seed);
}

}  // namespace cpnmor
