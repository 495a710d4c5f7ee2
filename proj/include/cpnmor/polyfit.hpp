#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace cpnmor {

using MultiIndex = std::vector<int>;

enum class IndexKind { TotalDegree, HyperbolicCross, PartialDegree };

const char* to_string(IndexKind k);
IndexKind index_kind_from_string(const std::string& s);

struct IndexSetSpec {
  IndexKind kind = IndexKind::HyperbolicCross;
  int degree = 5;
  /// Maximum number of active variables, PartialDegree only. 0 means d.
  int interaction = 0;
};

/// A downward-closed set of multi-indices in graded lexicographic order.
struct MultiIndexSet {
  int dim = 0;
  IndexSetSpec spec;
  std::vector<MultiIndex> indices;

  std::size_t size() const { return indices.size(); }
  bool is_downward_closed() const;
};

inline constexpr std::size_t kDefaultIndexCap = 20000;

/// Enumerates the set defined by `spec` in d variables. Throws InputError when
/// it would exceed `cap` indices.
MultiIndexSet build_index_set(int d, const IndexSetSpec& spec,
                              std::size_t cap = kDefaultIndexCap);

/// True when the set contains every componentwise predecessor of each member.
bool is_downward_closed(std::span<const MultiIndex> indices);

/// Graded-lex comparison: total degree first, then lexicographic.
bool graded_lex_less(const MultiIndex& a, const MultiIndex& b);

/// L2([-1,1], dt/2)-orthonormal Legendre polynomial sqrt(2k+1) P_k(t).
double legendre_eval(int k, double t);

/// Axis-aligned bounding box of the training inputs, used to map each
/// coordinate onto [-1, 1]. Degenerate coordinates are flagged constant.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<bool> constant;

  Eigen::Index dim() const { return lower.size(); }
  double to_unit(Eigen::Index j, double x) const;
};

/// Box from an m x d sample matrix (one sample per row).
Box estimate_box(const Eigen::Ref<const Eigen::MatrixXd>& samples);

/// Sparse tensor-Legendre polynomial on a box.
struct PolynomialModel {
  int dim = 0;
  std::vector<MultiIndex> support;
  Eigen::VectorXd coeffs;
  Box box;
  IndexSetSpec spec;

  double operator()(std::span<const double> x) const;
  /// Values at every row of an m x d matrix.
  Eigen::VectorXd evaluate(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  int max_degree() const;
};

/// m x |indices| design matrix of tensor Legendre polynomials on `box`.
Eigen::MatrixXd design_matrix(std::span<const MultiIndex> indices, const Box& box,
                              const Eigen::Ref<const Eigen::MatrixXd>& x);

/// Minimum-norm least squares via SVD with cutoff 1e-12 * sigma_max.
struct LeastSquaresFit {
  Eigen::VectorXd coeffs;
  Eigen::VectorXd fitted;
  Eigen::VectorXd leverages;  // diagonal of the hat matrix
};
LeastSquaresFit least_squares_min_norm(const Eigen::Ref<const Eigen::MatrixXd>& design,
                                       const Eigen::Ref<const Eigen::VectorXd>& y);

/// Closed-form leave-one-out error sqrt((1/m) sum ((y_k - yhat_k) / (1 - h_kk))^2).
/// Infinite when some leverage reaches 1 - 1e-10.
double loo_error(const Eigen::Ref<const Eigen::VectorXd>& y,
                 const Eigen::Ref<const Eigen::VectorXd>& fitted,
                 const Eigen::Ref<const Eigen::VectorXd>& leverages);

/// One support on the lasso homotopy path, with its least-squares refit.
struct PathPoint {
  std::vector<Eigen::Index> support;  // column indices, in activation order
  Eigen::VectorXd coeffs;             // refit coefficients on `support` (raw columns)
  double loo = 0.0;
};

/// Column-normalized design and its Gram matrix, shared by every target
/// regressed on the same inputs.
struct LarsProblem {
  explicit LarsProblem(const Eigen::Ref<const Eigen::MatrixXd>& design);

  Eigen::MatrixXd x;       // design with unit-norm columns
  Eigen::VectorXd scale;   // original column norms (1 for zero columns)
  Eigen::MatrixXd gram;    // x^T x
  std::vector<char> zero;  // columns that vanish on the samples
};

/// LARS with the lasso modification on the columns of `design`, stopping at
/// `max_active` active columns. Each distinct support is refit by ordinary
/// least squares and scored by leave-one-out error. Correlation ties go to
/// the smallest column index. Columns numerically dependent on the active
/// set are skipped.
std::vector<PathPoint> lasso_lars_path(const Eigen::Ref<const Eigen::MatrixXd>& design,
                                       const Eigen::Ref<const Eigen::VectorXd>& y,
                                       Eigen::Index max_active);
std::vector<PathPoint> lasso_lars_path(const LarsProblem& problem,
                                       const Eigen::Ref<const Eigen::VectorXd>& y,
                                       Eigen::Index max_active);

struct SparseFit {
  PolynomialModel model;
  double loo_error = 0.0;
  std::size_t path_length = 0;
  std::size_t candidate_size = 0;
};

/// Sparse polynomial regression on fixed inputs (one sample per row of x).
/// Construction builds the box, the candidate set and the normalized design;
/// fit() runs the lasso path for one target and keeps the support with the
/// smallest LOO error (smaller support on ties). fit() is const and may be
/// called concurrently.
class SparseRegressor {
 public:
  SparseRegressor(const Eigen::Ref<const Eigen::MatrixXd>& x, const IndexSetSpec& spec,
                  std::size_t index_cap = kDefaultIndexCap);

  SparseFit fit(const Eigen::Ref<const Eigen::VectorXd>& y) const;

  const Box& box() const { return box_; }
  const std::vector<MultiIndex>& candidates() const { return candidates_; }
  const Eigen::MatrixXd& design() const { return design_; }

 private:
  Eigen::MatrixXd x_;
  IndexSetSpec spec_;
  Box box_;
  std::vector<MultiIndex> candidates_;
  Eigen::MatrixXd design_;
  LarsProblem problem_;
};

/// One-shot SparseRegressor(x, spec).fit(y).
SparseFit fit_sparse(const Eigen::Ref<const Eigen::MatrixXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& y, const IndexSetSpec& spec,
                     std::size_t index_cap = kDefaultIndexCap);

/// How an input coordinate enters the mixed norm ||.||_{i,gamma}.
struct InputCoord {
  bool decoded = false;
  double gamma = 1.0;  // Lipschitz constant of the decoded input
};

inline constexpr std::size_t kDefaultPairBudget = 500000;

/// Visits every index pair k < l of m samples when there are at most
/// `pair_budget` of them, else `pair_budget` random pairs drawn from `seed`.
template <typename Visit>
void for_each_pair(Eigen::Index m, std::size_t pair_budget, std::uint64_t seed, Visit&& visit) {
  if (m < 2) return;
  const double total = 0.5 * static_cast<double>(m) * static_cast<double>(m - 1);
  if (total <= static_cast<double>(pair_budget)) {
    for (Eigen::Index k = 0; k < m; ++k) {
      for (Eigen::Index l = k + 1; l < m; ++l) visit(k, l);
    }
    return;
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, m - 1);
  for (std::size_t n = 0; n < pair_budget; ++n) {
    const Eigen::Index k = pick(rng);
    Eigen::Index l = pick(rng);
    while (l == k) l = pick(rng);
    visit(k, l);
  }
}

/// Empirical Lipschitz constant of sample values `f` w.r.t. inputs `b`
/// (one row per sample) under max{ ||encoder block||_2, max_j |b_j| / gamma_j }.
/// Uses all pairs when affordable, else `pair_budget` random pairs from `seed`.
double lipschitz_estimate(const Eigen::Ref<const Eigen::VectorXd>& f,
                          const Eigen::Ref<const Eigen::MatrixXd>& b,
                          std::span<const InputCoord> coords, std::size_t pair_budget,
                          std::uint64_t seed);

double lipschitz_estimate(const PolynomialModel& model, const Eigen::Ref<const Eigen::MatrixXd>& b,
                          std::span<const InputCoord> coords, std::size_t pair_budget,
                          std::uint64_t seed);

}  // namespace cpnmor
