#include "cpnmor/polyfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cpnmor {

namespace {

// A unit column whose component orthogonal to the active span is below this
// is treated as dependent and never activated. Sample sets concentrated near low-dimensional curves
// make many candidate columns nearly dependent; admitting them yields huge
// cancelling coefficients that do not generalize off the samples.
constexpr double kDependenceTol = 1e-4;
constexpr double kInf = std::numeric_limits<double>::infinity();

/// Incrementally maintained thin QR of the active columns, together with the
/// least-squares residual and hat-matrix diagonal for the current support.
class ActiveQr {
 public:
  ActiveQr(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Eigen::Index capacity)
      : x_(x), y_(y), q_(x.rows(), capacity), r_(capacity, capacity), qty_(capacity) {
    reset();
  }

  void reset() {
    size_ = 0;
    residual_ = y_;
    leverage_ = Eigen::VectorXd::Zero(x_.rows());
  }

  /// Appends column j; returns false (leaving the state untouched) when it is
  /// numerically dependent on the current columns.
  bool append(Eigen::Index j) {
    Eigen::VectorXd v = x_.col(j);
    const double norm0 = v.norm();
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(size_);
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd h = q_.leftCols(size_).transpose() * v;
      v -= q_.leftCols(size_) * h;
      coef += h;
    }
    const double nv = v.norm();
    if (!(nv > kDependenceTol * norm0)) return false;
    q_.col(size_) = v / nv;
    r_.col(size_).head(size_) = coef;
    r_(size_, size_) = nv;
    qty_(size_) = q_.col(size_).dot(y_);
    residual_ -= qty_(size_) * q_.col(size_);
    leverage_ += q_.col(size_).array().square().matrix();
    ++size_;
    return true;
  }

  /// Refactors from scratch; returns the columns that no longer fit.
  std::vector<Eigen::Index> rebuild(const std::vector<Eigen::Index>& active) {
    reset();
    std::vector<Eigen::Index> rejected;
    for (Eigen::Index j : active) {
      if (!append(j)) rejected.push_back(j);
    }
    return rejected;
  }

  Eigen::Index size() const { return size_; }

  /// Solves (R^T R) z = rhs, i.e. the Gram system of the active columns.
  Eigen::VectorXd solve_gram(const Eigen::VectorXd& rhs) const {
    const auto r = r_.topLeftCorner(size_, size_).triangularView<Eigen::Upper>();
    Eigen::VectorXd z = r.transpose().solve(rhs);
    return r.solve(z);
  }

  /// Least-squares coefficients on the active columns.
  Eigen::VectorXd ols() const {
    return r_.topLeftCorner(size_, size_).triangularView<Eigen::Upper>().solve(qty_.head(size_));
  }

  double loo() const {
    const Eigen::VectorXd fitted = y_ - residual_;
    return loo_error(y_, fitted, leverage_);
  }

 private:
  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  Eigen::MatrixXd q_;
  Eigen::MatrixXd r_;
  Eigen::VectorXd qty_;
  Eigen::VectorXd residual_;
  Eigen::VectorXd leverage_;
  Eigen::Index size_ = 0;
};

}  // namespace

LarsProblem::LarsProblem(const Eigen::Ref<const Eigen::MatrixXd>& design)
    : scale(design.colwise().norm().transpose()),
      zero(static_cast<std::size_t>(design.cols()), 0) {
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    if (!(scale(j) > 0.0)) {
      zero[j] = 1;
      scale(j) = 1.0;
    }
  }
  x = design * scale.cwiseInverse().asDiagonal();
  gram.noalias() = x.transpose() * x;
}

std::vector<PathPoint> lasso_lars_path(const Eigen::Ref<const Eigen::MatrixXd>& design,
                                       const Eigen::Ref<const Eigen::VectorXd>& y,
                                       Eigen::Index max_active) {
  return lasso_lars_path(LarsProblem(design), y, max_active);
}

std::vector<PathPoint> lasso_lars_path(const LarsProblem& problem,
                                       const Eigen::Ref<const Eigen::VectorXd>& y,
                                       Eigen::Index max_active) {
  const Eigen::MatrixXd& x = problem.x;
  const Eigen::MatrixXd& gram = problem.gram;
  const Eigen::VectorXd& scale = problem.scale;
  const Eigen::Index p = x.cols();
  std::vector<PathPoint> path;
  if (p == 0 || max_active < 1) return path;
  max_active = std::min({max_active, p, x.rows()});

  std::vector<char> excluded = problem.zero;
  const Eigen::VectorXd yv = y;
  const Eigen::VectorXd xty = x.transpose() * yv;

  std::vector<char> active_flag(static_cast<std::size_t>(p), 0);
  std::vector<Eigen::Index> active;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  ActiveQr qr(x, yv, max_active);

  auto record = [&] {
    PathPoint pt;
    pt.support = active;
    pt.coeffs = qr.ols().cwiseQuotient(
        Eigen::VectorXd(Eigen::VectorXd::NullaryExpr(static_cast<Eigen::Index>(active.size()),
                                                     [&](Eigen::Index k) { return scale(active[k]); })));
    pt.loo = qr.loo();
    path.push_back(std::move(pt));
  };

  auto correlations = [&] {
    Eigen::VectorXd c = xty;
    for (Eigen::Index j : active) c -= gram.col(j) * beta(j);
    return c;
  };

  // Most correlated usable inactive column (first index on ties), or -1.
  auto best_inactive = [&](const Eigen::VectorXd& c) {
    Eigen::Index best = -1;
    double val = -1.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (active_flag[j] || excluded[j]) continue;
      if (std::abs(c(j)) > val) {
        val = std::abs(c(j));
        best = j;
      }
    }
    return best;
  };

  Eigen::VectorXd c = correlations();
  const double c0 = c.cwiseAbs().maxCoeff();
  if (!(c0 > 0.0)) return path;

  Eigen::Index pending = best_inactive(c);
  const Eigen::Index max_iter = 8 * max_active + 64;
  for (Eigen::Index iter = 0; iter < max_iter; ++iter) {
    // Activate the pending column, skipping dependent ones.
    bool added = false;
    while (pending >= 0 && !added) {
      if (qr.append(pending)) {
        active_flag[pending] = 1;
        active.push_back(pending);
        added = true;
      } else {
        excluded[pending] = 1;
        pending = active.empty() ? best_inactive(c) : -1;
      }
    }
    if (added) record();
    if (active.empty()) break;
    if (static_cast<Eigen::Index>(active.size()) >= max_active) break;

    const Eigen::Index s = static_cast<Eigen::Index>(active.size());
    Eigen::VectorXd sign(s);
    double big_c = 0.0;
    for (Eigen::Index k = 0; k < s; ++k) {
      const double ck = c(active[k]);
      sign(k) = ck >= 0.0 ? 1.0 : -1.0;
      big_c = std::max(big_c, std::abs(ck));
    }
    if (big_c <= 1e-13 * c0) break;

    const Eigen::VectorXd z = qr.solve_gram(sign);
    const double denom = sign.dot(z);
    if (!(denom > 0.0) || !std::isfinite(denom)) break;
    const double a_norm = 1.0 / std::sqrt(denom);
    const Eigen::VectorXd w = a_norm * z;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(p);
    for (Eigen::Index k = 0; k < s; ++k) a += gram.col(active[k]) * w(k);

    // Step to the next joining column.
    double gamma = big_c / a_norm;
    Eigen::Index joiner = -1;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (active_flag[j] || excluded[j]) continue;
      for (double g : {(big_c - c(j)) / (a_norm - a(j)), (big_c + c(j)) / (a_norm + a(j))}) {
        if (g > 1e-15 * gamma && g < gamma) {
          gamma = g;
          joiner = j;
        }
      }
    }

    // Lasso modification: a coefficient crossing zero leaves the active set.
    double gamma_drop = kInf;
    Eigen::Index drop_pos = -1;
    for (Eigen::Index k = 0; k < s; ++k) {
      const double bk = beta(active[k]);
      if (w(k) == 0.0) continue;
      const double g = -bk / w(k);
      if (g > 1e-15 * gamma && g < gamma_drop) {
        gamma_drop = g;
        drop_pos = k;
      }
    }

    if (drop_pos >= 0 && gamma_drop < gamma) {
      for (Eigen::Index k = 0; k < s; ++k) beta(active[k]) += gamma_drop * w(k);
      const Eigen::Index dropped = active[drop_pos];
      beta(dropped) = 0.0;
      active_flag[dropped] = 0;
      active.erase(active.begin() + drop_pos);
      for (Eigen::Index j : qr.rebuild(active)) {
        excluded[j] = 1;
        active_flag[j] = 0;
        beta(j) = 0.0;
        active.erase(std::find(active.begin(), active.end(), j));
      }
      c = correlations();
      pending = -1;
      if (!active.empty()) record();
      continue;
    }

    for (Eigen::Index k = 0; k < s; ++k) beta(active[k]) += gamma * w(k);
    c = correlations();
    if (joiner < 0) break;  // reached the least-squares solution on the usable columns
    pending = joiner;
  }
  return path;
}

}  // namespace cpnmor
