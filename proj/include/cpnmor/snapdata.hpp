#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>

namespace cpnmor {

enum class Setting { MeanSquared, WorstCase };

enum class SnapshotFormat { Binary, Csv };

const char* to_string(Setting s);
Setting setting_from_string(const std::string& s);

/// A finite sample of the solution manifold. Column k holds sample u^(k).
/// norm_weights, when present, is the diagonal of the Gram matrix M_X.
struct SnapshotSet {
  Eigen::MatrixXd states;
  std::optional<Eigen::VectorXd> norm_weights;

  Eigen::Index dim_state() const { return states.rows(); }
  Eigen::Index num_samples() const { return states.cols(); }

  /// Throws InputError when any invariant fails (empty, non-finite, non-positive weights).
  void validate() const;
};

/// Diagonal X-geometry: ||v||_X^2 = sum_j w_j v_j^2.
class XGeometry {
 public:
  explicit XGeometry(Eigen::Index dim);
  explicit XGeometry(const Eigen::VectorXd& weights);

  static XGeometry from(const SnapshotSet& s);

  Eigen::Index dim() const { return sqrt_weights_.size(); }
  const Eigen::VectorXd& sqrt_weights() const { return sqrt_weights_; }
  Eigen::VectorXd weights() const { return sqrt_weights_.array().square(); }
  bool euclidean() const { return euclidean_; }

  double inner(const Eigen::Ref<const Eigen::VectorXd>& u,
               const Eigen::Ref<const Eigen::VectorXd>& v) const;
  double norm(const Eigen::Ref<const Eigen::VectorXd>& u) const;

  /// Column-wise X-norms of a D x m matrix.
  Eigen::VectorXd column_norms(const Eigen::Ref<const Eigen::MatrixXd>& a) const;

  /// M_X^{1/2} a (rows scaled by sqrt weights).
  Eigen::MatrixXd scale(const Eigen::Ref<const Eigen::MatrixXd>& a) const;
  /// M_X^{-1/2} a.
  Eigen::MatrixXd unscale(const Eigen::Ref<const Eigen::MatrixXd>& a) const;

 private:
  Eigen::VectorXd sqrt_weights_;
  bool euclidean_ = true;
};

double x_inner(const XGeometry& geom, const Eigen::Ref<const Eigen::VectorXd>& u,
               const Eigen::Ref<const Eigen::VectorXd>& v);

/// e_p(0): sqrt of the unnormalized sum of squared norms (ms) or the max norm (wc).
double empirical_zero_error(const SnapshotSet& s, const XGeometry& geom, Setting setting);

SnapshotSet load_snapshots(const std::filesystem::path& path, SnapshotFormat format);
void save_snapshots(const SnapshotSet& s, const std::filesystem::path& path,
                    SnapshotFormat format);

/// Guesses the format from the extension (.csv -> Csv, anything else -> Binary).
SnapshotFormat format_for(const std::filesystem::path& path);

}  // namespace cpnmor
