#pragma once

#include "cpnmor/linred.hpp"
#include "cpnmor/polyfit.hpp"
#include "cpnmor/snapdata.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cpnmor {

/// How the N-dimensional linear space is obtained.
enum class BasisChoice {
  Auto,      // PCA for ms, strong greedy for wc
  Pca,
  Greedy,
  Identity,  // canonical unit vectors, for data already given in coefficient form
};

const char* to_string(BasisChoice b);
BasisChoice basis_choice_from_string(const std::string& s);

struct FitConfig {
  double epsilon = 1e-2;
  std::optional<double> beta;  // defaults to 1/sqrt(2) (ms) or 1/2 (wc)
  double alpha = 1.0;
  double lipschitz = 100.0;
  IndexSetSpec index{IndexKind::HyperbolicCross, 5, 0};
  Setting setting = Setting::MeanSquared;
  std::optional<double> eps0;
  std::optional<int> n0;
  bool conservative_budgets = false;
  std::uint64_t seed = 0;
  std::size_t pair_budget = kDefaultPairBudget;
  std::size_t index_cap = kDefaultIndexCap;
  bool center = true;
  BasisChoice basis = BasisChoice::Auto;
  /// Worker threads for the per-step node fits; 0 reads CPN_THREADS (default 1).
  int threads = 0;

  double beta_value() const;
  /// 1 unless set, which starts the construction from a single encoder coordinate.
  double eps0_value() const;
  /// Throws InputError on out-of-range values.
  void validate() const;
};

/// One decoded coordinate g_i = f_i((g_j)_{j in S_i}).
struct CoefficientNode {
  int index = 0;            // 1-based basis index i
  std::vector<int> inputs;  // S_i, ascending, every entry < index
  PolynomialModel f;
  double eps = 0.0;          // achieved error on training data
  double gamma = 0.0;        // empirical ||f_i||_{i,gamma}
  double omega = 0.0;        // error budget weight at acceptance
  double tilde_omega = 0.0;  // Lipschitz budget weight at acceptance
  double bar_eps = 0.0;
  double bar_gamma = 0.0;
  int step = 0;   // outer step of acceptance (1-based)
  int depth = 1;  // composition depth
};

struct Metrics {
  Setting setting = Setting::MeanSquared;
  double re = 0.0;
  /// (i, e_i) for every decoded coordinate, ascending i.
  std::vector<std::pair<int, double>> coefficient_errors;
  int n = 0;
  int N = 0;
  int n_comp = 0;
  double wall_time = 0.0;
};

/// Linear encoder E(u) = ((u - ubar, phi_i)_X)_{i in I} and compositional
/// polynomial decoder D(a) = ubar + sum_i g_i(a) phi_i.
struct CpnModel {
  ReducedBasis basis;               // truncated to N columns
  std::vector<int> encoder_indices;  // I, ascending, 1-based
  std::vector<CoefficientNode> nodes;  // topological (acceptance) order
  Setting setting = Setting::MeanSquared;
  FitConfig config;
  Metrics achieved;
  double zero_error = 0.0;  // e_p(0) of the training set

  int n() const { return static_cast<int>(encoder_indices.size()); }
  int N() const { return static_cast<int>(basis.rank()); }

  Eigen::VectorXd encode(const Eigen::Ref<const Eigen::VectorXd>& u, const XGeometry& geom) const;
  /// n x m encoder outputs for the columns of `states`.
  Eigen::MatrixXd encode_all(const Eigen::Ref<const Eigen::MatrixXd>& states,
                             const XGeometry& geom) const;

  /// All N coefficients g_1..g_N for each column of the n x m matrix `a`.
  Eigen::MatrixXd coefficients(const Eigen::Ref<const Eigen::MatrixXd>& a) const;

  Eigen::VectorXd decode(const Eigen::Ref<const Eigen::VectorXd>& a) const;
  Eigen::MatrixXd decode_all(const Eigen::Ref<const Eigen::MatrixXd>& a) const;

  /// Longest chain of decoded-input references plus one (0 without nodes).
  int composition_depth() const;

  /// Throws InputError when the structural invariants (partition of 1..N,
  /// feed-forward inputs) are violated.
  void check_structure() const;
};

/// Pending indices and the records of nodes accepted so far.
struct BudgetState {
  std::vector<int> pending;  // J, ascending
  std::vector<double> accepted_eps;
  std::vector<double> accepted_gamma;
  std::vector<double> accepted_omega;
  std::vector<double> accepted_tilde_omega;
};

struct Budgets {
  std::map<int, double> omega;
  std::map<int, double> tilde_omega;
  std::map<int, double> bar_eps;
  std::map<int, double> bar_gamma;
};

/// Error and Lipschitz bounds for every pending index, redistributing the
/// remaining slack (or, with conservative budgets, the remaining weight) in
/// proportion to i^alpha.
Budgets update_budgets(const BudgetState& state, const FitConfig& cfg, double zero_error,
                       Setting setting);

/// One polynomial fit inside an outer step.
struct NodeAttempt {
  int index = 0;
  std::vector<int> inputs;
  double eps = 0.0;
  double bar_eps = 0.0;
  std::optional<double> gamma;  // only estimated when the error test passes
  double bar_gamma = 0.0;
  bool accepted = false;
};

struct TraceStep {
  int step = 0;
  int k = 0;                        // value of k at the start of the step
  std::vector<int> inputs;          // common input set {1..k}
  std::vector<int> decoded_inputs;  // members of `inputs` that are decoded
  std::vector<int> learned;         // indices accepted in this step
  std::optional<int> promoted;      // k+1 when moved into I
  std::vector<NodeAttempt> attempts;
};

struct FitResult {
  CpnModel model;
  std::vector<TraceStep> trace;
  int n0 = 0;
};

/// The adaptive construction: selects N from the budget, starts from
/// I = {1..n0}, and alternates fits with growth of input sets and of I until
/// every coefficient in 1..N is either encoded or accepted.
FitResult fit_adaptive(const SnapshotSet& s, const XGeometry& geom, const FitConfig& cfg);

/// Setting-matched relative error and per-coefficient errors of `model` on `data`.
Metrics evaluate(const CpnModel& model, const SnapshotSet& data, const XGeometry& geom);

/// Per-sample X-norm reconstruction errors ||u - D(E(u))||_X.
Eigen::VectorXd reconstruction_errors(const CpnModel& model, const SnapshotSet& data,
                                      const XGeometry& geom);

struct LipschitzCheck {
  double certificate = 1.0;  // sqrt(1 + sum gamma_i^2)
  double empirical = 0.0;    // max ||D(a) - D(a')||_X / ||a - a'||_2 over sampled pairs
};

LipschitzCheck decoder_lipschitz_check(const CpnModel& model, const SnapshotSet& samples,
                                       const XGeometry& geom, std::size_t pair_budget,
                                       std::uint64_t seed);

/// JSON-ready replay of a trace: rebuilds I, the final S_i and acceptance
/// order; used to check trace consistency.
struct TraceReplay {
  std::vector<int> encoder_indices;
  std::map<int, std::vector<int>> inputs;
  std::vector<int> acceptance_order;
};
TraceReplay replay_trace(const std::vector<TraceStep>& trace, int n0, int N);

}  // namespace cpnmor
