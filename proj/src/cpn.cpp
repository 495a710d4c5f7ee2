#include "cpnmor/cpn.hpp"

#include "cpnmor/error.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>
#include <thread>

namespace cpnmor {

namespace {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CPN_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

/// Runs body(t) for t in [0, count) on up to `threads` workers.
template <typename Body>
void parallel_for(std::size_t count, int threads, Body&& body) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  if (workers <= 1) {
    for (std::size_t t = 0; t < count; ++t) body(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t t = next++; t < count; t = next++) body(t);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ReducedBasis identity_basis(const SnapshotSet& s, const XGeometry& geom, bool center) {
  Eigen::VectorXd offset = center ? Eigen::VectorXd(s.states.rowwise().mean())
                                  : Eigen::VectorXd::Zero(s.dim_state());
  Eigen::MatrixXd basis = geom.unscale(Eigen::MatrixXd::Identity(s.dim_state(), s.dim_state()));
  return provided_basis(std::move(offset), std::move(basis), geom);
}

ReducedBasis build_basis(const SnapshotSet& s, const XGeometry& geom, const FitConfig& cfg) {
  switch (cfg.basis) {
    case BasisChoice::Pca: return empirical_pca(s, geom, cfg.center);
    case BasisChoice::Greedy: return greedy_basis(s, geom, cfg.center);
    case BasisChoice::Identity: return identity_basis(s, geom, cfg.center);
    case BasisChoice::Auto: break;
  }
  return cfg.setting == Setting::MeanSquared ? empirical_pca(s, geom, cfg.center)
                                             : greedy_basis(s, geom, cfg.center);
}

double setting_error(const Eigen::Ref<const Eigen::VectorXd>& residual, Setting setting) {
  if (residual.size() == 0) return 0.0;
  return setting == Setting::MeanSquared ? residual.norm() : residual.cwiseAbs().maxCoeff();
}

std::vector<int> iota_vec(int first, int last) {
  std::vector<int> v;
  for (int i = first; i <= last; ++i) v.push_back(i);
  return v;
}

/// Rows (1-based indices) of a coefficient matrix as an m x d sample matrix.
Eigen::MatrixXd gather_inputs(const Eigen::MatrixXd& g, const std::vector<int>& rows) {
  Eigen::MatrixXd x(g.cols(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c) {
    x.col(static_cast<Eigen::Index>(c)) = g.row(rows[c] - 1).transpose();
  }
  return x;
}

}  // namespace

const char* to_string(BasisChoice b) {
  switch (b) {
    case BasisChoice::Auto: return "auto";
    case BasisChoice::Pca: return "pca";
    case BasisChoice::Greedy: return "greedy";
    case BasisChoice::Identity: return "identity";
  }
  return "?";
}

BasisChoice basis_choice_from_string(const std::string& s) {
  if (s == "auto") return BasisChoice::Auto;
  if (s == "pca") return BasisChoice::Pca;
  if (s == "greedy") return BasisChoice::Greedy;
  if (s == "identity") return BasisChoice::Identity;
  throw InputError("unknown basis '" + s + "' (expected auto, pca, greedy or identity)");
}

double FitConfig::beta_value() const {
  if (beta) return *beta;
  return setting == Setting::MeanSquared ? 1.0 / std::sqrt(2.0) : 0.5;
}

double FitConfig::eps0_value() const {
  return eps0.value_or(1.0);
}

void FitConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InputError("epsilon must be positive");
  const double b = beta_value();
  if (!(b > 0.0 && b < 1.0)) throw InputError("beta must lie in (0, 1)");
  if (!(alpha >= 0.0)) throw InputError("alpha must be non-negative");
  if (!(lipschitz > 1.0)) throw InputError("lipschitz bound L must exceed 1");
  if (index.degree < 0) throw InputError("polynomial degree must be non-negative");
  if (eps0 && !(*eps0 > 0.0 && *eps0 <= 1.0)) throw InputError("eps0 must lie in (0, 1]");
  if (n0 && *n0 < 0) throw InputError("n0 must be non-negative");
  if (pair_budget < 1) throw InputError("pair budget must be positive");
}

Eigen::VectorXd CpnModel::encode(const Eigen::Ref<const Eigen::VectorXd>& u,
                                 const XGeometry& geom) const {
  return encode_all(u, geom).col(0);
}

Eigen::MatrixXd CpnModel::encode_all(const Eigen::Ref<const Eigen::MatrixXd>& states,
                                     const XGeometry& geom) const {
  if (states.rows() != basis.dim_state()) {
    throw InputError("state dimension " + std::to_string(states.rows()) +
                     " does not match model dimension " + std::to_string(basis.dim_state()));
  }
  Eigen::MatrixXd q(basis.dim_state(), n());
  for (int p = 0; p < n(); ++p) q.col(p) = basis.basis.col(encoder_indices[p] - 1);
  const Eigen::VectorXd w = geom.weights();
  return q.transpose() * (w.asDiagonal() * (states.colwise() - basis.offset));
}

Eigen::MatrixXd CpnModel::coefficients(const Eigen::Ref<const Eigen::MatrixXd>& a) const {
  if (a.rows() != n()) {
    throw InputError("expected " + std::to_string(n()) + " encoder coordinates, got " +
                     std::to_string(a.rows()));
  }
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(N(), a.cols());
  for (int p = 0; p < n(); ++p) g.row(encoder_indices[p] - 1) = a.row(p);
  for (const auto& node : nodes) {
    const Eigen::MatrixXd x = gather_inputs(g, node.inputs);
    g.row(node.index - 1) = node.f.evaluate(x).transpose();
  }
  return g;
}

Eigen::VectorXd CpnModel::decode(const Eigen::Ref<const Eigen::VectorXd>& a) const {
  return decode_all(a).col(0);
}

Eigen::MatrixXd CpnModel::decode_all(const Eigen::Ref<const Eigen::MatrixXd>& a) const {
  const Eigen::MatrixXd g = coefficients(a);
  return (basis.basis * g).colwise() + basis.offset;
}

int CpnModel::composition_depth() const {
  int depth = 0;
  for (const auto& node : nodes) depth = std::max(depth, node.depth);
  return depth;
}

void CpnModel::check_structure() const {
  std::vector<int> role(static_cast<std::size_t>(N()) + 1, 0);  // 1 encoder, 2 decoded
  for (int i : encoder_indices) {
    if (i < 1 || i > N() || role[i] != 0) throw InputError("invalid encoder index set");
    role[i] = 1;
  }
  if (!std::is_sorted(encoder_indices.begin(), encoder_indices.end())) {
    throw InputError("encoder indices must be ascending");
  }
  for (const auto& node : nodes) {
    if (node.index < 1 || node.index > N() || role[node.index] != 0) {
      throw InputError("invalid or duplicate node index " + std::to_string(node.index));
    }
    for (int j : node.inputs) {
      if (j >= node.index || j < 1 || role[j] == 0) {
        throw InputError("node " + std::to_string(node.index) +
                         " references an unavailable input " + std::to_string(j));
      }
    }
    if (node.f.dim != static_cast<int>(node.inputs.size())) {
      throw InputError("node " + std::to_string(node.index) + " polynomial arity mismatch");
    }
    role[node.index] = 2;
  }
  for (int i = 1; i <= N(); ++i) {
    if (role[i] == 0) throw InputError("coefficient " + std::to_string(i) + " is unassigned");
  }
}

Budgets update_budgets(const BudgetState& state, const FitConfig& cfg, double zero_error,
                       Setting setting) {
  Budgets out;
  if (state.pending.empty()) return out;
  const double eps = cfg.epsilon;
  const double beta = cfg.beta_value();
  const double l2 = cfg.lipschitz * cfg.lipschitz;

  double weight_sum = 0.0;
  for (int j : state.pending) weight_sum += std::pow(static_cast<double>(j), cfg.alpha);

  double sum_eps = 0.0;
  double sum_eps2 = 0.0;
  double sum_gamma2 = 0.0;
  double sum_omega = 0.0;
  double sum_tilde = 0.0;
  for (std::size_t k = 0; k < state.accepted_eps.size(); ++k) {
    sum_eps += state.accepted_eps[k];
    sum_eps2 += state.accepted_eps[k] * state.accepted_eps[k];
  }
  for (double g : state.accepted_gamma) sum_gamma2 += g * g;
  for (double w : state.accepted_omega) sum_omega += w;
  for (double w : state.accepted_tilde_omega) sum_tilde += w;

  const double ms_total = (1.0 - beta * beta) * eps * eps * zero_error * zero_error;
  const double wc_total = (1.0 - beta) * eps * zero_error;
  const double err_slack = cfg.conservative_budgets
                               ? 1.0 - sum_omega
                               : (setting == Setting::MeanSquared ? ms_total - sum_eps2
                                                                  : wc_total - sum_eps);
  const double lip_slack = cfg.conservative_budgets ? 1.0 - sum_tilde : l2 - 1.0 - sum_gamma2;
  if (!(err_slack > 0.0) || !(lip_slack > 0.0)) {
    throw FeasibilityError("accepted errors exhausted budget");
  }

  for (int i : state.pending) {
    const double share = std::pow(static_cast<double>(i), cfg.alpha) / weight_sum;
    double omega = share;
    double tilde = share;
    double bar_eps2_or_eps;
    double bar_gamma2;
    if (cfg.conservative_budgets) {
      omega = share * err_slack;
      tilde = share * lip_slack;
      bar_eps2_or_eps = setting == Setting::MeanSquared ? omega * ms_total : omega * wc_total;
      bar_gamma2 = tilde * (l2 - 1.0);
    } else {
      bar_eps2_or_eps = omega * err_slack;
      bar_gamma2 = tilde * lip_slack;
    }
    out.omega[i] = omega;
    out.tilde_omega[i] = tilde;
    out.bar_eps[i] = setting == Setting::MeanSquared ? std::sqrt(bar_eps2_or_eps)
                                                     : bar_eps2_or_eps;
    out.bar_gamma[i] = std::sqrt(bar_gamma2);
  }
  return out;
}

FitResult fit_adaptive(const SnapshotSet& s, const XGeometry& geom, const FitConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  cfg.validate();
  s.validate();
  if (geom.dim() != s.dim_state()) throw InputError("geometry does not match snapshot dimension");

  const Setting setting = cfg.setting;
  const double e0 = empirical_zero_error(s, geom, setting);
  if (!(e0 > 0.0)) throw InputError("all snapshots are zero; relative error is undefined");

  const ReducedBasis full = build_basis(s, geom, cfg);
  const Eigen::Index big_n = select_truncation(full, s, geom, setting, cfg.epsilon,
                                               cfg.beta_value());
  const int n_total = static_cast<int>(big_n);

  int n0 = 0;
  if (cfg.n0) {
    if (*cfg.n0 > n_total) {
      throw FeasibilityError("n0 = " + std::to_string(*cfg.n0) + " exceeds N = " +
                             std::to_string(n_total));
    }
    n0 = *cfg.n0;
  } else {
    const Eigen::VectorXd rel = relative_truncation_errors(full, s, geom, setting);
    n0 = n_total;
    for (Eigen::Index n = 0; n < rel.size() && n < n_total; ++n) {
      if (rel(n) <= cfg.eps0_value()) {
        n0 = static_cast<int>(n);
        break;
      }
    }
    if (n_total >= 1) n0 = std::max(n0, 1);
  }

  FitResult result;
  result.n0 = n0;
  CpnModel& model = result.model;
  model.basis = full.truncated(big_n);
  model.setting = setting;
  model.config = cfg;
  model.zero_error = e0;
  model.encoder_indices = iota_vec(1, n0);

  const Eigen::MatrixXd coeffs = project_all(model.basis, big_n, s.states, geom);
  Eigen::MatrixXd g = coeffs;  // rows of accepted nodes are replaced by their outputs
  std::vector<int> role(static_cast<std::size_t>(n_total) + 1, 0);  // 0 pending, 1 encoder, 2 decoded
  for (int i = 1; i <= n0; ++i) role[i] = 1;
  std::vector<double> node_gamma(static_cast<std::size_t>(n_total) + 1, 0.0);
  std::vector<int> node_depth(static_cast<std::size_t>(n_total) + 1, 0);

  BudgetState state;
  state.pending = iota_vec(n0 + 1, n_total);
  const int threads = resolve_threads(cfg.threads);

  int k = n0;
  int step = 0;
  while (!state.pending.empty()) {
    ++step;
    const Budgets budgets = update_budgets(state, cfg, e0, setting);

    TraceStep trace;
    trace.step = step;
    trace.k = k;
    trace.inputs = iota_vec(1, k);
    std::vector<InputCoord> coords;
    for (int j : trace.inputs) {
      if (role[j] == 2) {
        trace.decoded_inputs.push_back(j);
        coords.push_back({true, node_gamma[j]});
      } else {
        coords.push_back({false, 1.0});
      }
    }

    const Eigen::MatrixXd x = gather_inputs(g, trace.inputs);
    const SparseRegressor regressor(x, cfg.index, cfg.index_cap);

    struct Outcome {
      NodeAttempt attempt;
      PolynomialModel f;
      Eigen::VectorXd values;
    };
    std::vector<Outcome> outcomes(state.pending.size());
    parallel_for(state.pending.size(), threads, [&](std::size_t t) {
      const int i = state.pending[t];
      const Eigen::VectorXd y = coeffs.row(i - 1).transpose();
      SparseFit fit = regressor.fit(y);
      Outcome& o = outcomes[t];
      o.values = fit.model.evaluate(x);
      o.f = std::move(fit.model);
      o.attempt.index = i;
      o.attempt.inputs = trace.inputs;
      o.attempt.eps = setting_error(y - o.values, setting);
      o.attempt.bar_eps = budgets.bar_eps.at(i);
      o.attempt.bar_gamma = budgets.bar_gamma.at(i);
      if (o.attempt.eps <= o.attempt.bar_eps) {
        o.attempt.gamma = lipschitz_estimate(o.values, x, coords, cfg.pair_budget, cfg.seed);
        o.attempt.accepted = *o.attempt.gamma <= o.attempt.bar_gamma;
      }
    });

    // Acceptances become visible as inputs from the next step on.
    std::vector<int> still_pending;
    for (auto& o : outcomes) {
      const int i = o.attempt.index;
      if (!o.attempt.accepted) {
        still_pending.push_back(i);
        trace.attempts.push_back(std::move(o.attempt));
        continue;
      }
      CoefficientNode node;
      node.index = i;
      node.inputs = trace.inputs;
      node.f = std::move(o.f);
      node.eps = o.attempt.eps;
      node.gamma = *o.attempt.gamma;
      node.omega = budgets.omega.at(i);
      node.tilde_omega = budgets.tilde_omega.at(i);
      node.bar_eps = o.attempt.bar_eps;
      node.bar_gamma = o.attempt.bar_gamma;
      node.step = step;
      int depth = 0;
      for (int j : trace.decoded_inputs) depth = std::max(depth, node_depth[j]);
      node.depth = depth + 1;

      node_depth[i] = node.depth;
      node_gamma[i] = node.gamma;
      role[i] = 2;
      g.row(i - 1) = o.values.transpose();
      state.accepted_eps.push_back(node.eps);
      state.accepted_gamma.push_back(node.gamma);
      state.accepted_omega.push_back(node.omega);
      state.accepted_tilde_omega.push_back(node.tilde_omega);
      trace.learned.push_back(i);
      model.nodes.push_back(std::move(node));
      trace.attempts.push_back(std::move(o.attempt));
    }
    state.pending = std::move(still_pending);

    const int next = k + 1;
    const auto it = std::find(state.pending.begin(), state.pending.end(), next);
    if (it != state.pending.end()) {
      state.pending.erase(it);
      role[next] = 1;
      model.encoder_indices.push_back(next);
      trace.promoted = next;
    }
    ++k;
    result.trace.push_back(std::move(trace));
  }

  model.check_structure();
  model.achieved = evaluate(model, s, geom);
  model.achieved.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

Eigen::VectorXd reconstruction_errors(const CpnModel& model, const SnapshotSet& data,
                                      const XGeometry& geom) {
  const Eigen::MatrixXd recon = model.decode_all(model.encode_all(data.states, geom));
  return geom.column_norms(data.states - recon);
}

Metrics evaluate(const CpnModel& model, const SnapshotSet& data, const XGeometry& geom) {
  Metrics m;
  m.setting = model.setting;
  const Eigen::MatrixXd a = model.encode_all(data.states, geom);
  const Eigen::MatrixXd g = model.coefficients(a);
  const Eigen::MatrixXd recon = (model.basis.basis * g).colwise() + model.basis.offset;
  const Eigen::VectorXd err = geom.column_norms(data.states - recon);
  const Eigen::VectorXd ref = geom.column_norms(data.states);
  m.re = model.setting == Setting::MeanSquared ? err.norm() / ref.norm()
                                               : err.maxCoeff() / ref.maxCoeff();

  const Eigen::MatrixXd truth = project_all(model.basis, model.N(), data.states, geom);
  const bool ms = model.setting == Setting::MeanSquared;
  const double denom = ms ? ref.norm() : ref.maxCoeff();
  for (const auto& node : model.nodes) {
    const auto diff = truth.row(node.index - 1) - g.row(node.index - 1);
    const double e = (ms ? diff.norm() : diff.cwiseAbs().maxCoeff()) / denom;
    m.coefficient_errors.emplace_back(node.index, e);
  }
  std::sort(m.coefficient_errors.begin(), m.coefficient_errors.end());
  m.n = model.n();
  m.N = model.N();
  m.n_comp = model.composition_depth();
  return m;
}

LipschitzCheck decoder_lipschitz_check(const CpnModel& model, const SnapshotSet& samples,
                                       const XGeometry& geom, std::size_t pair_budget,
                                       std::uint64_t seed) {
  LipschitzCheck out;
  double sum = 1.0;
  for (const auto& node : model.nodes) sum += node.gamma * node.gamma;
  out.certificate = std::sqrt(sum);

  const Eigen::MatrixXd a = model.encode_all(samples.states, geom);
  // Phi is X-orthonormal, so ||D(a) - D(a')||_X is the l2 distance of the coefficients.
  const Eigen::MatrixXd g = model.coefficients(a);
  for_each_pair(a.cols(), pair_budget, seed, [&](Eigen::Index k, Eigen::Index l) {
    const double den = (a.col(k) - a.col(l)).norm();
    if (den < 1e-13) return;
    out.empirical = std::max(out.empirical, (g.col(k) - g.col(l)).norm() / den);
  });
  return out;
}

TraceReplay replay_trace(const std::vector<TraceStep>& trace, int n0, int N) {
  TraceReplay r;
  r.encoder_indices = iota_vec(1, n0);
  std::vector<int> pending = iota_vec(n0 + 1, N);
  for (const auto& st : trace) {
    for (int i : st.learned) {
      const auto it = std::find(pending.begin(), pending.end(), i);
      if (it == pending.end()) throw InputError("trace learns a non-pending index");
      pending.erase(it);
      r.inputs[i] = iota_vec(1, st.k);
      r.acceptance_order.push_back(i);
    }
    if (st.promoted) {
      const auto it = std::find(pending.begin(), pending.end(), *st.promoted);
      if (it == pending.end() || *st.promoted != st.k + 1) {
        throw InputError("trace promotes an invalid index");
      }
      pending.erase(it);
      r.encoder_indices.push_back(*st.promoted);
    }
  }
  if (!pending.empty()) throw InputError("trace leaves coefficients unassigned");
  return r;
}

}  // namespace cpnmor
