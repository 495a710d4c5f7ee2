#include "doctest.h"

#include "cpnmor/baselines.hpp"
#include "cpnmor/benchgen.hpp"
#include "cpnmor/cpn.hpp"
#include "cpnmor/error.hpp"

#include <random>

using namespace cpnmor;

namespace {

FitConfig toy_config() {
  FitConfig c;
  c.epsilon = 1e-6;
  c.n0 = 1;
  c.index = {IndexKind::TotalDegree, 5, 0};
  c.lipschitz = 1000.0;
  c.basis = BasisChoice::Identity;
  c.center = false;
  return c;
}

// Points on a smooth 2-D surface in R^12, plus small noise.
SnapshotSet surface_set(int m, unsigned seed, double noise) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::normal_distribution<double> n01;
  SnapshotSet s;
  s.states.resize(12, m);
  for (int k = 0; k < m; ++k) {
    const double a = u(rng), b = u(rng);
    for (int j = 0; j < 12; ++j) {
      const double x = static_cast<double>(j) / 11.0;
      s.states(j, k) = std::sin(3 * x + a) + b * x * x + a * b * std::cos(2 * x) + noise * n01(rng);
    }
  }
  return s;
}

double ms_decomposition_gap(const CpnModel& model, const SnapshotSet& s, const XGeometry& g) {
  const Eigen::VectorXd err = reconstruction_errors(model, s, g);
  const Eigen::MatrixXd a = model.encode_all(s.states, g);
  const Eigen::MatrixXd coef = model.coefficients(a);
  const Eigen::MatrixXd truth = project_all(model.basis, model.N(), s.states, g);
  double node_sum = 0.0;
  for (const auto& node : model.nodes) {
    node_sum += (truth.row(node.index - 1) - coef.row(node.index - 1)).squaredNorm();
  }
  const double tail = residual_norms(model.basis, model.N(), s, g).squaredNorm();
  const double direct = err.squaredNorm();
  return std::abs(direct - node_sum - tail) / std::max(direct, 1e-300);
}

}  // namespace

TEST_CASE("config validation") {
  FitConfig c;
  c.epsilon = 0.0;
  CHECK_THROWS_WITH_AS(c.validate(), "epsilon must be positive", InputError);
  c = FitConfig{};
  c.lipschitz = 1.0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = FitConfig{};
  c.beta = 1.0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = FitConfig{};
  CHECK(c.beta_value() == doctest::Approx(1.0 / std::sqrt(2.0)));
  c.setting = Setting::WorstCase;
  CHECK(c.beta_value() == doctest::Approx(0.5));
  CHECK(c.eps0_value() == 1.0);
}

TEST_CASE("budget formulas") {
  FitConfig cfg;
  SUBCASE("weights proportional to i^alpha") {
    BudgetState st;
    st.pending = {3, 4};
    const Budgets b = update_budgets(st, cfg, 1.0, Setting::MeanSquared);
    CHECK(b.omega.at(3) == doctest::Approx(3.0 / 7.0));
    CHECK(b.omega.at(4) == doctest::Approx(4.0 / 7.0));
  }
  SUBCASE("mean-squared error bound") {
    cfg.epsilon = 0.1;
    BudgetState st;
    st.pending = {2};
    const Budgets b = update_budgets(st, cfg, 1.0, Setting::MeanSquared);
    CHECK(b.bar_eps.at(2) * b.bar_eps.at(2) == doctest::Approx(5e-3));
  }
  SUBCASE("lipschitz bound recycles accepted gammas") {
    cfg.lipschitz = std::sqrt(26.0);
    BudgetState st;
    st.pending = {5};
    st.accepted_eps = {0.0};
    st.accepted_gamma = {3.0};
    st.accepted_omega = {0.5};
    st.accepted_tilde_omega = {0.5};
    const Budgets b = update_budgets(st, cfg, 1.0, Setting::MeanSquared);
    CHECK(b.bar_gamma.at(5) * b.bar_gamma.at(5) == doctest::Approx(16.0));
  }
  SUBCASE("worst-case bound subtracts accepted errors linearly") {
    cfg.epsilon = 0.2;
    cfg.setting = Setting::WorstCase;
    BudgetState st;
    st.pending = {1, 3};
    st.accepted_eps = {0.01};
    st.accepted_gamma = {1.0};
    st.accepted_omega = {0.3};
    st.accepted_tilde_omega = {0.3};
    const Budgets b = update_budgets(st, cfg, 2.0, Setting::WorstCase);
    CHECK(b.bar_eps.at(3) == doctest::Approx(0.75 * (0.5 * 0.2 * 2.0 - 0.01)));
  }
  SUBCASE("conservative budgets renormalize the remaining weight") {
    cfg.conservative_budgets = true;
    cfg.epsilon = 0.1;
    BudgetState st;
    st.pending = {2, 3};
    st.accepted_eps = {0.01};
    st.accepted_gamma = {2.0};
    st.accepted_omega = {0.5};
    st.accepted_tilde_omega = {0.25};
    const Budgets b = update_budgets(st, cfg, 1.0, Setting::MeanSquared);
    CHECK(b.omega.at(2) == doctest::Approx(0.4 * 0.5));
    CHECK(b.tilde_omega.at(3) == doctest::Approx(0.6 * 0.75));
    CHECK(b.bar_eps.at(2) == doctest::Approx(std::sqrt(0.2 * 0.5 * 0.01)));
    CHECK(b.bar_gamma.at(3) == doctest::Approx(std::sqrt(0.45 * (100.0 * 100.0 - 1.0))));
  }
  SUBCASE("exhausted budget") {
    cfg.epsilon = 0.1;
    BudgetState st;
    st.pending = {2};
    st.accepted_eps = {1.0};
    st.accepted_gamma = {0.0};
    st.accepted_omega = {1.0};
    st.accepted_tilde_omega = {0.0};
    CHECK_THROWS_WITH_AS(update_budgets(st, cfg, 1.0, Setting::MeanSquared),
                         "accepted errors exhausted budget", FeasibilityError);
  }
}

TEST_CASE("toy manifold becomes a depth-two composition") {
  const SnapshotSet s = gen_toy(201);
  const XGeometry g(3);
  const FitResult r = fit_adaptive(s, g, toy_config());
  const CpnModel& m = r.model;
  CHECK(m.encoder_indices == std::vector<int>{1});
  REQUIRE(m.nodes.size() == 2);
  CHECK(m.nodes[0].index == 2);
  CHECK(m.nodes[1].index == 3);
  CHECK(m.nodes[1].inputs == std::vector<int>{1, 2});
  CHECK(m.composition_depth() == 2);
  CHECK(m.achieved.re < 1e-8);

  for (double t : {-1.0, -0.37, 0.0, 0.5, 1.0}) {
    const Eigen::VectorXd d = m.decode(Eigen::VectorXd::Constant(1, t));
    CHECK(d(0) == doctest::Approx(t).scale(1.0).epsilon(1e-8));
    CHECK(d(1) == doctest::Approx(toy_a2(t)).scale(1.0).epsilon(1e-8));
    CHECK(d(2) == doctest::Approx(toy_a3(t)).scale(1.0).epsilon(1e-8));
  }
  CHECK(m.encode(Eigen::Vector3d(0.25, 9.0, -4.0), g)(0) == 0.25);
}

TEST_CASE("encoder and decoder basics on a surface") {
  const SnapshotSet s = surface_set(300, 1, 1e-4);
  const XGeometry g(12);
  FitConfig cfg;
  cfg.epsilon = 1e-2;
  const FitResult r = fit_adaptive(s, g, cfg);
  const CpnModel& m = r.model;
  m.check_structure();
  CHECK(m.achieved.re <= cfg.epsilon);

  CHECK(m.encode(m.basis.offset, g).norm() < 1e-13);
  const int i1 = m.encoder_indices.front();
  const Eigen::VectorXd e = m.encode(m.basis.offset + 7.0 * m.basis.basis.col(i1 - 1), g);
  CHECK(e(0) == doctest::Approx(7.0));
  CHECK(e.tail(e.size() - 1).norm() < 1e-12);

  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    Eigen::VectorXd u(12), v(12);
    for (auto& x : u) x = n01(rng);
    for (auto& x : v) x = n01(rng);
    worst = std::max(worst, (m.encode(u, g) - m.encode(v, g)).norm() / g.norm(u - v));
  }
  CHECK(worst <= 1.0 + 1e-10);

  // All-zero coefficients decode to the same column every time.
  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(m.n(), 3);
  const Eigen::MatrixXd d = m.decode_all(zeros);
  CHECK((d.col(0) - d.col(2)).norm() == 0.0);

  CHECK(ms_decomposition_gap(m, s, g) < 1e-8);

  const LipschitzCheck lc = decoder_lipschitz_check(m, s, g, cfg.pair_budget, cfg.seed);
  CHECK(lc.certificate <= cfg.lipschitz);
  CHECK(lc.empirical <= lc.certificate + 1e-8);

  CHECK_THROWS_AS(m.encode(Eigen::VectorXd::Zero(5), g), InputError);
  CHECK_THROWS_AS(m.decode(Eigen::VectorXd::Zero(m.n() + 1)), InputError);
}

TEST_CASE("a constant node adds a fixed multiple of its basis vector") {
  CpnModel m = fit_linear(surface_set(50, 3, 0.0), XGeometry(12), 3);
  CoefficientNode node;
  node.index = 3;
  node.inputs = {1, 2};
  node.f.dim = 2;
  node.f.support = {{0, 0}};
  node.f.coeffs = Eigen::VectorXd::Constant(1, 0.75);
  node.f.box.lower = Eigen::Vector2d(-1, -1);
  node.f.box.upper = Eigen::Vector2d(1, 1);
  node.f.box.constant = {false, false};
  m.encoder_indices = {1, 2};
  m.nodes = {node};
  m.check_structure();
  const Eigen::VectorXd a = Eigen::Vector2d(0.3, -0.2);
  const Eigen::VectorXd d = m.decode(a);
  const Eigen::VectorXd expect =
      m.basis.offset + 0.3 * m.basis.basis.col(0) - 0.2 * m.basis.basis.col(1) +
      0.75 * m.basis.basis.col(2);
  CHECK((d - expect).norm() < 1e-13);
}

TEST_CASE("structure checks") {
  CpnModel m = fit_linear(surface_set(40, 4, 0.0), XGeometry(12), 3);
  CHECK_NOTHROW(m.check_structure());
  m.encoder_indices = {1, 3};
  CHECK_THROWS_AS(m.check_structure(), InputError);
}

TEST_CASE("worst-case fit bounds and greedy basis") {
  const SnapshotSet s = surface_set(250, 6, 1e-4);
  const XGeometry g(12);
  FitConfig cfg;
  cfg.epsilon = 2e-2;
  cfg.setting = Setting::WorstCase;
  const FitResult r = fit_adaptive(s, g, cfg);
  const CpnModel& m = r.model;
  CHECK(m.basis.mode == BasisMode::Greedy);
  CHECK(m.achieved.re <= cfg.epsilon);
  const double e_inf = reconstruction_errors(m, s, g).maxCoeff();
  const Eigen::MatrixXd coef = m.coefficients(m.encode_all(s.states, g));
  const Eigen::MatrixXd truth = project_all(m.basis, m.N(), s.states, g);
  double bound = residual_norms(m.basis, m.N(), s, g).maxCoeff();
  for (const auto& node : m.nodes) {
    bound += (truth.row(node.index - 1) - coef.row(node.index - 1)).cwiseAbs().maxCoeff();
  }
  CHECK(e_inf <= bound + 1e-10);
}

TEST_CASE("loose epsilon gives a purely linear model") {
  const SnapshotSet s = surface_set(60, 9, 0.0);
  FitConfig cfg;
  cfg.epsilon = 1.5;
  const FitResult r = fit_adaptive(s, XGeometry(12), cfg);
  CHECK(r.model.achieved.re <= 1.5);
  CHECK(r.model.n() == r.model.N());
  CHECK(r.model.nodes.empty());
}

TEST_CASE("explicit n0 beyond N is infeasible") {
  FitConfig cfg = toy_config();
  cfg.n0 = 5;
  CHECK_THROWS_AS(fit_adaptive(gen_toy(51), XGeometry(3), cfg), FeasibilityError);
}

TEST_CASE("trace replay reproduces the model") {
  const SnapshotSet s = surface_set(300, 12, 1e-5);
  FitConfig cfg;
  cfg.epsilon = 5e-3;
  const FitResult r = fit_adaptive(s, XGeometry(12), cfg);
  const TraceReplay rep = replay_trace(r.trace, r.n0, r.model.N());
  CHECK(rep.encoder_indices == r.model.encoder_indices);
  std::vector<int> order;
  for (const auto& node : r.model.nodes) {
    order.push_back(node.index);
    CHECK(rep.inputs.at(node.index) == node.inputs);
  }
  CHECK(rep.acceptance_order == order);
}

TEST_CASE("fits are bit-deterministic") {
  const SnapshotSet s = surface_set(200, 2, 1e-4);
  FitConfig cfg;
  cfg.epsilon = 5e-3;
  cfg.pair_budget = 5000;  // force sampled pairs
  cfg.seed = 42;
  const FitResult a = fit_adaptive(s, XGeometry(12), cfg);
  const FitResult b = fit_adaptive(s, XGeometry(12), cfg);
  REQUIRE(a.model.nodes.size() == b.model.nodes.size());
  CHECK(a.model.encoder_indices == b.model.encoder_indices);
  for (std::size_t k = 0; k < a.model.nodes.size(); ++k) {
    CHECK(a.model.nodes[k].f.coeffs == b.model.nodes[k].f.coeffs);
    CHECK(a.model.nodes[k].gamma == b.model.nodes[k].gamma);
  }
  CHECK(a.model.achieved.re == b.model.achieved.re);

  cfg.threads = 3;
  const FitResult c = fit_adaptive(s, XGeometry(12), cfg);
  CHECK(c.model.achieved.re == a.model.achieved.re);
}
