// End-to-end acceptance suite: one PASS/FAIL line per criterion.
#include "cpnmor/baselines.hpp"
#include "cpnmor/benchgen.hpp"
#include "cpnmor/cpn.hpp"
#include "cpnmor/polyfit.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace cpnmor;

namespace {

struct Verdict {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(int id, const std::string& title, Verdict& v) {
  std::printf("%s criterion %d (%s):%s\n", v.ok ? "PASS" : "FAIL", id, title.c_str(),
              v.detail.str().c_str());
  std::fflush(stdout);
  if (!v.ok) ++failures;
}

// Runs `body`, turning exceptions into a failed verdict.
void criterion(int id, const std::string& title, const std::function<void(Verdict&)>& body) {
  Verdict v;
  try {
    body(v);
  } catch (const std::exception& e) {
    v.ok = false;
    v.detail << " [exception: " << e.what() << "]";
  }
  report(id, title, v);
}

bool within(double value, double target, double rel) {
  return std::abs(value - target) <= rel * std::abs(target);
}

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

struct Run {
  FitResult fit;
  Metrics test;
  double seconds = 0.0;
};

Run fit_and_test(const BenchData& data, const FitConfig& cfg) {
  const XGeometry geom = XGeometry::from(data.train);
  const auto t0 = std::chrono::steady_clock::now();
  Run r;
  r.fit = fit_adaptive(data.train, geom, cfg);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.test = evaluate(r.fit.model, data.test, geom);
  return r;
}

FitConfig kdv_config(double eps, Setting setting) {
  FitConfig c;
  c.epsilon = eps;
  c.setting = setting;
  c.beta = setting == Setting::MeanSquared ? 1.0 / std::sqrt(2.0) : 0.5;
  c.alpha = 1.0;
  c.lipschitz = 100.0;
  c.index = {IndexKind::HyperbolicCross, 5, 0};
  return c;
}

// ||u - D(E(u))||^2 summed, against sum of node errors^2 plus the truncation tail.
double decomposition_gap(const CpnModel& m, const SnapshotSet& s, const XGeometry& g) {
  const Eigen::MatrixXd a = m.encode_all(s.states, g);
  const Eigen::MatrixXd coef = m.coefficients(a);
  const Eigen::MatrixXd truth = project_all(m.basis, m.N(), s.states, g);
  double nodes = 0.0;
  for (const auto& node : m.nodes) {
    nodes += (truth.row(node.index - 1) - coef.row(node.index - 1)).squaredNorm();
  }
  const double tail = residual_norms(m.basis, m.N(), s, g).squaredNorm();
  const double direct = reconstruction_errors(m, s, g).squaredNorm();
  return std::abs(direct - nodes - tail) / direct;
}

double brute_force_loo(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Eigen::Index m = x.rows();
  double sum = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    Eigen::MatrixXd a(m - 1, x.cols());
    Eigen::VectorXd b(m - 1);
    for (Eigen::Index r = 0, t = 0; r < m; ++r) {
      if (r == k) continue;
      a.row(t) = x.row(r);
      b(t++) = y(r);
    }
    const Eigen::VectorXd c = a.colPivHouseholderQr().solve(b);
    sum += std::pow(y(k) - x.row(k).dot(c), 2);
  }
  return std::sqrt(sum / static_cast<double>(m));
}

}  // namespace

int main() {
  std::printf("generating benchmark data...\n");
  std::fflush(stdout);
  const BenchData kdv = gen_kdv(default_bench_spec("kdv"));
  const BenchData ac = gen_allen_cahn(default_bench_spec("allen_cahn"));
  const XGeometry kgeom = XGeometry::from(kdv.train);

  const std::vector<double> ms_eps = {1e-1, 1e-2, 1e-3};
  const std::vector<int> ms_reference_n = {15, 25, 34};
  std::vector<Run> ms_runs;
  std::vector<const CpnModel*> ms_models;  // for criterion 8(c)

  criterion(1, "epsilon guarantee, KdV mean-squared", [&](Verdict& v) {
    for (double eps : ms_eps) {
      ms_runs.push_back(fit_and_test(kdv, kdv_config(eps, Setting::MeanSquared)));
      const Run& r = ms_runs.back();
      v.detail << " eps=" << sci(eps) << ": RE_train=" << sci(r.fit.model.achieved.re) << " ("
               << sci(r.seconds) << " s);";
      v.require(r.fit.model.achieved.re <= eps, "RE_train <= eps at eps=" + sci(eps));
      v.require(r.seconds <= 300.0, "runtime <= 5 min at eps=" + sci(eps));
    }
  });

  criterion(2, "sparse table reproduction, KdV mean-squared", [&](Verdict& v) {
    v.require(ms_runs.size() == ms_eps.size(), "criterion 1 runs available");
    for (std::size_t k = 0; k < ms_runs.size(); ++k) {
      const Run& r = ms_runs[k];
      const double eps = ms_eps[k];
      v.detail << " eps=" << sci(eps) << ": n=" << r.fit.model.n() << " N=" << r.fit.model.N()
               << " RE_test=" << sci(r.test.re) << ";";
      v.require(r.test.re <= 2.0 * eps, "RE_test <= 2 eps at eps=" + sci(eps));
      v.require(r.fit.model.n() <= 12, "n <= 12 at eps=" + sci(eps));
      v.require(std::abs(r.fit.model.N() - ms_reference_n[k]) <= 4, "N within 4 at eps=" + sci(eps));
      ms_models.push_back(&r.fit.model);
    }
  });

  criterion(3, "worst-case setting, KdV", [&](Verdict& v) {
    const std::vector<double> eps_list = {1e-1, 1e-2};
    const std::vector<int> reference_n = {23, 34};
    for (std::size_t k = 0; k < eps_list.size(); ++k) {
      const double eps = eps_list[k];
      const Run r = fit_and_test(kdv, kdv_config(eps, Setting::WorstCase));
      v.detail << " eps=" << sci(eps) << ": n=" << r.fit.model.n() << " N=" << r.fit.model.N()
               << " REinf_train=" << sci(r.fit.model.achieved.re)
               << " REinf_test=" << sci(r.test.re) << ";";
      v.require(r.test.setting == Setting::WorstCase, "worst-case metrics");
      v.require(r.fit.model.achieved.re <= eps, "REinf_train <= eps at eps=" + sci(eps));
      v.require(std::abs(r.fit.model.N() - reference_n[k]) <= 4, "N within 4 at eps=" + sci(eps));
      v.require(r.test.re <= 2.0 * eps, "REinf_test <= 2 eps at eps=" + sci(eps));
    }
  });

  std::vector<Run> lip_runs;
  criterion(4, "Lipschitz control, KdV eps=1e-4", [&](Verdict& v) {
    const std::vector<double> ls = {2.0, 10.0, 100.0};
    for (double l : ls) {
      FitConfig cfg = kdv_config(1e-4, Setting::MeanSquared);
      cfg.lipschitz = l;
      lip_runs.push_back(fit_and_test(kdv, cfg));
      const CpnModel& m = lip_runs.back().fit.model;
      const LipschitzCheck lc = decoder_lipschitz_check(m, kdv.train, kgeom, cfg.pair_budget, cfg.seed);
      v.detail << " L=" << l << ": n=" << m.n() << " N=" << m.N() << " cert=" << sci(lc.certificate)
               << " emp=" << sci(lc.empirical) << ";";
      v.require(lc.certificate <= l, "certificate <= L at L=" + sci(l));
      v.require(lc.empirical <= lc.certificate + 1e-8, "empirical <= certificate at L=" + sci(l));
    }
    v.require(lip_runs.size() == 3 && lip_runs[0].fit.model.n() >= lip_runs[1].fit.model.n() &&
                  lip_runs[1].fit.model.n() >= lip_runs[2].fit.model.n(),
              "n(L=2) >= n(L=10) >= n(L=100)");
    for (const auto& r : lip_runs) ms_models.push_back(&r.fit.model);
  });

  criterion(5, "baseline gap, KdV", [&](Verdict& v) {
    const CpnModel lin = fit_linear(kdv.train, kgeom, 2);
    const QuadraticModel quad = fit_quadratic(kdv.train, kgeom, 2, default_ridge_grid(), 0);
    const double quad_test = relative_error(quad, kdv.test, kgeom);
    v.require(!lip_runs.empty(), "CPN eps=1e-4 run available");
    const double cpn_test = lip_runs.empty() ? 1.0 : lip_runs.back().test.re;
    v.detail << " linear RE_train=" << sci(lin.achieved.re) << " quadratic RE_test=" << sci(quad_test)
             << " CPN RE_test=" << sci(cpn_test) << " ratio=" << sci(quad_test / cpn_test);
    v.require(within(lin.achieved.re, 6.63e-1, 0.2), "linear within 20% of 0.663");
    v.require(within(quad_test, 5.66e-1, 0.3), "quadratic within 30% of 0.566");
    v.require(cpn_test * 100.0 <= quad_test, "CPN at least 100x below quadratic");
  });

  criterion(6, "Allen-Cahn", [&](Verdict& v) {
    const XGeometry g = XGeometry::from(ac.train);
    const CpnModel lin = fit_linear(ac.train, g, 2);
    FitConfig cfg;
    cfg.epsilon = 1e-3;
    cfg.index = {IndexKind::HyperbolicCross, 3, 0};
    const Run r = fit_and_test(ac, cfg);
    v.detail << " linear RE_train=" << sci(lin.achieved.re) << " CPN: n=" << r.fit.model.n()
             << " N=" << r.fit.model.N() << " RE_train=" << sci(r.fit.model.achieved.re)
             << " RE_test=" << sci(r.test.re);
    v.require(within(lin.achieved.re, 3.38e-2, 0.2), "linear within 20% of 3.38e-2");
    v.require(r.test.re <= 1e-3, "RE_test <= 1e-3");
    v.require(r.fit.model.n() <= 4, "n <= 4");
    v.require(std::abs(r.fit.model.N() - 7) <= 3, "N within 3 of 7");
    v.require(decomposition_gap(r.fit.model, ac.train, g) < 1e-8, "error decomposition");
  });

  criterion(7, "toy manifold exactness", [&](Verdict& v) {
    const SnapshotSet s = gen_toy(201);
    const XGeometry g(3);
    FitConfig cfg;
    cfg.epsilon = 1e-6;
    cfg.n0 = 1;
    cfg.index = {IndexKind::TotalDegree, 5, 0};
    cfg.lipschitz = 1000.0;
    cfg.basis = BasisChoice::Identity;
    cfg.center = false;
    const FitResult r = fit_adaptive(s, g, cfg);
    const CpnModel& m = r.model;
    const Eigen::MatrixXd coef = m.coefficients(m.encode_all(s.states, g));
    const double res2 = (coef.row(1) - s.states.row(1)).cwiseAbs().maxCoeff();
    const double res3 = (coef.row(2) - s.states.row(2)).cwiseAbs().maxCoeff();
    const CoefficientNode* n3 = nullptr;
    for (const auto& node : m.nodes) {
      if (node.index == 3) n3 = &node;
    }
    double identity = 0.0;
    for (Eigen::Index k = 0; k < s.states.cols(); ++k) {
      const double a1 = s.states(0, k), a2 = s.states(1, k);
      const double rhs = 25 * std::pow(a1, 4) * a2 * a2 - 20 * a1 * a1 * a2 * a2 - 4 * a1 * a2;
      identity = std::max(identity, std::abs(s.states(2, k) - rhs));
    }
    const Eigen::MatrixXd t = s.states.row(0).transpose();
    const Eigen::VectorXd a3 = s.states.row(2).transpose();
    const SparseFit uni = fit_sparse(t, a3, {IndexKind::TotalDegree, 5, 0});
    const double uni_res = (uni.model.evaluate(t) - a3).cwiseAbs().maxCoeff();
    v.detail << " n=" << m.n() << " depth=" << m.composition_depth() << " |a2 res|=" << sci(res2)
             << " |a3 res|=" << sci(res3) << " identity=" << sci(identity)
             << " univariate deg-5 res=" << sci(uni_res);
    v.require(m.encoder_indices == std::vector<int>{1}, "I = {1}");
    v.require(res2 < 1e-9, "a2 residual < 1e-9");
    v.require(n3 != nullptr, "a3 accepted");
    if (n3) {
      const auto& in = n3->inputs;
      v.require(std::find(in.begin(), in.end(), 1) != in.end() &&
                    std::find(in.begin(), in.end(), 2) != in.end(),
                "S3 contains {1, 2}");
    }
    v.require(m.composition_depth() == 2, "composition depth 2");
    v.require(identity < 1e-10, "a3 identity");
    v.require(uni_res > 1e-2, "univariate degree-5 fit leaves residual > 1e-2");
  });

  criterion(8, "structural invariants", [&](Verdict& v) {
    // (a) Gram
    const ReducedBasis pca = empirical_pca(kdv.train, kgeom, true);
    const ReducedBasis greedy = greedy_basis(kdv.train, kgeom, true);
    const ReducedBasis pca60 = pca.truncated(60);
    const double gram = std::max(gram_defect(pca60, kgeom), gram_defect(greedy.truncated(60), kgeom));
    v.detail << " (a) gram=" << sci(gram);
    v.require(gram <= 1e-10, "(a) basis Gram = I");

    // (b) PCA tail identity
    double tail_gap = 0.0;
    const double total = pca.spectrum.squaredNorm();
    for (Eigen::Index n = 0; n <= 60; n += 5) {
      const double direct = residual_norms(pca, n, kdv.train, kgeom).squaredNorm();
      const double tail = pca.spectrum.tail(pca.spectrum.size() - n).squaredNorm();
      tail_gap = std::max(tail_gap, std::abs(direct - tail) / std::max(direct, 1e-300 + 1e-16 * total));
    }
    v.detail << " (b) tail=" << sci(tail_gap);
    v.require(tail_gap <= 1e-8, "(b) PCA tail identity");

    // (c) error decomposition on every fitted mean-squared model
    double dec = 0.0;
    for (const CpnModel* m : ms_models) dec = std::max(dec, decomposition_gap(*m, kdv.train, kgeom));
    v.detail << " (c) decomposition=" << sci(dec) << " over " << ms_models.size() << " models";
    v.require(!ms_models.empty() && dec <= 1e-8, "(c) error decomposition");

    // (d) encoder Lipschitz
    double enc = 0.0;
    if (!ms_models.empty()) {
      const CpnModel& m = *ms_models.back();
      std::mt19937_64 rng(1);
      std::uniform_int_distribution<Eigen::Index> pick(0, kdv.test.states.cols() - 1);
      std::normal_distribution<double> n01;
      for (int t = 0; t < 1000; ++t) {
        Eigen::VectorXd u = kdv.test.states.col(pick(rng));
        Eigen::VectorXd w = kdv.train.states.col(pick(rng) % kdv.train.states.cols());
        if (t % 2) {
          for (auto& x : w) x = u.norm() * n01(rng) / 16.0;
        }
        const double den = kgeom.norm(u - w);
        if (den == 0.0) continue;
        enc = std::max(enc, (m.encode(u, kgeom) - m.encode(w, kgeom)).norm() / den);
      }
    }
    v.detail << " (d) encoder lip=" << sci(enc);
    v.require(enc <= 1.0 + 1e-10, "(d) encoder 1-Lipschitz");

    // (e) hat-matrix LOO
    std::mt19937_64 rng(77);
    std::normal_distribution<double> n01;
    double loo_gap = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
      const int m = 12 + inst % 19;
      const int p = 1 + inst % 8;
      Eigen::MatrixXd x(m, p);
      Eigen::VectorXd y(m);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n01(rng);
      for (auto& e : y) e = n01(rng);
      const LeastSquaresFit fit = least_squares_min_norm(x, y);
      const double fast = loo_error(y, fit.fitted, fit.leverages);
      const double slow = brute_force_loo(x, y);
      loo_gap = std::max(loo_gap, std::abs(fast - slow) / slow);
    }
    v.detail << " (e) loo=" << sci(loo_gap);
    v.require(loo_gap <= 1e-9, "(e) hat-matrix LOO");

    // (f) downward closedness of generated index sets
    bool closed = true;
    int sets = 0;
    for (int d = 1; d <= 6; ++d) {
      for (int p = 0; p <= 7; ++p) {
        for (auto kind : {IndexKind::TotalDegree, IndexKind::HyperbolicCross, IndexKind::PartialDegree}) {
          const IndexSetSpec spec{kind, p, kind == IndexKind::PartialDegree ? std::min(d, 2) : 0};
          closed = closed && build_index_set(d, spec).is_downward_closed();
          ++sets;
        }
      }
    }
    v.detail << " (f) " << sets << " sets";
    v.require(closed, "(f) downward closed");

    // (g) determinism
    FitConfig cfg = kdv_config(1e-2, Setting::MeanSquared);
    cfg.seed = 11;
    const FitResult a = fit_adaptive(kdv.train, kgeom, cfg);
    const FitResult b = fit_adaptive(kdv.train, kgeom, cfg);
    bool same = a.model.nodes.size() == b.model.nodes.size() &&
                a.model.encoder_indices == b.model.encoder_indices &&
                a.model.achieved.re == b.model.achieved.re;
    for (std::size_t k = 0; same && k < a.model.nodes.size(); ++k) {
      same = a.model.nodes[k].f.coeffs == b.model.nodes[k].f.coeffs &&
             a.model.nodes[k].f.support == b.model.nodes[k].f.support &&
             a.model.nodes[k].gamma == b.model.nodes[k].gamma;
    }
    v.detail << " (g) " << (same ? "bit-identical" : "differs");
    v.require(same, "(g) bit determinism");
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
