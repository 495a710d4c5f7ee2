#include "cpnmor/benchgen.hpp"

#include "cpnmor/error.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <numbers>

namespace cpnmor {

namespace {

using cplx = std::complex<double>;

long record_count(const BenchSpec& spec) {
  if (!(spec.record_dt > 0.0) || !(spec.horizon > 0.0) || spec.substeps < 1) {
    throw InputError("benchmark steps and horizon must be positive");
  }
  return std::lround(spec.horizon / spec.record_dt);
}

void check_finite(const Eigen::Ref<const Eigen::VectorXd>& u, double t) {
  if (!u.allFinite()) {
    throw NumericalError("non-finite field (blow-up) at t = " + std::to_string(t));
  }
}

/// Real-to-complex FFT pair on a fixed length, owning its FFTW plans.
class RealFft {
 public:
  explicit RealFft(int n)
      : n_(n),
        real_(fftw_alloc_real(static_cast<std::size_t>(n))),
        spec_(fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1))) {
    forward_ = fftw_plan_dft_r2c_1d(n, real_, spec_, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_1d(n, spec_, real_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void forward(const Eigen::VectorXd& u, Eigen::VectorXcd& out) {
    std::copy(u.data(), u.data() + n_, real_);
    fftw_execute(forward_);
    out.resize(n_ / 2 + 1);
    for (int k = 0; k <= n_ / 2; ++k) out(k) = cplx(spec_[k][0], spec_[k][1]);
  }

  /// Inverse transform including the 1/n normalization.
  void backward(const Eigen::VectorXcd& in, Eigen::VectorXd& u) {
    for (int k = 0; k <= n_ / 2; ++k) {
      spec_[k][0] = in(k).real();
      spec_[k][1] = in(k).imag();
    }
    fftw_execute(backward_);
    u.resize(n_);
    for (int j = 0; j < n_; ++j) u(j) = real_[j] / n_;
  }

 private:
  int n_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan forward_;
  fftw_plan backward_;
};

/// ETDRK4 for v_t = L v + N(v) with diagonal L, coefficients by contour integrals.
class KdvStepper {
 public:
  KdvStepper(int n, double h) : n_(n), fft_(n) {
    const int modes = n / 2 + 1;
    dealias_ = n / 3;
    e_.resize(modes);
    e2_.resize(modes);
    q_.resize(modes);
    f1_.resize(modes);
    f2_.resize(modes);
    f3_.resize(modes);
    ik_.resize(modes);
    constexpr int kContour = 64;
    for (int k = 0; k < modes; ++k) {
      // u_t = -u_xxx - 2 (u^2)_x; u_xxx has symbol (ik)^3 = -i k^3.
      const double kk = (k == n / 2) ? 0.0 : static_cast<double>(k);
      const cplx lk(0.0, kk * kk * kk);
      ik_(k) = cplx(0.0, kk);
      e_(k) = std::exp(h * lk);
      e2_(k) = std::exp(0.5 * h * lk);
      cplx q(0), f1(0), f2(0), f3(0);
      for (int c = 0; c < kContour; ++c) {
        const double theta = std::numbers::pi * (c + 0.5) / kContour * 2.0;
        const cplx r = h * lk + std::exp(cplx(0.0, theta));
        const cplx er = std::exp(r);
        q += (std::exp(0.5 * r) - 1.0) / r;
        f1 += (-4.0 - r + er * (4.0 - 3.0 * r + r * r)) / (r * r * r);
        f2 += (2.0 + r + er * (r - 2.0)) / (r * r * r);
        f3 += (-4.0 - 3.0 * r - r * r + er * (4.0 - r)) / (r * r * r);
      }
      q_(k) = h * q / double(kContour);
      f1_(k) = h * f1 / double(kContour);
      f2_(k) = h * f2 / double(kContour);
      f3_(k) = h * f3 / double(kContour);
    }
  }

  void step(Eigen::VectorXcd& v) {
    nonlinear(v, nv_);
    a_ = e2_.cwiseProduct(v) + q_.cwiseProduct(nv_);
    nonlinear(a_, na_);
    b_ = e2_.cwiseProduct(v) + q_.cwiseProduct(na_);
    nonlinear(b_, nb_);
    c_ = e2_.cwiseProduct(a_) + q_.cwiseProduct(2.0 * nb_ - nv_);
    nonlinear(c_, nc_);
    v = e_.cwiseProduct(v) + f1_.cwiseProduct(nv_) + 2.0 * f2_.cwiseProduct(na_ + nb_) +
        f3_.cwiseProduct(nc_);
  }

  RealFft& fft() { return fft_; }

 private:
  /// -2 ik FFT(u^2), with the 2/3 rule applied to the product.
  void nonlinear(const Eigen::VectorXcd& v, Eigen::VectorXcd& out) {
    fft_.backward(v, u_);
    u_ = u_.array().square();
    fft_.forward(u_, out);
    for (Eigen::Index k = 0; k < out.size(); ++k) {
      out(k) = k > dealias_ ? cplx(0.0) : -2.0 * ik_(k) * out(k);
    }
  }

  int n_;
  int dealias_;
  RealFft fft_;
  Eigen::VectorXcd e_, e2_, q_, f1_, f2_, f3_, ik_;
  Eigen::VectorXcd nv_, na_, nb_, nc_, a_, b_, c_;
  Eigen::VectorXd u_;
};

/// Solves the constant-coefficient tridiagonal system (-c, diag, -c) x = rhs in place.
// Constant-coefficient tridiagonal solve: diag on the diagonal, off on both
// off-diagonals. rhs is overwritten with the solution.
void solve_tridiagonal(double diag, double off, Eigen::VectorXd& rhs, Eigen::VectorXd& work) {
  const Eigen::Index n = rhs.size();
  work.resize(n);
  double denom = diag;
  work(0) = off / denom;
  rhs(0) /= denom;
  for (Eigen::Index i = 1; i < n; ++i) {
    denom = diag - off * work(i - 1);
    work(i) = off / denom;
    rhs(i) = (rhs(i) - off * rhs(i - 1)) / denom;
  }
  for (Eigen::Index i = n - 2; i >= 0; --i) rhs(i) -= work(i) * rhs(i + 1);
}

}  // namespace

BenchSpec default_bench_spec(const std::string& name) {
  BenchSpec s;
  s.name = name;
  if (name == "toy") {
    s.num_t = 201;
    s.grid = 3;
  } else if (name == "kdv") {
    s.grid = 256;
    s.record_dt = 2e-4;
    s.horizon = 1.0;
    s.train_end = 0.2;
    s.substeps = 4;
  } else if (name == "allen_cahn") {
    s.grid = 512;
    s.record_dt = 0.1;
    s.horizon = 60.0;
    s.substeps = 10;
    s.eta = 0.1;  // diffusion coefficient eta^2 = 1e-2
    s.train_params = {0.5, 0.55, 0.60};
    for (int k = 0; k < 10; ++k) s.test_params.push_back(0.5 + 0.1 * k / 9.0);
  } else {
    throw InputError("unknown benchmark '" + name + "' (expected toy, kdv or allen_cahn)");
  }
  return s;
}

double toy_a1(double t) { return t; }
double toy_a2(double t) { return 5.0 * t * t * t - 4.0 * t; }
double toy_a3(double t) {
  const double t2 = t * t;
  return t2 * (16.0 + t2 * (-340.0 + t2 * (1200.0 + t2 * (-1500.0 + t2 * 625.0))));
}

SnapshotSet gen_toy(int num_t) {
  if (num_t < 2) throw InputError("toy manifold needs at least 2 samples");
  SnapshotSet s;
  s.states.resize(3, num_t);
  for (int k = 0; k < num_t; ++k) {
    const double t = -1.0 + 2.0 * k / (num_t - 1);
    s.states.col(k) << toy_a1(t), toy_a2(t), toy_a3(t);
  }
  return s;
}

Eigen::VectorXd kdv_grid(Eigen::Index n) {
  return Eigen::VectorXd::NullaryExpr(
      n, [n](Eigen::Index j) { return -std::numbers::pi + 2.0 * std::numbers::pi * j / n; });
}

Eigen::VectorXd allen_cahn_grid(Eigen::Index n) {
  return Eigen::VectorXd::LinSpaced(n, -1.0, 1.0);
}

Eigen::MatrixXd kdv_trajectory(const BenchSpec& spec) {
  const long records = record_count(spec);
  const int n = static_cast<int>(spec.grid);
  if (n < 8 || n % 2 != 0) throw InputError("KdV grid size must be an even number >= 8");
  const Eigen::VectorXd x = kdv_grid(n);

  Eigen::MatrixXd out(n, records + 1);
  out.col(0) = x.unaryExpr([](double xi) {
    const double s = 1.0 / std::cosh(std::sqrt(8.0) * xi);
    return 1.0 + 24.0 * s * s;
  });

  KdvStepper stepper(n, spec.record_dt / spec.substeps);
  Eigen::VectorXcd v;
  Eigen::VectorXd u = out.col(0);
  stepper.fft().forward(u, v);
  for (long r = 1; r <= records; ++r) {
    for (int s = 0; s < spec.substeps; ++s) stepper.step(v);
    stepper.fft().backward(v, u);
    check_finite(u, r * spec.record_dt);
    out.col(r) = u;
  }
  return out;
}

BenchData gen_kdv(const BenchSpec& spec) {
  const Eigen::MatrixXd traj = kdv_trajectory(spec);
  const long train_cols = std::lround(spec.train_end / spec.record_dt) + 1;
  if (train_cols < 1 || train_cols >= traj.cols()) {
    throw InputError("KdV train_end must lie strictly inside the horizon");
  }
  BenchData d;
  d.train.states = traj.leftCols(train_cols);
  d.test.states = traj.rightCols(traj.cols() - train_cols);
  return d;
}

Eigen::MatrixXd allen_cahn_trajectory(const BenchSpec& spec, double lambda) {
  const long records = record_count(spec);
  const Eigen::Index n = spec.grid;
  if (n < 4) throw InputError("Allen-Cahn grid needs at least 4 points");
  const Eigen::VectorXd x = allen_cahn_grid(n);
  const double h = 2.0 / static_cast<double>(n - 1);
  const double dt = spec.record_dt / spec.substeps;
  const double mu = spec.eta * spec.eta / (h * h);

  Eigen::MatrixXd out(n, records + 1);
  Eigen::VectorXd u = x.unaryExpr([lambda](double xi) {
    return lambda * xi + (1.0 - lambda) * std::sin(-1.5 * std::numbers::pi * xi);
  });
  u(0) = -1.0;
  u(n - 1) = 1.0;
  out.col(0) = u;

  const Eigen::Index m = n - 2;
  auto reaction = [](const Eigen::VectorXd& v) {
    return Eigen::VectorXd(v.array() - v.array().cube());
  };
  Eigen::VectorXd work, rhs;
  Eigen::VectorXd prev_inner;  // u^{n-1} interior
  Eigen::VectorXd prev_react;

  // IMEX: first step backward/forward Euler, then second-order SBDF2
  // (implicit diffusion, extrapolated explicit reaction).
  long step = 0;
  for (long r = 1; r <= records; ++r) {
    for (int s = 0; s < spec.substeps; ++s, ++step) {
      const Eigen::VectorXd inner = u.segment(1, m);
      const Eigen::VectorXd react = reaction(inner);
      if (step == 0) {
        rhs = inner + dt * react;
        rhs(0) += dt * mu * u(0);
        rhs(m - 1) += dt * mu * u(n - 1);
        solve_tridiagonal(1.0 + 2.0 * dt * mu, -dt * mu, rhs, work);
      } else {
        rhs = (4.0 * inner - prev_inner) / 3.0 + (2.0 * dt / 3.0) * (2.0 * react - prev_react);
        const double c = 2.0 * dt * mu / 3.0;
        rhs(0) += c * u(0);
        rhs(m - 1) += c * u(n - 1);
        solve_tridiagonal(1.0 + 2.0 * c, -c, rhs, work);
      }
      prev_inner = inner;
      prev_react = react;
      u.segment(1, m) = rhs;
    }
    check_finite(u, r * spec.record_dt);
    out.col(r) = u;
  }
  return out;
}

BenchData gen_allen_cahn(const BenchSpec& spec) {
  if (spec.train_params.empty() || spec.test_params.empty()) {
    throw InputError("Allen-Cahn needs non-empty train and test lambda lists");
  }
  auto stack = [&](const std::vector<double>& params) {
    const long per = record_count(spec) + 1;
    SnapshotSet s;
    s.states.resize(spec.grid, per * static_cast<long>(params.size()));
    for (std::size_t p = 0; p < params.size(); ++p) {
      s.states.middleCols(static_cast<Eigen::Index>(p) * per, per) =
          allen_cahn_trajectory(spec, params[p]);
    }
    return s;
  };
  BenchData d;
  d.train = stack(spec.train_params);
  d.test = stack(spec.test_params);
  return d;
}

BenchData generate(const BenchSpec& spec) {
  if (spec.name == "toy") return BenchData{gen_toy(spec.num_t), SnapshotSet{}};
  if (spec.name == "kdv") return gen_kdv(spec);
  if (spec.name == "allen_cahn") return gen_allen_cahn(spec);
  throw InputError("unknown benchmark '" + spec.name + "'");
}

}  // namespace cpnmor
