#pragma once

#include "cpnmor/snapdata.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cpnmor {

/// Parameters of one benchmark generator. Fields unused by a benchmark are ignored.
struct BenchSpec {
  std::string name;
  Eigen::Index grid = 0;
  double record_dt = 0.0;   // spacing of recorded snapshots
  double horizon = 0.0;     // final time
  double train_end = 0.0;   // KdV: snapshots with t <= train_end go to train
  int substeps = 1;         // solver steps per recorded step
  double eta = 0.0;         // Allen-Cahn interface width
  std::vector<double> train_params;  // Allen-Cahn lambda values
  std::vector<double> test_params;
  int num_t = 0;            // toy: number of equispaced t values
};

BenchSpec default_bench_spec(const std::string& name);

struct BenchData {
  SnapshotSet train;
  SnapshotSet test;
};

/// Coordinates of the toy curve t -> (a1, a2, a3).
double toy_a1(double t);
double toy_a2(double t);
double toy_a3(double t);

/// num_t equispaced t in [-1, 1]; column k = (a1, a2, a3)(t_k).
SnapshotSet gen_toy(int num_t);

/// Periodic KdV soliton u_t + 4 u u_x + u_xxx = 0 on [-pi, pi), split in time.
BenchData gen_kdv(const BenchSpec& spec);

/// Allen-Cahn u_t = eta^2 u_xx + u - u^3 on [-1, 1] with u(+-1) = +-1, one
/// trajectory per lambda; columns ordered lambda-major, time-minor.
BenchData gen_allen_cahn(const BenchSpec& spec);

/// Dispatches on spec.name ("toy" returns the toy set as train and an empty test).
BenchData generate(const BenchSpec& spec);

/// Single KdV/Allen-Cahn trajectories, recorded every record_dt up to horizon
/// (columns = times 0, dt, 2 dt, ...).
Eigen::MatrixXd kdv_trajectory(const BenchSpec& spec);
Eigen::MatrixXd allen_cahn_trajectory(const BenchSpec& spec, double lambda);

Eigen::VectorXd kdv_grid(Eigen::Index n);
Eigen::VectorXd allen_cahn_grid(Eigen::Index n);

}  // namespace cpnmor
