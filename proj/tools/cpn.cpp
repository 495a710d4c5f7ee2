// cpn: generate benchmark snapshots, fit CPN / linear / quadratic models,
// evaluate them and map data through their encoders and decoders.
#include "cpnmor/baselines.hpp"
#include "cpnmor/benchgen.hpp"
#include "cpnmor/container.hpp"
#include "cpnmor/cpn.hpp"
#include "cpnmor/error.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace cpnmor;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUser = 2;

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

// Coefficient matrices travel as CSV: one row per coordinate, one column per sample.
void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& a) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os << std::setprecision(17);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      if (c) os << ',';
      os << a(r, c);
    }
    os << '\n';
  }
}

Eigen::MatrixXd read_matrix_csv(const fs::path& path) {
  // Same layout as snapshot CSV files.
  return load_snapshots(path, SnapshotFormat::Csv).states;
}

json metrics_json(const Metrics& m) {
  json j = to_json(m);
  j.erase("wall_time");
  return j;
}

// Checks that data and model live in the same space and returns the model's geometry.
XGeometry checked_geometry(const ModelContainer& model, const SnapshotSet& data) {
  if (data.dim_state() != model.dim_state()) {
    throw InputError("data has dimension " + std::to_string(data.dim_state()) +
                     " but the model expects " + std::to_string(model.dim_state()));
  }
  if (data.norm_weights && model.norm_weights &&
      *data.norm_weights != *model.norm_weights) {
    throw InputError("norm weights of the data differ from those of the model");
  }
  return model.geometry();
}

struct Evaluation {
  json metrics;
  Eigen::VectorXd errors;     // per-sample X-norm reconstruction error
  Eigen::VectorXd norms;      // per-sample X-norm
};

Evaluation evaluate_container(const ModelContainer& model, const SnapshotSet& data) {
  const XGeometry geom = checked_geometry(model, data);
  Evaluation ev;
  ev.norms = geom.column_norms(data.states);
  if (model.cpn) {
    const Metrics m = evaluate(*model.cpn, data, geom);
    ev.metrics = metrics_json(m);
    ev.errors = reconstruction_errors(*model.cpn, data, geom);
  } else {
    const Setting setting = setting_from_string(model.metrics.value("setting", "ms"));
    const auto& q = *model.quadratic;
    ev.metrics = {{"setting", to_string(setting)},
                  {"re", relative_error(q, data, geom, setting)},
                  {"n", q.n()},
                  {"N", q.ambient_dim()},
                  {"N_comp", 1},
                  {"coefficient_errors", json::array()}};
    ev.errors = geom.column_norms(data.states - q.decode_all(q.encode_all(data.states, geom)));
  }
  return ev;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string bench;
  fs::path out_dir = ".";
  int num_t = 0;
  Eigen::Index grid = 0;
  double record_dt = 0.0;
  double horizon = 0.0;
  int substeps = 0;
  double eta = 0.0;
  bool csv = false;
};

int cmd_gen(const GenArgs& a) {
  BenchSpec spec = default_bench_spec(a.bench);
  if (a.num_t > 0) spec.num_t = a.num_t;
  if (a.grid > 0) spec.grid = a.grid;
  if (a.record_dt > 0) spec.record_dt = a.record_dt;
  if (a.horizon > 0) spec.horizon = a.horizon;
  if (a.substeps > 0) spec.substeps = a.substeps;
  if (a.eta > 0) spec.eta = a.eta;

  const BenchData data = generate(spec);
  fs::create_directories(a.out_dir);
  const std::string ext = a.csv ? ".csv" : ".snp";
  const SnapshotFormat fmt = a.csv ? SnapshotFormat::Csv : SnapshotFormat::Binary;
  const fs::path train = a.out_dir / (spec.name + "_train" + ext);
  save_snapshots(data.train, train, fmt);
  json files = {{"train", train.filename().string()}};
  json shape = {{"train", {data.train.dim_state(), data.train.num_samples()}}};
  if (data.test.num_samples() > 0) {
    const fs::path test = a.out_dir / (spec.name + "_test" + ext);
    save_snapshots(data.test, test, fmt);
    files["test"] = test.filename().string();
    shape["test"] = {data.test.dim_state(), data.test.num_samples()};
  }

  json sidecar = {{"bench", spec.name},
                  {"files", files},
                  {"shape", shape},
                  {"grid", spec.grid},
                  {"record_dt", spec.record_dt},
                  {"horizon", spec.horizon},
                  {"substeps", spec.substeps}};
  if (spec.name == "toy") {
    sidecar["num_t"] = spec.num_t;
    sidecar["column_order"] = "t ascending over [-1, 1]";
  } else if (spec.name == "kdv") {
    sidecar["train_end"] = spec.train_end;
    sidecar["column_order"] = "time ascending; train t <= train_end, test after";
  } else {
    sidecar["eta"] = spec.eta;
    sidecar["train_lambda"] = spec.train_params;
    sidecar["test_lambda"] = spec.test_params;
    sidecar["column_order"] = "lambda-major, time-minor (time varies fastest)";
  }
  write_json(a.out_dir / (spec.name + ".json"), sidecar);
  std::cout << sidecar.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  fs::path train;
  fs::path out;
  std::string method = "cpn";
  std::string setting = "ms";
  std::optional<double> epsilon;
  std::optional<double> beta;
  double alpha = 1.0;
  double lipschitz = 100.0;
  int degree = 5;
  std::string index_set = "hyperbolic";
  int interaction = 0;
  std::optional<double> eps0;
  std::optional<int> n0;
  bool conservative = false;
  std::uint64_t seed = 0;
  std::size_t pair_budget = kDefaultPairBudget;
  std::string basis = "auto";
  bool no_center = false;
  int threads = 0;
};

FitConfig config_from(const FitArgs& a) {
  FitConfig c;
  if (a.epsilon) c.epsilon = *a.epsilon;
  c.beta = a.beta;
  c.alpha = a.alpha;
  c.lipschitz = a.lipschitz;
  c.index = IndexSetSpec{index_kind_from_string(a.index_set), a.degree, a.interaction};
  c.setting = setting_from_string(a.setting);
  c.eps0 = a.eps0;
  c.n0 = a.n0;
  c.conservative_budgets = a.conservative;
  c.seed = a.seed;
  c.pair_budget = a.pair_budget;
  c.center = !a.no_center;
  c.basis = basis_choice_from_string(a.basis);
  c.threads = a.threads;
  return c;
}

int cmd_fit(const FitArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const SnapshotSet s = load_snapshots(a.train, format_for(a.train));
  s.validate();
  const XGeometry geom = XGeometry::from(s);
  const FitConfig cfg = config_from(a);
  cfg.validate();

  ModelContainer container;
  container.method = model_method_from_string(a.method);
  container.norm_weights = s.norm_weights;
  json metrics;
  json trace = json::array();
  // Baselines with a fixed n carry no error target unless --epsilon is given.
  std::optional<double> target = cfg.epsilon;

  if (container.method == ModelMethod::Cpn) {
    FitResult r = fit_adaptive(s, geom, cfg);
    metrics = metrics_json(r.model.achieved);
    metrics["wall_time"] = r.model.achieved.wall_time;
    metrics["n0"] = r.n0;
    trace = to_json(r.trace);
    container.cpn = std::move(r.model);
  } else {
    int n = 0;
    if (a.n0) {
      n = *a.n0;
      if (!a.epsilon) target.reset();
    } else if (container.method == ModelMethod::Linear) {
      const ReducedBasis pca = empirical_pca(s, geom, cfg.center);
      n = static_cast<int>(select_rank(pca, s, geom, cfg.setting, cfg.epsilon));
    } else {
      throw InputError("--method quadratic needs --n0");
    }
    if (container.method == ModelMethod::Linear) {
      CpnModel m = fit_linear(s, geom, n, cfg.center);
      m.setting = cfg.setting;
      m.config = cfg;
      m.zero_error = empirical_zero_error(s, geom, cfg.setting);
      m.achieved = evaluate(m, s, geom);
      metrics = metrics_json(m.achieved);
      container.cpn = std::move(m);
    } else {
      QuadraticModel q = fit_quadratic(s, geom, n, default_ridge_grid(), cfg.seed, cfg.center);
      metrics = {{"setting", to_string(cfg.setting)},
                 {"re", relative_error(q, s, geom, cfg.setting)},
                 {"n", q.n()},
                 {"N", q.ambient_dim()},
                 {"N_comp", 1},
                 {"coefficient_errors", json::array()},
                 {"ridge", q.ridge}};
      container.quadratic = std::move(q);
    }
    metrics["wall_time"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  metrics["re_train"] = metrics.at("re");
  metrics["method"] = a.method;
  metrics["target_epsilon"] = target ? json(*target) : json(nullptr);
  container.metrics = metrics;
  save_model(container, a.out);
  write_json(a.out / "metrics.json", metrics);
  write_json(a.out / "trace.json", trace);
  std::cout << metrics.dump(2) << '\n';

  if (target && !(metrics.at("re").get<double>() <= *target)) {
    std::cerr << "error: achieved relative error " << metrics.at("re").get<double>()
              << " exceeds target epsilon " << *target << '\n';
    return kExitUser;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  fs::path model;
  fs::path data;
  fs::path out;
  fs::path coeff_csv;
  fs::path recon_csv;
};

int cmd_eval(const EvalArgs& a) {
  const ModelContainer model = load_model(a.model);
  const SnapshotSet data = load_snapshots(a.data, format_for(a.data));
  data.validate();
  const Evaluation ev = evaluate_container(model, data);
  if (!a.out.empty()) write_json(a.out, ev.metrics);
  if (!a.coeff_csv.empty()) {
    std::ofstream os(a.coeff_csv);
    if (!os) throw InputError("cannot write " + a.coeff_csv.string());
    os << std::setprecision(17) << "index,role,error\n";
    if (model.cpn) {
      for (int i : model.cpn->encoder_indices) os << i << ",encoded,0\n";
      for (const auto& e : ev.metrics.at("coefficient_errors")) {
        os << e.at("index").get<int>() << ",decoded," << e.at("error").get<double>() << '\n';
      }
    }
  }
  if (!a.recon_csv.empty()) {
    std::ofstream os(a.recon_csv);
    if (!os) throw InputError("cannot write " + a.recon_csv.string());
    os << std::setprecision(17) << "sample,error,norm\n";
    for (Eigen::Index k = 0; k < ev.errors.size(); ++k) {
      os << k << ',' << ev.errors(k) << ',' << ev.norms(k) << '\n';
    }
  }
  std::cout << ev.metrics.dump(2) << '\n';
  return kExitOk;
}

int cmd_encode(const fs::path& model_dir, const fs::path& in, const fs::path& out) {
  const ModelContainer model = load_model(model_dir);
  const SnapshotSet data = load_snapshots(in, format_for(in));
  data.validate();
  checked_geometry(model, data);
  write_matrix_csv(out, model.encode_all(data.states));
  return kExitOk;
}

int cmd_decode(const fs::path& model_dir, const fs::path& in, const fs::path& out) {
  const ModelContainer model = load_model(model_dir);
  const Eigen::MatrixXd a = read_matrix_csv(in);
  if (a.rows() != model.n()) {
    throw InputError("coefficient file has " + std::to_string(a.rows()) +
                     " rows but the model has n = " + std::to_string(model.n()));
  }
  SnapshotSet s;
  s.states = model.decode_all(a);
  s.norm_weights = model.norm_weights;
  save_snapshots(s, out, format_for(out));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional polynomial networks for nonlinear model order reduction"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate benchmark snapshot files");
  g->add_option("bench", gen.bench, "toy, kdv or allen_cahn")
      ->required()
      ->check(CLI::IsMember({"toy", "kdv", "allen_cahn"}));
  g->add_option("--out-dir", gen.out_dir, "Output directory");
  g->add_option("--num-t", gen.num_t, "Toy: number of t samples");
  g->add_option("--grid", gen.grid, "Spatial grid size D");
  g->add_option("--record-dt", gen.record_dt, "Snapshot spacing in time");
  g->add_option("--horizon", gen.horizon, "Final time");
  g->add_option("--substeps", gen.substeps, "Solver steps per recorded step");
  g->add_option("--eta", gen.eta, "Allen-Cahn interface width");
  g->add_flag("--csv", gen.csv, "Write CSV instead of SNP1");

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit a model to training snapshots");
  f->add_option("train", fit.train, "Training snapshots (.snp or .csv)")->required();
  f->add_option("--out", fit.out, "Model directory")->required();
  f->add_option("--method", fit.method)->check(CLI::IsMember({"cpn", "linear", "quadratic"}));
  f->add_option("--setting", fit.setting)->check(CLI::IsMember({"ms", "wc"}));
  f->add_option("--epsilon", fit.epsilon, "Target relative error");
  f->add_option("--beta", fit.beta, "Share of epsilon given to linear truncation");
  f->add_option("--alpha", fit.alpha, "Budget weight exponent");
  f->add_option("--lipschitz", fit.lipschitz, "Decoder Lipschitz bound L");
  f->add_option("--degree", fit.degree, "Polynomial degree p");
  f->add_option("--index-set", fit.index_set, "hyperbolic, total or partial");
  f->add_option("--interaction", fit.interaction, "Partial degree: max active variables");
  auto* eps0 = f->add_option("--eps0", fit.eps0, "Relative error defining the initial n");
  f->add_option("--n0", fit.n0, "Initial number of encoder coordinates")->excludes(eps0);
  f->add_flag("--conservative", fit.conservative, "Conservative budget redistribution");
  f->add_option("--seed", fit.seed, "Seed for sampled pairs and CV folds");
  f->add_option("--pair-budget", fit.pair_budget, "Max pairs for Lipschitz estimates");
  f->add_option("--basis", fit.basis, "auto, pca, greedy or identity");
  f->add_flag("--no-center", fit.no_center, "Use a zero offset");
  f->add_option("--threads", fit.threads, "Worker threads (default: CPN_THREADS or 1)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a model on snapshots");
  e->add_option("model", ev.model)->required();
  e->add_option("data", ev.data)->required();
  e->add_option("--out", ev.out, "Write metrics JSON here");
  e->add_option("--coeff-csv", ev.coeff_csv, "Per-coefficient error CSV");
  e->add_option("--recon-csv", ev.recon_csv, "Per-sample reconstruction error CSV");

  fs::path model_dir, in, out;
  auto* enc = app.add_subcommand("encode", "Map snapshots to encoder coefficients (CSV)");
  auto* dec = app.add_subcommand("decode", "Map coefficient CSV to reconstructed snapshots");
  for (auto* sub : {enc, dec}) {
    sub->add_option("model", model_dir)->required();
    sub->add_option("input", in)->required();
    sub->add_option("output", out)->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUser;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*f) return cmd_fit(fit);
    if (*e) return cmd_eval(ev);
    if (*enc) return cmd_encode(model_dir, in, out);
    if (*dec) return cmd_decode(model_dir, in, out);
  } catch (const InputError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUser;
  } catch (const FeasibilityError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUser;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}
