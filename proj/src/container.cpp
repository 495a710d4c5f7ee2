#include "cpnmor/container.hpp"

#include "cpnmor/error.hpp"

#include <chrono>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace cpnmor {

using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kBlob = "blob.bin";

class BlobWriter {
 public:
  void f64(const std::string& name, const double* data, std::vector<std::int64_t> shape) {
    const std::size_t count = element_count(shape);
    append(name, "f64", reinterpret_cast<const char*>(data), count * sizeof(double), shape);
  }
  void f64(const std::string& name, const Eigen::MatrixXd& m) {
    f64(name, m.data(), {m.rows(), m.cols()});
  }
  void f64(const std::string& name, const Eigen::VectorXd& v) { f64(name, v.data(), {v.size()}); }
  void i64(const std::string& name, const std::vector<std::int64_t>& v,
           std::vector<std::int64_t> shape) {
    append(name, "i64", reinterpret_cast<const char*>(v.data()), v.size() * sizeof(std::int64_t),
           shape);
  }

  const std::string& bytes() const { return bytes_; }
  const json& descriptors() const { return desc_; }

 private:
  static std::size_t element_count(const std::vector<std::int64_t>& shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= static_cast<std::size_t>(s);
    return n;
  }
  void append(const std::string& name, const char* dtype, const char* data, std::size_t size,
              const std::vector<std::int64_t>& shape) {
    desc_.push_back({{"name", name},
                     {"dtype", dtype},
                     {"offset", bytes_.size()},
                     {"shape", shape},
                     {"order", "F"}});
    bytes_.append(data, size);
  }
  std::string bytes_;
  json desc_ = json::array();
};

class BlobReader {
 public:
  BlobReader(std::string bytes, const json& descriptors) : bytes_(std::move(bytes)) {
    for (const auto& d : descriptors) {
      const std::string name = d.at("name");
      const std::size_t width = d.at("dtype") == "f64" ? sizeof(double) : sizeof(std::int64_t);
      std::size_t count = 1;
      for (auto s : d.at("shape")) count *= s.get<std::size_t>();
      const std::size_t offset = d.at("offset");
      if (offset + count * width > bytes_.size()) {
        throw InputError("model blob too short for array '" + name + "'");
      }
      entries_[name] = d;
    }
  }

  std::vector<std::int64_t> shape(const std::string& name) const {
    return entry(name).at("shape").get<std::vector<std::int64_t>>();
  }

  Eigen::MatrixXd matrix(const std::string& name) const {
    const auto s = shape(name);
    const Eigen::Index rows = s.empty() ? 1 : s[0];
    const Eigen::Index cols = s.size() > 1 ? s[1] : 1;
    Eigen::MatrixXd m(rows, cols);
    copy(name, "f64", m.data(), m.size() * sizeof(double));
    return m;
  }

  Eigen::VectorXd vector(const std::string& name) const {
    const Eigen::MatrixXd m = matrix(name);
    return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
  }

  std::vector<std::int64_t> ints(const std::string& name) const {
    std::size_t count = 1;
    for (auto v : shape(name)) count *= static_cast<std::size_t>(v);
    std::vector<std::int64_t> out(count);
    copy(name, "i64", out.data(), count * sizeof(std::int64_t));
    return out;
  }

  bool has(const std::string& name) const { return entries_.contains(name); }

 private:
  const json& entry(const std::string& name) const {
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw InputError("model blob lacks array '" + name + "'");
    return it->second;
  }
  void copy(const std::string& name, const char* dtype, void* dst, std::size_t size) const {
    const json& d = entry(name);
    if (d.at("dtype") != dtype) throw InputError("array '" + name + "' has unexpected dtype");
    std::memcpy(dst, bytes_.data() + d.at("offset").get<std::size_t>(), size);
  }
  std::string bytes_;
  std::map<std::string, json> entries_;
};

json spec_json(const IndexSetSpec& s) {
  return {{"kind", to_string(s.kind)}, {"degree", s.degree}, {"interaction", s.interaction}};
}

IndexSetSpec spec_from_json(const json& j) {
  IndexSetSpec s;
  s.kind = index_kind_from_string(j.at("kind"));
  s.degree = j.at("degree");
  s.interaction = j.value("interaction", 0);
  return s;
}

std::string node_key(int i, const char* field) {
  return "node." + std::to_string(i) + "." + field;
}

void write_basis(BlobWriter& blob, const ReducedBasis& b) {
  blob.f64("offset", b.offset);
  blob.f64("basis", b.basis);
  blob.f64("spectrum", b.spectrum);
}

ReducedBasis read_basis(const BlobReader& blob, const json& manifest) {
  ReducedBasis b;
  b.offset = blob.vector("offset");
  b.basis = blob.matrix("basis");
  b.spectrum = blob.vector("spectrum");
  b.mode = basis_mode_from_string(manifest.at("basis_mode"));
  return b;
}

std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

const char* to_string(ModelMethod m) {
  switch (m) {
    case ModelMethod::Cpn: return "cpn";
    case ModelMethod::Linear: return "linear";
    case ModelMethod::Quadratic: return "quadratic";
  }
  return "?";
}

ModelMethod model_method_from_string(const std::string& s) {
  if (s == "cpn") return ModelMethod::Cpn;
  if (s == "linear") return ModelMethod::Linear;
  if (s == "quadratic") return ModelMethod::Quadratic;
  throw InputError("unknown method '" + s + "' (expected cpn, linear or quadratic)");
}

json to_json(const FitConfig& c) {
  json j = {{"epsilon", c.epsilon},
            {"beta", c.beta_value()},
            {"beta_explicit", c.beta.has_value()},
            {"alpha", c.alpha},
            {"lipschitz", c.lipschitz},
            {"index_set", spec_json(c.index)},
            {"setting", to_string(c.setting)},
            {"eps0", c.eps0_value()},
            {"eps0_explicit", c.eps0.has_value()},
            {"n0", c.n0 ? json(*c.n0) : json(nullptr)},
            {"conservative_budgets", c.conservative_budgets},
            {"seed", c.seed},
            {"pair_budget", c.pair_budget},
            {"index_cap", c.index_cap},
            {"center", c.center},
            {"basis", to_string(c.basis)}};
  return j;
}

FitConfig fit_config_from_json(const json& j) {
  FitConfig c;
  c.epsilon = j.at("epsilon");
  if (j.value("beta_explicit", true)) c.beta = j.at("beta").get<double>();
  c.alpha = j.at("alpha");
  c.lipschitz = j.at("lipschitz");
  c.index = spec_from_json(j.at("index_set"));
  c.setting = setting_from_string(j.at("setting"));
  if (j.value("eps0_explicit", true)) c.eps0 = j.at("eps0").get<double>();
  if (!j.at("n0").is_null()) c.n0 = j.at("n0").get<int>();
  c.conservative_budgets = j.at("conservative_budgets");
  c.seed = j.at("seed");
  c.pair_budget = j.at("pair_budget");
  c.index_cap = j.value("index_cap", kDefaultIndexCap);
  c.center = j.at("center");
  c.basis = basis_choice_from_string(j.at("basis"));
  return c;
}

json to_json(const Metrics& m) {
  json errs = json::array();
  for (const auto& [i, e] : m.coefficient_errors) errs.push_back({{"index", i}, {"error", e}});
  return {{"setting", to_string(m.setting)},
          {"re", m.re},
          {"n", m.n},
          {"N", m.N},
          {"N_comp", m.n_comp},
          {"coefficient_errors", errs},
          {"wall_time", m.wall_time}};
}

json to_json(const std::vector<TraceStep>& trace) {
  json steps = json::array();
  for (const auto& st : trace) {
    json attempts = json::array();
    for (const auto& a : st.attempts) {
      attempts.push_back({{"index", a.index},
                          {"eps", a.eps},
                          {"bar_eps", a.bar_eps},
                          {"gamma", a.gamma ? json(*a.gamma) : json(nullptr)},
                          {"bar_gamma", a.bar_gamma},
                          {"accepted", a.accepted}});
    }
    steps.push_back({{"step", st.step},
                     {"k", st.k},
                     {"inputs", st.inputs},
                     {"decoded_inputs", st.decoded_inputs},
                     {"learned", st.learned},
                     {"promoted", st.promoted ? json(*st.promoted) : json(nullptr)},
                     {"attempts", attempts}});
  }
  return steps;
}

XGeometry ModelContainer::geometry() const {
  return norm_weights ? XGeometry(*norm_weights) : XGeometry(dim_state());
}

Eigen::Index ModelContainer::dim_state() const {
  return cpn ? cpn->basis.dim_state() : quadratic->offset.size();
}

int ModelContainer::n() const { return cpn ? cpn->n() : quadratic->n(); }

Eigen::MatrixXd ModelContainer::encode_all(const Eigen::Ref<const Eigen::MatrixXd>& states) const {
  return cpn ? cpn->encode_all(states, geometry()) : quadratic->encode_all(states, geometry());
}

Eigen::MatrixXd ModelContainer::decode_all(const Eigen::Ref<const Eigen::MatrixXd>& a) const {
  return cpn ? cpn->decode_all(a) : quadratic->decode_all(a);
}

namespace {

std::pair<json, std::string> serialize(const ModelContainer& model) {
  BlobWriter blob;
  json j = {{"format", "cpn-model"},
            {"format_version", kContainerVersion},
            {"method", to_string(model.method)},
            {"created", model.created},
            {"metrics", model.metrics}};
  if (model.norm_weights) blob.f64("norm_weights", *model.norm_weights);

  if (model.method == ModelMethod::Quadratic) {
    if (!model.quadratic) throw InputError("quadratic container without a quadratic model");
    const auto& q = *model.quadratic;
    j["dim_state"] = q.offset.size();
    j["n"] = q.n();
    j["ridge"] = q.ridge;
    blob.f64("offset", q.offset);
    blob.f64("phi_lin", q.phi_lin);
    blob.f64("phi_quad", q.phi_quad);
  } else {
    if (!model.cpn) throw InputError("container lacks its CPN/linear model");
    const auto& c = *model.cpn;
    j["dim_state"] = c.basis.dim_state();
    j["setting"] = to_string(c.setting);
    j["basis_mode"] = to_string(c.basis.mode);
    j["N"] = c.N();
    j["encoder_indices"] = c.encoder_indices;
    j["config"] = to_json(c.config);
    blob.f64("zero_error", &c.zero_error, {1});
    write_basis(blob, c.basis);
    json nodes = json::array();
    for (const auto& node : c.nodes) {
      const int i = node.index;
      nodes.push_back({{"index", i},
                       {"inputs", node.inputs},
                       {"step", node.step},
                       {"depth", node.depth},
                       {"index_set", spec_json(node.f.spec)}});
      const auto s = static_cast<std::int64_t>(node.f.support.size());
      const auto d = static_cast<std::int64_t>(node.f.dim);
      std::vector<std::int64_t> support;  // column-major s x d
      for (std::int64_t col = 0; col < d; ++col) {
        for (const auto& idx : node.f.support) support.push_back(idx[col]);
      }
      blob.i64(node_key(i, "support"), support, {s, d});
      blob.f64(node_key(i, "coeffs"), node.f.coeffs);
      blob.f64(node_key(i, "box_lower"), node.f.box.lower);
      blob.f64(node_key(i, "box_upper"), node.f.box.upper);
      std::vector<std::int64_t> mask(node.f.box.constant.begin(), node.f.box.constant.end());
      blob.i64(node_key(i, "constant_mask"), mask, {d});
      const Eigen::VectorXd rec = (Eigen::VectorXd(6) << node.eps, node.gamma, node.omega,
                                   node.tilde_omega, node.bar_eps, node.bar_gamma)
                                      .finished();
      blob.f64(node_key(i, "record"), rec);
    }
    j["nodes"] = nodes;
  }
  j["arrays"] = blob.descriptors();
  j["blob"] = kBlob;
  j["blob_size"] = blob.bytes().size();
  return {j, blob.bytes()};
}

}  // namespace

json manifest_of(const ModelContainer& model) { return serialize(model).first; }

void save_model(const ModelContainer& model, const std::filesystem::path& dir) {
  ModelContainer stamped = model;
  if (stamped.created.empty()) stamped.created = now_iso8601();
  const auto [manifest, bytes] = serialize(stamped);
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / kBlob, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("cannot write " + (dir / kBlob).string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::ofstream os(dir / kManifest, std::ios::trunc);
  if (!os) throw InputError("cannot write " + (dir / kManifest).string());
  os << manifest.dump(2) << '\n';
}

ModelContainer load_model(const std::filesystem::path& dir) {
  std::ifstream ms(dir / kManifest);
  if (!ms) throw InputError("cannot open model manifest in " + dir.string());
  json j;
  try {
    ms >> j;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model manifest: ") + e.what());
  }
  if (j.value("format", "") != "cpn-model" || j.value("format_version", 0) != kContainerVersion) {
    throw InputError("unsupported model container format");
  }
  std::ifstream bs(dir / j.value("blob", std::string(kBlob)), std::ios::binary);
  if (!bs) throw InputError("cannot open model blob in " + dir.string());
  std::string bytes((std::istreambuf_iterator<char>(bs)), std::istreambuf_iterator<char>());
  const BlobReader blob(std::move(bytes), j.at("arrays"));

  ModelContainer out;
  out.method = model_method_from_string(j.at("method"));
  out.created = j.value("created", "");
  out.metrics = j.value("metrics", json::object());
  if (blob.has("norm_weights")) out.norm_weights = blob.vector("norm_weights");

  if (out.method == ModelMethod::Quadratic) {
    QuadraticModel q;
    q.offset = blob.vector("offset");
    q.phi_lin = blob.matrix("phi_lin");
    q.phi_quad = blob.matrix("phi_quad");
    q.ridge = j.at("ridge");
    out.quadratic = std::move(q);
    return out;
  }

  CpnModel c;
  c.setting = setting_from_string(j.at("setting"));
  c.basis = read_basis(blob, j);
  c.encoder_indices = j.at("encoder_indices").get<std::vector<int>>();
  c.config = fit_config_from_json(j.at("config"));
  c.zero_error = blob.vector("zero_error")(0);
  for (const auto& jn : j.at("nodes")) {
    CoefficientNode node;
    node.index = jn.at("index");
    node.inputs = jn.at("inputs").get<std::vector<int>>();
    node.step = jn.at("step");
    node.depth = jn.at("depth");
    const int i = node.index;
    node.f.spec = spec_from_json(jn.at("index_set"));
    const auto shape = blob.shape(node_key(i, "support"));
    const auto flat = blob.ints(node_key(i, "support"));
    const std::int64_t s = shape.at(0);
    const std::int64_t d = shape.at(1);
    node.f.dim = static_cast<int>(d);
    node.f.support.assign(static_cast<std::size_t>(s), MultiIndex(static_cast<std::size_t>(d)));
    for (std::int64_t col = 0; col < d; ++col) {
      for (std::int64_t r = 0; r < s; ++r) {
        node.f.support[r][col] = static_cast<int>(flat[col * s + r]);
      }
    }
    node.f.coeffs = blob.vector(node_key(i, "coeffs"));
    node.f.box.lower = blob.vector(node_key(i, "box_lower"));
    node.f.box.upper = blob.vector(node_key(i, "box_upper"));
    for (auto v : blob.ints(node_key(i, "constant_mask"))) node.f.box.constant.push_back(v != 0);
    const Eigen::VectorXd rec = blob.vector(node_key(i, "record"));
    node.eps = rec(0);
    node.gamma = rec(1);
    node.omega = rec(2);
    node.tilde_omega = rec(3);
    node.bar_eps = rec(4);
    node.bar_gamma = rec(5);
    c.nodes.push_back(std::move(node));
  }
  c.check_structure();
  out.cpn = std::move(c);
  return out;
}

}  // namespace cpnmor
