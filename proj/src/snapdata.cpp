#include "cpnmor/snapdata.hpp"

#include "cpnmor/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace cpnmor {

static_assert(std::endian::native == std::endian::little,
              "SNP1 I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'N', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw InputError(std::string("truncated header while reading ") + what);
  }
  return v;
}

void read_doubles(std::istream& is, double* dst, std::size_t count, const char* what) {
  const auto bytes = static_cast<std::streamsize>(count * sizeof(double));
  is.read(reinterpret_cast<char*>(dst), bytes);
  if (is.gcount() != bytes) throw InputError(what);
}

SnapshotSet load_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());

  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kMagic) {
    throw InputError("bad magic in " + path.string() + " (expected SNP1)");
  }
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion) {
    throw InputError("unsupported SNP1 version " + std::to_string(version));
  }
  const auto d = get<std::uint64_t>(is, "D");
  const auto m = get<std::uint64_t>(is, "m");
  const auto has_weights = get<std::uint8_t>(is, "has_weights");
  if (d == 0 || m == 0) throw InputError("SNP1 header declares an empty snapshot set");
  if (has_weights > 1) throw InputError("SNP1 has_weights flag must be 0 or 1");

  SnapshotSet s;
  if (has_weights == 1) {
    Eigen::VectorXd w(static_cast<Eigen::Index>(d));
    read_doubles(is, w.data(), d, "payload shorter than D*8 bytes of weights");
    s.norm_weights = std::move(w);
  }
  s.states.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m));
  read_doubles(is, s.states.data(), d * m, "payload shorter than D·m·8 bytes");
  if (is.peek() != std::char_traits<char>::eof()) {
    throw InputError("payload longer than D·m·8 bytes");
  }
  s.validate();
  return s;
}

SnapshotSet load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw InputError("cannot parse CSV value '" + cell + "' in " + path.string());
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InputError("ragged CSV: row " + std::to_string(rows.size() + 1) + " has " +
                       std::to_string(row.size()) + " columns, expected " +
                       std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().empty()) throw InputError("empty CSV " + path.string());

  SnapshotSet s;
  s.states.resize(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < s.states.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.states.cols(); ++j) s.states(i, j) = rows[i][j];
  }
  s.validate();
  return s;
}

}  // namespace

const char* to_string(Setting s) { return s == Setting::MeanSquared ? "ms" : "wc"; }

Setting setting_from_string(const std::string& s) {
  if (s == "ms") return Setting::MeanSquared;
  if (s == "wc") return Setting::WorstCase;
  throw InputError("unknown setting '" + s + "' (expected ms or wc)");
}

void SnapshotSet::validate() const {
  if (states.rows() < 1 || states.cols() < 1) throw InputError("snapshot set is empty");
  if (!states.allFinite()) throw InputError("snapshot set contains non-finite entries");
  if (norm_weights) {
    if (norm_weights->size() != states.rows()) {
      throw InputError("norm weights length does not match state dimension");
    }
    if (!norm_weights->allFinite() || (norm_weights->array() <= 0.0).any()) {
      throw InputError("norm weights must be finite and strictly positive");
    }
  }
}

XGeometry::XGeometry(Eigen::Index dim) : sqrt_weights_(Eigen::VectorXd::Ones(dim)) {}

XGeometry::XGeometry(const Eigen::VectorXd& weights) : euclidean_(false) {
  if ((weights.array() <= 0.0).any() || !weights.allFinite()) {
    throw InputError("norm weights must be finite and strictly positive");
  }
  sqrt_weights_ = weights.array().sqrt();
}

XGeometry XGeometry::from(const SnapshotSet& s) {
  return s.norm_weights ? XGeometry(*s.norm_weights) : XGeometry(s.dim_state());
}

double XGeometry::inner(const Eigen::Ref<const Eigen::VectorXd>& u,
                        const Eigen::Ref<const Eigen::VectorXd>& v) const {
  if (u.size() != dim() || v.size() != dim()) {
    throw InputError("dimension mismatch in X inner product: got " + std::to_string(u.size()) +
                     " and " + std::to_string(v.size()) + ", expected " +
                     std::to_string(dim()));
  }
  if (euclidean_) return u.dot(v);
  return (u.array() * sqrt_weights_.array().square() * v.array()).sum();
}

double XGeometry::norm(const Eigen::Ref<const Eigen::VectorXd>& u) const {
  return std::sqrt(inner(u, u));
}

Eigen::VectorXd XGeometry::column_norms(const Eigen::Ref<const Eigen::MatrixXd>& a) const {
  if (euclidean_) return a.colwise().norm().transpose();
  return scale(a).colwise().norm().transpose();
}

Eigen::MatrixXd XGeometry::scale(const Eigen::Ref<const Eigen::MatrixXd>& a) const {
  if (euclidean_) return a;
  return sqrt_weights_.asDiagonal() * a;
}

Eigen::MatrixXd XGeometry::unscale(const Eigen::Ref<const Eigen::MatrixXd>& a) const {
  if (euclidean_) return a;
  return sqrt_weights_.cwiseInverse().asDiagonal() * a;
}

double x_inner(const XGeometry& geom, const Eigen::Ref<const Eigen::VectorXd>& u,
               const Eigen::Ref<const Eigen::VectorXd>& v) {
  return geom.inner(u, v);
}

double empirical_zero_error(const SnapshotSet& s, const XGeometry& geom, Setting setting) {
  const Eigen::VectorXd norms = geom.column_norms(s.states);
  if (setting == Setting::MeanSquared) return norms.norm();
  return norms.maxCoeff();
}

SnapshotSet load_snapshots(const std::filesystem::path& path, SnapshotFormat format) {
  return format == SnapshotFormat::Binary ? load_binary(path) : load_csv(path);
}

void save_snapshots(const SnapshotSet& s, const std::filesystem::path& path,
                    SnapshotFormat format) {
  s.validate();
  if (format == SnapshotFormat::Binary) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("cannot write " + path.string());
    os.write(kMagic.data(), 4);
    put<std::uint32_t>(os, kVersion);
    put<std::uint64_t>(os, static_cast<std::uint64_t>(s.dim_state()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(s.num_samples()));
    put<std::uint8_t>(os, s.norm_weights ? 1 : 0);
    if (s.norm_weights) {
      os.write(reinterpret_cast<const char*>(s.norm_weights->data()),
               static_cast<std::streamsize>(s.dim_state() * sizeof(double)));
    }
    os.write(reinterpret_cast<const char*>(s.states.data()),
             static_cast<std::streamsize>(s.states.size() * sizeof(double)));
    if (!os) throw InputError("write failed for " + path.string());
    return;
  }
  if (s.norm_weights) throw InputError("CSV snapshot format cannot carry norm weights");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write " + path.string());
  os.precision(17);
  for (Eigen::Index i = 0; i < s.states.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.states.cols(); ++j) {
      if (j) os << ',';
      os << s.states(i, j);
    }
    os << '\n';
  }
}

SnapshotFormat format_for(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".csv" ? SnapshotFormat::Csv : SnapshotFormat::Binary;
}

}  // namespace cpnmor
