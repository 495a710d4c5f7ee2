#include "cpnmor/error.hpp"
#include "cpnmor/polyfit.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace cpnmor {

namespace {

struct Enumerator {
  int d;
  IndexSetSpec spec;
  std::size_t cap;
  std::vector<MultiIndex> out;
  MultiIndex current;

  bool admissible_extension(int sum, long product, int nonzero) const {
    switch (spec.kind) {
      case IndexKind::TotalDegree: return sum <= spec.degree;
      case IndexKind::HyperbolicCross: return product <= spec.degree + 1;
      case IndexKind::PartialDegree: {
        const int l = spec.interaction > 0 ? spec.interaction : d;
        return nonzero <= l;
      }
    }
    return false;
  }

  void recurse(int j, int sum, long product, int nonzero) {
    if (j == d) {
      if (out.size() >= cap) {
        throw InputError("multi-index set exceeds " + std::to_string(cap) +
                         " indices for d=" + std::to_string(d) + ", p=" +
                         std::to_string(spec.degree) + "; lower the degree to p=" +
                         std::to_string(std::max(0, spec.degree - 1)) +
                         " or a hyperbolic cross set");
      }
      out.push_back(current);
      return;
    }
    for (int k = 0; k <= spec.degree; ++k) {
      const int s = sum + k;
      const long p = product * (k + 1);
      const int nz = nonzero + (k > 0 ? 1 : 0);
      // Every criterion is monotone in k, so the first failure ends the loop.
      if (!admissible_extension(s, p, nz)) break;
      current[j] = k;
      recurse(j + 1, s, p, nz);
    }
    current[j] = 0;
  }
};

}  // namespace

const char* to_string(IndexKind k) {
  switch (k) {
    case IndexKind::TotalDegree: return "total";
    case IndexKind::HyperbolicCross: return "hyperbolic";
    case IndexKind::PartialDegree: return "partial";
  }
  return "?";
}

IndexKind index_kind_from_string(const std::string& s) {
  if (s == "total" || s == "total_degree") return IndexKind::TotalDegree;
  if (s == "hyperbolic" || s == "hyperbolic_cross") return IndexKind::HyperbolicCross;
  if (s == "partial" || s == "partial_degree") return IndexKind::PartialDegree;
  throw InputError("unknown index set kind '" + s + "' (expected hyperbolic, total or partial)");
}

bool graded_lex_less(const MultiIndex& a, const MultiIndex& b) {
  const int sa = std::accumulate(a.begin(), a.end(), 0);
  const int sb = std::accumulate(b.begin(), b.end(), 0);
  if (sa != sb) return sa < sb;
  return a < b;
}

MultiIndexSet build_index_set(int d, const IndexSetSpec& spec, std::size_t cap) {
  if (d < 1) throw InputError("index set dimension must be at least 1");
  if (spec.degree < 0) throw InputError("polynomial degree must be non-negative");
  Enumerator e{d, spec, cap, {}, MultiIndex(static_cast<std::size_t>(d), 0)};
  e.recurse(0, 0, 1, 0);
  std::sort(e.out.begin(), e.out.end(), graded_lex_less);
  return MultiIndexSet{d, spec, std::move(e.out)};
}

bool is_downward_closed(std::span<const MultiIndex> indices) {
  const std::set<MultiIndex> members(indices.begin(), indices.end());
  if (members.size() != indices.size()) return false;
  for (const auto& idx : indices) {
    MultiIndex pred = idx;
    for (std::size_t j = 0; j < pred.size(); ++j) {
      if (pred[j] == 0) continue;
      --pred[j];
      if (!members.contains(pred)) return false;
      ++pred[j];
    }
  }
  return true;
}

bool MultiIndexSet::is_downward_closed() const { return cpnmor::is_downward_closed(indices); }

}  // namespace cpnmor
