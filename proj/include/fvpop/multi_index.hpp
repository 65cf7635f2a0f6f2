#pragma once
// Multi-index utilities for the power-series machinery: graded-lex
// enumeration of exponent vectors and rank lookup tables.

#include <map>
#include <numeric>
#include <vector>

namespace fvpop {

using MultiIndex = std::vector<int>;

inline int mi_degree(const MultiIndex& a) {
  return std::accumulate(a.begin(), a.end(), 0);
}

// Graded lexicographic: lower total degree first, then lexicographic with the
// first variable weighted highest (so within degree k of two variables:
// (k,0), (k-1,1), ..., (0,k)).
inline bool mi_graded_lex_less(const MultiIndex& a, const MultiIndex& b) {
  int da = mi_degree(a), db = mi_degree(b);
  if (da != db) return da < db;
  return a > b;  // larger leading exponents come first within a degree
}

namespace detail {
inline void mi_enumerate_rec(int nvars, int pos, int remaining, MultiIndex& cur,
                             std::vector<MultiIndex>& out) {
  if (pos == nvars - 1) {
    cur[pos] = remaining;
    out.push_back(cur);
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    cur[pos] = e;
    mi_enumerate_rec(nvars, pos + 1, remaining - e, cur, out);
  }
}
}  // namespace detail

// All multi-indices of exact degree k, in graded-lex order.
inline std::vector<MultiIndex> mi_of_degree(int nvars, int k) {
  std::vector<MultiIndex> out;
  MultiIndex cur(nvars, 0);
  detail::mi_enumerate_rec(nvars, 0, k, cur, out);
  return out;
}

// All multi-indices of degree 0..k, in graded-lex order.
inline std::vector<MultiIndex> mi_up_to_degree(int nvars, int k) {
  std::vector<MultiIndex> out;
  for (int d = 0; d <= k; ++d) {
    auto block = mi_of_degree(nvars, d);
    out.insert(out.end(), block.begin(), block.end());
  }
  return out;
}

// Rank lookup for a fixed enumeration.
struct MultiIndexTable {
  std::vector<MultiIndex> list;
  std::map<MultiIndex, int> rank;

  explicit MultiIndexTable(std::vector<MultiIndex> l) : list(std::move(l)) {
    for (int i = 0; i < static_cast<int>(list.size()); ++i) rank[list[i]] = i;
  }
  int find(const MultiIndex& a) const {
    auto it = rank.find(a);
    return it == rank.end() ? -1 : it->second;
  }
  int size() const { return static_cast<int>(list.size()); }
};

}  // namespace fvpop
