#pragma once
// Shared pieces of the two engine backends: compiled rate tables, clan
// bookkeeping helpers, grid handling.

#include <algorithm>
#include <cmath>

#include "fvpop/engine.hpp"
#include "fvpop/error.hpp"
#include "fvpop/rng.hpp"

namespace fvpop::detail {

struct RateTables {
  int q = 0;
  std::vector<CompiledPoly> beta;   // q*q, row-major (parent, offspring)
  std::vector<CompiledPoly> rho;    // q
  std::vector<CompiledPoly> kappa;  // q or empty
  std::vector<double> bsup;         // q*q declared sup norms (0 = no modulation)
  std::vector<double> dsup;         // q

  explicit RateTables(const ModelSpec& spec) : q(spec.q) {
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) {
        beta.push_back(CompiledPoly::from(spec.beta[i][j]));
        bsup.push_back(spec.birth_mod_sup(i, j));
      }
    for (int i = 0; i < q; ++i) {
      rho.push_back(CompiledPoly::from(spec.rho[i]));
      dsup.push_back(spec.death_mod_sup(i));
    }
    if (spec.has_immigration())
      for (int i = 0; i < q; ++i) kappa.push_back(CompiledPoly::from(spec.kappa[i]));
  }
};

// Shares of a clan-id multiset, descending, plus the id of the largest clan.
inline Eigen::VectorXd clan_shares(std::vector<double>& ids, double* largest_id) {
  if (ids.empty()) {
    if (largest_id) *largest_id = std::numeric_limits<double>::quiet_NaN();
    return Eigen::VectorXd();
  }
  std::sort(ids.begin(), ids.end());
  std::vector<std::pair<double, double>> groups;  // (count, id)
  size_t i = 0;
  while (i < ids.size()) {
    size_t j = i;
    while (j < ids.size() && ids[j] == ids[i]) ++j;
    groups.emplace_back(static_cast<double>(j - i), ids[i]);
    i = j;
  }
  std::sort(groups.begin(), groups.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  Eigen::VectorXd shares(groups.size());
  double total = static_cast<double>(ids.size());
  for (size_t g = 0; g < groups.size(); ++g) shares[g] = groups[g].first / total;
  if (largest_id) *largest_id = groups.front().second;
  return shares;
}

}  // namespace fvpop::detail
