#pragma once
// Model specification for multi-type density-regulated birth-death systems
// with optional spatial mechanisms, plus the particle-configuration snapshot
// type shared by the simulator, reference processes, and statistics.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "fvpop/domain.hpp"
#include "fvpop/polynomial.hpp"

namespace fvpop {

// Position-and-density dependent rate perturbation (order-1/N selection or
// death modulation). On finite domains each site carries its own density
// polynomial; on continuous domains the field factorizes into a density
// polynomial times a profile expanded in the domain's test-function family.
struct SpatialField {
  bool present = false;
  std::vector<PolyD> site_polys;  // finite domains, size K
  PolyD h_poly;                   // continuous domains
  Eigen::VectorXd profile;        // continuous domains, test-family coefficients
  double sup_bound = 0.0;         // declared sup norm, verified on a grid

  double eval(const SpatialDomain& dom, const Location& loc, const Eigen::VectorXd& h) const;
  double eval_site(int site, const Eigen::VectorXd& h) const;
};

struct Dispersal {
  enum class Kind { None, Rare, Local };
  Kind kind = Kind::None;
  // Rare: offspring redrawn from `kernel` with probability min(1, c/N).
  double c = 0.0;
  SourceLaw kernel;
  // Local: offspring displaced from the parent by a Gaussian step of
  // standard deviation scale/sqrt(N) (wrapped or reflected as the domain
  // dictates); continuous domains only.
  double scale = 0.0;
};

struct InitialCondition {
  Eigen::VectorXd h0;                // target densities, counts become round(N h0)
  std::vector<SourceLaw> placement;  // per type
  bool fresh_clans = true;           // false: all initial particles share one clan
};

struct ModelSpec {
  std::string name;
  int q = 1;
  SpatialDomain domain;

  // Density-dependent per-capita rates: birth of a type-j offspring from a
  // type-i parent at rate beta[i][j](h), death of type i at rate rho[i](h).
  std::vector<std::vector<PolyD>> beta;
  std::vector<PolyD> rho;
  double H_max = 0.0;  // simulation guard on total density

  // Optional mechanisms; empty containers mean the mechanism is absent.
  std::vector<std::vector<SpatialField>> birth_mod;  // q x q
  std::vector<SpatialField> death_mod;               // q
  std::vector<std::vector<Dispersal>> dispersal;     // q x q
  std::vector<PolyD> kappa;                          // immigration intensities
  double kappa_growth = 0.0;                         // declared C with kappa <= C(1+|h|_1)
  std::vector<SourceLaw> immigration_law;            // per type

  bool track_clans = false;
  InitialCondition init;

  bool has_immigration() const { return !kappa.empty(); }
  bool has_birth_mod() const;
  bool has_death_mod() const;
  bool has_dispersal() const;
  const Dispersal& dispersal_at(int i, int j) const;
  double birth_mod_sup(int i, int j) const;
  double death_mod_sup(int i) const;
};

struct Particle {
  Location loc;
  double clan = 0.0;  // lineage label in [0,1); 0 when tracking is off
};

struct PopulationSnapshot {
  int64_t N = 0;
  double t = 0.0;
  std::vector<std::vector<Particle>> types;

  int q() const { return static_cast<int>(types.size()); }
  // Exact density vector: per-type particle count over N.
  Eigen::VectorXd densities() const;
  int64_t total_count() const;
};

struct ValidationReport {
  struct Item {
    std::string code;  // which structural assumption the check belongs to
    std::string name;
    bool pass = false;
    std::string detail;
  };
  bool accepted = false;
  std::vector<Item> items;

  const Item* find(const std::string& name) const;
  std::string summary() const;
};

struct ValidationOptions {
  int grid_per_dim = 21;      // density-box sampling for nonnegativity/sup checks
  double newton_tol = 1e-12;
  bool quick = false;         // skip equilibrium analysis (structural checks only)
};

// Structural and dynamical admissibility: rate nonnegativity and declared
// bounds on a density grid (D), equilibrium existence (A), linearized
// stability (B), irreducibility of the interaction matrix at equilibrium (C).
ValidationReport validate_model(const ModelSpec& spec, const ValidationOptions& opts = {});

}  // namespace fvpop
