#include "fvpop/demos.hpp"

namespace fvpop {

namespace {

PolyD h_total(int q) {
  PolyD p = PolyD::constant(q, 0.0);
  for (int j = 0; j < q; ++j) p += PolyD::variable(q, j);
  return p;
}

SourceLaw site_mass(int K, int site) {
  SourceLaw law;
  law.kind = SourceLaw::Kind::Discrete;
  law.weights.assign(K, 0.0);
  law.weights[site] = 1.0;
  return law;
}

}  // namespace

ModelSpec logistic_spec(int sites) {
  ModelSpec m;
  m.name = "logistic";
  m.q = 1;
  FiniteSetDomain dom;
  dom.K = sites;
  m.domain = dom;
  m.beta = {{PolyD::constant(1, 2.0)}};
  m.rho = {PolyD::variable(1, 0)};
  m.H_max = 8.0;
  m.init.h0 = Eigen::VectorXd::Constant(1, 2.0);
  m.init.placement = {SourceLaw{}};
  return m;
}

ModelSpec symmetric_pair_spec() {
  ModelSpec m;
  m.name = "symmetric-pair";
  m.q = 2;
  FiniteSetDomain dom;
  dom.K = 1;
  m.domain = dom;
  PolyD H = h_total(2);
  m.beta = {{PolyD::constant(2, 2.0), PolyD::constant(2, 1.0)},
            {PolyD::constant(2, 1.0), PolyD::constant(2, 2.0)}};
  m.rho = {H, H};
  m.H_max = 8.0;
  m.init.h0 = Eigen::VectorXd::Constant(2, 1.5);
  m.init.placement = {SourceLaw{}, SourceLaw{}};
  return m;
}

ModelSpec symmetric_ring_spec() {
  ModelSpec m = symmetric_pair_spec();
  m.name = "symmetric-ring";
  FiniteSetDomain dom;
  dom.K = 3;
  Eigen::MatrixXd ring(3, 3);
  ring << -2, 1, 1, 1, -2, 1, 1, 1, -2;
  dom.migration = {1.0 * ring, 0.5 * ring};
  m.domain = dom;
  m.init.h0 = Eigen::VectorXd(2);
  m.init.h0 << 1.0, 2.0;
  m.init.placement = {site_mass(3, 0), site_mass(3, 1)};
  return m;
}

ModelSpec immigration_spec() {
  ModelSpec m = logistic_spec(2);
  m.name = "immigration";
  m.kappa = {PolyD::constant(1, 0.5)};
  m.kappa_growth = 0.5;
  m.immigration_law = {SourceLaw{}};
  return m;
}

ModelSpec genetics_fixation_spec(double init_share) {
  ModelSpec m = logistic_spec(2);
  m.name = "genetics-fixation";
  SourceLaw law;
  law.kind = SourceLaw::Kind::Discrete;
  law.weights = {init_share, 1.0 - init_share};
  m.init.placement = {law};
  m.track_clans = false;
  return m;
}

ModelSpec genetics_alleles_spec() {
  ModelSpec m;
  m.name = "genetics-alleles";
  m.q = 1;
  IntervalDomain dom;
  dom.diffusion = {0.0};
  m.domain = dom;
  m.beta = {{PolyD::constant(1, 2.0)}};
  m.rho = {PolyD::variable(1, 0)};
  m.H_max = 8.0;
  Dispersal mut;
  mut.kind = Dispersal::Kind::Rare;
  mut.c = 0.5;
  mut.kernel = SourceLaw{};
  m.dispersal = {{mut}};
  m.init.h0 = Eigen::VectorXd::Constant(1, 2.0);
  m.init.placement = {SourceLaw{}};
  return m;
}

ModelSpec polarity_spec(double k_on, double k_fb, double k_off, double D) {
  ModelSpec m;
  m.name = "polarity";
  m.q = 1;
  SphereDomain dom;
  dom.radius = 1.0;
  dom.diffusion = {D};
  m.domain = dom;
  PolyD one_minus_h = PolyD::constant(1, 1.0);
  one_minus_h -= PolyD::variable(1, 0);
  m.beta = {{one_minus_h * PolyD::constant(1, k_fb)}};
  m.rho = {PolyD::constant(1, k_off)};
  m.H_max = 1.0;
  m.kappa = {one_minus_h * PolyD::constant(1, k_on)};
  m.kappa_growth = k_on;
  m.immigration_law = {SourceLaw{}};
  m.track_clans = true;
  m.init.h0 = Eigen::VectorXd::Constant(1, 1.0 - k_off / k_fb);
  m.init.placement = {SourceLaw{}};
  return m;
}

}  // namespace fvpop
