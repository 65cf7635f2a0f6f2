#pragma once
// Shipped example models: the configurations used by the bundled configs,
// the demo subcommands, unit tests, and the acceptance suite.

#include "fvpop/model.hpp"

namespace fvpop {

// q=1 logistic growth: beta = 2, rho(h) = h, equilibrium density 2.
// `sites` >= 1 gives that many sites with uniform initial placement and no
// migration.
ModelSpec logistic_spec(int sites = 1);

// q=2 symmetric cross-feeding pair on one site: beta = [[2,1],[1,2]],
// rho_i(h) = h_1 + h_2. Equilibrium (1.5, 1.5), interaction eigenvalues
// {0, -2}, and Lambda(h) = 1/(h_1+h_2) in closed form.
ModelSpec symmetric_pair_spec();

// The same interactions on a 3-site ring with per-type migration rates 1 and
// 0.5 and deliberately unfused initial placement: all of type 1 at site 0
// (density 1.0), all of type 2 at site 1 (density 2.0).
ModelSpec symmetric_ring_spec();

// q=1 on two sites with logistic demography plus immigration kappa = 0.5
// into the uniform site law.
ModelSpec immigration_spec();

// Neutral two-allele genetics: logistic demography on two sites with no
// migration or dispersal, so the site label is a neutral lineage marker.
// Initial mass split init_share : 1 - init_share between the sites.
ModelSpec genetics_fixation_spec(double init_share = 0.3);

// Infinitely-many-alleles genetics: logistic demography on the unit interval
// with zero diffusion; mutation = rare redraw (c = 0.5) of the offspring
// location from the uniform law, so the exact location is the allele label.
ModelSpec genetics_alleles_spec();

// Membrane polarity on the unit sphere: association kappa(h) = k_on (1-h)
// from the uniform law, feedback recruitment beta(h) = k_fb (1-h),
// dissociation rho = k_off, surface diffusion D; clan tracking on.
ModelSpec polarity_spec(double k_on = 0.5, double k_fb = 2.0, double k_off = 1.0,
                        double D = 0.01);

}  // namespace fvpop
