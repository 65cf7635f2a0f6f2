// Finite-site engine: counts-only representation (plus optional per-site clan
// vectors), migration as Gillespie channels.

#include <thread>

#include "engine_common.hpp"

namespace fvpop {

double SimConfig::warmup() const { return t_N >= 0 ? t_N : 1.0 / std::sqrt(static_cast<double>(N)); }

std::vector<double> SimConfig::grid() const {
  if (!record_grid.empty()) return record_grid;
  std::vector<double> g(grid_points);
  double t0 = warmup();
  for (int k = 0; k < grid_points; ++k)
    g[k] = t0 + T_end * (grid_points == 1 ? 0.0 : static_cast<double>(k) / (grid_points - 1));
  return g;
}

std::vector<std::vector<int64_t>> initial_counts_finite(const ModelSpec& spec, int64_t N) {
  const auto& dom = std::get<FiniteSetDomain>(spec.domain);
  int q = spec.q, K = dom.K;
  std::vector<std::vector<int64_t>> counts(q, std::vector<int64_t>(K, 0));
  for (int i = 0; i < q; ++i) {
    int64_t n = llround(static_cast<double>(N) * spec.init.h0[i]);
    Eigen::VectorXd w = spec.init.placement[i].site_weights(dom);
    // Largest-remainder apportionment, ties to the lower site index.
    std::vector<double> frac(K);
    int64_t placed = 0;
    for (int s = 0; s < K; ++s) {
      double exact = static_cast<double>(n) * w[s];
      counts[i][s] = static_cast<int64_t>(std::floor(exact));
      frac[s] = exact - std::floor(exact);
      placed += counts[i][s];
    }
    std::vector<int> order(K);
    for (int s = 0; s < K; ++s) order[s] = s;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
    for (int r = 0; r < n - placed; ++r) counts[i][order[r % K]] += 1;
  }
  return counts;
}

double MonomialObservable::eval(const std::vector<std::vector<int64_t>>& counts, int64_t N) const {
  int q = static_cast<int>(counts.size());
  Eigen::VectorXd h(q);
  for (int i = 0; i < q; ++i) {
    int64_t n = 0;
    for (int64_t c : counts[i]) n += c;
    h[i] = static_cast<double>(n) / static_cast<double>(N);
  }
  double out = 1.0;
  for (const auto& fac : factors) {
    double acc = 0.0;
    for (int i = 0; i < q; ++i) {
      double fi = 0.0;
      for (int s = 0; s < fac.f.size(); ++s)
        fi += fac.f[s] * static_cast<double>(counts[i][s]);
      acc += fac.c[i].eval(h) * fi / static_cast<double>(N);
    }
    out *= acc;
  }
  return out;
}

MonomialObservable monomial_single(int q, int type, const Eigen::VectorXd& f) {
  MonomialObservable F;
  MonomialObservable::Factor fac;
  fac.f = f;
  for (int i = 0; i < q; ++i)
    fac.c.push_back(PolyD::constant(q, i == type ? 1.0 : 0.0));
  F.factors.push_back(std::move(fac));
  return F;
}

MonomialObservable monomial_density(int q, int type, int K) {
  return monomial_single(q, type, Eigen::VectorXd::Ones(K));
}

namespace {

using detail::RateTables;

class FiniteEngine {
 public:
  FiniteEngine(const ModelSpec& spec, const SimConfig& cfg, Rng& rng)
      : spec_(spec),
        dom_(std::get<FiniteSetDomain>(spec.domain)),
        rates_(spec),
        rng_(rng),
        q_(spec.q),
        K_(dom_.K),
        N_(cfg.N),
        dN_(static_cast<double>(cfg.N)),
        track_clans_(spec.track_clans) {
    counts_ = initial_counts_finite(spec, N_);
    type_tot_.assign(q_, 0);
    for (int i = 0; i < q_; ++i)
      for (int s = 0; s < K_; ++s) type_tot_[i] += counts_[i][s];
    grand_ = 0;
    for (int i = 0; i < q_; ++i) grand_ += type_tot_[i];
    if (track_clans_) {
      clans_.assign(q_, std::vector<std::vector<double>>(K_));
      for (int i = 0; i < q_; ++i)
        for (int s = 0; s < K_; ++s)
          for (int64_t p = 0; p < counts_[i][s]; ++p)
            clans_[i][s].push_back(spec.init.fresh_clans ? rng_.uniform01() : 0.5);
    }
    // Migration structures.
    has_migration_ = !dom_.migration.empty();
    if (has_migration_) {
      out_rate_.assign(q_, std::vector<double>(K_, 0.0));
      for (int i = 0; i < q_; ++i)
        for (int s = 0; s < K_; ++s) out_rate_[i][s] = -dom_.migration[i](s, s);
    }
    // Dispersal kernels as site-weight tables.
    disp_p_.assign(q_ * q_, 0.0);
    disp_w_.assign(q_ * q_, Eigen::VectorXd());
    for (int i = 0; i < q_; ++i)
      for (int j = 0; j < q_; ++j) {
        const Dispersal& d = spec.dispersal_at(i, j);
        if (d.kind == Dispersal::Kind::Rare && d.c > 0) {
          disp_p_[i * q_ + j] = std::min(1.0, d.c / dN_);
          disp_w_[i * q_ + j] = d.kernel.site_weights(dom_);
        }
      }
    if (spec.has_immigration()) {
      imm_w_.resize(q_);
      for (int i = 0; i < q_; ++i) imm_w_[i] = spec.immigration_law[i].site_weights(dom_);
    }
    h_.assign(q_, 0.0);
    br_.assign(q_ * q_, 0.0);
    dr_.assign(q_, 0.0);
    ir_.assign(q_, 0.0);
    mr_.assign(q_, 0.0);
    refresh_h_rates();
    if (has_migration_)
      for (int i = 0; i < q_; ++i) refresh_migration(i);
  }

  // Advance to the horizon, recording at grid times; cfg-level flags drive
  // which fields are recorded.
  TrajectoryRecord run(const SimConfig& cfg) {
    TrajectoryRecord rec;
    std::vector<double> grid = cfg.grid();
    double horizon = grid.back();
    if (cfg.record_observables) {
      rec.obs_names = test_fn_names(spec_.domain);
      fvals_.resize(rec.obs_names.size());
      for (size_t f = 0; f < fvals_.size(); ++f)
        fvals_[f] = test_fn_site_values(dom_, static_cast<int>(f));
    }
    size_t gc = 0;
    bool stopped = false;
    while (gc < grid.size() && !stopped) {
      double total = total_rate();
      double t_next;
      if (total <= 0.0) {
        // Absorbing state: the remaining grid sees a constant configuration.
        rec.status = grand_ == 0 ? RunStatus::Extinct : RunStatus::Frozen;
        rec.status_time = t_;
        t_next = std::numeric_limits<double>::infinity();
      } else {
        t_next = t_ + rng_.exponential(total);
      }
      while (gc < grid.size() && grid[gc] <= t_next) {
        observe(rec, grid[gc], cfg);
        ++gc;
      }
      if (gc >= grid.size() || total <= 0.0) break;
      t_ = t_next;
      if (t_ > horizon) break;
      dispatch(total);
      if (grand_ / dN_ > spec_.H_max)
        throw DiagnosticError("density guard H_max exceeded at t = " + std::to_string(t_));
      if (cfg.stop_on_monomorphic && grand_ > 0) {
        int occupied = 0, last = -1;
        for (int s = 0; s < K_; ++s) {
          int64_t n = 0;
          for (int i = 0; i < q_; ++i) n += counts_[i][s];
          if (n > 0) {
            ++occupied;
            last = s;
          }
        }
        if (occupied == 1) {
          rec.status = RunStatus::Fixated;
          rec.status_time = t_;
          rec.fixed_site = last;
          stopped = true;  // grid truncated: the state keeps evolving after fixation
        }
      }
    }
    rec.events_total = events_;
    if (cfg.keep_final_state) rec.final_state = snapshot();
    return rec;
  }

  // One-shot run without recording, for generator consistency sampling.
  void run_plain(double T) {
    while (true) {
      double total = total_rate();
      if (total <= 0.0) return;
      double tau = rng_.exponential(total);
      if (t_ + tau > T) {
        t_ = T;
        return;
      }
      t_ += tau;
      dispatch(total);
    }
  }

  const std::vector<std::vector<int64_t>>& counts() const { return counts_; }

  PopulationSnapshot snapshot() const {
    PopulationSnapshot snap;
    snap.N = N_;
    snap.t = t_;
    snap.types.resize(q_);
    for (int i = 0; i < q_; ++i)
      for (int s = 0; s < K_; ++s)
        for (int64_t p = 0; p < counts_[i][s]; ++p) {
          Particle pt;
          pt.loc = s;
          pt.clan = track_clans_ ? clans_[i][s][p] : 0.0;
          snap.types[i].push_back(pt);
        }
    return snap;
  }

 private:
  double total_rate() const {
    double tot = 0;
    for (double r : br_) tot += r;
    for (double r : dr_) tot += r;
    for (double r : ir_) tot += r;
    for (double r : mr_) tot += r;
    return tot;
  }

  void refresh_h_rates() {
    for (int i = 0; i < q_; ++i) h_[i] = static_cast<double>(type_tot_[i]) / dN_;
    const double* h = h_.data();
    for (int i = 0; i < q_; ++i) {
      double n = static_cast<double>(type_tot_[i]);
      for (int j = 0; j < q_; ++j)
        br_[i * q_ + j] = n * (dN_ * rates_.beta[i * q_ + j].eval(h) + rates_.bsup[i * q_ + j]);
      dr_[i] = n * (dN_ * rates_.rho[i].eval(h) + rates_.dsup[i]);
      if (!rates_.kappa.empty()) ir_[i] = dN_ * rates_.kappa[i].eval(h);
    }
  }

  void refresh_migration(int i) {
    if (!has_migration_) return;
    double m = 0;
    for (int s = 0; s < K_; ++s) m += static_cast<double>(counts_[i][s]) * out_rate_[i][s];
    mr_[i] = m;
  }

  int pick_site_by_counts(int i) {
    double u = rng_.uniform01() * static_cast<double>(type_tot_[i]);
    double acc = 0;
    for (int s = 0; s < K_; ++s) {
      acc += static_cast<double>(counts_[i][s]);
      if (u <= acc) return s;
    }
    return K_ - 1;
  }

  void add_particle(int i, int s, double clan) {
    counts_[i][s] += 1;
    type_tot_[i] += 1;
    grand_ += 1;
    if (track_clans_) clans_[i][s].push_back(clan);
    refresh_h_rates();
    refresh_migration(i);
  }

  // Removes a uniformly chosen particle at (i, s); returns its clan id.
  double remove_particle(int i, int s) {
    double clan = 0.0;
    if (track_clans_) {
      auto& v = clans_[i][s];
      uint64_t idx = rng_.uniform_index(v.size());
      clan = v[idx];
      v[idx] = v.back();
      v.pop_back();
    }
    counts_[i][s] -= 1;
    type_tot_[i] -= 1;
    grand_ -= 1;
    refresh_h_rates();
    refresh_migration(i);
    return clan;
  }

  double clan_of_uniform(int i, int s) {
    if (!track_clans_) return 0.0;
    const auto& v = clans_[i][s];
    return v[rng_.uniform_index(v.size())];
  }

  void dispatch(double total) {
    double u = rng_.uniform01() * total;
    double acc = 0;
    for (int i = 0; i < q_; ++i)
      for (int j = 0; j < q_; ++j) {
        acc += br_[i * q_ + j];
        if (u <= acc) {
          do_birth(i, j);
          return;
        }
      }
    for (int i = 0; i < q_; ++i) {
      acc += dr_[i];
      if (u <= acc) {
        do_death(i);
        return;
      }
    }
    for (int i = 0; i < q_; ++i) {
      acc += ir_[i];
      if (u <= acc) {
        do_immigration(i);
        return;
      }
    }
    for (int i = 0; i < q_; ++i) {
      acc += mr_[i];
      if (u <= acc) {
        do_migration(i);
        return;
      }
    }
    // Total was positive, so rounding can only land here within epsilon of
    // the last positive channel; retry deterministically on the largest one.
    for (int i = q_ - 1; i >= 0; --i)
      if (mr_[i] > 0) {
        do_migration(i);
        return;
      }
    do_death(q_ - 1);
  }

  void do_birth(int i, int j) {
    int s = pick_site_by_counts(i);
    const double* h = h_.data();
    double base = dN_ * rates_.beta[i * q_ + j].eval(h);
    double sup = rates_.bsup[i * q_ + j];
    if (sup > 0) {
      double b = spec_.birth_mod[i][j].present ? spec_.birth_mod[i][j].eval_site(s, h_vec()) : 0.0;
      if (base + b < 0)
        throw DiagnosticError("negative total birth rate; N too small for the declared modulation");
      if (rng_.uniform01() * (base + sup) > base + b) {
        events_[kThinningReject] += 1;
        return;
      }
    }
    double clan = clan_of_uniform(i, s);
    int dest = s;
    bool dispersed = false;
    double p = disp_p_[i * q_ + j];
    if (p > 0 && rng_.uniform01() < p) {
      const Eigen::VectorXd& w = disp_w_[i * q_ + j];
      dest = rng_.categorical(w.data(), K_, 1.0);
      dispersed = dest != s;
    }
    add_particle(j, dest, clan);
    events_[dispersed ? kDispersedBirth : kLocalBirth] += 1;
  }

  void do_death(int i) {
    int s = pick_site_by_counts(i);
    const double* h = h_.data();
    double base = dN_ * rates_.rho[i].eval(h);
    double sup = rates_.dsup[i];
    if (sup > 0) {
      double d = spec_.death_mod[i].present ? spec_.death_mod[i].eval_site(s, h_vec()) : 0.0;
      if (base + d < 0)
        throw DiagnosticError("negative total death rate; N too small for the declared modulation");
      if (rng_.uniform01() * (base + sup) > base + d) {
        events_[kThinningReject] += 1;
        return;
      }
    }
    remove_particle(i, s);
    events_[kDeath] += 1;
  }

  void do_immigration(int i) {
    const Eigen::VectorXd& w = imm_w_[i];
    int dest = rng_.categorical(w.data(), K_, 1.0);
    add_particle(i, dest, track_clans_ ? rng_.uniform01() : 0.0);
    events_[kImmigration] += 1;
  }

  void do_migration(int i) {
    double u = rng_.uniform01() * mr_[i];
    double acc = 0;
    int src = K_ - 1;
    for (int s = 0; s < K_; ++s) {
      acc += static_cast<double>(counts_[i][s]) * out_rate_[i][s];
      if (u <= acc) {
        src = s;
        break;
      }
    }
    const Eigen::MatrixXd& Q = dom_.migration[i];
    double u2 = rng_.uniform01() * out_rate_[i][src];
    double acc2 = 0;
    int dest = src;
    for (int s = 0; s < K_; ++s) {
      if (s == src) continue;
      acc2 += Q(src, s);
      if (u2 <= acc2) {
        dest = s;
        break;
      }
    }
    if (dest == src) {
      for (int s = K_ - 1; s >= 0; --s)
        if (s != src && Q(src, s) > 0) {
          dest = s;
          break;
        }
    }
    double clan = 0.0;
    if (track_clans_) {
      auto& v = clans_[i][src];
      uint64_t idx = rng_.uniform_index(v.size());
      clan = v[idx];
      v[idx] = v.back();
      v.pop_back();
      clans_[i][dest].push_back(clan);
    }
    counts_[i][src] -= 1;
    counts_[i][dest] += 1;
    refresh_migration(i);
    events_[kMigration] += 1;
  }

  Eigen::VectorXd h_vec() const {
    return Eigen::Map<const Eigen::VectorXd>(h_.data(), q_);
  }

  void observe(TrajectoryRecord& rec, double tg, const SimConfig& cfg) {
    rec.t.push_back(tg);
    rec.h.push_back(h_vec());
    rec.counts.push_back(type_tot_);
    rec.events.push_back(events_);
    if (cfg.record_observables) {
      Eigen::MatrixXd m(fvals_.size(), q_);
      for (size_t f = 0; f < fvals_.size(); ++f)
        for (int i = 0; i < q_; ++i) {
          double acc = 0;
          for (int s = 0; s < K_; ++s)
            acc += fvals_[f][s] * static_cast<double>(counts_[i][s]);
          m(f, i) = acc / dN_;
        }
      rec.obs.push_back(std::move(m));
    }
    if (cfg.record_clans && track_clans_) {
      std::vector<double> ids;
      for (int i = 0; i < q_; ++i)
        for (int s = 0; s < K_; ++s)
          ids.insert(ids.end(), clans_[i][s].begin(), clans_[i][s].end());
      ClanSummary cs;
      cs.shares = detail::clan_shares(ids, nullptr);
      cs.largest = cs.shares.size() ? cs.shares[0] : 0.0;
      rec.clans.push_back(std::move(cs));
    }
    if (cfg.record_states) {
      PopulationSnapshot snap = snapshot();
      snap.t = tg;
      rec.states.push_back(std::move(snap));
    }
  }

  const ModelSpec& spec_;
  const FiniteSetDomain& dom_;
  RateTables rates_;
  Rng& rng_;
  int q_, K_;
  int64_t N_;
  double dN_;
  bool track_clans_;
  bool has_migration_ = false;

  double t_ = 0.0;
  std::vector<std::vector<int64_t>> counts_;
  std::vector<int64_t> type_tot_;
  int64_t grand_ = 0;
  std::vector<std::vector<std::vector<double>>> clans_;  // [type][site] -> ids
  std::vector<std::vector<double>> out_rate_;
  std::vector<double> disp_p_;
  std::vector<Eigen::VectorXd> disp_w_;
  std::vector<Eigen::VectorXd> imm_w_;
  std::vector<double> h_;
  std::vector<double> br_, dr_, ir_, mr_;
  std::vector<Eigen::VectorXd> fvals_;
  std::array<int64_t, kEventKinds> events_{};
};

}  // namespace

namespace detail {
TrajectoryRecord simulate_diffusive(const ModelSpec& spec, const SimConfig& cfg, Rng& rng);
}

TrajectoryRecord simulate(const ModelSpec& spec, const SimConfig& cfg) {
  Rng rng(cfg.seed, cfg.stream);
  if (std::get_if<FiniteSetDomain>(&spec.domain)) {
    FiniteEngine eng(spec, cfg, rng);
    return eng.run(cfg);
  }
  return detail::simulate_diffusive(spec, cfg, rng);
}

std::vector<TrajectoryRecord> simulate_replicates(const ModelSpec& spec, const SimConfig& cfg,
                                                  int replicates) {
  std::vector<TrajectoryRecord> out(replicates);
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, replicates);
  if (workers <= 1) {
    for (int r = 0; r < replicates; ++r) {
      SimConfig c = cfg;
      c.stream = r;
      out[r] = simulate(spec, c);
    }
    return out;
  }
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      int r = next.fetch_add(1);
      if (r >= replicates) return;
      SimConfig c = cfg;
      c.stream = r;
      out[r] = simulate(spec, c);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return out;
}

ConsistencyResult generator_consistency_test(const ModelSpec& spec, const MonomialObservable& F,
                                             const std::vector<std::vector<int64_t>>& counts0,
                                             int64_t N, double delta, int replicates,
                                             uint64_t seed) {
  ConsistencyResult res;
  res.replicates = replicates;
  res.generator_value = generator_apply(spec, F, counts0, N);
  double f0 = F.eval(counts0, N);
  // Run the engine from the fixed start state; the initial condition in the
  // spec copy is bypassed by seeding counts directly.
  ModelSpec s = spec;
  s.init.h0.resize(spec.q);
  const auto& dom = std::get<FiniteSetDomain>(spec.domain);
  for (int i = 0; i < spec.q; ++i) {
    int64_t n = 0;
    for (int64_t c : counts0[i]) n += c;
    s.init.h0[i] = static_cast<double>(n) / static_cast<double>(N);
  }
  s.init.placement.assign(spec.q, SourceLaw{});
  for (int i = 0; i < spec.q; ++i) {
    SourceLaw law;
    law.kind = SourceLaw::Kind::Discrete;
    law.weights.resize(dom.K);
    for (int sx = 0; sx < dom.K; ++sx) law.weights[sx] = static_cast<double>(counts0[i][sx]);
    double tot = 0;
    for (double w : law.weights) tot += w;
    if (tot == 0) law.weights.assign(dom.K, 1.0);
    s.init.placement[i] = law;
  }
  SimConfig cfg;
  cfg.N = N;
  cfg.seed = seed;
  double sum = 0, sum2 = 0;
  for (int r = 0; r < replicates; ++r) {
    cfg.stream = r;
    Rng rng(cfg.seed, cfg.stream);
    FiniteEngine eng(s, cfg, rng);
    // The apportioned start must reproduce counts0 exactly.
    if (r == 0 && eng.counts() != counts0)
      throw DiagnosticError("consistency test failed to seed the requested start state");
    eng.run_plain(delta);
    double d = F.eval(eng.counts(), N) - f0;
    sum += d;
    sum2 += d * d;
  }
  double mean = sum / replicates;
  double var = std::max(0.0, sum2 / replicates - mean * mean);
  double sem = std::sqrt(var / replicates);
  res.mc_drift = mean / delta;
  res.stderr_drift = sem / delta;
  if (res.stderr_drift == 0) {
    res.z = res.mc_drift == res.generator_value ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    res.z = (res.mc_drift - res.generator_value) / res.stderr_drift;
  }
  return res;
}

}  // namespace fvpop
