// Continuous-domain engine: particles carry positions that diffuse between
// events; positions are advanced lazily, only when a particle is touched by
// an event or an observation. Exactness: the N-scaled channel rates depend
// only on counts and h, and all position-dependent parts (thinning fields,
// dispersal, observables) read the particle at its advanced position.

#include "engine_common.hpp"

namespace fvpop {
namespace detail {

namespace {

using detail::RateTables;

template <typename Dom>
struct DomTraits;

template <>
struct DomTraits<CircleDomain> {
  using Loc = double;
  static Loc get(const Location& l) { return std::get<double>(l); }
  static Loc advance(const CircleDomain& d, const Loc& x, double var, Rng& rng) {
    return circle_advance(d, x, var, rng);
  }
};

template <>
struct DomTraits<IntervalDomain> {
  using Loc = double;
  static Loc get(const Location& l) { return std::get<double>(l); }
  static Loc advance(const IntervalDomain&, const Loc& x, double var, Rng& rng) {
    return interval_advance(x, var, rng);
  }
};

template <>
struct DomTraits<SphereDomain> {
  using Loc = Eigen::Vector3d;
  static Loc get(const Location& l) { return std::get<Eigen::Vector3d>(l); }
  static Loc advance(const SphereDomain& d, const Loc& u, double var, Rng& rng) {
    return sphere_advance(d, u, var, rng);
  }
};

// Geodesic centroid and the squared dispersion (mean squared pairwise
// separation = 2 x mean squared deviation from the centroid).
double cloud_dispersion(const CircleDomain& d, const std::vector<double>& xs) {
  double c = 0, s = 0;
  double w = 2 * M_PI / d.circumference;
  for (double x : xs) {
    c += std::cos(w * x);
    s += std::sin(w * x);
  }
  double ang = std::atan2(s, c);
  double cen = ang / w;
  if (cen < 0) cen += d.circumference;
  double acc = 0;
  for (double x : xs) {
    double dd = std::abs(x - cen);
    dd = std::min(dd, d.circumference - dd);
    acc += dd * dd;
  }
  return 2.0 * acc / static_cast<double>(xs.size());
}

double cloud_dispersion(const IntervalDomain&, const std::vector<double>& xs) {
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double acc = 0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return 2.0 * acc / static_cast<double>(xs.size());
}

double cloud_dispersion(const SphereDomain& d, const std::vector<Eigen::Vector3d>& xs) {
  Eigen::Vector3d m = Eigen::Vector3d::Zero();
  for (const auto& u : xs) m += u;
  double n = m.norm();
  if (n < 1e-12) return std::numeric_limits<double>::quiet_NaN();
  m /= n;
  double acc = 0;
  for (const auto& u : xs) {
    double dd = d.radius * std::acos(std::clamp(u.dot(m), -1.0, 1.0));
    acc += dd * dd;
  }
  return 2.0 * acc / static_cast<double>(xs.size());
}

template <typename Dom>
class DiffusiveEngine {
  using Traits = DomTraits<Dom>;
  using Loc = typename Traits::Loc;

  struct P {
    Loc pos;
    double t_loc = 0.0;  // time the position is valid for
    double clan = 0.0;
  };

 public:
  DiffusiveEngine(const ModelSpec& spec, const SimConfig& cfg, Rng& rng)
      : spec_(spec),
        dom_(std::get<Dom>(spec.domain)),
        rates_(spec),
        rng_(rng),
        q_(spec.q),
        N_(cfg.N),
        dN_(static_cast<double>(cfg.N)),
        track_clans_(spec.track_clans) {
    parts_.resize(q_);
    for (int i = 0; i < q_; ++i) {
      int64_t n = llround(dN_ * spec.init.h0[i]);
      parts_[i].reserve(2 * n + 16);
      for (int64_t p = 0; p < n; ++p) {
        P pt;
        pt.pos = Traits::get(spec.init.placement[i].sample(spec.domain, rng_));
        pt.t_loc = 0.0;
        pt.clan = spec.init.fresh_clans ? rng_.uniform01() : 0.5;
        parts_[i].push_back(std::move(pt));
      }
    }
    h_.assign(q_, 0.0);
    br_.assign(q_ * q_, 0.0);
    dr_.assign(q_, 0.0);
    ir_.assign(q_, 0.0);
    refresh_rates();
  }

  TrajectoryRecord run(const SimConfig& cfg) {
    TrajectoryRecord rec;
    std::vector<double> grid = cfg.grid();
    if (cfg.record_observables) rec.obs_names = test_fn_names(spec_.domain);
    size_t gc = 0;
    while (gc < grid.size()) {
      double total = total_rate();
      double t_next;
      if (total <= 0.0) {
        rec.status = grand() == 0 ? RunStatus::Extinct : RunStatus::Frozen;
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
      dispatch(total);
      if (density_total() > spec_.H_max)
        throw DiagnosticError("density guard H_max exceeded at t = " + std::to_string(t_));
    }
    rec.events_total = events_;
    if (cfg.keep_final_state) rec.final_state = snapshot();
    return rec;
  }

 private:
  int64_t grand() const {
    int64_t g = 0;
    for (const auto& v : parts_) g += static_cast<int64_t>(v.size());
    return g;
  }

  double density_total() const { return static_cast<double>(grand()) / dN_; }

  double total_rate() const {
    double tot = 0;
    for (double r : br_) tot += r;
    for (double r : dr_) tot += r;
    for (double r : ir_) tot += r;
    return tot;
  }

  void refresh_rates() {
    for (int i = 0; i < q_; ++i) h_[i] = static_cast<double>(parts_[i].size()) / dN_;
    const double* h = h_.data();
    for (int i = 0; i < q_; ++i) {
      double n = static_cast<double>(parts_[i].size());
      for (int j = 0; j < q_; ++j)
        br_[i * q_ + j] = n * (dN_ * rates_.beta[i * q_ + j].eval(h) + rates_.bsup[i * q_ + j]);
      dr_[i] = n * (dN_ * rates_.rho[i].eval(h) + rates_.dsup[i]);
      if (!rates_.kappa.empty()) ir_[i] = dN_ * rates_.kappa[i].eval(h);
    }
  }

  void touch(P& p, int type) {
    if (t_ > p.t_loc) {
      double var = dom_.diffusion[type] * (t_ - p.t_loc);
      p.pos = Traits::advance(dom_, p.pos, var, rng_);
      p.t_loc = t_;
    }
  }

  Eigen::VectorXd h_vec() const { return Eigen::Map<const Eigen::VectorXd>(h_.data(), q_); }

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
    for (int i = q_ - 1; i >= 0; --i)
      if (ir_[i] > 0) {
        do_immigration(i);
        return;
      }
    do_death(q_ - 1);
  }

  void do_birth(int i, int j) {
    uint64_t idx = rng_.uniform_index(parts_[i].size());
    P& parent = parts_[i][idx];
    // The parent moves first so the offspring copies the position the parent
    // actually occupies at the event time.
    touch(parent, i);
    const double* h = h_.data();
    double base = dN_ * rates_.beta[i * q_ + j].eval(h);
    double sup = rates_.bsup[i * q_ + j];
    if (sup > 0) {
      double b = spec_.birth_mod[i][j].present
                     ? spec_.birth_mod[i][j].eval(spec_.domain, Location(parent.pos), h_vec())
                     : 0.0;
      if (base + b < 0)
        throw DiagnosticError("negative total birth rate; N too small for the declared modulation");
      if (rng_.uniform01() * (base + sup) > base + b) {
        events_[kThinningReject] += 1;
        return;
      }
    }
    P child;
    child.pos = parent.pos;
    child.t_loc = t_;
    child.clan = parent.clan;
    bool dispersed = false;
    const Dispersal& d = spec_.dispersal_at(i, j);
    if (d.kind == Dispersal::Kind::Rare && d.c > 0) {
      if (rng_.uniform01() < std::min(1.0, d.c / dN_)) {
        child.pos = Traits::get(d.kernel.sample(spec_.domain, rng_));
        dispersed = true;
      }
    } else if (d.kind == Dispersal::Kind::Local && d.scale > 0) {
      child.pos = Traits::advance(dom_, child.pos, d.scale * d.scale / dN_, rng_);
      dispersed = true;
    }
    parts_[j].push_back(std::move(child));
    refresh_rates();
    events_[dispersed ? kDispersedBirth : kLocalBirth] += 1;
  }

  void do_death(int i) {
    uint64_t idx = rng_.uniform_index(parts_[i].size());
    const double* h = h_.data();
    double base = dN_ * rates_.rho[i].eval(h);
    double sup = rates_.dsup[i];
    if (sup > 0) {
      P& victim = parts_[i][idx];
      touch(victim, i);
      double dmod = spec_.death_mod[i].present
                        ? spec_.death_mod[i].eval(spec_.domain, Location(victim.pos), h_vec())
                        : 0.0;
      if (base + dmod < 0)
        throw DiagnosticError("negative total death rate; N too small for the declared modulation");
      if (rng_.uniform01() * (base + sup) > base + dmod) {
        events_[kThinningReject] += 1;
        return;
      }
    }
    parts_[i][idx] = std::move(parts_[i].back());
    parts_[i].pop_back();
    refresh_rates();
    events_[kDeath] += 1;
  }

  void do_immigration(int i) {
    P pt;
    pt.pos = Traits::get(spec_.immigration_law[i].sample(spec_.domain, rng_));
    pt.t_loc = t_;
    pt.clan = track_clans_ ? rng_.uniform01() : 0.0;
    parts_[i].push_back(std::move(pt));
    refresh_rates();
    events_[kImmigration] += 1;
  }

  void observe(TrajectoryRecord& rec, double tg, const SimConfig& cfg) {
    double saved = t_;
    t_ = tg;
    for (int i = 0; i < q_; ++i)
      for (P& p : parts_[i]) touch(p, i);
    t_ = saved;
    rec.t.push_back(tg);
    rec.h.push_back(h_vec());
    std::vector<int64_t> cnt(q_);
    for (int i = 0; i < q_; ++i) cnt[i] = static_cast<int64_t>(parts_[i].size());
    rec.counts.push_back(std::move(cnt));
    rec.events.push_back(events_);
    if (cfg.record_observables) {
      int nf = test_fn_count(spec_.domain);
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nf, q_);
      for (int i = 0; i < q_; ++i)
        for (const P& p : parts_[i])
          for (int f = 0; f < nf; ++f) m(f, i) += test_fn_eval(spec_.domain, f, Location(p.pos));
      m /= dN_;
      rec.obs.push_back(std::move(m));
    }
    if (cfg.record_clans && track_clans_) {
      std::vector<double> ids;
      for (int i = 0; i < q_; ++i)
        for (const P& p : parts_[i]) ids.push_back(p.clan);
      ClanSummary cs;
      double top_id = 0;
      cs.shares = detail::clan_shares(ids, &top_id);
      cs.largest = cs.shares.size() ? cs.shares[0] : 0.0;
      if (cs.shares.size()) {
        std::vector<Loc> cloud;
        for (int i = 0; i < q_; ++i)
          for (const P& p : parts_[i])
            if (p.clan == top_id) cloud.push_back(p.pos);
        if (cloud.size() >= 2) cs.dominant_dispersion = cloud_dispersion(dom_, cloud);
      }
      rec.clans.push_back(std::move(cs));
    }
    if (cfg.record_states) {
      PopulationSnapshot snap = snapshot();
      snap.t = tg;
      rec.states.push_back(std::move(snap));
    }
  }

  PopulationSnapshot snapshot() const {
    PopulationSnapshot snap;
    snap.N = N_;
    snap.t = t_;
    snap.types.resize(q_);
    for (int i = 0; i < q_; ++i)
      for (const P& p : parts_[i]) {
        Particle pt;
        pt.loc = p.pos;
        pt.clan = p.clan;
        snap.types[i].push_back(pt);
      }
    return snap;
  }

  const ModelSpec& spec_;
  const Dom& dom_;
  RateTables rates_;
  Rng& rng_;
  int q_;
  int64_t N_;
  double dN_;
  bool track_clans_;

  double t_ = 0.0;
  std::vector<std::vector<P>> parts_;
  std::vector<double> h_;
  std::vector<double> br_, dr_, ir_;
  std::array<int64_t, kEventKinds> events_{};
};

}  // namespace

TrajectoryRecord simulate_diffusive(const ModelSpec& spec, const SimConfig& cfg, Rng& rng) {
  if (std::holds_alternative<CircleDomain>(spec.domain))
    return DiffusiveEngine<CircleDomain>(spec, cfg, rng).run(cfg);
  if (std::holds_alternative<SphereDomain>(spec.domain))
    return DiffusiveEngine<SphereDomain>(spec, cfg, rng).run(cfg);
  if (std::holds_alternative<IntervalDomain>(spec.domain))
    return DiffusiveEngine<IntervalDomain>(spec, cfg, rng).run(cfg);
  throw ConfigError("diffusive engine requires a continuous domain");
}

}  // namespace detail
}  // namespace fvpop
