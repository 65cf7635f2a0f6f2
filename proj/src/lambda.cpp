#include "fvpop/lambda.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>
#include <map>

#include "fvpop/error.hpp"
#include "fvpop/multi_index.hpp"

namespace fvpop {

namespace {
using Cplx = std::complex<double>;
using VecC = Eigen::VectorXcd;
using MatC = Eigen::MatrixXcd;

// Taylor coefficient table of a complex polynomial: multi-index -> coeff.
using CoeffMap = std::map<MultiIndex, Cplx>;

CoeffMap coeff_map(const PolyC& p) {
  CoeffMap m;
  for (const auto& [a, c] : p.terms()) m[a] = c;
  return m;
}

Cplx coeff_at(const CoeffMap& m, const MultiIndex& a) {
  auto it = m.find(a);
  return it == m.end() ? Cplx(0) : it->second;
}
}  // namespace

Eigen::VectorXd LambdaSeries::eval(const Eigen::VectorXd& h) const {
  Eigen::VectorXd d = h - h_eq;
  Eigen::VectorXd out(q);
  for (int i = 0; i < q; ++i) out[i] = comp[i].eval(d);
  return out;
}

Eigen::MatrixXd LambdaSeries::jacobian(const Eigen::VectorXd& h) const {
  Eigen::VectorXd d = h - h_eq;
  Eigen::MatrixXd J(q, q);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) J(i, j) = comp[i].derivative(j).eval(d);
  return J;
}

std::vector<std::pair<MultiIndex, Eigen::VectorXd>> LambdaSeries::coefficient_table() const {
  std::vector<std::pair<MultiIndex, Eigen::VectorXd>> out;
  for (const auto& a : mi_up_to_degree(q, k_max)) {
    Eigen::VectorXd g(q);
    bool nonzero = false;
    for (int i = 0; i < q; ++i) {
      g[i] = comp[i].coeff(a);
      nonzero = nonzero || g[i] != 0.0;
    }
    if (nonzero || mi_degree(a) == 0) out.emplace_back(a, g);
  }
  return out;
}

LambdaSeries solve_series(const ModelSpec& spec, const EquilibriumData& eq,
                          const SeriesOptions& opts) {
  const int q = spec.q;
  LambdaSeries out;
  out.q = q;
  out.k_max = opts.k_max;
  out.h_eq = eq.h_eq;
  out.eps0 = eq.eps0;
  out.residual_tol = opts.residual_tol;

  // Eigenbasis of the linearized drift. The recursion needs the linear part
  // of the transported drift diagonal, so a well-conditioned eigenvector
  // matrix is a hard requirement.
  Eigen::EigenSolver<Eigen::MatrixXd> es(eq.jac);
  MatC V = es.eigenvectors();
  VecC lam = es.eigenvalues();
  Eigen::JacobiSVD<MatC> svd(V);
  double cond = svd.singularValues()(0) / svd.singularValues()(q - 1);
  out.basis_condition = cond;
  if (!(cond < 1e8))
    throw DiagnosticError("linearized drift is too close to non-diagonalizable (basis condition " +
                          std::to_string(cond) + ")");
  MatC P = V.inverse();

  // Move the drift and the transposed interaction matrix into
  // eigencoordinates x = P (h - h_eq).
  VecC shift = eq.h_eq.cast<Cplx>();
  auto thetas = theta_polynomials(spec);
  std::vector<PolyC> theta_hat(q, PolyC(q));  // theta_hat = P theta(h_eq + V x)
  {
    std::vector<PolyC> composed(q);
    for (int i = 0; i < q; ++i) {
      PolyC pc(q);
      for (const auto& [a, c] : thetas[i].terms()) pc.add_term(a, Cplx(c));
      composed[i] = pc.compose_affine(shift, MatC(V));
    }
    for (int j = 0; j < q; ++j)
      for (int i = 0; i < q; ++i) theta_hat[j] += composed[i] * P(j, i);
  }
  auto Apol = interaction_polynomials(spec);
  // A_hat(x)_{ik} = A_{ki}(h_eq + V x): the transpose acts on Lambda values,
  // which stay in the original basis.
  std::vector<std::vector<CoeffMap>> At(q, std::vector<CoeffMap>(q));
  for (int i = 0; i < q; ++i)
    for (int k = 0; k < q; ++k) {
      PolyC pc(q);
      for (const auto& [a, c] : Apol[k][i].terms()) pc.add_term(a, Cplx(c));
      At[i][k] = coeff_map(pc.compose_affine(shift, MatC(V)));
    }
  std::vector<CoeffMap> th(q);
  for (int j = 0; j < q; ++j) th[j] = coeff_map(theta_hat[j]);

  MatC A0(q, q);
  {
    MultiIndex zero(q, 0);
    for (int i = 0; i < q; ++i)
      for (int k = 0; k < q; ++k) A0(i, k) = coeff_at(At[i][k], zero);
  }

  // Degree-by-degree solve. gamma holds the eigencoordinate coefficients.
  std::map<MultiIndex, VecC> gamma;
  {
    MultiIndex zero(q, 0);
    gamma[zero] = eq.v_eq.cast<Cplx>();
  }
  out.varah_bound.assign(opts.k_max + 1, 0.0);
  for (int k = 1; k <= opts.k_max; ++k) {
    MultiIndexTable Sk(mi_of_degree(q, k));
    int nS = Sk.size();
    MatC M = MatC::Zero(nS * q, nS * q);
    VecC Y = VecC::Zero(nS * q);
    for (int r = 0; r < nS; ++r) {
      const MultiIndex& alpha = Sk.list[r];
      // Diagonal block: A(h_eq)^T plus the linear-diagonal drift shift.
      // Same-degree couplings from the (numerically tiny) off-diagonal
      // linear drift coefficients are kept; the LU absorbs them.
      for (int c = 0; c < nS; ++c) {
        const MultiIndex& nu = Sk.list[c];
        Cplx scal(0);
        for (int j = 0; j < q; ++j) {
          if (nu[j] == 0) continue;
          MultiIndex mu = alpha;
          bool ok = true;
          for (int v = 0; v < q; ++v) {
            mu[v] -= nu[v];
            if (v == j) mu[v] += 1;
            if (mu[v] < 0) ok = false;
          }
          if (!ok) continue;
          scal += static_cast<double>(nu[j]) * coeff_at(th[j], mu);
        }
        if (r == c) {
          M.block(r * q, c * q, q, q) = A0 + scal * MatC::Identity(q, q);
        } else if (scal != Cplx(0)) {
          M.block(r * q, c * q, q, q) = scal * MatC::Identity(q, q);
        }
      }
      // Right-hand side from all lower-degree coefficients.
      VecC y = VecC::Zero(q);
      for (const auto& [nu, g] : gamma) {
        int dn = mi_degree(nu);
        if (dn >= k) continue;
        // Interaction Taylor term A_hat_{alpha-nu}.
        MultiIndex mu = alpha;
        bool ok = true;
        for (int v = 0; v < q; ++v) {
          mu[v] -= nu[v];
          if (mu[v] < 0) ok = false;
        }
        if (ok) {
          MatC T(q, q);
          bool nonzero = false;
          for (int i = 0; i < q; ++i)
            for (int c2 = 0; c2 < q; ++c2) {
              T(i, c2) = coeff_at(At[i][c2], mu);
              if (T(i, c2) != Cplx(0)) nonzero = true;
            }
          if (nonzero) y -= T * g;
        }
        // Drift Taylor terms theta_hat_{alpha-nu+e_j} * nu_j.
        for (int j = 0; j < q; ++j) {
          if (nu[j] == 0) continue;
          MultiIndex mu2 = alpha;
          bool ok2 = true;
          for (int v = 0; v < q; ++v) {
            mu2[v] -= nu[v];
            if (v == j) mu2[v] += 1;
            if (mu2[v] < 0) ok2 = false;
          }
          if (!ok2) continue;
          Cplx c2 = coeff_at(th[j], mu2);
          if (c2 != Cplx(0)) y -= static_cast<double>(nu[j]) * c2 * g;
        }
      }
      Y.segment(r * q, q) = y;
    }
    // Varah bound diagnostic: if strictly diagonally dominant, record the
    // inverse-norm bound; the theory wants it at most 1/(k eps0).
    double worst = std::numeric_limits<double>::infinity();
    bool dominant = true;
    for (int r2 = 0; r2 < nS * q; ++r2) {
      double off = 0;
      for (int c2 = 0; c2 < nS * q; ++c2)
        if (c2 != r2) off += std::abs(M(r2, c2));
      double margin = std::abs(M(r2, r2)) - off;
      if (margin <= 0) {
        dominant = false;
        break;
      }
      worst = std::min(worst, margin);
    }
    out.varah_bound[k] = dominant ? 1.0 / worst : std::numeric_limits<double>::infinity();

    Eigen::PartialPivLU<MatC> lu(M);
    VecC G = lu.solve(Y);
    double rel_res = (M * G - Y).norm() / std::max(1e-300, Y.norm());
    if (Y.norm() > 0 && rel_res > 1e-8)
      throw DiagnosticError("degree " + std::to_string(k) +
                            " series solve ill-conditioned (relative residual " +
                            std::to_string(rel_res) + ")");
    for (int r2 = 0; r2 < nS; ++r2) gamma[Sk.list[r2]] = G.segment(r2 * q, q);
  }

  // Back to density coordinates: substitute x = P delta and take real parts.
  std::vector<PolyC> beta_x(q, PolyC(q));
  for (const auto& [a, g] : gamma)
    for (int i = 0; i < q; ++i)
      if (g[i] != Cplx(0)) beta_x[i].add_term(a, g[i]);
  out.comp.resize(q, PolyD(q));
  double max_imag = 0;
  for (int i = 0; i < q; ++i) {
    PolyC in_delta = beta_x[i].compose_affine(VecC(VecC::Zero(q)), MatC(P));
    double max_abs = 0;
    for (const auto& [a, c] : in_delta.terms()) {
      max_abs = std::max(max_abs, std::abs(c));
      max_imag = std::max(max_imag, std::abs(c.imag()));
    }
    out.comp[i] = real_part_checked(in_delta, std::max(opts.imag_tol, 1e-12 * max_abs));
  }
  out.max_imag_residue = max_imag;

  // Growth constant estimate from the real coefficient table.
  out.c_hat = 0;
  for (const auto& [a, g] : out.coefficient_table()) {
    int d = mi_degree(a);
    if (d == 0) continue;
    out.c_hat = std::max(out.c_hat, std::pow(g.lpNorm<Eigen::Infinity>(), 1.0 / d));
  }
  if (out.c_hat <= 0) out.c_hat = 1e-3;

  // Certify a trust radius: exact-Jacobian PDE residual on rays around the
  // equilibrium, largest radius on the scan grid where every probe passes.
  std::vector<Eigen::VectorXd> dirs;
  for (int i = 0; i < q; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(q);
    e[i] = 1.0;
    dirs.push_back(e);
    dirs.push_back(-e);
  }
  dirs.push_back(Eigen::VectorXd::Constant(q, 1.0).normalized());
  dirs.push_back(Eigen::VectorXd::Constant(q, -1.0).normalized());
  if (q > 1) {
    Eigen::VectorXd m(q);
    for (int i = 0; i < q; ++i) m[i] = (i % 2 == 0) ? 1.0 : -1.0;
    dirs.push_back(m.normalized());
    dirs.push_back(-m.normalized());
  }
  double r_max = std::min(opts.r_max_factor * eq.eps0, 0.5 / out.c_hat);
  out.r_trust = 0;
  for (int g = opts.r_grid; g >= 1; --g) {
    double r = r_max * g / opts.r_grid;
    bool pass = true;
    int probes = 0;
    for (const auto& d : dirs) {
      Eigen::VectorXd h = eq.h_eq + r * d;
      if (h.minCoeff() <= 0 || h.sum() >= spec.H_max) continue;
      ++probes;
      Eigen::VectorXd res = pde_residual_exact(spec, out, h);
      if (res.head(q).lpNorm<Eigen::Infinity>() > opts.residual_tol) {
        pass = false;
        break;
      }
    }
    if (pass && probes > 0) {
      out.r_trust = r;
      break;
    }
  }
  if (out.r_trust <= 0)
    throw DiagnosticError("series residual tolerance not met at any scanned radius");

  // Handoff radius: where the top-degree layer contributes below 1e-12, so
  // the truncation error at handoff supports the mass-identity tolerance.
  double top = 0;
  for (int i = 0; i < q; ++i)
    for (const auto& [a, c] : out.comp[i].terms())
      if (mi_degree(a) == opts.k_max) top += std::abs(c);
  double r_h = out.r_trust / 2;
  while (r_h > 1e-6 && top * std::pow(r_h, opts.k_max) > 1e-12) r_h *= 0.8;
  out.r_hand = r_h;
  return out;
}

namespace {
Eigen::VectorXd residual_with_defect(const ModelSpec& spec, const Eigen::VectorXd& h,
                                     const Eigen::VectorXd& lam, const Eigen::MatrixXd& J) {
  int q = spec.q;
  Eigen::VectorXd out(q + 1);
  out.head(q) = interaction_matrix(spec, h).transpose() * lam + J * theta(spec, h);
  out[q] = lam.dot(h) - 1.0;
  return out;
}
}  // namespace

Eigen::VectorXd pde_residual(const ModelSpec& spec, const LambdaEval& lambda_eval,
                             const Eigen::VectorXd& h, double fd_step, bool richardson) {
  int q = spec.q;
  double step = fd_step > 0 ? fd_step : 1e-5;
  auto fd = [&](double s) {
    Eigen::MatrixXd Jf(q, q);
    for (int j = 0; j < q; ++j) {
      Eigen::VectorXd hp = h, hm = h;
      hp[j] += s;
      hm[j] -= s;
      Jf.col(j) = (lambda_eval(hp) - lambda_eval(hm)) / (2 * s);
    }
    return Jf;
  };
  Eigen::MatrixXd J;
  if (richardson) {
    Eigen::MatrixXd J1 = fd(step), J2 = fd(step / 2);
    J = (4.0 * J2 - J1) / 3.0;  // cancels the O(s^2) term of the central difference
  } else {
    J = fd(step);
  }
  return residual_with_defect(spec, h, lambda_eval(h), J);
}

Eigen::VectorXd pde_residual_exact(const ModelSpec& spec, const LambdaSeries& series,
                                   const Eigen::VectorXd& h) {
  return residual_with_defect(spec, h, series.eval(h), series.jacobian(h));
}

double residual_slope(const ModelSpec& spec, const EquilibriumData& eq, int k_trunc, double r_lo,
                      double r_hi, int n_radii) {
  SeriesOptions so;
  so.k_max = k_trunc;
  // The scan runs below the certified radius on purpose; disable the
  // tolerance gate by accepting any residual level.
  so.residual_tol = std::numeric_limits<double>::infinity();
  LambdaSeries s = solve_series(spec, eq, so);
  Eigen::VectorXd dir = Eigen::VectorXd::Constant(eq.h_eq.size(), 1.0).normalized();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n_radii; ++i) {
    double r = r_lo * std::pow(r_hi / r_lo, static_cast<double>(i) / (n_radii - 1));
    Eigen::VectorXd h = eq.h_eq + r * dir;
    double res = pde_residual_exact(spec, s, h).head(eq.h_eq.size()).lpNorm<Eigen::Infinity>();
    double x = std::log(r), y = std::log(std::max(res, 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double n = n_radii;
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

Eigen::MatrixXd transport_matrix(const ModelSpec& spec, const Eigen::VectorXd& h, double T,
                                 const OdeOptions& opts) {
  int q = spec.q;
  OdeOptions oflow = opts;
  OdeSolution flow = integrate_flow(spec, h, T, oflow);
  // Row-major flatten of Psi; dPsi/ds = Psi A(psi_s)^T.
  OdeRhs rhs = [&](double s, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    Eigen::MatrixXd Psi = Eigen::Map<const Eigen::MatrixXd>(y.data(), q, q);
    Eigen::MatrixXd At = interaction_matrix(spec, flow.at(s)).transpose();
    Eigen::MatrixXd d = Psi * At;
    dy = Eigen::Map<Eigen::VectorXd>(d.data(), q * q);
  };
  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(q, q);
  Eigen::VectorXd y0 = Eigen::Map<Eigen::VectorXd>(I.data(), q * q);
  OdeSolution sol = integrate_ode(rhs, y0, 0.0, T, opts);
  return Eigen::Map<const Eigen::MatrixXd>(sol.y_end.data(), q, q);
}

Eigen::VectorXd extend_lambda(const ModelSpec& spec, const LambdaSeries& series,
                              const Eigen::VectorXd& h, const ExtendOptions& opts) {
  // Find the first entry time of the flow into the handoff ball.
  double chunk = 5.0;
  double t0 = 0.0;
  Eigen::VectorXd y = h;
  double T_entry = -1;
  OdeSolution last;
  while (t0 < opts.T_max) {
    OdeSolution seg = integrate_flow(spec, y, chunk, opts.ode);
    // Scan the dense output for the crossing.
    int nscan = 512;
    double prev_s = 0.0;
    bool prev_in = (seg.at(0.0) - series.h_eq).norm() <= series.r_hand;
    if (prev_in) {
      T_entry = t0;
      break;
    }
    for (int i = 1; i <= nscan; ++i) {
      double s = chunk * i / nscan;
      bool in = (seg.at(s) - series.h_eq).norm() <= series.r_hand;
      if (in && !prev_in) {
        double lo = prev_s, hi = s;
        for (int b = 0; b < 80; ++b) {
          double mid = 0.5 * (lo + hi);
          if ((seg.at(mid) - series.h_eq).norm() <= series.r_hand)
            hi = mid;
          else
            lo = mid;
        }
        T_entry = t0 + hi;
        break;
      }
      prev_in = in;
      prev_s = s;
    }
    if (T_entry >= 0) break;
    y = seg.y_end;
    t0 += chunk;
  }
  if (T_entry < 0)
    throw DiagnosticError("flow did not reach the series ball within the time budget");
  if (T_entry == 0.0) return series.eval(h);
  OdeSolution flow = integrate_flow(spec, h, T_entry, opts.ode);
  Eigen::MatrixXd Psi = transport_matrix(spec, h, T_entry, opts.ode);
  return Psi * series.eval(flow.y_end);
}

Eigen::VectorXd lambda_at(const ModelSpec& spec, const LambdaSeries& series,
                          const Eigen::VectorXd& h) {
  Eigen::VectorXd lam;
  if ((h - series.h_eq).norm() <= series.r_hand) {
    lam = series.eval(h);
  } else {
    ExtendOptions eo;
    eo.ode.rtol = 1e-12;
    eo.ode.atol = 1e-14;
    lam = extend_lambda(spec, series, h, eo);
  }
  double defect = std::abs(lam.dot(h) - 1.0);
  if (defect > 1e-10)
    throw DiagnosticError("mass identity defect " + std::to_string(defect) +
                          " exceeds tolerance at the requested state");
  return lam;
}

GammaMeasure gamma_map(const ModelSpec& spec, const LambdaSeries& series,
                       const PopulationSnapshot& pop) {
  GammaMeasure out;
  Eigen::VectorXd h = pop.densities();
  out.lambda = lambda_at(spec, series, h);
  out.particle_weight = out.lambda / static_cast<double>(pop.N);
  out.total_mass = out.lambda.dot(h);
  return out;
}

}  // namespace fvpop
