#pragma once
// Sparse multivariate polynomials over real or complex scalars. These carry
// the model rate functions and every Taylor expansion in the series solver,
// so the representation keeps exact term maps; the engine compiles them to a
// flat form for fast repeated evaluation.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "fvpop/multi_index.hpp"

namespace fvpop {

template <typename Scalar>
class Poly {
 public:
  Poly() : nvars_(0) {}
  explicit Poly(int nvars) : nvars_(nvars) {}

  static Poly constant(int nvars, Scalar c) {
    Poly p(nvars);
    if (c != Scalar(0)) p.terms_[MultiIndex(nvars, 0)] = c;
    return p;
  }
  static Poly variable(int nvars, int j) {
    Poly p(nvars);
    MultiIndex a(nvars, 0);
    a[j] = 1;
    p.terms_[a] = Scalar(1);
    return p;
  }

  int nvars() const { return nvars_; }
  const std::map<MultiIndex, Scalar>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  int degree() const {
    int d = 0;
    for (const auto& [a, c] : terms_) d = std::max(d, mi_degree(a));
    return d;
  }

  Scalar coeff(const MultiIndex& a) const {
    auto it = terms_.find(a);
    return it == terms_.end() ? Scalar(0) : it->second;
  }

  void add_term(const MultiIndex& a, Scalar c) {
    if (static_cast<int>(a.size()) != nvars_)
      throw std::invalid_argument("poly term arity mismatch");
    auto it = terms_.find(a);
    if (it == terms_.end()) {
      if (c != Scalar(0)) terms_[a] = c;
    } else {
      it->second += c;
      if (it->second == Scalar(0)) terms_.erase(it);
    }
  }

  Poly& operator+=(const Poly& o) {
    check_arity(o);
    for (const auto& [a, c] : o.terms_) add_term(a, c);
    return *this;
  }
  Poly& operator-=(const Poly& o) {
    check_arity(o);
    for (const auto& [a, c] : o.terms_) add_term(a, -c);
    return *this;
  }
  Poly& operator*=(Scalar s) {
    if (s == Scalar(0)) {
      terms_.clear();
    } else {
      for (auto& [a, c] : terms_) c *= s;
    }
    return *this;
  }
  friend Poly operator+(Poly a, const Poly& b) { return a += b; }
  friend Poly operator-(Poly a, const Poly& b) { return a -= b; }
  friend Poly operator*(Poly a, Scalar s) { return a *= s; }
  friend Poly operator*(Scalar s, Poly a) { return a *= s; }

  friend Poly operator*(const Poly& a, const Poly& b) {
    a.check_arity(b);
    Poly out(a.nvars_);
    MultiIndex sum(a.nvars_);
    for (const auto& [ai, ac] : a.terms_)
      for (const auto& [bi, bc] : b.terms_) {
        for (int v = 0; v < a.nvars_; ++v) sum[v] = ai[v] + bi[v];
        out.add_term(sum, ac * bc);
      }
    return out;
  }

  template <typename S2>
  auto eval(const Eigen::Matrix<S2, Eigen::Dynamic, 1>& x) const {
    using R = decltype(Scalar() * S2());
    if (x.size() != nvars_) throw std::invalid_argument("poly eval arity mismatch");
    R acc(0);
    for (const auto& [a, c] : terms_) {
      R t(c);
      for (int v = 0; v < nvars_; ++v)
        for (int e = 0; e < a[v]; ++e) t *= x[v];
      acc += t;
    }
    return acc;
  }

  Poly derivative(int j) const {
    Poly out(nvars_);
    for (const auto& [a, c] : terms_) {
      if (a[j] == 0) continue;
      MultiIndex b = a;
      b[j] -= 1;
      out.add_term(b, c * Scalar(a[j]));
    }
    return out;
  }

  // Substitute variable m -> shift[m] + sum_k map(m,k) * y_k. Used to move
  // between density coordinates and eigencoordinates of the linearization.
  template <typename S2>
  Poly<S2> compose_affine(const Eigen::Matrix<S2, Eigen::Dynamic, 1>& shift,
                          const Eigen::Matrix<S2, Eigen::Dynamic, Eigen::Dynamic>& map) const {
    if (shift.size() != nvars_ || map.rows() != nvars_)
      throw std::invalid_argument("compose_affine shape mismatch");
    int ny = static_cast<int>(map.cols());
    // Linear replacement polynomial for each original variable.
    std::vector<Poly<S2>> lin(nvars_, Poly<S2>(ny));
    for (int m = 0; m < nvars_; ++m) {
      lin[m] = Poly<S2>::constant(ny, shift[m]);
      for (int k = 0; k < ny; ++k) {
        Poly<S2> v = Poly<S2>::variable(ny, k);
        lin[m] += v * map(m, k);
      }
    }
    // Memoize powers of each replacement as needed.
    std::vector<std::vector<Poly<S2>>> pw(nvars_);
    for (int m = 0; m < nvars_; ++m) pw[m].push_back(Poly<S2>::constant(ny, S2(1)));
    auto power = [&](int m, int e) -> const Poly<S2>& {
      while (static_cast<int>(pw[m].size()) <= e) pw[m].push_back(pw[m].back() * lin[m]);
      return pw[m][e];
    };
    Poly<S2> out(ny);
    for (const auto& [a, c] : terms_) {
      Poly<S2> t = Poly<S2>::constant(ny, S2(c));
      for (int m = 0; m < nvars_; ++m)
        if (a[m] > 0) t = t * power(m, a[m]);
      out += t;
    }
    return out;
  }

  // Drop terms with |coeff| <= tol (used after complex round trips).
  void prune(double tol) {
    for (auto it = terms_.begin(); it != terms_.end();) {
      if (std::abs(it->second) <= tol)
        it = terms_.erase(it);
      else
        ++it;
    }
  }

 private:
  void check_arity(const Poly& o) const {
    if (o.nvars_ != nvars_) throw std::invalid_argument("poly arity mismatch");
  }
  int nvars_;
  std::map<MultiIndex, Scalar> terms_;
};

using PolyD = Poly<double>;
using PolyC = Poly<std::complex<double>>;

// Flat compiled form for the hot simulation loop: plain term array, exponents
// in a fixed-width array, evaluated by repeated multiplication.
struct CompiledPoly {
  static constexpr int kMaxVars = 8;
  struct Term {
    double c;
    std::array<uint8_t, kMaxVars> e;
  };
  int nvars = 0;
  std::vector<Term> terms;

  static CompiledPoly from(const PolyD& p);
  double eval(const double* x) const {
    double acc = 0;
    for (const Term& t : terms) {
      double m = t.c;
      for (int v = 0; v < nvars; ++v)
        for (int k = 0; k < t.e[v]; ++k) m *= x[v];
      acc += m;
    }
    return acc;
  }
};

// Real part of a complex polynomial; fails if any imaginary residue exceeds
// tol (the series solver produces conjugate-symmetric data, so after the
// back-transform the imaginary parts must cancel).
PolyD real_part_checked(const PolyC& p, double tol);

}  // namespace fvpop
