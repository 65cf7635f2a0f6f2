#include "fvpop/polynomial.hpp"

namespace fvpop {

CompiledPoly CompiledPoly::from(const PolyD& p) {
  if (p.nvars() > kMaxVars) throw std::invalid_argument("too many variables to compile");
  CompiledPoly out;
  out.nvars = p.nvars();
  for (const auto& [a, c] : p.terms()) {
    Term t{};
    t.c = c;
    for (int v = 0; v < out.nvars; ++v) {
      if (a[v] > 255) throw std::invalid_argument("exponent too large to compile");
      t.e[v] = static_cast<uint8_t>(a[v]);
    }
    out.terms.push_back(t);
  }
  return out;
}

PolyD real_part_checked(const PolyC& p, double tol) {
  PolyD out(p.nvars());
  for (const auto& [a, c] : p.terms()) {
    if (std::abs(c.imag()) > tol)
      throw std::runtime_error("imaginary residue above tolerance in series back-transform");
    if (c.real() != 0.0) out.add_term(a, c.real());
  }
  return out;
}

}  // namespace fvpop
