#include "driftlab/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace driftlab {
namespace {

double simpson(double fa, double fm, double fb, double a, double b) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double recurse(const std::function<double(double)>& f, double a, double b,
               double fa, double fm, double fb, double whole, double tol,
               int depth) {
  if (depth > 50) throw std::runtime_error("adaptive_simpson: tolerance not reached");
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(fa, flm, fm, a, m);
  const double right = simpson(fm, frm, fb, m, b);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
         recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double abs_tol) {
  if (a == b) return 0.0;
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = simpson(fa, fm, fb, a, b);
  return recurse(f, a, b, fa, fm, fb, whole, abs_tol, 0);
}

}  // namespace driftlab
