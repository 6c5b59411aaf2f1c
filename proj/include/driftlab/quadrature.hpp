#pragma once

#include <functional>

namespace driftlab {

// Adaptive Simpson integration of f over [a, b] to the given absolute
// tolerance. Throws std::runtime_error if the recursion depth is exhausted
// before the tolerance is met.
double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double abs_tol);

}  // namespace driftlab
