#include "driftlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace driftlab {

double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || a.size() != b.size())
    throw std::invalid_argument(
        "metrics: wasserstein1 needs equal-size nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

double sliced_wasserstein1(const std::vector<std::vector<double>>& a,
                           const std::vector<std::vector<double>>& b, Rng rng,
                           int directions) {
  if (a.empty() || a.size() != b.size())
    throw std::invalid_argument(
        "metrics: sliced distance needs equal-size nonempty samples");
  const std::size_t dim = a[0].size();
  for (const auto& row : a)
    if (row.size() != dim)
      throw std::invalid_argument("metrics: ragged sample");
  for (const auto& row : b)
    if (row.size() != dim)
      throw std::invalid_argument("metrics: sample dimension mismatch");
  if (dim == 0 || directions < 1)
    throw std::invalid_argument("metrics: need dim >= 1 and directions >= 1");

  Rng r = rng.split("slice");
  std::vector<double> u(dim), pa(a.size()), pb(b.size());
  double acc = 0.0;
  for (int d = 0; d < directions; ++d) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& c : u) {
        c = r.gaussian();
        norm += c * c;
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-12);
    for (double& c : u) c /= norm;
    for (std::size_t i = 0; i < a.size(); ++i) {
      double sa = 0.0, sb = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        sa += u[j] * a[i][j];
        sb += u[j] * b[i][j];
      }
      pa[i] = sa;
      pb[i] = sb;
    }
    acc += wasserstein1(pa, pb);
  }
  return acc / directions;
}

}  // namespace driftlab
