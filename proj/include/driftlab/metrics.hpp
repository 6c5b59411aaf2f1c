#pragma once

#include <vector>

#include "driftlab/rng.hpp"

namespace driftlab {

// 1-Wasserstein distance between two equal-size 1D samples: the mean
// absolute gap over the sorted pairing, which is the exact optimal
// transport cost in one dimension.
double wasserstein1(std::vector<double> a, std::vector<double> b);

// Sliced variant for d >= 1: average 1D distance of the projections onto
// random unit directions.
double sliced_wasserstein1(const std::vector<std::vector<double>>& a,
                           const std::vector<std::vector<double>>& b, Rng rng,
                           int directions = 64);

}  // namespace driftlab
