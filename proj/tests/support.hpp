#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "driftlab/oracle.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/schedule.hpp"

// Independent numerical oracles used by the test suite. These deliberately
// do not share code with the library: quadrature here is fixed-panel, and
// derivatives are plain stencils evaluated at test-chosen steps.
namespace testlab {

inline double fd_deriv4(const std::function<double(double)>& f, double x,
                        double h) {
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) /
         (12 * h);
}

inline double fd_deriv2(const std::function<double(double)>& f, double x,
                        double h) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

inline double composite_simpson(const std::function<double(double)>& f,
                                double a, double b, int panels) {
  if (panels % 2 != 0) throw std::invalid_argument("panels must be even");
  const double h = (b - a) / panels;
  double acc = f(a) + f(b);
  for (int i = 1; i < panels; ++i)
    acc += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double normal_logpdf(double x, double mu, double var) {
  const double d = x - mu;
  return -0.5 * std::log(2.0 * M_PI * var) - 0.5 * d * d / var;
}

// Shared fixtures.

// Two well-separated narrow bumps; the standard probe distribution.
inline driftlab::GaussianMixture probe_pair() {
  return driftlab::GaussianMixture::symmetric_pair(1.0, 0.01);
}

// Forward schedule whose diffusion coefficient vanishes exactly at t = 0.5:
//   alpha = e^{-t},  sigma = t^{1/4} e^{t^2/2 - 2t + 3/2},
// so that d(log alpha/sigma)/dt = -(t - 1/2)^2 / t <= 0 with one interior zero.
inline driftlab::NoiseSchedule pinch_schedule() {
  auto sig = [](double t) {
    return std::pow(t, 0.25) * std::exp(0.5 * t * t - 2.0 * t + 1.5);
  };
  return driftlab::NoiseSchedule::generic(
      [](double t) { return std::exp(-t); },
      sig,
      [](double t) { return -std::exp(-t); },
      [sig](double t) { return sig(t) * (0.25 / t + t - 2.0); });
}

// SNR is constant on [0.4, 0.6]: alpha = e^{-t}, sigma = e^{-t} r(t) with
// r flat in the middle. g^2 stays >= 0, so the schedule itself is valid and
// only strict log-SNR monotonicity fails.
inline driftlab::NoiseSchedule plateau_schedule() {
  auto r = [](double t) {
    if (t < 0.4) return t;
    if (t < 0.6) return 0.4;
    return t - 0.2;
  };
  return driftlab::NoiseSchedule::generic(
      [](double t) { return std::exp(-t); },
      [r](double t) { return std::exp(-t) * r(t); });
}

// Exact probability-flow transport between two times for single-Gaussian
// data N(mu, v). The flow of a linear 1D ODE is affine and orientation
// preserving, and it must carry N(alpha_t mu, alpha_t^2 v + sigma_t^2)
// across times, which pins the map completely.
inline double gaussian_flow_map(double mu, double v,
                                const driftlab::NoiseSchedule& s,
                                double t_from, double t_to, double x) {
  const double a_from = s.alpha(t_from), a_to = s.alpha(t_to);
  const double sd_from =
      std::sqrt(a_from * a_from * v + s.sigma(t_from) * s.sigma(t_from));
  const double sd_to =
      std::sqrt(a_to * a_to * v + s.sigma(t_to) * s.sigma(t_to));
  return a_to * mu + sd_to / sd_from * (x - a_from * mu);
}

struct WeightedEstimate {
  std::vector<double> value;
  std::vector<double> se;
};

// Importance-sampling oracle for posterior expectations E[phi(X_0) | X_t = x]:
// draw X_0 from the prior mixture, weight by the forward kernel likelihood.
// Independent of the library's responsibility/posterior machinery.
template <class Phi>
WeightedEstimate posterior_expectation_is(const driftlab::GaussianMixture& mix,
                                          const driftlab::NoiseSchedule& s,
                                          double t, const std::vector<double>& x,
                                          int draws, driftlab::Rng& rng,
                                          Phi&& phi) {
  const double a = s.alpha(t);
  const double sg = s.sigma(t);
  const int d = mix.dim;
  std::vector<std::vector<double>> ys(draws);
  std::vector<double> w(draws);
  for (int n = 0; n < draws; ++n) {
    const double u = rng.uniform();
    int m = 0;
    double cum = 0.0;
    for (; m < mix.components() - 1; ++m) {
      cum += mix.weights[m];
      if (u < cum) break;
    }
    std::vector<double> x0(d);
    for (int i = 0; i < d; ++i)
      x0[i] = mix.means[m][i] + std::sqrt(mix.variances[m]) * rng.gaussian();
    double quad = 0.0;
    for (int i = 0; i < d; ++i) {
      const double diff = x[i] - a * x0[i];
      quad += diff * diff;
    }
    w[n] = std::exp(-0.5 * quad / (sg * sg));
    ys[n] = phi(x0);
  }
  const int k = static_cast<int>(ys[0].size());
  WeightedEstimate est;
  est.value.assign(k, 0.0);
  est.se.assign(k, 0.0);
  double wsum = 0.0;
  for (int n = 0; n < draws; ++n) {
    wsum += w[n];
    for (int i = 0; i < k; ++i) est.value[i] += w[n] * ys[n][i];
  }
  for (int i = 0; i < k; ++i) est.value[i] /= wsum;
  for (int n = 0; n < draws; ++n)
    for (int i = 0; i < k; ++i) {
      const double dlt = ys[n][i] - est.value[i];
      est.se[i] += w[n] * w[n] * dlt * dlt;
    }
  for (int i = 0; i < k; ++i) est.se[i] = std::sqrt(est.se[i]) / wsum;
  return est;
}

}  // namespace testlab
