#pragma once

#include <vector>

#include "driftlab/rng.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

// Isotropic Gaussian mixture data distribution. Everything downstream is
// benchmarked against its closed-form marginals under the forward process.
struct GaussianMixture {
  int dim = 1;
  std::vector<double> weights;             // simplex
  std::vector<std::vector<double>> means;  // M rows of length dim
  std::vector<double> variances;           // per-component v_m (covariance v_m I)
  std::vector<int> labels;                 // optional class labels, size M or empty

  int components() const { return static_cast<int>(weights.size()); }
  void validate() const;

  static GaussianMixture single(std::vector<double> mean, double variance);
  // 1D pair at +/- separation with equal weights; labels 0 and 1.
  static GaussianMixture symmetric_pair(double separation, double variance);
};

struct MarginalQuery {
  double t = 0.0;
  std::vector<double> x;
};

// log p_t(x) = log sum_m w_m N(x; alpha_t mu_m, (alpha_t^2 v_m + sigma_t^2) I),
// stabilized with log-sum-exp. Valid on all of [0, 1].
double marginal_logpdf(const GaussianMixture& mix, const NoiseSchedule& s,
                       double t, const std::vector<double>& x);

// Posterior component probabilities P(component = m | X_t = x).
std::vector<double> posterior_responsibilities(const GaussianMixture& mix,
                                               const NoiseSchedule& s,
                                               double t,
                                               const std::vector<double>& x);

// grad_x log p_t(x): responsibility-weighted per-component Gaussian scores.
std::vector<double> marginal_score(const GaussianMixture& mix,
                                   const NoiseSchedule& s, double t,
                                   const std::vector<double>& x);

// eps*(x, t) = -sigma_t grad log p_t(x) = E[eps | X_t = x].
std::vector<double> ideal_noise(const GaussianMixture& mix,
                                const NoiseSchedule& s, double t,
                                const std::vector<double>& x);

// u_t(x | x0) = (alpha_dot - (sigma_dot/sigma) alpha) x0 + (sigma_dot/sigma) x.
std::vector<double> conditional_velocity(const NoiseSchedule& s, double t,
                                         const std::vector<double>& x,
                                         const std::vector<double>& x0);

// u_t(x) = f_t x - (1/2) g_t^2 grad log p_t(x). Clamped-domain t only.
std::vector<double> marginal_velocity(const GaussianMixture& mix,
                                      const NoiseSchedule& s, double t,
                                      const std::vector<double>& x);

// Generative-time marginal velocity u_t(x) = f_t x + (1/2) g_t^2 grad log p_t(x)
// for schedules with alpha(0)=0, sigma(0)=1 (data sits at t=1).
std::vector<double> generative_marginal_velocity(const GaussianMixture& mix,
                                                 const NoiseSchedule& s,
                                                 double t,
                                                 const std::vector<double>& x);

// i.i.d. draws of X_t = alpha_t X_0 + sigma_t eps. One row per draw.
std::vector<std::vector<double>> forward_sample(const GaussianMixture& mix,
                                                const NoiseSchedule& s,
                                                double t, int count, Rng& rng);

// Exact draw from the posterior X_0 | X_t = x (component by responsibility,
// then the conjugate within-component Gaussian).
std::vector<double> sample_posterior_x0(const GaussianMixture& mix,
                                        const NoiseSchedule& s, double t,
                                        const std::vector<double>& x,
                                        Rng& rng);

// E[X_0 | X_t = x].
std::vector<double> posterior_mean_x0(const GaussianMixture& mix,
                                      const NoiseSchedule& s, double t,
                                      const std::vector<double>& x);

// Class machinery for labeled mixtures (guidance ground truth).
int num_classes(const GaussianMixture& mix);
GaussianMixture class_conditional(const GaussianMixture& mix, int label);
double class_log_posterior(const GaussianMixture& mix, const NoiseSchedule& s,
                           double t, const std::vector<double>& x, int label);
// grad_x log p_t(label | x).
std::vector<double> class_score(const GaussianMixture& mix,
                                const NoiseSchedule& s, double t,
                                const std::vector<double>& x, int label);

}  // namespace driftlab
