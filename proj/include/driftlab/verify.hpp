#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "driftlab/fields.hpp"
#include "driftlab/oracle.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

// Uniform 1D evaluation grid. `values` optionally carries samples (density
// or a field) for callers that want the payload back.
struct Grid1D {
  std::vector<double> xs;
  double dx = 0.0;
  std::vector<double> values;

  double x_lo() const { return xs.front(); }
  double x_hi() const { return xs.back(); }
  std::size_t points() const { return xs.size(); }
  void validate() const;
};

Grid1D make_grid(double x_lo, double x_hi, std::size_t points);

// Grid spanning every component mean at time t plus six standard deviations
// of the widest component on each side.
Grid1D suggested_grid(const GaussianMixture& mix, const NoiseSchedule& s,
                      double t, std::size_t points);

// Marginal density sampled on the grid. Values below 1e-300 are flushed to
// zero so far-tail subnormals cannot leak into the stencils.
std::vector<double> density_on_grid(const GaussianMixture& mix,
                                    const NoiseSchedule& s, double t,
                                    const Grid1D& grid);

struct ResidualReport {
  double sup_norm = 0.0;
  double l2_norm = 0.0;  // sqrt(dx * sum r^2) over interior stencil points
  double x_lo = 0.0;
  double x_hi = 0.0;
  std::size_t points = 0;
};

// Residual of d/dt p + d/dx (p u) with u the marginal velocity. Time
// derivative by central difference (step 1e-4) on the exact density, space
// derivatives by 4th-order central stencils on the grid interior.
ResidualReport continuity_residual(const GaussianMixture& mix,
                                   const NoiseSchedule& s, double t,
                                   const Grid1D& grid);

// Residual of d/dt p + d/dx (f x p) - (1/2) g^2 d^2/dx^2 p.
ResidualReport fokker_planck_residual(const GaussianMixture& mix,
                                      const NoiseSchedule& s, double t,
                                      const Grid1D& grid);

// Reverse-time density q_tau(x) = p_{1-tau}(x) against its sign-flipped
// equation d/dtau q = +d/dx (f x q) - (1/2) g^2 d^2/dx^2 q, with f and g^2
// evaluated at forward time 1 - tau.
ResidualReport reverse_density_residual(const GaussianMixture& mix,
                                        const NoiseSchedule& s, double tau,
                                        const Grid1D& grid);

// Fokker-Planck residual of the conditional kernel N(alpha_t x0, sigma_t^2).
ResidualReport conditional_fp_residual(const NoiseSchedule& s, double t,
                                       double x0, const Grid1D& grid);

// Continuity residual with the velocity assembled from posterior-averaged
// conditional scores, -(x - alpha E[X0 | X_t = x]) / sigma^2, instead of the
// direct mixture score. Agreement with continuity_residual is the numerical
// form of the drift-averaging lemma.
ResidualReport averaged_drift_residual(const GaussianMixture& mix,
                                       const NoiseSchedule& s, double t,
                                       const Grid1D& grid);

struct FisherReport {
  double estimate = 0.0;
  double reference = 0.0;
  double z_score = 0.0;
  double std_error = 0.0;
};

// Monte Carlo check of score averaging: components are drawn from the
// posterior responsibilities at x and each draw contributes that component's
// marginal score (the conditional score averaged within the component, which
// is available in closed form). The mean is compared against the direct
// mixture score. A degenerate posterior gives std_error 0 and z 0. 1D only;
// n_draws >= 1000.
FisherReport fisher_check(const GaussianMixture& mix, const NoiseSchedule& s,
                          double t, double x, int n_draws, Rng rng);

struct IsometryReport {
  double sample_var = 0.0;
  double target_var = 0.0;
  double z_score = 0.0;
  double normality_stat = 0.0;  // Jarque-Bera moment statistic
};

// Simulates the stochastic integral of phi over [a, b] by left-endpoint
// Ito sums on n_substeps panels and compares the sample variance of the
// n_paths results against the quadrature of phi^2. n_substeps >= 128.
IsometryReport ito_isometry_check(const std::function<double(double)>& phi,
                                  double a, double b, int n_paths,
                                  int n_substeps, Rng rng);

struct OrthogonalityReport {
  double mean_gap = 0.0;
  double std_error = 0.0;
  double z_score = 0.0;
};

// Monte Carlo check of the loss decomposition E|a - eps|^2 =
// E|a - eps*|^2 + E|eps* - eps|^2 for a probe predictor a(x, t) read in the
// noise view, with eps* the ideal noise. Draws (x0, eps, t) with t uniform
// on the clamped domain.
OrthogonalityReport orthogonality_check(const GaussianMixture& mix,
                                        const NoiseSchedule& s,
                                        const FieldModel& probe, int n_draws,
                                        Rng rng);

// Max |difference| between the predicted-x0 sampler step and the
// coefficient-form ODE step sqrt(a_bar_{k-1}/a_bar_k) x +
// (sqrt(1 - a_bar_{k-1}) - sqrt(a_bar_{k-1}/a_bar_k) sqrt(1 - a_bar_k)) eps
// over the probe batch. Empty probes default to a fixed deterministic
// standard-normal set of 16 scalars. k in [2, ds.steps()].
double ddim_ode_equivalence(const DiscreteSchedule& ds,
                            const FieldModel& model, int k,
                            const std::vector<std::vector<double>>& probes = {});

struct ExpansionRow {
  int k = 0;
  double b_tilde = 0.0;
  double h = 0.0;
  double ratio = 0.0;  // |b_tilde - h| / h^2
};

// One row per k = 2..N. The k = 1 endpoint is excluded: b_tilde_1 = 0 while
// h_1 > 0, so the first-order match holds only at interior steps.
std::vector<ExpansionRow> ddpm_expansion_check(const DiscreteSchedule& ds);

}  // namespace driftlab
