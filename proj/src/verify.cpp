#include "driftlab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "driftlab/samplers.hpp"
#include "driftlab/training.hpp"

namespace driftlab {
namespace {

constexpr double kTimeStep = 1e-4;
constexpr double kDensityFloor = 1e-300;

double clamp_density(double p) { return p < kDensityFloor ? 0.0 : p; }

double density_at(const GaussianMixture& mix, const NoiseSchedule& s, double t,
                  double x) {
  return clamp_density(std::exp(marginal_logpdf(mix, s, t, {x})));
}

double d1(const std::vector<double>& f, std::size_t i, double dx) {
  return (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) /
         (12.0 * dx);
}

double d2(const std::vector<double>& f, std::size_t i, double dx) {
  return (-f[i + 2] + 16.0 * f[i + 1] - 30.0 * f[i] + 16.0 * f[i - 1] -
          f[i - 2]) /
         (12.0 * dx * dx);
}

void check_pde_inputs(const GaussianMixture& mix, double t,
                      const Grid1D& grid) {
  mix.validate();
  if (mix.dim != 1)
    throw std::invalid_argument("verify: PDE residuals require a 1D mixture");
  if (!(t >= kTMin && t <= kTMax))
    throw std::invalid_argument(
        "verify: residual time must lie in [kTMin, kTMax]");
  grid.validate();
}

ResidualReport report_from(const std::vector<double>& residual,
                           const Grid1D& grid) {
  ResidualReport out;
  out.x_lo = grid.x_lo();
  out.x_hi = grid.x_hi();
  out.points = grid.points();
  double sq = 0.0;
  for (double r : residual) {
    out.sup_norm = std::max(out.sup_norm, std::abs(r));
    sq += r * r;
  }
  out.l2_norm = std::sqrt(grid.dx * sq);
  return out;
}

// Residual of d/dt p + d/dx flux - diffusion * d^2/dx^2 p on the grid
// interior, with all three arrays sampled by the caller.
ResidualReport transport_residual(const std::vector<double>& dpdt,
                                  const std::vector<double>& flux,
                                  const std::vector<double>& density,
                                  double diffusion, const Grid1D& grid) {
  const std::size_t n = grid.points();
  std::vector<double> residual;
  residual.reserve(n - 4);
  for (std::size_t i = 2; i + 2 < n; ++i) {
    double r = dpdt[i] + d1(flux, i, grid.dx);
    if (diffusion != 0.0) r -= diffusion * d2(density, i, grid.dx);
    residual.push_back(r);
  }
  return report_from(residual, grid);
}

int draw_component(const std::vector<double>& weights, Rng& rng) {
  const double u = rng.uniform();
  int m = 0;
  double cum = 0.0;
  for (; m + 1 < static_cast<int>(weights.size()); ++m) {
    cum += weights[m];
    if (u < cum) break;
  }
  return m;
}

// Composite Simpson rule with an even panel count of at least 1024.
double simpson(const std::function<double(double)>& f, double a, double b,
               int min_panels) {
  int m = std::max(min_panels, 1024);
  if (m % 2 != 0) ++m;
  const double h = (b - a) / m;
  double sum = f(a) + f(b);
  for (int i = 1; i < m; ++i) sum += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

}  // namespace

void Grid1D::validate() const {
  if (xs.size() < 64)
    throw std::invalid_argument("verify: grid needs at least 64 points");
  if (!(dx > 0.0))
    throw std::invalid_argument("verify: grid spacing must be positive");
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    if (std::abs(xs[i + 1] - xs[i] - dx) > 1e-9 * std::max(1.0, std::abs(dx)))
      throw std::invalid_argument("verify: grid points must be uniform");
  }
  if (!values.empty() && values.size() != xs.size())
    throw std::invalid_argument("verify: grid values size mismatch");
}

Grid1D make_grid(double x_lo, double x_hi, std::size_t points) {
  if (points < 64)
    throw std::invalid_argument("verify: grid needs at least 64 points");
  if (!(x_hi > x_lo))
    throw std::invalid_argument("verify: grid needs x_hi > x_lo");
  Grid1D grid;
  grid.dx = (x_hi - x_lo) / static_cast<double>(points - 1);
  grid.xs.resize(points);
  for (std::size_t i = 0; i < points; ++i)
    grid.xs[i] = x_lo + static_cast<double>(i) * grid.dx;
  grid.xs.back() = x_hi;
  return grid;
}

Grid1D suggested_grid(const GaussianMixture& mix, const NoiseSchedule& s,
                      double t, std::size_t points) {
  mix.validate();
  if (mix.dim != 1)
    throw std::invalid_argument("verify: suggested_grid requires a 1D mixture");
  const double a = s.alpha(t);
  const double sg = s.sigma(t);
  double widest = 0.0;
  for (double v : mix.variances) widest = std::max(widest, v);
  const double sd = std::sqrt(a * a * widest + sg * sg);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& mean : mix.means) {
    lo = std::min(lo, a * mean[0]);
    hi = std::max(hi, a * mean[0]);
  }
  return make_grid(lo - 6.0 * sd, hi + 6.0 * sd, points);
}

std::vector<double> density_on_grid(const GaussianMixture& mix,
                                    const NoiseSchedule& s, double t,
                                    const Grid1D& grid) {
  grid.validate();
  std::vector<double> out(grid.points());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = density_at(mix, s, t, grid.xs[i]);
  return out;
}

ResidualReport continuity_residual(const GaussianMixture& mix,
                                   const NoiseSchedule& s, double t,
                                   const Grid1D& grid) {
  check_pde_inputs(mix, t, grid);
  const std::size_t n = grid.points();
  std::vector<double> density(n), flux(n), dpdt(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = grid.xs[i];
    density[i] = density_at(mix, s, t, x);
    flux[i] = density[i] * marginal_velocity(mix, s, t, {x})[0];
    dpdt[i] = (density_at(mix, s, t + kTimeStep, x) -
               density_at(mix, s, t - kTimeStep, x)) /
              (2.0 * kTimeStep);
  }
  return transport_residual(dpdt, flux, density, 0.0, grid);
}

ResidualReport fokker_planck_residual(const GaussianMixture& mix,
                                      const NoiseSchedule& s, double t,
                                      const Grid1D& grid) {
  check_pde_inputs(mix, t, grid);
  const auto dd = drift_diffusion(s, t);
  const std::size_t n = grid.points();
  std::vector<double> density(n), flux(n), dpdt(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = grid.xs[i];
    density[i] = density_at(mix, s, t, x);
    flux[i] = dd.f * x * density[i];
    dpdt[i] = (density_at(mix, s, t + kTimeStep, x) -
               density_at(mix, s, t - kTimeStep, x)) /
              (2.0 * kTimeStep);
  }
  return transport_residual(dpdt, flux, density, 0.5 * dd.g2, grid);
}

ResidualReport reverse_density_residual(const GaussianMixture& mix,
                                        const NoiseSchedule& s, double tau,
                                        const Grid1D& grid) {
  check_pde_inputs(mix, tau, grid);
  const double tf = 1.0 - tau;
  const auto dd = drift_diffusion(s, tf);
  const std::size_t n = grid.points();
  std::vector<double> density(n), flux(n), dqdtau(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = grid.xs[i];
    density[i] = density_at(mix, s, tf, x);
    // The reverse equation carries the drift term with a plus sign, so the
    // flux enters the shared residual with its sign flipped.
    flux[i] = -dd.f * x * density[i];
    dqdtau[i] = (density_at(mix, s, tf - kTimeStep, x) -
                 density_at(mix, s, tf + kTimeStep, x)) /
                (2.0 * kTimeStep);
  }
  return transport_residual(dqdtau, flux, density, -0.5 * dd.g2, grid);
}

ResidualReport conditional_fp_residual(const NoiseSchedule& s, double t,
                                       double x0, const Grid1D& grid) {
  if (!(t >= kTMin && t <= kTMax))
    throw std::invalid_argument(
        "verify: residual time must lie in [kTMin, kTMax]");
  grid.validate();
  const auto kernel = [&s, x0](double tt, double x) {
    const double mean = s.alpha(tt) * x0;
    const double var = s.sigma(tt) * s.sigma(tt);
    const double z = x - mean;
    return clamp_density(std::exp(-0.5 * z * z / var) /
                         std::sqrt(2.0 * M_PI * var));
  };
  const auto dd = drift_diffusion(s, t);
  const std::size_t n = grid.points();
  std::vector<double> density(n), flux(n), dpdt(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = grid.xs[i];
    density[i] = kernel(t, x);
    flux[i] = dd.f * x * density[i];
    dpdt[i] =
        (kernel(t + kTimeStep, x) - kernel(t - kTimeStep, x)) /
        (2.0 * kTimeStep);
  }
  return transport_residual(dpdt, flux, density, 0.5 * dd.g2, grid);
}

ResidualReport averaged_drift_residual(const GaussianMixture& mix,
                                       const NoiseSchedule& s, double t,
                                       const Grid1D& grid) {
  check_pde_inputs(mix, t, grid);
  const auto dd = drift_diffusion(s, t);
  const double a = s.alpha(t);
  const double var = s.sigma(t) * s.sigma(t);
  const std::size_t n = grid.points();
  std::vector<double> density(n), flux(n), dpdt(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = grid.xs[i];
    density[i] = density_at(mix, s, t, x);
    const double score_avg =
        -(x - a * posterior_mean_x0(mix, s, t, {x})[0]) / var;
    flux[i] = density[i] * (dd.f * x - 0.5 * dd.g2 * score_avg);
    dpdt[i] = (density_at(mix, s, t + kTimeStep, x) -
               density_at(mix, s, t - kTimeStep, x)) /
              (2.0 * kTimeStep);
  }
  return transport_residual(dpdt, flux, density, 0.0, grid);
}

FisherReport fisher_check(const GaussianMixture& mix, const NoiseSchedule& s,
                          double t, double x, int n_draws, Rng rng) {
  mix.validate();
  if (mix.dim != 1)
    throw std::invalid_argument("verify: fisher check requires a 1D mixture");
  if (n_draws < 1000)
    throw std::invalid_argument("verify: fisher check needs n_draws >= 1000");
  if (!(t >= kTMin && t <= kTMax))
    throw std::invalid_argument(
        "verify: fisher check time must lie in [kTMin, kTMax]");
  const double a = s.alpha(t);
  const double sg = s.sigma(t);
  const auto resp = posterior_responsibilities(mix, s, t, {x});
  std::vector<double> component_score(mix.components());
  for (int m = 0; m < mix.components(); ++m) {
    const double var = a * a * mix.variances[m] + sg * sg;
    component_score[m] = -(x - a * mix.means[m][0]) / var;
  }
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n_draws; ++i) {
    const double y = component_score[draw_component(resp, rng)];
    sum += y;
    sumsq += y * y;
  }
  FisherReport out;
  out.estimate = sum / n_draws;
  out.reference = marginal_score(mix, s, t, {x})[0];
  const double var_hat =
      std::max(0.0, (sumsq - n_draws * out.estimate * out.estimate) /
                        (n_draws - 1.0));
  out.std_error = std::sqrt(var_hat / n_draws);
  out.z_score =
      out.std_error > 0.0 ? (out.estimate - out.reference) / out.std_error
                          : 0.0;
  return out;
}

IsometryReport ito_isometry_check(const std::function<double(double)>& phi,
                                  double a, double b, int n_paths,
                                  int n_substeps, Rng rng) {
  if (!phi)
    throw std::invalid_argument("verify: ito check needs a callable phi");
  if (!(b > a))
    throw std::invalid_argument(
        "verify: ito check needs an interval with b > a");
  if (n_paths < 2)
    throw std::invalid_argument("verify: ito check needs n_paths >= 2");
  if (n_substeps < 128)
    throw std::invalid_argument("verify: ito check needs n_substeps >= 128");
  const double dt = (b - a) / n_substeps;
  const double root_dt = std::sqrt(dt);
  std::vector<double> coeff(n_substeps);
  for (int i = 0; i < n_substeps; ++i)
    coeff[i] = phi(a + i * dt) * root_dt;
  std::vector<double> integrals(n_paths);
  for (int j = 0; j < n_paths; ++j) {
    double acc = 0.0;
    for (int i = 0; i < n_substeps; ++i) acc += coeff[i] * rng.gaussian();
    integrals[j] = acc;
  }
  double mean = 0.0;
  for (double v : integrals) mean += v;
  mean /= n_paths;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : integrals) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  IsometryReport out;
  out.sample_var = m2 / (n_paths - 1.0);
  out.target_var =
      simpson([&phi](double tau) { return phi(tau) * phi(tau); }, a, b,
              2 * n_substeps);
  const double se = out.target_var * std::sqrt(2.0 / (n_paths - 1.0));
  if (se > 0.0)
    out.z_score = (out.sample_var - out.target_var) / se;
  else
    out.z_score = out.sample_var == 0.0
                      ? 0.0
                      : std::numeric_limits<double>::infinity();
  m2 /= n_paths;
  m3 /= n_paths;
  m4 /= n_paths;
  if (m2 > 0.0) {
    const double skew = m3 / std::pow(m2, 1.5);
    const double kurt = m4 / (m2 * m2);
    out.normality_stat =
        n_paths / 6.0 * (skew * skew + 0.25 * (kurt - 3.0) * (kurt - 3.0));
  }
  return out;
}

OrthogonalityReport orthogonality_check(const GaussianMixture& mix,
                                        const NoiseSchedule& s,
                                        const FieldModel& probe, int n_draws,
                                        Rng rng) {
  if (!probe.eval)
    throw std::invalid_argument(
        "verify: orthogonality check needs a probe evaluator");
  if (n_draws < 2)
    throw std::invalid_argument(
        "verify: orthogonality check needs n_draws >= 2");
  const auto batch = draw_training_batch(mix, s, n_draws, kTMin, kTMax, rng);
  double sum = 0.0, sumsq = 0.0;
  for (const auto& sample : batch) {
    const auto ideal = ideal_noise(mix, s, sample.t, sample.xt);
    const auto guess = to_noise(probe, s, sample.xt, sample.t);
    double gap = 0.0;
    for (std::size_t i = 0; i < sample.eps.size(); ++i) {
      const double to_eps = guess[i] - sample.eps[i];
      const double to_ideal = guess[i] - ideal[i];
      const double cross = ideal[i] - sample.eps[i];
      gap += to_eps * to_eps - to_ideal * to_ideal - cross * cross;
    }
    sum += gap;
    sumsq += gap * gap;
  }
  OrthogonalityReport out;
  out.mean_gap = sum / n_draws;
  const double var_hat = std::max(
      0.0, (sumsq - n_draws * out.mean_gap * out.mean_gap) / (n_draws - 1.0));
  out.std_error = std::sqrt(var_hat / n_draws);
  out.z_score = out.std_error > 0.0 ? out.mean_gap / out.std_error : 0.0;
  return out;
}

double ddim_ode_equivalence(const DiscreteSchedule& ds,
                            const FieldModel& model, int k,
                            const std::vector<std::vector<double>>& probes) {
  if (ds.steps() < 2)
    throw std::invalid_argument(
        "verify: ddim equivalence needs at least 2 steps");
  if (k < 2 || k > ds.steps())
    throw std::invalid_argument(
        "verify: ddim equivalence needs k in [2, steps]");
  std::vector<std::vector<double>> defaults;
  if (probes.empty()) {
    Rng probe_rng(1905);
    defaults.reserve(16);
    for (int i = 0; i < 16; ++i) defaults.push_back({probe_rng.gaussian()});
  }
  const auto& batch = probes.empty() ? defaults : probes;
  const double ab = ds.a_bar[k];
  const double ab_prev = ds.a_bar[k - 1];
  const double alpha = std::sqrt(ab), sigma = std::sqrt(1.0 - ab);
  const double alpha_prev = std::sqrt(ab_prev);
  const double sigma_prev = std::sqrt(1.0 - ab_prev);
  const double ratio = alpha_prev / alpha;
  const double c_eps = sigma_prev - ratio * sigma;
  double max_diff = 0.0;
  for (const auto& x : batch) {
    const auto stepped = ddim_step(model, ds, x, k, 0.0, {});
    const auto eps = to_noise_at(model, x, ds.t[k], alpha, sigma);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double ode = ratio * x[i] + c_eps * eps[i];
      max_diff = std::max(max_diff, std::abs(stepped[i] - ode));
    }
  }
  return max_diff;
}

std::vector<ExpansionRow> ddpm_expansion_check(const DiscreteSchedule& ds) {
  if (ds.steps() < 2)
    throw std::invalid_argument(
        "verify: expansion check needs at least 2 steps");
  std::vector<ExpansionRow> rows;
  rows.reserve(ds.steps() - 1);
  for (int k = 2; k <= ds.steps(); ++k) {
    ExpansionRow row;
    row.k = k;
    row.b_tilde = ds.b_tilde[k];
    row.h = ds.h[k];
    row.ratio = std::abs(row.b_tilde - row.h) / (row.h * row.h);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace driftlab
