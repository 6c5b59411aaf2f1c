#include "driftlab/samplers.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace driftlab {
namespace {

void check_step_order(double t_from, double t_to) {
  if (!(t_to <= t_from))
    throw std::invalid_argument("sampler: steps must move backward in time");
}

void check_noise(const std::vector<double>& z, std::size_t dim) {
  if (z.size() != dim)
    throw std::invalid_argument("sampler: noise dimension mismatch");
}

std::size_t check_batch(const Batch& init) {
  if (init.empty() || init[0].empty())
    throw std::invalid_argument("sampler: empty initial batch");
  for (const auto& row : init)
    if (row.size() != init[0].size())
      throw std::invalid_argument("sampler: ragged initial batch");
  return init[0].size();
}

void check_index(const DiscreteSchedule& ds, int k) {
  if (k < 1 || k > ds.steps())
    throw std::out_of_range("sampler: discrete index outside [1, N]");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string guidance_tag(const GuidanceSpec& g) {
  switch (g.mode) {
    case GuidanceMode::kNone: return "";
    case GuidanceMode::kClassifier:
      return "+classifier(gamma=" + fmt(g.gamma) + ")";
    case GuidanceMode::kCfg: return "+cfg(s=" + fmt(g.s) + ")";
  }
  return "";
}

TimeGrid grid_from_discrete(const DiscreteSchedule& ds) {
  TimeGrid grid;
  grid.times.assign(ds.t.rbegin(), ds.t.rend());
  grid.deltas.resize(grid.times.size() - 1);
  for (std::size_t n = 0; n + 1 < grid.times.size(); ++n)
    grid.deltas[n] = grid.times[n] - grid.times[n + 1];
  return grid;
}

std::vector<Rng> lane_streams(const Rng& rng, std::size_t lanes,
                              std::string_view space) {
  Rng base = rng.split(space);
  std::vector<Rng> streams;
  streams.reserve(lanes);
  for (std::size_t l = 0; l < lanes; ++l) streams.push_back(base.split(l));
  return streams;
}

std::vector<double> draw_gaussians(Rng& rng, std::size_t dim) {
  std::vector<double> z(dim);
  for (double& v : z) v = rng.gaussian();
  return z;
}

}  // namespace

void TimeGrid::validate() const {
  if (times.size() < 2)
    throw std::invalid_argument("sampler: grid needs at least two times");
  if (deltas.size() + 1 != times.size())
    throw std::invalid_argument("sampler: grid deltas disagree with times");
  for (std::size_t n = 0; n + 1 < times.size(); ++n) {
    const double gap = times[n] - times[n + 1];
    if (!(gap > 0.0))
      throw std::invalid_argument("sampler: grid times must strictly decrease");
    if (!(deltas[n] > 0.0) || std::abs(deltas[n] - gap) > 1e-12)
      throw std::invalid_argument("sampler: grid deltas disagree with times");
  }
}

TimeGrid sampling_grid(std::size_t n_steps, double top, double eps) {
  if (n_steps == 0)
    throw std::invalid_argument("sampler: grid needs at least one step");
  if (!(eps > 0.0) || !(top > eps))
    throw std::invalid_argument("sampler: grid needs top > eps > 0");
  TimeGrid grid;
  grid.times.resize(n_steps + 1);
  grid.deltas.resize(n_steps);
  for (std::size_t i = 0; i <= n_steps; ++i)
    grid.times[i] =
        i == n_steps
            ? eps
            : top + (eps - top) * (static_cast<double>(i) / n_steps);
  for (std::size_t n = 0; n < n_steps; ++n)
    grid.deltas[n] = grid.times[n] - grid.times[n + 1];
  return grid;
}

Batch gaussian_batch(std::size_t lanes, std::size_t dim, double scale,
                     Rng rng) {
  if (lanes == 0 || dim == 0)
    throw std::invalid_argument("sampler: empty batch requested");
  auto streams = lane_streams(rng, lanes, "batch");
  Batch out(lanes, std::vector<double>(dim));
  for (std::size_t l = 0; l < lanes; ++l)
    for (std::size_t i = 0; i < dim; ++i)
      out[l][i] = scale * streams[l].gaussian();
  return out;
}

std::vector<double> em_sde_step(const FieldModel& model,
                                const NoiseSchedule& sched,
                                const std::vector<double>& x, double t_from,
                                double t_to, const std::vector<double>& z,
                                const GuidanceSpec& guidance) {
  check_step_order(t_from, t_to);
  check_noise(z, x.size());
  const double dt = t_from - t_to;
  const auto drift = reverse_sde_drift(model, sched, x, t_from, guidance);
  const double scale =
      std::sqrt(drift_diffusion(sched, t_from).g2) * std::sqrt(dt);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] - drift[i] * dt + scale * z[i];
  return out;
}

std::vector<double> euler_ode_step(const FieldModel& model,
                                   const NoiseSchedule& sched,
                                   const std::vector<double>& x, double t_from,
                                   double t_to, const GuidanceSpec& guidance) {
  check_step_order(t_from, t_to);
  const double dt = t_from - t_to;
  const auto vel = reverse_ode_velocity(model, sched, x, t_from, guidance);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - vel[i] * dt;
  return out;
}

std::vector<double> heun_ode_step(const FieldModel& model,
                                  const NoiseSchedule& sched,
                                  const std::vector<double>& x, double t_from,
                                  double t_to, const GuidanceSpec& guidance) {
  check_step_order(t_from, t_to);
  const double dt = t_from - t_to;
  const auto k1 = reverse_ode_velocity(model, sched, x, t_from, guidance);
  std::vector<double> pred(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) pred[i] = x[i] - dt * k1[i];
  const auto k2 = reverse_ode_velocity(model, sched, pred, t_to, guidance);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] - 0.5 * dt * (k1[i] + k2[i]);
  return out;
}

std::vector<double> dpm1_step(const FieldModel& model,
                              const NoiseSchedule& sched,
                              const std::vector<double>& x, double t_from,
                              double t_to, const GuidanceSpec& guidance) {
  check_step_order(t_from, t_to);
  const double a_from = sched.alpha(t_from), s_from = sched.sigma(t_from);
  const double a_to = sched.alpha(t_to), s_to = sched.sigma(t_to);
  if (s_from <= 0.0 || s_to <= 0.0)
    throw std::domain_error("sampler: dpm step needs sigma > 0");
  const double h = std::log(a_to / s_to) - std::log(a_from / s_from);
  const double ratio = a_to / a_from;
  const double coef = s_to * std::expm1(h);
  const auto eps = guided_noise(model, sched, x, t_from, guidance);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = ratio * x[i] - coef * eps[i];
  return out;
}

std::vector<double> ddpm_posterior_mean(const FieldModel& model,
                                        const DiscreteSchedule& ds,
                                        const std::vector<double>& x, int k,
                                        const GuidanceSpec& guidance) {
  check_index(ds, k);
  const double ab = ds.a_bar[k];
  const double sigma = std::sqrt(1.0 - ab);
  const auto eps =
      guided_noise_at(model, x, ds.t[k], std::sqrt(ab), sigma, guidance);
  const double inv_root_a = 1.0 / std::sqrt(ds.a[k]);
  const double coef = ds.b[k] / sigma;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = inv_root_a * (x[i] - coef * eps[i]);
  return out;
}

std::vector<double> ddim_predicted_x0(const FieldModel& model,
                                      const DiscreteSchedule& ds,
                                      const std::vector<double>& x, int k,
                                      const GuidanceSpec& guidance) {
  check_index(ds, k);
  const double ab = ds.a_bar[k];
  const double alpha = std::sqrt(ab), sigma = std::sqrt(1.0 - ab);
  const auto eps = guided_noise_at(model, x, ds.t[k], alpha, sigma, guidance);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = (x[i] - sigma * eps[i]) / alpha;
  return out;
}

double ddim_sigma_hat(const DiscreteSchedule& ds, int k, double eta) {
  check_index(ds, k);
  const double ab = ds.a_bar[k];
  const double ab_prev = ds.a_bar[k - 1];
  return eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev));
}

std::vector<double> ddim_step(const FieldModel& model,
                              const DiscreteSchedule& ds,
                              const std::vector<double>& x, int k, double eta,
                              const std::vector<double>& z,
                              std::uint64_t* clamp_warnings,
                              const GuidanceSpec& guidance) {
  check_index(ds, k);
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument("sampler: ddim eta must lie in [0, 1]");
  if (eta > 0.0) check_noise(z, x.size());
  const double ab = ds.a_bar[k];
  const double alpha = std::sqrt(ab), sigma = std::sqrt(1.0 - ab);
  const auto eps = guided_noise_at(model, x, ds.t[k], alpha, sigma, guidance);
  const double s_hat = ddim_sigma_hat(ds, k, eta);
  double rad = 1.0 - ds.a_bar[k - 1] - s_hat * s_hat;
  if (rad < 0.0) {
    rad = 0.0;
    if (clamp_warnings) ++*clamp_warnings;
  }
  const double c_x0 = std::sqrt(ds.a_bar[k - 1]);
  const double c_eps = std::sqrt(rad);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = (x[i] - sigma * eps[i]) / alpha;
    out[i] = c_x0 * x0 + c_eps * eps[i];
    if (eta > 0.0) out[i] += s_hat * z[i];
  }
  return out;
}

Trajectory em_reverse_sde(const FieldModel& model, const NoiseSchedule& sched,
                          const TimeGrid& grid, const Batch& init, Rng rng,
                          const GuidanceSpec& guidance) {
  grid.validate();
  const std::size_t dim = check_batch(init);
  Trajectory out;
  out.grid = grid;
  out.seed = rng.key();
  out.sampler_tag = "em" + guidance_tag(guidance);
  out.states.reserve(grid.times.size());
  out.states.push_back(init);
  auto streams = lane_streams(rng, init.size(), "steps");
  Batch cur = init;
  for (std::size_t n = 0; n < grid.steps(); ++n) {
    for (std::size_t l = 0; l < cur.size(); ++l) {
      const auto z = draw_gaussians(streams[l], dim);
      cur[l] = em_sde_step(model, sched, cur[l], grid.times[n],
                           grid.times[n + 1], z, guidance);
    }
    out.states.push_back(cur);
  }
  return out;
}

Trajectory euler_reverse_ode(const FieldModel& model,
                             const NoiseSchedule& sched, const TimeGrid& grid,
                             const Batch& init, const GuidanceSpec& guidance) {
  grid.validate();
  check_batch(init);
  Trajectory out;
  out.grid = grid;
  out.sampler_tag = "euler" + guidance_tag(guidance);
  out.states.reserve(grid.times.size());
  out.states.push_back(init);
  Batch cur = init;
  for (std::size_t n = 0; n < grid.steps(); ++n) {
    for (auto& lane : cur)
      lane = euler_ode_step(model, sched, lane, grid.times[n],
                            grid.times[n + 1], guidance);
    out.states.push_back(cur);
  }
  return out;
}

Trajectory heun_reverse_ode(const FieldModel& model,
                            const NoiseSchedule& sched, const TimeGrid& grid,
                            const Batch& init, const GuidanceSpec& guidance) {
  grid.validate();
  check_batch(init);
  Trajectory out;
  out.grid = grid;
  out.sampler_tag = "heun" + guidance_tag(guidance);
  out.states.reserve(grid.times.size());
  out.states.push_back(init);
  Batch cur = init;
  for (std::size_t n = 0; n < grid.steps(); ++n) {
    for (auto& lane : cur)
      lane = heun_ode_step(model, sched, lane, grid.times[n],
                           grid.times[n + 1], guidance);
    out.states.push_back(cur);
  }
  return out;
}

Trajectory dpm_solver1(const FieldModel& model, const NoiseSchedule& sched,
                       const TimeGrid& grid, const Batch& init,
                       const GuidanceSpec& guidance) {
  grid.validate();
  check_batch(init);
  LogSnr lambda(sched);  // rejects schedules without a monotone log-SNR
  (void)lambda;
  Trajectory out;
  out.grid = grid;
  out.sampler_tag = "dpm1" + guidance_tag(guidance);
  out.states.reserve(grid.times.size());
  out.states.push_back(init);
  Batch cur = init;
  for (std::size_t n = 0; n < grid.steps(); ++n) {
    for (auto& lane : cur)
      lane = dpm1_step(model, sched, lane, grid.times[n], grid.times[n + 1],
                       guidance);
    out.states.push_back(cur);
  }
  return out;
}

Trajectory ddpm_ancestral(const FieldModel& model, const DiscreteSchedule& ds,
                          const Batch& init, Rng rng,
                          const GuidanceSpec& guidance) {
  const std::size_t dim = check_batch(init);
  Trajectory out;
  out.grid = grid_from_discrete(ds);
  out.seed = rng.key();
  out.sampler_tag = "ddpm" + guidance_tag(guidance);
  out.states.reserve(out.grid.times.size());
  out.states.push_back(init);
  auto streams = lane_streams(rng, init.size(), "steps");
  Batch cur = init;
  for (int k = ds.steps(); k >= 1; --k) {
    const double width = std::sqrt(ds.b_tilde[k]);
    for (std::size_t l = 0; l < cur.size(); ++l) {
      auto mean = ddpm_posterior_mean(model, ds, cur[l], k, guidance);
      for (std::size_t i = 0; i < dim; ++i)
        mean[i] += width * streams[l].gaussian();
      cur[l] = std::move(mean);
    }
    out.states.push_back(cur);
  }
  return out;
}

Trajectory ddim(const FieldModel& model, const DiscreteSchedule& ds,
                const Batch& init, double eta, Rng rng,
                const GuidanceSpec& guidance) {
  const std::size_t dim = check_batch(init);
  Trajectory out;
  out.grid = grid_from_discrete(ds);
  out.seed = rng.key();
  out.sampler_tag = "ddim(eta=" + fmt(eta) + ")" + guidance_tag(guidance);
  out.states.reserve(out.grid.times.size());
  out.states.push_back(init);
  auto streams = lane_streams(rng, init.size(), "steps");
  Batch cur = init;
  const std::vector<double> no_noise;
  for (int k = ds.steps(); k >= 1; --k) {
    for (std::size_t l = 0; l < cur.size(); ++l) {
      const auto z =
          eta > 0.0 ? draw_gaussians(streams[l], dim) : no_noise;
      cur[l] = ddim_step(model, ds, cur[l], k, eta, z, &out.clamp_warnings,
                         guidance);
    }
    out.states.push_back(cur);
  }
  return out;
}

}  // namespace driftlab
