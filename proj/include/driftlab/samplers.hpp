#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "driftlab/fields.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

// Terminal time for continuous-time sampling; sigma stays bounded away from
// zero so the noise/score conversions remain finite. Discrete chains run to
// k = 1 exactly.
inline constexpr double kSamplerEps = 1e-3;

using Batch = std::vector<std::vector<double>>;

// Times in walk order: times.front() is the start (largest t), times.back()
// the end. deltas[n] = times[n] - times[n+1] > 0.
struct TimeGrid {
  std::vector<double> times;
  std::vector<double> deltas;

  std::size_t steps() const { return deltas.size(); }
  void validate() const;  // strict decrease, positive consistent deltas
};

// Uniformly spaced grid walking from top down to eps.
TimeGrid sampling_grid(std::size_t n_steps, double top = kTMax,
                       double eps = kSamplerEps);

struct Trajectory {
  TimeGrid grid;
  std::vector<Batch> states;  // states[n] sits at grid.times[n]
  std::uint64_t seed = 0;     // stream key of the rng that drove the run
  std::string sampler_tag;
  std::uint64_t clamp_warnings = 0;  // ddim radicand clamps

  const Batch& terminal() const { return states.back(); }
};

// lanes x dim independent N(0, scale^2) coordinates, one split stream per
// lane (namespaced, so the same master rng can also drive a sampler).
Batch gaussian_batch(std::size_t lanes, std::size_t dim, double scale,
                     Rng rng);

// Single updates, moving backward from t_from to t_to >= 0. The stochastic
// one takes its standard normal increment explicitly.
std::vector<double> em_sde_step(const FieldModel& model,
                                const NoiseSchedule& sched,
                                const std::vector<double>& x, double t_from,
                                double t_to, const std::vector<double>& z,
                                const GuidanceSpec& guidance = {});
std::vector<double> euler_ode_step(const FieldModel& model,
                                   const NoiseSchedule& sched,
                                   const std::vector<double>& x, double t_from,
                                   double t_to,
                                   const GuidanceSpec& guidance = {});
std::vector<double> heun_ode_step(const FieldModel& model,
                                  const NoiseSchedule& sched,
                                  const std::vector<double>& x, double t_from,
                                  double t_to,
                                  const GuidanceSpec& guidance = {});
// Exponential-integrator step in log-SNR coordinates:
// x_to = (alpha_to/alpha_from) x - sigma_to (e^h - 1) eps~, h = lambda gap.
std::vector<double> dpm1_step(const FieldModel& model,
                              const NoiseSchedule& sched,
                              const std::vector<double>& x, double t_from,
                              double t_to, const GuidanceSpec& guidance = {});

// Discrete-chain pieces, k in [1, ds.steps()]; the model is queried at
// ds.t[k] with scales sqrt(a_bar_k), sqrt(1 - a_bar_k).
std::vector<double> ddpm_posterior_mean(const FieldModel& model,
                                        const DiscreteSchedule& ds,
                                        const std::vector<double>& x, int k,
                                        const GuidanceSpec& guidance = {});
std::vector<double> ddim_predicted_x0(const FieldModel& model,
                                      const DiscreteSchedule& ds,
                                      const std::vector<double>& x, int k,
                                      const GuidanceSpec& guidance = {});
// eta sqrt((1 - a_bar_{k-1}) / (1 - a_bar_k) (1 - a_bar_k / a_bar_{k-1})).
double ddim_sigma_hat(const DiscreteSchedule& ds, int k, double eta);
// z is ignored when eta = 0 (may be empty); a negative radicand is clamped
// to zero and counted.
std::vector<double> ddim_step(const FieldModel& model,
                              const DiscreteSchedule& ds,
                              const std::vector<double>& x, int k, double eta,
                              const std::vector<double>& z,
                              std::uint64_t* clamp_warnings = nullptr,
                              const GuidanceSpec& guidance = {});

// Full reverse runs. Callers supply the initial batch (N(0, sigma~^2 I) at
// the top time for continuous samplers, N(0, I) for discrete chains);
// stochastic samplers split one stream per lane, so a lane's path does not
// depend on the batch size. Passing the same rng replays bit-identically.
Trajectory em_reverse_sde(const FieldModel& model, const NoiseSchedule& sched,
                          const TimeGrid& grid, const Batch& init, Rng rng,
                          const GuidanceSpec& guidance = {});
Trajectory euler_reverse_ode(const FieldModel& model,
                             const NoiseSchedule& sched, const TimeGrid& grid,
                             const Batch& init,
                             const GuidanceSpec& guidance = {});
Trajectory heun_reverse_ode(const FieldModel& model,
                            const NoiseSchedule& sched, const TimeGrid& grid,
                            const Batch& init,
                            const GuidanceSpec& guidance = {});
// Validates log-SNR monotonicity up front; rejects plateaued schedules.
Trajectory dpm_solver1(const FieldModel& model, const NoiseSchedule& sched,
                       const TimeGrid& grid, const Batch& init,
                       const GuidanceSpec& guidance = {});
Trajectory ddpm_ancestral(const FieldModel& model, const DiscreteSchedule& ds,
                          const Batch& init, Rng rng,
                          const GuidanceSpec& guidance = {});
Trajectory ddim(const FieldModel& model, const DiscreteSchedule& ds,
                const Batch& init, double eta, Rng rng,
                const GuidanceSpec& guidance = {});

}  // namespace driftlab
