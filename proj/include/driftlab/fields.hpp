#pragma once

#include <functional>
#include <vector>

#include "driftlab/oracle.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

// Reserved label for the unconditional / null condition.
inline constexpr int kNullCondition = -1;

enum class FieldParam { kScore, kNoise, kX0, kVelocity };
enum class FieldBacking { kOracle, kNetwork };

// A score/noise/x0/velocity predictor. The evaluator must be deterministic
// and return a vector of the query dimension; condition kNullCondition means
// unconditional.
struct FieldModel {
  FieldParam param = FieldParam::kNoise;
  FieldBacking backing = FieldBacking::kOracle;
  std::function<std::vector<double>(const std::vector<double>& x, double t,
                                    int condition)>
      eval;
};

// Exact oracle backing for a mixture. Conditional queries (condition >= 0)
// evaluate against the class-conditional mixture of that label.
FieldModel oracle_field(const GaussianMixture& mix, const NoiseSchedule& s,
                        FieldParam param);

enum class GuidanceMode { kNone, kClassifier, kCfg };

struct GuidanceSpec {
  GuidanceMode mode = GuidanceMode::kNone;
  double gamma = 0.0;  // classifier-guidance scale
  double s = 1.0;      // CFG scale
  int condition = kNullCondition;
  std::function<std::vector<double>(const std::vector<double>& x, double t,
                                    int condition)>
      classifier_grad;  // grad_x log p(condition | x, t); classifier mode only
};

// Noise view of any model: score -> -sigma s, x0 -> (x - alpha x0)/sigma,
// noise -> passthrough. Velocity models are rejected (they sample via the
// ODE directly and admit no pointwise inversion here).
std::vector<double> to_noise(const FieldModel& model, const NoiseSchedule& s,
                             const std::vector<double>& x, double t,
                             int condition = kNullCondition);

// Same conversion at an explicit scale pair, for discrete-chain callers
// where alpha = sqrt(a_bar_k) and sigma = sqrt(1 - a_bar_k).
std::vector<double> to_noise_at(const FieldModel& model,
                                const std::vector<double>& x, double t,
                                double alpha, double sigma,
                                int condition = kNullCondition);

// Noise view after guidance. CFG combines conditional and unconditional
// branches; classifier mode evaluates the model unconditionally and folds in
// -gamma sigma grad log p(c|x,t), so downstream drift assembly needs no
// separate guidance term (the ODE's gamma/2 arises from its g^2/(2 sigma)
// prefactor on this view).
std::vector<double> guided_noise(const FieldModel& model,
                                 const NoiseSchedule& s,
                                 const std::vector<double>& x, double t,
                                 const GuidanceSpec& guidance);

std::vector<double> guided_noise_at(const FieldModel& model,
                                    const std::vector<double>& x, double t,
                                    double alpha, double sigma,
                                    const GuidanceSpec& guidance);

// eps_u + s (eps_c - eps_u); returns the endpoint exactly at s = 0 and s = 1.
std::vector<double> cfg_combine(const std::vector<double>& eps_cond,
                                const std::vector<double>& eps_uncond,
                                double s);

// Drift of the reverse-time SDE: f x + (g^2/sigma) eps~ with the guided
// noise view above.
std::vector<double> reverse_sde_drift(const FieldModel& model,
                                      const NoiseSchedule& s,
                                      const std::vector<double>& x, double t,
                                      const GuidanceSpec& guidance = {});

// Probability-flow velocity: f x + (g^2/(2 sigma)) eps~. Velocity-
// parameterized models are returned directly (guidance must be none).
std::vector<double> reverse_ode_velocity(const FieldModel& model,
                                         const NoiseSchedule& s,
                                         const std::vector<double>& x,
                                         double t,
                                         const GuidanceSpec& guidance = {});

}  // namespace driftlab
