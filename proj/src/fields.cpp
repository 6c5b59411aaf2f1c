#include "driftlab/fields.hpp"

#include <cmath>
#include <stdexcept>

namespace driftlab {
namespace {

const GaussianMixture& pick(const GaussianMixture& full,
                            const std::vector<GaussianMixture>& by_class,
                            int condition) {
  if (condition == kNullCondition) return full;
  if (condition < 0 || condition >= static_cast<int>(by_class.size()) ||
      by_class[condition].components() == 0)
    throw std::invalid_argument("fields: unknown condition label");
  return by_class[condition];
}

void check_classifier(const GuidanceSpec& g) {
  if (!g.classifier_grad)
    throw std::invalid_argument(
        "fields: classifier guidance requires classifier_grad");
}

}  // namespace

FieldModel oracle_field(const GaussianMixture& mix, const NoiseSchedule& s,
                        FieldParam param) {
  mix.validate();
  std::vector<GaussianMixture> by_class;
  if (!mix.labels.empty()) {
    by_class.resize(num_classes(mix));
    for (int lab : mix.labels)
      if (by_class[lab].components() == 0)
        by_class[lab] = class_conditional(mix, lab);
  }

  FieldModel model;
  model.param = param;
  model.backing = FieldBacking::kOracle;
  model.eval = [mix, by_class, s, param](const std::vector<double>& x,
                                         double t, int cond) {
    const GaussianMixture& m = pick(mix, by_class, cond);
    switch (param) {
      case FieldParam::kScore: return marginal_score(m, s, t, x);
      case FieldParam::kNoise: return ideal_noise(m, s, t, x);
      case FieldParam::kX0: return posterior_mean_x0(m, s, t, x);
      case FieldParam::kVelocity: return marginal_velocity(m, s, t, x);
    }
    throw std::logic_error("fields: unreachable");
  };
  return model;
}

std::vector<double> to_noise_at(const FieldModel& model,
                                const std::vector<double>& x, double t,
                                double alpha, double sigma, int condition) {
  if (model.param == FieldParam::kVelocity)
    throw std::invalid_argument(
        "fields: no noise view of a velocity model; sample it via the ODE");
  auto v = model.eval(x, t, condition);
  if (v.size() != x.size())
    throw std::invalid_argument("fields: evaluator dimension mismatch");
  if (model.param == FieldParam::kNoise) return v;
  if (sigma <= 0.0)
    throw std::domain_error("fields: noise view undefined where sigma = 0");
  if (model.param == FieldParam::kScore) {
    for (double& u : v) u *= -sigma;
    return v;
  }
  // x0 view: eps = (x - alpha x0_hat) / sigma.
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = (x[i] - alpha * v[i]) / sigma;
  return v;
}

std::vector<double> to_noise(const FieldModel& model, const NoiseSchedule& s,
                             const std::vector<double>& x, double t,
                             int condition) {
  return to_noise_at(model, x, t, s.alpha(t), s.sigma(t), condition);
}

std::vector<double> cfg_combine(const std::vector<double>& eps_cond,
                                const std::vector<double>& eps_uncond,
                                double s) {
  if (eps_cond.size() != eps_uncond.size())
    throw std::invalid_argument("fields: cfg operand dimension mismatch");
  if (s == 1.0) return eps_cond;
  if (s == 0.0) return eps_uncond;
  std::vector<double> out(eps_cond.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = eps_uncond[i] + s * (eps_cond[i] - eps_uncond[i]);
  return out;
}

std::vector<double> guided_noise_at(const FieldModel& model,
                                    const std::vector<double>& x, double t,
                                    double alpha, double sigma,
                                    const GuidanceSpec& guidance) {
  if (guidance.mode == GuidanceMode::kCfg) {
    if (guidance.s == 1.0)
      return to_noise_at(model, x, t, alpha, sigma, guidance.condition);
    auto uncond = to_noise_at(model, x, t, alpha, sigma, kNullCondition);
    if (guidance.s == 0.0) return uncond;
    auto cond = to_noise_at(model, x, t, alpha, sigma, guidance.condition);
    return cfg_combine(cond, uncond, guidance.s);
  }
  if (guidance.mode == GuidanceMode::kClassifier) {
    // The base predictor stays unconditional; the classifier term carries
    // all of the conditioning.
    auto eps = to_noise_at(model, x, t, alpha, sigma, kNullCondition);
    if (guidance.gamma == 0.0) return eps;
    check_classifier(guidance);
    const auto cg = guidance.classifier_grad(x, t, guidance.condition);
    if (cg.size() != eps.size())
      throw std::invalid_argument(
          "fields: classifier gradient dimension mismatch");
    for (std::size_t i = 0; i < eps.size(); ++i)
      eps[i] -= guidance.gamma * sigma * cg[i];
    return eps;
  }
  return to_noise_at(model, x, t, alpha, sigma, guidance.condition);
}

std::vector<double> guided_noise(const FieldModel& model,
                                 const NoiseSchedule& s,
                                 const std::vector<double>& x, double t,
                                 const GuidanceSpec& guidance) {
  return guided_noise_at(model, x, t, s.alpha(t), s.sigma(t), guidance);
}

std::vector<double> reverse_sde_drift(const FieldModel& model,
                                      const NoiseSchedule& s,
                                      const std::vector<double>& x, double t,
                                      const GuidanceSpec& guidance) {
  const auto dd = drift_diffusion(s, t);
  const double sg = s.sigma(t);
  if (sg <= 0.0)
    throw std::domain_error("fields: reverse drift undefined where sigma = 0");
  auto eps = guided_noise(model, s, x, t, guidance);
  std::vector<double> drift(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    drift[i] = dd.f * x[i] + dd.g2 / sg * eps[i];
  return drift;
}

std::vector<double> reverse_ode_velocity(const FieldModel& model,
                                         const NoiseSchedule& s,
                                         const std::vector<double>& x,
                                         double t,
                                         const GuidanceSpec& guidance) {
  if (model.param == FieldParam::kVelocity) {
    if (guidance.mode != GuidanceMode::kNone)
      throw std::invalid_argument(
          "fields: guidance is not defined for velocity models");
    return model.eval(x, t, guidance.condition);
  }
  const auto dd = drift_diffusion(s, t);
  const double sg = s.sigma(t);
  if (sg <= 0.0)
    throw std::domain_error("fields: flow velocity undefined where sigma = 0");
  auto eps = guided_noise(model, s, x, t, guidance);
  std::vector<double> vel(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    vel[i] = dd.f * x[i] + 0.5 * dd.g2 / sg * eps[i];
  return vel;
}

}  // namespace driftlab
