#pragma once

#include <optional>
#include <vector>

#include "driftlab/fields.hpp"
#include "driftlab/mlp.hpp"
#include "driftlab/oracle.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

enum class WeightKind { kConstant, kSigmaSquared };
enum class LossKind { kDenoise, kCfg, kCfm, kClassifier, kDdpmGrid };

struct TrainConfig {
  WeightKind weight = WeightKind::kConstant;
  FieldParam param = FieldParam::kNoise;
  int batch = 128;
  int steps = 2000;
  double lr = 1e-2;
  double momentum = 0.9;
  bool cosine_decay = true;
  double p_drop = 0.0;
  double t_min = kTMin;
  double t_max = kTMax;
};

// One noised draw: x_t = alpha x_0 + sigma eps, with the scales captured at
// draw time so continuous and grid-restricted batches share a code path.
struct TrainSample {
  std::vector<double> x0;
  std::vector<double> eps;
  std::vector<double> xt;
  double t = 0.0;
  double alpha = 1.0;
  double sigma = 0.0;
  int label = kNullCondition;
  int condition = kNullCondition;  // label after dropout; what the net sees
};

std::vector<TrainSample> draw_training_batch(const GaussianMixture& mix,
                                             const NoiseSchedule& s, int count,
                                             double t_min, double t_max,
                                             Rng& rng);

// Times restricted to the grid points t_k of a discretized chain.
std::vector<TrainSample> draw_grid_training_batch(const GaussianMixture& mix,
                                                  const DiscreteSchedule& ds,
                                                  int count, Rng& rng);

void apply_condition_dropout(std::vector<TrainSample>& batch, double p_drop,
                             Rng& rng);

struct LossValue {
  double value = 0.0;
  std::vector<double> grad;  // w.r.t. the flat parameter vector
};

// Mean over the batch of 1/2 w(t) |out - target|^2 where the target is the
// regression target for the chosen parameterization (noise eps, score
// -eps/sigma, or x0).
LossValue denoising_loss_on(const Mlp& net, const NoiseSchedule& s,
                            FieldParam param,
                            const std::vector<TrainSample>& batch,
                            WeightKind weight);

// Targets the conditional velocity toward each sample's own endpoint on a
// generative-time schedule.
LossValue cfm_loss_on(const Mlp& net, const NoiseSchedule& s,
                      const std::vector<TrainSample>& batch);

// Mean negative log softmax probability of each sample's label.
LossValue classifier_nll_loss_on(const Mlp& net, const NoiseSchedule& s,
                                 const std::vector<TrainSample>& batch);

LossValue denoising_loss(const Mlp& net, const GaussianMixture& mix,
                         const NoiseSchedule& s, const TrainConfig& cfg,
                         Rng& rng);

// Denoising loss with per-sample condition dropout at cfg.p_drop.
LossValue cfg_loss(const Mlp& net, const GaussianMixture& mix,
                   const NoiseSchedule& s, const TrainConfig& cfg, Rng& rng);

LossValue cfm_loss(const Mlp& net, const GaussianMixture& mix,
                   const NoiseSchedule& s, const TrainConfig& cfg, Rng& rng);

LossValue classifier_nll_loss(const Mlp& net, const GaussianMixture& mix,
                              const NoiseSchedule& s, const TrainConfig& cfg,
                              Rng& rng);

LossValue ddpm_grid_loss(const Mlp& net, const GaussianMixture& mix,
                         const NoiseSchedule& s, const DiscreteSchedule& ds,
                         const TrainConfig& cfg, Rng& rng);

// Gradient of log softmax(net(x,t))[label] with respect to x; the steering
// direction classifier guidance needs.
std::vector<double> classifier_log_prob_grad(const Mlp& net,
                                             const NoiseSchedule& s,
                                             const std::vector<double>& x,
                                             double t, int label);

// Root-mean-square gap between two field evaluators over a 1D probe grid.
double probe_rmse(const FieldModel& model, const FieldModel& reference,
                  double t, int condition = kNullCondition, double lo = -3.0,
                  double hi = 3.0, int points = 41);

struct LossReport {
  std::vector<double> epoch_mean;
  double final_loss = 0.0;
  std::optional<double> oracle_gap;
};

// SGD with momentum over cfg.steps minibatches; epochs group steps for the
// report. kDdpmGrid requires a discretized chain.
LossReport train(Mlp& net, LossKind kind, const GaussianMixture& mix,
                 const NoiseSchedule& s, const TrainConfig& cfg, Rng rng,
                 const DiscreteSchedule* grid = nullptr);

}  // namespace driftlab
