#include "driftlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace driftlab {

namespace {

void check_config(const TrainConfig& cfg) {
  if (cfg.batch < 1)
    throw std::invalid_argument("train: batch must be positive");
  if (cfg.steps < 1)
    throw std::invalid_argument("train: steps must be positive");
  if (cfg.lr < 0.0)
    throw std::invalid_argument("train: lr must be non-negative");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw std::invalid_argument("train: momentum must lie in [0,1)");
  if (cfg.p_drop < 0.0 || cfg.p_drop > 1.0)
    throw std::invalid_argument("train: p_drop must lie in [0,1]");
  if (!(cfg.t_min >= kTMin && cfg.t_max <= kTMax && cfg.t_min < cfg.t_max))
    throw std::invalid_argument("train: need kTMin <= t_min < t_max <= kTMax");
}

TrainSample draw_at(const GaussianMixture& mix, double t, double alpha,
                    double sigma, Rng& rng) {
  const double u = rng.uniform();
  int m = 0;
  double cum = 0.0;
  for (; m < mix.components() - 1; ++m) {
    cum += mix.weights[m];
    if (u < cum) break;
  }
  TrainSample sample;
  sample.t = t;
  sample.alpha = alpha;
  sample.sigma = sigma;
  if (!mix.labels.empty()) sample.label = mix.labels[m];
  const double sd = std::sqrt(mix.variances[m]);
  sample.x0.resize(mix.dim);
  sample.eps.resize(mix.dim);
  sample.xt.resize(mix.dim);
  for (int i = 0; i < mix.dim; ++i)
    sample.x0[i] = mix.means[m][i] + sd * rng.gaussian();
  for (int i = 0; i < mix.dim; ++i) sample.eps[i] = rng.gaussian();
  for (int i = 0; i < mix.dim; ++i)
    sample.xt[i] = alpha * sample.x0[i] + sigma * sample.eps[i];
  return sample;
}

double weight_at(WeightKind weight, double sigma) {
  return weight == WeightKind::kSigmaSquared ? sigma * sigma : 1.0;
}

FieldModel noise_view(const Mlp& net, const NoiseSchedule& s,
                      FieldParam param) {
  FieldModel inner = network_field(net, s, param);
  if (param == FieldParam::kNoise) return inner;
  FieldModel view;
  view.param = FieldParam::kNoise;
  view.backing = FieldBacking::kNetwork;
  view.eval = [inner, s](const std::vector<double>& x, double t, int cond) {
    return to_noise(inner, s, x, t, cond);
  };
  return view;
}

}  // namespace

std::vector<TrainSample> draw_training_batch(const GaussianMixture& mix,
                                             const NoiseSchedule& s, int count,
                                             double t_min, double t_max,
                                             Rng& rng) {
  if (count < 1) throw std::invalid_argument("train: count must be >= 1");
  mix.validate();
  std::vector<TrainSample> batch;
  batch.reserve(count);
  for (int n = 0; n < count; ++n) {
    const double t =
        std::clamp(rng.uniform(t_min, t_max), kTMin, kTMax);
    batch.push_back(draw_at(mix, t, s.alpha(t), s.sigma(t), rng));
  }
  return batch;
}

std::vector<TrainSample> draw_grid_training_batch(const GaussianMixture& mix,
                                                  const DiscreteSchedule& ds,
                                                  int count, Rng& rng) {
  if (count < 1) throw std::invalid_argument("train: count must be >= 1");
  if (ds.steps() < 1)
    throw std::invalid_argument("train: discrete schedule has no steps");
  mix.validate();
  std::vector<TrainSample> batch;
  batch.reserve(count);
  for (int n = 0; n < count; ++n) {
    const int k = 1 + rng.uniform_int(ds.steps());
    const double a_bar = ds.a_bar[k];
    batch.push_back(draw_at(mix, ds.t[k], std::sqrt(a_bar),
                            std::sqrt(1.0 - a_bar), rng));
  }
  return batch;
}

void apply_condition_dropout(std::vector<TrainSample>& batch, double p_drop,
                             Rng& rng) {
  if (p_drop < 0.0 || p_drop > 1.0)
    throw std::invalid_argument("train: p_drop must lie in [0,1]");
  for (TrainSample& sample : batch)
    sample.condition = rng.uniform() < p_drop ? kNullCondition : sample.label;
}

LossValue denoising_loss_on(const Mlp& net, const NoiseSchedule& s,
                            FieldParam param,
                            const std::vector<TrainSample>& batch,
                            WeightKind weight) {
  if (param == FieldParam::kVelocity)
    throw std::invalid_argument(
        "train: velocity networks train with the flow-matching loss");
  if (batch.empty()) throw std::invalid_argument("train: empty batch");

  LossValue loss;
  loss.grad.assign(net.parameter_count(), 0.0);
  const double inv_batch = 1.0 / batch.size();
  Mlp::Trace trace;
  for (const TrainSample& sample : batch) {
    const auto out = net.forward(
        net.assemble_input(s, sample.xt, sample.t, sample.condition), &trace);
    const double w = weight_at(weight, sample.sigma);
    std::vector<double> out_grad(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      double target = 0.0;
      switch (param) {
        case FieldParam::kNoise: target = sample.eps[i]; break;
        case FieldParam::kScore: target = -sample.eps[i] / sample.sigma; break;
        case FieldParam::kX0: target = sample.x0[i]; break;
        case FieldParam::kVelocity: break;
      }
      const double r = out[i] - target;
      loss.value += 0.5 * w * r * r * inv_batch;
      out_grad[i] = w * r * inv_batch;
    }
    net.backward(trace, out_grad, loss.grad);
  }
  return loss;
}

LossValue cfm_loss_on(const Mlp& net, const NoiseSchedule& s,
                      const std::vector<TrainSample>& batch) {
  if (batch.empty()) throw std::invalid_argument("train: empty batch");
  LossValue loss;
  loss.grad.assign(net.parameter_count(), 0.0);
  const double inv_batch = 1.0 / batch.size();
  Mlp::Trace trace;
  for (const TrainSample& sample : batch) {
    const auto out = net.forward(
        net.assemble_input(s, sample.xt, sample.t, sample.condition), &trace);
    const auto target = conditional_velocity(s, sample.t, sample.xt, sample.x0);
    std::vector<double> out_grad(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double r = out[i] - target[i];
      loss.value += 0.5 * r * r * inv_batch;
      out_grad[i] = r * inv_batch;
    }
    net.backward(trace, out_grad, loss.grad);
  }
  return loss;
}

LossValue classifier_nll_loss_on(const Mlp& net, const NoiseSchedule& s,
                                 const std::vector<TrainSample>& batch) {
  if (batch.empty()) throw std::invalid_argument("train: empty batch");
  LossValue loss;
  loss.grad.assign(net.parameter_count(), 0.0);
  const double inv_batch = 1.0 / batch.size();
  Mlp::Trace trace;
  for (const TrainSample& sample : batch) {
    if (sample.label == kNullCondition)
      throw std::invalid_argument("train: classifier loss needs labeled data");
    const auto logits = net.forward(
        net.assemble_input(s, sample.xt, sample.t, kNullCondition), &trace);
    if (sample.label < 0 || sample.label >= static_cast<int>(logits.size()))
      throw std::invalid_argument("train: label outside classifier range");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double lse = mx + std::log(z);
    loss.value += (lse - logits[sample.label]) * inv_batch;
    std::vector<double> out_grad(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double p = std::exp(logits[i] - lse);
      out_grad[i] =
          (p - (static_cast<int>(i) == sample.label ? 1.0 : 0.0)) * inv_batch;
    }
    net.backward(trace, out_grad, loss.grad);
  }
  return loss;
}

LossValue denoising_loss(const Mlp& net, const GaussianMixture& mix,
                         const NoiseSchedule& s, const TrainConfig& cfg,
                         Rng& rng) {
  check_config(cfg);
  auto batch =
      draw_training_batch(mix, s, cfg.batch, cfg.t_min, cfg.t_max, rng);
  return denoising_loss_on(net, s, cfg.param, batch, cfg.weight);
}

LossValue cfg_loss(const Mlp& net, const GaussianMixture& mix,
                   const NoiseSchedule& s, const TrainConfig& cfg, Rng& rng) {
  check_config(cfg);
  if (mix.labels.empty())
    throw std::invalid_argument("train: cfg loss needs a labeled mixture");
  if (net.spec().cond_slots < num_classes(mix))
    throw std::invalid_argument(
        "train: network has too few condition slots for the labels");
  auto batch =
      draw_training_batch(mix, s, cfg.batch, cfg.t_min, cfg.t_max, rng);
  apply_condition_dropout(batch, cfg.p_drop, rng);
  return denoising_loss_on(net, s, cfg.param, batch, cfg.weight);
}

LossValue cfm_loss(const Mlp& net, const GaussianMixture& mix,
                   const NoiseSchedule& s, const TrainConfig& cfg, Rng& rng) {
  check_config(cfg);
  if (s.orientation() != TimeOrientation::kGenerative)
    throw std::invalid_argument(
        "train: flow matching needs a generative-time schedule");
  auto batch =
      draw_training_batch(mix, s, cfg.batch, cfg.t_min, cfg.t_max, rng);
  return cfm_loss_on(net, s, batch);
}

LossValue classifier_nll_loss(const Mlp& net, const GaussianMixture& mix,
                              const NoiseSchedule& s, const TrainConfig& cfg,
                              Rng& rng) {
  check_config(cfg);
  if (mix.labels.empty())
    throw std::invalid_argument(
        "train: classifier loss needs a labeled mixture");
  if (static_cast<int>(net.spec().output_width()) < num_classes(mix))
    throw std::invalid_argument(
        "train: classifier has fewer outputs than classes");
  auto batch =
      draw_training_batch(mix, s, cfg.batch, cfg.t_min, cfg.t_max, rng);
  return classifier_nll_loss_on(net, s, batch);
}

LossValue ddpm_grid_loss(const Mlp& net, const GaussianMixture& mix,
                         const NoiseSchedule& s, const DiscreteSchedule& ds,
                         const TrainConfig& cfg, Rng& rng) {
  check_config(cfg);
  auto batch = draw_grid_training_batch(mix, ds, cfg.batch, rng);
  return denoising_loss_on(net, s, cfg.param, batch, cfg.weight);
}

std::vector<double> classifier_log_prob_grad(const Mlp& net,
                                             const NoiseSchedule& s,
                                             const std::vector<double>& x,
                                             double t, int label) {
  Mlp::Trace trace;
  const auto logits =
      net.forward(net.assemble_input(s, x, t, kNullCondition), &trace);
  if (label < 0 || label >= static_cast<int>(logits.size()))
    throw std::invalid_argument("train: label outside classifier range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out_grad(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = std::exp(logits[i] - lse);
    out_grad[i] = (static_cast<int>(i) == label ? 1.0 : 0.0) - p;
  }
  std::vector<double> param_grad(net.parameter_count(), 0.0);
  const auto input_grad = net.backward(trace, out_grad, param_grad);
  return std::vector<double>(input_grad.begin(), input_grad.begin() + x.size());
}

double probe_rmse(const FieldModel& model, const FieldModel& reference,
                  double t, int condition, double lo, double hi, int points) {
  if (points < 2) throw std::invalid_argument("train: probe needs >= 2 points");
  if (!(lo < hi)) throw std::invalid_argument("train: probe range is empty");
  double sum = 0.0;
  std::size_t count = 0;
  for (int i = 0; i < points; ++i) {
    const double x = lo + (hi - lo) * i / (points - 1);
    const auto a = model.eval({x}, t, condition);
    const auto b = reference.eval({x}, t, condition);
    if (a.size() != b.size())
      throw std::invalid_argument("train: probe output widths differ");
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double d = a[j] - b[j];
      sum += d * d;
    }
    count += a.size();
  }
  return std::sqrt(sum / count);
}

LossReport train(Mlp& net, LossKind kind, const GaussianMixture& mix,
                 const NoiseSchedule& s, const TrainConfig& cfg, Rng rng,
                 const DiscreteSchedule* grid) {
  check_config(cfg);
  mix.validate();
  if (kind == LossKind::kCfm) {
    if (s.orientation() != TimeOrientation::kGenerative)
      throw std::invalid_argument(
          "train: flow matching needs a generative-time schedule");
  } else if (s.orientation() != TimeOrientation::kForward) {
    throw std::invalid_argument("train: this loss needs a forward schedule");
  }
  if (kind == LossKind::kDdpmGrid && grid == nullptr)
    throw std::invalid_argument("train: grid loss needs a discrete schedule");

  Rng step_rng = rng.split("steps");
  std::vector<double> velocity(net.parameter_count(), 0.0);
  LossReport report;
  const int epoch_len = std::max(1, cfg.steps / 100);
  double run_sum = 0.0;
  int run_count = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    LossValue loss;
    switch (kind) {
      case LossKind::kDenoise:
        loss = denoising_loss(net, mix, s, cfg, step_rng);
        break;
      case LossKind::kCfg:
        loss = cfg_loss(net, mix, s, cfg, step_rng);
        break;
      case LossKind::kCfm:
        loss = cfm_loss(net, mix, s, cfg, step_rng);
        break;
      case LossKind::kClassifier:
        loss = classifier_nll_loss(net, mix, s, cfg, step_rng);
        break;
      case LossKind::kDdpmGrid:
        loss = ddpm_grid_loss(net, mix, s, *grid, cfg, step_rng);
        break;
    }
    if (!std::isfinite(loss.value))
      throw std::runtime_error("train: non-finite loss at step " +
                               std::to_string(step));
    const double lr =
        cfg.cosine_decay
            ? cfg.lr * 0.5 * (1.0 + std::cos(M_PI * step / cfg.steps))
            : cfg.lr;
    auto& params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity[i] = cfg.momentum * velocity[i] + loss.grad[i];
      params[i] -= lr * velocity[i];
    }
    run_sum += loss.value;
    if (++run_count == epoch_len) {
      report.epoch_mean.push_back(run_sum / run_count);
      run_sum = 0.0;
      run_count = 0;
    }
  }
  if (run_count > 0) report.epoch_mean.push_back(run_sum / run_count);
  report.final_loss = report.epoch_mean.back();

  if (mix.dim == 1 && kind != LossKind::kClassifier) {
    FieldModel ref;
    if (kind == LossKind::kCfm) {
      ref.param = FieldParam::kVelocity;
      ref.eval = [mix, s](const std::vector<double>& x, double t, int) {
        return generative_marginal_velocity(mix, s, t, x);
      };
    } else {
      ref = oracle_field(mix, s, FieldParam::kNoise);
    }
    const FieldModel view = kind == LossKind::kCfm
                                ? network_field(net, s, FieldParam::kVelocity)
                                : noise_view(net, s, cfg.param);
    double gap = 0.0;
    for (double t : {0.3, 0.5, 0.7}) gap += probe_rmse(view, ref, t);
    report.oracle_gap = gap / 3.0;
  }
  return report;
}

}  // namespace driftlab
