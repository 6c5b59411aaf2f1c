#include "driftlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace driftlab {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_dim(const GaussianMixture& mix, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != mix.dim)
    throw std::invalid_argument("oracle: query dimension mismatch");
}

// Per-component log w_m N(x; alpha mu_m, s2_m I) with s2_m = alpha^2 v_m + sigma^2.
std::vector<double> component_log_terms(const GaussianMixture& mix,
                                        double alpha, double sigma2,
                                        const std::vector<double>& x) {
  const int m_count = mix.components();
  std::vector<double> terms(m_count);
  for (int m = 0; m < m_count; ++m) {
    const double s2 = alpha * alpha * mix.variances[m] + sigma2;
    double quad = 0.0;
    for (int i = 0; i < mix.dim; ++i) {
      const double d = x[i] - alpha * mix.means[m][i];
      quad += d * d;
    }
    terms[m] = std::log(mix.weights[m]) -
               0.5 * mix.dim * std::log(kTwoPi * s2) - 0.5 * quad / s2;
  }
  return terms;
}

double log_sum_exp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double u : v) acc += std::exp(u - mx);
  return mx + std::log(acc);
}

}  // namespace

void GaussianMixture::validate() const {
  const int m_count = components();
  if (dim < 1) throw std::invalid_argument("mixture: dim must be >= 1");
  if (m_count < 1) throw std::invalid_argument("mixture: needs >= 1 component");
  if (static_cast<int>(means.size()) != m_count ||
      static_cast<int>(variances.size()) != m_count)
    throw std::invalid_argument("mixture: weights/means/variances misaligned");
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("mixture: weights must be > 0");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-12)
    throw std::invalid_argument("mixture: weights must sum to 1");
  for (const auto& mu : means)
    if (static_cast<int>(mu.size()) != dim)
      throw std::invalid_argument("mixture: mean dimension mismatch");
  for (double v : variances)
    if (!(v > 0.0)) throw std::invalid_argument("mixture: variances must be > 0");
  if (!labels.empty() && static_cast<int>(labels.size()) != m_count)
    throw std::invalid_argument("mixture: labels must cover every component");
  for (int lab : labels)
    if (lab < 0) throw std::invalid_argument("mixture: labels must be >= 0");
}

GaussianMixture GaussianMixture::single(std::vector<double> mean,
                                        double variance) {
  GaussianMixture mix;
  mix.dim = static_cast<int>(mean.size());
  mix.weights = {1.0};
  mix.means = {std::move(mean)};
  mix.variances = {variance};
  mix.validate();
  return mix;
}

GaussianMixture GaussianMixture::symmetric_pair(double separation,
                                                double variance) {
  GaussianMixture mix;
  mix.dim = 1;
  mix.weights = {0.5, 0.5};
  mix.means = {{-separation}, {separation}};
  mix.variances = {variance, variance};
  mix.labels = {0, 1};
  mix.validate();
  return mix;
}

double marginal_logpdf(const GaussianMixture& mix, const NoiseSchedule& s,
                       double t, const std::vector<double>& x) {
  check_dim(mix, x);
  const double a = s.alpha(t);
  const double sg = s.sigma(t);
  return log_sum_exp(component_log_terms(mix, a, sg * sg, x));
}

std::vector<double> posterior_responsibilities(const GaussianMixture& mix,
                                               const NoiseSchedule& s,
                                               double t,
                                               const std::vector<double>& x) {
  check_dim(mix, x);
  const double a = s.alpha(t);
  const double sg = s.sigma(t);
  auto terms = component_log_terms(mix, a, sg * sg, x);
  const double lse = log_sum_exp(terms);
  std::vector<double> r(terms.size());
  for (std::size_t m = 0; m < terms.size(); ++m) r[m] = std::exp(terms[m] - lse);
  return r;
}

std::vector<double> marginal_score(const GaussianMixture& mix,
                                   const NoiseSchedule& s, double t,
                                   const std::vector<double>& x) {
  const double a = s.alpha(t);
  const double sg = s.sigma(t);
  const auto r = posterior_responsibilities(mix, s, t, x);
  std::vector<double> score(mix.dim, 0.0);
  for (int m = 0; m < mix.components(); ++m) {
    const double s2 = a * a * mix.variances[m] + sg * sg;
    for (int i = 0; i < mix.dim; ++i)
      score[i] -= r[m] * (x[i] - a * mix.means[m][i]) / s2;
  }
  return score;
}

std::vector<double> ideal_noise(const GaussianMixture& mix,
                                const NoiseSchedule& s, double t,
                                const std::vector<double>& x) {
  const double sg = s.sigma(t);
  if (sg <= 0.0)
    throw std::domain_error("oracle: noise predictor undefined where sigma = 0");
  auto score = marginal_score(mix, s, t, x);
  for (double& v : score) v *= -sg;
  return score;
}

std::vector<double> conditional_velocity(const NoiseSchedule& s, double t,
                                         const std::vector<double>& x,
                                         const std::vector<double>& x0) {
  if (x.size() != x0.size())
    throw std::invalid_argument("oracle: x and x0 dimension mismatch");
  const double sg = s.sigma(t);
  if (sg <= 0.0)
    throw std::domain_error("oracle: conditional velocity singular at sigma = 0");
  const double ratio = s.sigma_dot(t) / sg;
  const double coef0 = s.alpha_dot(t) - ratio * s.alpha(t);
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    u[i] = coef0 * x0[i] + ratio * x[i];
  return u;
}

std::vector<double> marginal_velocity(const GaussianMixture& mix,
                                      const NoiseSchedule& s, double t,
                                      const std::vector<double>& x) {
  const auto dd = drift_diffusion(s, t);
  auto score = marginal_score(mix, s, t, x);
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    u[i] = dd.f * x[i] - 0.5 * dd.g2 * score[i];
  return u;
}

std::vector<double> generative_marginal_velocity(const GaussianMixture& mix,
                                                 const NoiseSchedule& s,
                                                 double t,
                                                 const std::vector<double>& x) {
  const auto dd = generative_drift_diffusion(s, t);
  auto score = marginal_score(mix, s, t, x);
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    u[i] = dd.f * x[i] + 0.5 * dd.g2 * score[i];
  return u;
}

std::vector<std::vector<double>> forward_sample(const GaussianMixture& mix,
                                                const NoiseSchedule& s,
                                                double t, int count, Rng& rng) {
  if (count < 1) throw std::invalid_argument("oracle: count must be >= 1");
  const double a = s.alpha(t);
  const double sg = s.sigma(t);
  std::vector<std::vector<double>> out(count);
  for (int n = 0; n < count; ++n) {
    const double u = rng.uniform();
    int m = 0;
    double cum = 0.0;
    for (; m < mix.components() - 1; ++m) {
      cum += mix.weights[m];
      if (u < cum) break;
    }
    const double sd = std::sqrt(mix.variances[m]);
    std::vector<double> row(mix.dim);
    for (int i = 0; i < mix.dim; ++i) {
      const double x0 = mix.means[m][i] + sd * rng.gaussian();
      row[i] = a * x0 + sg * rng.gaussian();
    }
    out[n] = std::move(row);
  }
  return out;
}

std::vector<double> sample_posterior_x0(const GaussianMixture& mix,
                                        const NoiseSchedule& s, double t,
                                        const std::vector<double>& x,
                                        Rng& rng) {
  check_dim(mix, x);
  const double a = s.alpha(t);
  const double sg = s.sigma(t);
  if (sg <= 0.0) return x;  // X_0 = X_t exactly when no noise has been added
  const auto r = posterior_responsibilities(mix, s, t, x);
  const double u = rng.uniform();
  int m = 0;
  double cum = 0.0;
  for (; m < mix.components() - 1; ++m) {
    cum += r[m];
    if (u < cum) break;
  }
  // Conjugate posterior within component m:
  //   1/v_post = 1/v_m + alpha^2/sigma^2,
  //   mu_post  = v_post (mu_m/v_m + alpha x/sigma^2).
  const double v_m = mix.variances[m];
  const double v_post = 1.0 / (1.0 / v_m + a * a / (sg * sg));
  const double sd_post = std::sqrt(v_post);
  std::vector<double> x0(mix.dim);
  for (int i = 0; i < mix.dim; ++i) {
    const double mu_post =
        v_post * (mix.means[m][i] / v_m + a * x[i] / (sg * sg));
    x0[i] = mu_post + sd_post * rng.gaussian();
  }
  return x0;
}

std::vector<double> posterior_mean_x0(const GaussianMixture& mix,
                                      const NoiseSchedule& s, double t,
                                      const std::vector<double>& x) {
  check_dim(mix, x);
  const double a = s.alpha(t);
  const double sg = s.sigma(t);
  if (sg <= 0.0) return x;
  const auto r = posterior_responsibilities(mix, s, t, x);
  std::vector<double> mean(mix.dim, 0.0);
  for (int m = 0; m < mix.components(); ++m) {
    const double v_m = mix.variances[m];
    const double v_post = 1.0 / (1.0 / v_m + a * a / (sg * sg));
    for (int i = 0; i < mix.dim; ++i) {
      const double mu_post =
          v_post * (mix.means[m][i] / v_m + a * x[i] / (sg * sg));
      mean[i] += r[m] * mu_post;
    }
  }
  return mean;
}

int num_classes(const GaussianMixture& mix) {
  if (mix.labels.empty())
    throw std::invalid_argument("oracle: mixture has no class labels");
  int mx = 0;
  for (int lab : mix.labels) mx = std::max(mx, lab);
  return mx + 1;
}

GaussianMixture class_conditional(const GaussianMixture& mix, int label) {
  if (label < 0 || label >= num_classes(mix))
    throw std::invalid_argument("oracle: unknown class label");
  GaussianMixture out;
  out.dim = mix.dim;
  double wsum = 0.0;
  for (int m = 0; m < mix.components(); ++m) {
    if (mix.labels[m] != label) continue;
    out.weights.push_back(mix.weights[m]);
    out.means.push_back(mix.means[m]);
    out.variances.push_back(mix.variances[m]);
    out.labels.push_back(label);
    wsum += mix.weights[m];
  }
  if (out.weights.empty())
    throw std::invalid_argument("oracle: no component carries that label");
  for (double& w : out.weights) w /= wsum;
  out.validate();
  return out;
}

double class_log_posterior(const GaussianMixture& mix, const NoiseSchedule& s,
                           double t, const std::vector<double>& x, int label) {
  if (label < 0 || label >= num_classes(mix))
    throw std::invalid_argument("oracle: unknown class label");
  check_dim(mix, x);
  const double a = s.alpha(t);
  const double sg = s.sigma(t);
  auto terms = component_log_terms(mix, a, sg * sg, x);
  std::vector<double> class_terms;
  for (int m = 0; m < mix.components(); ++m)
    if (mix.labels[m] == label) class_terms.push_back(terms[m]);
  return log_sum_exp(class_terms) - log_sum_exp(terms);
}

std::vector<double> class_score(const GaussianMixture& mix,
                                const NoiseSchedule& s, double t,
                                const std::vector<double>& x, int label) {
  // grad log p(c | x) = grad log p_t(x | c) - grad log p_t(x).
  auto restricted = marginal_score(class_conditional(mix, label), s, t, x);
  const auto full = marginal_score(mix, s, t, x);
  for (std::size_t i = 0; i < restricted.size(); ++i) restricted[i] -= full[i];
  return restricted;
}

}  // namespace driftlab
