#include "driftlab/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "driftlab/quadrature.hpp"

namespace driftlab {
namespace {

constexpr double kFdStep = 1e-6;
constexpr int kValidationGrid = 1024;

double fd4(const std::function<double(double)>& f, double t, double h) {
  return (-f(t + 2 * h) + 8 * f(t + h) - 8 * f(t - h) + f(t - 2 * h)) /
         (12 * h);
}

void check_domain(double t) {
  if (!(t >= kTMin && t <= kTMax))
    throw std::domain_error("schedule: t outside clamped domain [" +
                            std::to_string(kTMin) + ", " +
                            std::to_string(kTMax) + "]");
}

DriftDiffusion raw_drift_diffusion(const NoiseSchedule& s, double t,
                                   TimeOrientation orient) {
  const double a = s.alpha(t);
  const double sg = s.sigma(t);
  if (a == 0.0) throw std::runtime_error("schedule: alpha(t) = 0, f undefined");
  const double f = s.alpha_dot(t) / a;
  const double dsig2 = 2.0 * sg * s.sigma_dot(t);
  double g2 = dsig2 - 2.0 * f * sg * sg;
  if (orient == TimeOrientation::kGenerative) g2 = -g2;
  // Finite-difference derivatives carry ~eps/step noise, so the negativity
  // threshold scales with the terms that were differenced.
  const double tol =
      1e-12 + 1e-8 * (std::abs(dsig2) + std::abs(2.0 * f * sg * sg));
  if (g2 < -tol)
    throw std::runtime_error("schedule: induced g^2 negative at t = " +
                             std::to_string(t));
  return {f, std::max(g2, 0.0)};
}

}  // namespace

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kVpConstBeta: return "vp-constant-beta";
    case ScheduleKind::kVpLinearBeta: return "vp-linear-beta";
    case ScheduleKind::kGeneric: return "generic";
    case ScheduleKind::kDlmSqrt: return "dlm-sqrt";
  }
  return "unknown";
}

void NoiseSchedule::validate() {
  const double a0 = alpha_(0.0);
  const double s0 = sigma_(0.0);
  const double tol = 1e-9;
  if (std::abs(a0 - 1.0) <= tol && std::abs(s0) <= tol) {
    orientation_ = TimeOrientation::kForward;
  } else if (std::abs(a0) <= tol && std::abs(s0 - 1.0) <= tol) {
    orientation_ = TimeOrientation::kGenerative;
  } else {
    throw std::invalid_argument(
        "schedule: endpoints match neither forward (alpha(0)=1, sigma(0)=0) "
        "nor generative (alpha(0)=0, sigma(0)=1) convention");
  }
  for (int i = 0; i < kValidationGrid; ++i) {
    const double t = kTMin + (kTMax - kTMin) * i / (kValidationGrid - 1);
    if (alpha_(t) < 0.0 || sigma_(t) < 0.0)
      throw std::invalid_argument("schedule: negative alpha or sigma at t = " +
                                  std::to_string(t));
    raw_drift_diffusion(*this, t, orientation_);  // throws if g^2 < 0
  }
}

NoiseSchedule NoiseSchedule::vp_const_beta(double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("schedule: beta must be > 0");
  NoiseSchedule s;
  s.kind_ = ScheduleKind::kVpConstBeta;
  s.alpha_ = [beta](double t) { return std::exp(-0.5 * beta * t); };
  s.sigma_ = [beta](double t) { return std::sqrt(-std::expm1(-beta * t)); };
  s.alpha_dot_ = [beta](double t) {
    return -0.5 * beta * std::exp(-0.5 * beta * t);
  };
  s.sigma_dot_ = [beta](double t) {
    const double a2 = std::exp(-beta * t);
    return 0.5 * beta * a2 / std::sqrt(-std::expm1(-beta * t));
  };
  s.beta_ = [beta](double) { return beta; };
  s.validate();
  return s;
}

NoiseSchedule NoiseSchedule::vp_linear_beta(double beta_min, double beta_max) {
  if (!(beta_min > 0.0) || !(beta_max >= beta_min))
    throw std::invalid_argument("schedule: need 0 < beta_min <= beta_max");
  const double slope = beta_max - beta_min;
  auto big_b = [beta_min, slope](double t) {
    return beta_min * t + 0.5 * slope * t * t;
  };
  auto beta_fn = [beta_min, slope](double t) { return beta_min + slope * t; };
  NoiseSchedule s;
  s.kind_ = ScheduleKind::kVpLinearBeta;
  s.alpha_ = [big_b](double t) { return std::exp(-0.5 * big_b(t)); };
  s.sigma_ = [big_b](double t) { return std::sqrt(-std::expm1(-big_b(t))); };
  s.alpha_dot_ = [big_b, beta_fn](double t) {
    return -0.5 * beta_fn(t) * std::exp(-0.5 * big_b(t));
  };
  s.sigma_dot_ = [big_b, beta_fn](double t) {
    const double a2 = std::exp(-big_b(t));
    return 0.5 * beta_fn(t) * a2 / std::sqrt(-std::expm1(-big_b(t)));
  };
  s.beta_ = beta_fn;
  s.validate();
  return s;
}

NoiseSchedule NoiseSchedule::generic(std::function<double(double)> alpha,
                                     std::function<double(double)> sigma) {
  auto a = alpha;
  auto sg = sigma;
  return generic(
      alpha, sigma, [a](double t) { return fd4(a, t, kFdStep); },
      [sg](double t) { return fd4(sg, t, kFdStep); });
}

NoiseSchedule NoiseSchedule::generic(std::function<double(double)> alpha,
                                     std::function<double(double)> sigma,
                                     std::function<double(double)> alpha_dot,
                                     std::function<double(double)> sigma_dot) {
  NoiseSchedule s;
  s.kind_ = ScheduleKind::kGeneric;
  s.alpha_ = std::move(alpha);
  s.sigma_ = std::move(sigma);
  s.alpha_dot_ = std::move(alpha_dot);
  s.sigma_dot_ = std::move(sigma_dot);
  s.validate();
  return s;
}

NoiseSchedule NoiseSchedule::dlm_sqrt() {
  NoiseSchedule s;
  s.kind_ = ScheduleKind::kDlmSqrt;
  s.alpha_ = [](double t) { return std::sqrt(1.0 - std::sqrt(t)); };
  s.sigma_ = [](double t) { return std::sqrt(std::sqrt(t)); };
  s.alpha_dot_ = [](double t) {
    return -0.25 / (std::sqrt(t) * std::sqrt(1.0 - std::sqrt(t)));
  };
  s.sigma_dot_ = [](double t) { return 0.25 / std::pow(t, 0.75); };
  s.validate();
  return s;
}

NoiseSchedule NoiseSchedule::tabulated(const std::vector<double>& t,
                                       const std::vector<double>& alpha,
                                       const std::vector<double>& sigma) {
  const std::size_t n = t.size();
  if (n < 2 || alpha.size() != n || sigma.size() != n)
    throw std::invalid_argument("schedule: tabulated needs >= 2 aligned rows");
  for (std::size_t i = 1; i < n; ++i)
    if (!(t[i] > t[i - 1]))
      throw std::invalid_argument("schedule: tabulated times must increase");

  // Cubic Hermite pieces with 3-point slopes; derivative comes from the
  // polynomial, not finite differences.
  struct Spline {
    std::vector<double> x, y, m;
    double eval(double xq, bool deriv) const {
      std::size_t i =
          std::upper_bound(x.begin(), x.end(), xq) - x.begin();
      if (i == 0) i = 1;
      if (i >= x.size()) i = x.size() - 1;
      const double h = x[i] - x[i - 1];
      const double s = std::clamp((xq - x[i - 1]) / h, 0.0, 1.0);
      const double y0 = y[i - 1], y1 = y[i], m0 = m[i - 1] * h, m1 = m[i] * h;
      if (!deriv) {
        const double s2 = s * s, s3 = s2 * s;
        return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * m0 +
               (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * m1;
      }
      const double s2 = s * s;
      return ((6 * s2 - 6 * s) * y0 + (3 * s2 - 4 * s + 1) * m0 +
              (-6 * s2 + 6 * s) * y1 + (3 * s2 - 2 * s) * m1) /
             h;
    }
  };
  auto make_spline = [&](const std::vector<double>& y) {
    Spline sp;
    sp.x = t;
    sp.y = y;
    sp.m.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == 0)
        sp.m[i] = (y[1] - y[0]) / (t[1] - t[0]);
      else if (i + 1 == n)
        sp.m[i] = (y[n - 1] - y[n - 2]) / (t[n - 1] - t[n - 2]);
      else
        sp.m[i] = (y[i + 1] - y[i - 1]) / (t[i + 1] - t[i - 1]);
    }
    return sp;
  };
  auto sa = std::make_shared<Spline>(make_spline(alpha));
  auto ss = std::make_shared<Spline>(make_spline(sigma));
  NoiseSchedule s;
  s.kind_ = ScheduleKind::kGeneric;
  s.alpha_ = [sa](double tq) { return sa->eval(tq, false); };
  s.sigma_ = [ss](double tq) { return ss->eval(tq, false); };
  s.alpha_dot_ = [sa](double tq) { return sa->eval(tq, true); };
  s.sigma_dot_ = [ss](double tq) { return ss->eval(tq, true); };
  s.validate();
  return s;
}

double NoiseSchedule::beta(double t) const {
  if (!beta_)
    throw std::invalid_argument("schedule: beta(t) requires a VP kind");
  return beta_(t);
}

DriftDiffusion drift_diffusion(const NoiseSchedule& s, double t) {
  check_domain(t);
  if (s.is_vp()) {
    const double b = s.beta(t);
    return {-0.5 * b, b};
  }
  if (s.orientation() != TimeOrientation::kForward)
    throw std::runtime_error(
        "schedule: forward drift_diffusion on a generative-time schedule "
        "(g^2 < 0); use generative_drift_diffusion");
  return raw_drift_diffusion(s, t, TimeOrientation::kForward);
}

DriftDiffusion generative_drift_diffusion(const NoiseSchedule& s, double t) {
  check_domain(t);
  if (s.orientation() != TimeOrientation::kGenerative)
    throw std::runtime_error(
        "schedule: generative_drift_diffusion needs a generative-time "
        "schedule (alpha(0)=0, sigma(0)=1)");
  return raw_drift_diffusion(s, t, TimeOrientation::kGenerative);
}

LogSnr::LogSnr(const NoiseSchedule& s) : sched_(s) {
  double prev = 0.0;
  int dir = 0;
  for (int i = 0; i < kValidationGrid; ++i) {
    const double t = kTMin + (kTMax - kTMin) * i / (kValidationGrid - 1);
    const double lam = (*this)(t);
    if (i > 0) {
      const int step = lam > prev ? 1 : (lam < prev ? -1 : 0);
      if (step == 0 || (dir != 0 && step != dir))
        throw std::invalid_argument(
            "log-snr: lambda not strictly monotone on the clamped domain");
      dir = step;
    }
    prev = lam;
  }
  increasing_ = dir > 0;
}

double LogSnr::operator()(double t) const {
  const double sg = sched_.sigma(t);
  if (sg <= 0.0)
    throw std::domain_error("log-snr: sigma(t) = 0, lambda infinite");
  return std::log(sched_.alpha(t) / sg);
}

double LogSnr::inverse(double lambda) const {
  double lo = kTMin, hi = kTMax;
  double flo = (*this)(lo) - lambda;
  double fhi = (*this)(hi) - lambda;
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0))
    throw std::domain_error("log-snr: lambda outside attainable range");
  for (int i = 0; i < 200 && hi - lo > 1e-12; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = (*this)(mid) - lambda;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::vector<double> uniform_grid(int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("uniform_grid: need >= 1 step");
  std::vector<double> g(n_steps + 1);
  for (int i = 0; i <= n_steps; ++i)
    g[i] = static_cast<double>(i) / n_steps;
  g.back() = 1.0;
  return g;
}

DiscreteSchedule discretize(const NoiseSchedule& s,
                            const std::vector<double>& grid) {
  if (!s.is_vp())
    throw std::invalid_argument(
        "discretize: unsupported schedule kind (needs a beta-parameterized VP "
        "kind)");
  if (grid.size() < 2 || grid.front() != 0.0 || grid.back() != 1.0)
    throw std::invalid_argument("discretize: grid must run from 0 to 1");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1]))
      throw std::invalid_argument("discretize: grid must strictly increase");

  const int n = static_cast<int>(grid.size()) - 1;
  DiscreteSchedule ds;
  ds.t = grid;
  ds.h.assign(n + 1, 0.0);
  ds.a.assign(n + 1, 0.0);
  ds.b.assign(n + 1, 0.0);
  ds.a_bar.assign(n + 1, 0.0);
  ds.b_tilde.assign(n + 1, 0.0);
  ds.a_bar[0] = 1.0;
  std::function<double(double)> beta_fn = [&s](double t) { return s.beta(t); };
  for (int k = 1; k <= n; ++k) {
    ds.h[k] = adaptive_simpson(beta_fn, grid[k - 1], grid[k], 1e-12);
    ds.a[k] = std::exp(-ds.h[k]);
    ds.b[k] = -std::expm1(-ds.h[k]);
    ds.a_bar[k] = ds.a_bar[k - 1] * ds.a[k];
    ds.b_tilde[k] = (1.0 - ds.a_bar[k - 1]) / (1.0 - ds.a_bar[k]) * ds.b[k];
  }
  return ds;
}

double posterior_variance(const DiscreteSchedule& ds, int k) {
  if (k < 1 || k > ds.steps())
    throw std::out_of_range("posterior_variance: k outside [1, N]");
  return ds.b_tilde[k];
}

}  // namespace driftlab
