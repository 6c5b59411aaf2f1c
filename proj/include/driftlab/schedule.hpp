#pragma once

#include <functional>
#include <string>
#include <vector>

namespace driftlab {

// Continuous evaluations of f, g^2 are clamped to [kTMin, kTMax]: the score
// blows up as sigma -> 0 at one end and alpha -> 0 divides at the other.
inline constexpr double kTMin = 1e-4;
inline constexpr double kTMax = 1.0 - 1e-4;

enum class ScheduleKind { kVpConstBeta, kVpLinearBeta, kGeneric, kDlmSqrt };

std::string to_string(ScheduleKind kind);

// Forward convention: alpha(0)=1, sigma(0)=0, data at t=0.
// Generative convention mirrors the roles: alpha(0)=0, sigma(0)=1.
enum class TimeOrientation { kForward, kGenerative };

struct DriftDiffusion {
  double f = 0.0;
  double g2 = 0.0;
};

class NoiseSchedule {
 public:
  static NoiseSchedule vp_const_beta(double beta);
  static NoiseSchedule vp_linear_beta(double beta_min = 0.1,
                                      double beta_max = 20.0);
  // Derivatives by 4th-order central differences (step 1e-6) unless supplied.
  static NoiseSchedule generic(std::function<double(double)> alpha,
                               std::function<double(double)> sigma);
  static NoiseSchedule generic(std::function<double(double)> alpha,
                               std::function<double(double)> sigma,
                               std::function<double(double)> alpha_dot,
                               std::function<double(double)> sigma_dot);
  // abar(t) = 1 - sqrt(t); alpha = sqrt(abar), sigma = sqrt(1 - abar).
  static NoiseSchedule dlm_sqrt();
  // Cubic Hermite interpolation of tabulated (t, alpha, sigma) triples.
  static NoiseSchedule tabulated(const std::vector<double>& t,
                                 const std::vector<double>& alpha,
                                 const std::vector<double>& sigma);

  double alpha(double t) const { return alpha_(t); }
  double sigma(double t) const { return sigma_(t); }
  double alpha_dot(double t) const { return alpha_dot_(t); }
  double sigma_dot(double t) const { return sigma_dot_(t); }

  ScheduleKind kind() const { return kind_; }
  TimeOrientation orientation() const { return orientation_; }
  bool is_vp() const {
    return kind_ == ScheduleKind::kVpConstBeta ||
           kind_ == ScheduleKind::kVpLinearBeta;
  }
  // beta(t) = -2 alpha_dot/alpha. Closed form; VP kinds only.
  double beta(double t) const;

 private:
  NoiseSchedule() = default;
  void validate();

  ScheduleKind kind_ = ScheduleKind::kGeneric;
  TimeOrientation orientation_ = TimeOrientation::kForward;
  std::function<double(double)> alpha_, sigma_, alpha_dot_, sigma_dot_;
  std::function<double(double)> beta_;
};

// f = alpha_dot/alpha and g^2 = d(sigma^2)/dt - 2 f sigma^2, the coefficients
// of the forward SDE dX = f X dt + g dW. VP kinds return (-beta/2, beta).
DriftDiffusion drift_diffusion(const NoiseSchedule& s, double t);

// Same calculus in generative time (noise at t=0, data at t=1), where the
// diffusion coefficient flips sign: g^2 = -d(sigma^2)/dt + 2 f sigma^2.
DriftDiffusion generative_drift_diffusion(const NoiseSchedule& s, double t);

// lambda(t) = log(alpha/sigma), strictly monotone on the clamped domain
// (checked on a 1024-point grid at construction), with a bisection inverse.
class LogSnr {
 public:
  explicit LogSnr(const NoiseSchedule& s);
  double operator()(double t) const;
  double inverse(double lambda) const;
  bool increasing() const { return increasing_; }

 private:
  NoiseSchedule sched_;
  bool increasing_ = false;
};

// Discrete-chain quantities on a grid t_0 = 0 < ... < t_N = 1. Arrays are
// indexed by k = 1..N; index 0 is a placeholder except a_bar[0] = 1.
struct DiscreteSchedule {
  std::vector<double> t;
  std::vector<double> h;        // integral of beta over [t_{k-1}, t_k]
  std::vector<double> a;        // a_k = e^{-h_k}
  std::vector<double> b;        // b_k = 1 - a_k
  std::vector<double> a_bar;    // running product of a_k, a_bar[0] = 1
  std::vector<double> b_tilde;  // posterior variances, b_tilde[1] = 0
  int steps() const { return static_cast<int>(t.size()) - 1; }
};

std::vector<double> uniform_grid(int n_steps);  // {0, 1/N, ..., 1}

// Bridges the continuous schedule to the discrete chain. h_k by adaptive
// Simpson quadrature of beta to abs tol 1e-12; VP kinds only.
DiscreteSchedule discretize(const NoiseSchedule& s,
                            const std::vector<double>& grid);

// b_tilde_k = (1 - a_bar_{k-1}) / (1 - a_bar_k) * b_k, k in [1, N].
double posterior_variance(const DiscreteSchedule& ds, int k);

}  // namespace driftlab
