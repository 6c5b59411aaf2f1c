#pragma once

#include <string>
#include <vector>

#include "driftlab/fields.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

// Network input layout: [x (dim) | time features (4) | condition one-hot
// (cond_slots)]. The null condition embeds as all zeros.
struct MlpSpec {
  int dim = 1;
  int cond_slots = 0;
  std::vector<int> hidden{32, 32};
  int out_dim = 0;  // 0 means same as dim

  int input_width() const { return dim + 4 + cond_slots; }
  int output_width() const { return out_dim > 0 ? out_dim : dim; }
  std::vector<int> widths() const;
  std::size_t parameter_count() const;
};

// (t, sin 2 pi t, cos 2 pi t, log-snr clipped to [-10, 10]).
std::vector<double> time_features(const NoiseSchedule& s, double t);

// Fully connected tanh network over a flat f64 parameter vector, with
// reverse-mode gradients for both parameters and inputs.
class Mlp {
 public:
  Mlp(MlpSpec spec, Rng rng);  // weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in))

  const MlpSpec& spec() const { return spec_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  // Post-activation values per layer, h[0] = input, h.back() = output.
  struct Trace {
    std::vector<std::vector<double>> h;
  };

  std::vector<double> forward(const std::vector<double>& input,
                              Trace* trace = nullptr) const;

  // Given d loss / d output, accumulates d loss / d parameters into
  // param_grad (which must have parameter_count entries) and returns
  // d loss / d input.
  std::vector<double> backward(const Trace& trace,
                               const std::vector<double>& out_grad,
                               std::vector<double>& param_grad) const;

  // Builds the network input for a query. Condition kNullCondition embeds
  // as zeros; other values must lie in [0, cond_slots).
  std::vector<double> assemble_input(const NoiseSchedule& s,
                                     const std::vector<double>& x, double t,
                                     int condition) const;

 private:
  MlpSpec spec_;
  std::vector<int> widths_;
  std::vector<std::size_t> offsets_;  // per layer: W row-major, then b
  std::vector<double> params_;
};

// Wraps a parameter snapshot of the network as a field evaluator; later
// training steps do not affect the returned model.
FieldModel network_field(const Mlp& net, const NoiseSchedule& s,
                         FieldParam param);

// Versioned little-endian container: magic, version, spec, flat parameters.
void save_mlp(const Mlp& net, const std::string& path);
Mlp load_mlp(const std::string& path);

}  // namespace driftlab
