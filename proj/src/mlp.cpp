#include "driftlab/mlp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace driftlab {

namespace {

constexpr char kMagic[4] = {'D', 'L', 'A', 'B'};
constexpr std::uint32_t kVersion = 1;
constexpr double kLogSnrClip = 10.0;

void check_spec(const MlpSpec& spec) {
  if (spec.dim < 1) throw std::invalid_argument("mlp: dim must be positive");
  if (spec.cond_slots < 0)
    throw std::invalid_argument("mlp: cond_slots must be non-negative");
  if (spec.out_dim < 0)
    throw std::invalid_argument("mlp: out_dim must be non-negative");
  for (int w : spec.hidden)
    if (w < 1) throw std::invalid_argument("mlp: hidden widths must be positive");
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("mlp file: truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw std::runtime_error("mlp file: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<int> MlpSpec::widths() const {
  std::vector<int> w;
  w.push_back(input_width());
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(output_width());
  return w;
}

std::size_t MlpSpec::parameter_count() const {
  const auto w = widths();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l)
    n += static_cast<std::size_t>(w[l + 1]) * w[l] + w[l + 1];
  return n;
}

std::vector<double> time_features(const NoiseSchedule& s, double t) {
  const double a = s.alpha(t);
  const double sg = s.sigma(t);
  double lam;
  if (sg <= 0.0)
    lam = kLogSnrClip;
  else if (a <= 0.0)
    lam = -kLogSnrClip;
  else
    lam = std::clamp(std::log(a / sg), -kLogSnrClip, kLogSnrClip);
  constexpr double kTau = 2.0 * M_PI;
  return {t, std::sin(kTau * t), std::cos(kTau * t), lam};
}

Mlp::Mlp(MlpSpec spec, Rng rng) : spec_(std::move(spec)) {
  check_spec(spec_);
  widths_ = spec_.widths();
  offsets_.reserve(widths_.size() - 1);
  std::size_t at = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(at);
    at += static_cast<std::size_t>(widths_[l + 1]) * widths_[l] + widths_[l + 1];
  }
  params_.resize(at);
  Rng init = rng.split("init");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
    const std::size_t count =
        static_cast<std::size_t>(widths_[l + 1]) * widths_[l] + widths_[l + 1];
    for (std::size_t i = 0; i < count; ++i)
      params_[offsets_[l] + i] = init.uniform(-bound, bound);
  }
}

std::vector<double> Mlp::forward(const std::vector<double>& input,
                                 Trace* trace) const {
  if (static_cast<int>(input.size()) != widths_.front())
    throw std::invalid_argument("mlp: input width mismatch");
  if (trace) {
    trace->h.clear();
    trace->h.push_back(input);
  }
  std::vector<double> cur = input;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int n_in = widths_[l];
    const int n_out = widths_[l + 1];
    const double* w = params_.data() + offsets_[l];
    const double* b = w + static_cast<std::size_t>(n_out) * n_in;
    std::vector<double> next(n_out);
    const bool last = l + 2 == widths_.size();
    for (int i = 0; i < n_out; ++i) {
      double z = b[i];
      const double* row = w + static_cast<std::size_t>(i) * n_in;
      for (int j = 0; j < n_in; ++j) z += row[j] * cur[j];
      next[i] = last ? z : std::tanh(z);
    }
    cur = std::move(next);
    if (trace) trace->h.push_back(cur);
  }
  return cur;
}

std::vector<double> Mlp::backward(const Trace& trace,
                                  const std::vector<double>& out_grad,
                                  std::vector<double>& param_grad) const {
  if (trace.h.size() != widths_.size())
    throw std::invalid_argument("mlp: trace does not match this network");
  if (out_grad.size() != trace.h.back().size())
    throw std::invalid_argument("mlp: output gradient width mismatch");
  if (param_grad.size() != params_.size())
    throw std::invalid_argument("mlp: parameter gradient size mismatch");

  std::vector<double> g = out_grad;
  for (std::size_t l = widths_.size() - 1; l-- > 0;) {
    const int n_in = widths_[l];
    const int n_out = widths_[l + 1];
    const double* w = params_.data() + offsets_[l];
    double* dw = param_grad.data() + offsets_[l];
    double* db = dw + static_cast<std::size_t>(n_out) * n_in;
    const std::vector<double>& h_in = trace.h[l];
    std::vector<double> g_prev(n_in, 0.0);
    for (int i = 0; i < n_out; ++i) {
      const double gi = g[i];
      double* drow = dw + static_cast<std::size_t>(i) * n_in;
      const double* row = w + static_cast<std::size_t>(i) * n_in;
      for (int j = 0; j < n_in; ++j) {
        drow[j] += gi * h_in[j];
        g_prev[j] += gi * row[j];
      }
      db[i] += gi;
    }
    if (l > 0) {
      for (int j = 0; j < n_in; ++j) g_prev[j] *= 1.0 - h_in[j] * h_in[j];
    }
    g = std::move(g_prev);
  }
  return g;
}

std::vector<double> Mlp::assemble_input(const NoiseSchedule& s,
                                        const std::vector<double>& x, double t,
                                        int condition) const {
  if (static_cast<int>(x.size()) != spec_.dim)
    throw std::invalid_argument("mlp: query dimension mismatch");
  if (condition != kNullCondition &&
      (condition < 0 || condition >= spec_.cond_slots))
    throw std::invalid_argument("mlp: condition out of range");
  std::vector<double> input;
  input.reserve(widths_.front());
  input.insert(input.end(), x.begin(), x.end());
  const auto tf = time_features(s, t);
  input.insert(input.end(), tf.begin(), tf.end());
  input.resize(widths_.front(), 0.0);
  if (condition != kNullCondition)
    input[x.size() + tf.size() + condition] = 1.0;
  return input;
}

FieldModel network_field(const Mlp& net, const NoiseSchedule& s,
                         FieldParam param) {
  FieldModel model;
  model.param = param;
  model.backing = FieldBacking::kNetwork;
  model.eval = [net, s](const std::vector<double>& x, double t,
                        int condition) {
    return net.forward(net.assemble_input(s, x, t, condition));
  };
  return model;
}

void save_mlp(const Mlp& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("mlp file: cannot open " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  const MlpSpec& spec = net.spec();
  put_u32(out, static_cast<std::uint32_t>(spec.dim));
  put_u32(out, static_cast<std::uint32_t>(spec.cond_slots));
  put_u32(out, static_cast<std::uint32_t>(spec.out_dim));
  put_u32(out, static_cast<std::uint32_t>(spec.hidden.size()));
  for (int h : spec.hidden) put_u32(out, static_cast<std::uint32_t>(h));
  put_u64(out, net.parameter_count());
  for (double p : net.parameters()) put_u64(out, std::bit_cast<std::uint64_t>(p));
  if (!out) throw std::runtime_error("mlp file: write failed for " + path);
}

Mlp load_mlp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("mlp file: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("mlp file: bad magic in " + path);
  const std::uint32_t version = get_u32(in);
  if (version != kVersion)
    throw std::runtime_error("mlp file: unsupported version " +
                             std::to_string(version));
  MlpSpec spec;
  spec.dim = static_cast<int>(get_u32(in));
  spec.cond_slots = static_cast<int>(get_u32(in));
  spec.out_dim = static_cast<int>(get_u32(in));
  spec.hidden.resize(get_u32(in));
  for (int& h : spec.hidden) h = static_cast<int>(get_u32(in));
  const std::uint64_t count = get_u64(in);
  Mlp net(spec, Rng(0));
  if (count != net.parameter_count())
    throw std::runtime_error("mlp file: parameter count mismatch in " + path);
  for (double& p : net.parameters())
    p = std::bit_cast<double>(get_u64(in));
  return net;
}

}  // namespace driftlab
