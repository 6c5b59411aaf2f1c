#include "driftlab/embedlm.hpp"

#include "driftlab/fields.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <stdexcept>
#include <string>

namespace driftlab {
namespace {

std::vector<double> flatten(const std::vector<std::vector<double>>& block) {
  std::vector<double> flat;
  if (!block.empty()) flat.reserve(block.size() * block.front().size());
  for (const auto& col : block) flat.insert(flat.end(), col.begin(), col.end());
  return flat;
}

std::vector<std::vector<double>> unflatten(const std::vector<double>& flat,
                                           int dim) {
  std::vector<std::vector<double>> block(flat.size() / dim);
  for (std::size_t i = 0; i < block.size(); ++i)
    block[i].assign(flat.begin() + i * dim, flat.begin() + (i + 1) * dim);
  return block;
}

double rms(const std::vector<double>& values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  return values.empty() ? 0.0 : std::sqrt(sq / values.size());
}

void check_block_shapes(const Mlp& net, const EmbeddingTable& table,
                        const PromptResponse& pair) {
  pair.validate(table.dim());
  const int d = table.dim();
  const int width = d * static_cast<int>(pair.prompt.size() +
                                         pair.response.size());
  if (net.spec().dim != width ||
      net.spec().output_width() !=
          d * static_cast<int>(pair.response.size()))
    throw std::invalid_argument(
        "embedlm: model shape does not match the prompt/response layout");
}

void check_weights(const DlmWeights& weights) {
  if (weights.x0 < 0.0 || weights.round < 0.0 ||
      (weights.x0 == 0.0 && weights.round == 0.0))
    throw std::invalid_argument(
        "embedlm: loss weights must be non-negative and not both zero");
}

int successor(int token, int vocab_size) { return (token + 1) % vocab_size; }

}  // namespace

Vocab Vocab::toy16() { return Vocab{"abcdefghijklmnop"}; }

int Vocab::index_of(char c) const {
  const auto at = symbols.find(c);
  if (at == std::string::npos)
    throw std::invalid_argument(std::string("embedlm: unknown token '") + c +
                                "'");
  return static_cast<int>(at);
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(index_of(c));
  return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string text;
  text.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= size())
      throw std::invalid_argument("embedlm: token id outside the vocabulary");
    text.push_back(symbols[id]);
  }
  return text;
}

void Vocab::validate() const {
  if (size() < 2)
    throw std::invalid_argument("embedlm: vocabulary needs >= 2 symbols");
  std::set<char> seen(symbols.begin(), symbols.end());
  if (static_cast<int>(seen.size()) != size())
    throw std::invalid_argument("embedlm: vocabulary symbols must be unique");
}

EmbeddingTable::EmbeddingTable(int dim, int vocab, Rng rng) : dim_(dim) {
  if (dim < 1) throw std::invalid_argument("embedlm: table needs dim >= 1");
  if (vocab < 2) throw std::invalid_argument("embedlm: table needs vocab >= 2");
  const bool orthogonal = vocab <= dim;
  cols_.reserve(vocab);
  for (int v = 0; v < vocab; ++v) {
    std::vector<double> col(dim);
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 10000)
        throw std::runtime_error("embedlm: could not separate table columns");
      for (double& c : col) c = rng.gaussian();
      if (orthogonal) {
        for (const auto& prev : cols_) {
          double dot = 0.0;
          for (int i = 0; i < dim; ++i) dot += col[i] * prev[i];
          for (int i = 0; i < dim; ++i) col[i] -= dot * prev[i];
        }
      }
      double norm = 0.0;
      for (double c : col) norm += c * c;
      norm = std::sqrt(norm);
      if (norm < 1e-6) continue;
      for (double& c : col) c /= norm;
      if (!orthogonal) {
        double worst = 0.0;
        for (const auto& prev : cols_) {
          double dot = 0.0;
          for (int i = 0; i < dim; ++i) dot += col[i] * prev[i];
          worst = std::max(worst, std::abs(dot));
        }
        if (worst > 0.8) continue;
      }
      break;
    }
    cols_.push_back(col);
  }
  const double scale = std::sqrt(static_cast<double>(dim));
  double sq = 0.0;
  for (auto& col : cols_) {
    for (double& c : col) {
      c *= scale;
      sq += c * c;
    }
  }
  lambda_ = std::sqrt(sq / (static_cast<double>(dim) * vocab));
}

const std::vector<double>& EmbeddingTable::column(int v) const {
  if (v < 0 || v >= vocab())
    throw std::out_of_range("embedlm: token id outside the table");
  return cols_[v];
}

std::uint64_t EmbeddingTable::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& col : cols_) {
    for (double value : col) {
      std::uint64_t bits;
      std::memcpy(&bits, &value, sizeof bits);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

void PromptResponse::validate(int dim) const {
  if (response.empty())
    throw std::invalid_argument("embedlm: response must be non-empty");
  if (c0.size() != prompt.size() || x0.size() != response.size())
    throw std::invalid_argument(
        "embedlm: embedded blocks must match the token counts");
  for (const auto& col : c0)
    if (static_cast<int>(col.size()) != dim)
      throw std::invalid_argument("embedlm: prompt column width mismatch");
  for (const auto& col : x0)
    if (static_cast<int>(col.size()) != dim)
      throw std::invalid_argument("embedlm: response column width mismatch");
}

std::vector<std::vector<double>> embed(const Vocab& vocab,
                                       const EmbeddingTable& table,
                                       const std::vector<int>& tokens) {
  vocab.validate();
  if (vocab.size() != table.vocab())
    throw std::invalid_argument(
        "embedlm: vocabulary and table sizes disagree");
  std::vector<std::vector<double>> block;
  block.reserve(tokens.size());
  for (int id : tokens) {
    if (id < 0 || id >= vocab.size())
      throw std::invalid_argument("embedlm: token id outside the vocabulary");
    block.push_back(table.column(id));
  }
  return block;
}

PromptResponse make_prompt_response(const Vocab& vocab,
                                    const EmbeddingTable& table,
                                    const std::vector<int>& prompt,
                                    const std::vector<int>& response) {
  PromptResponse pair;
  pair.prompt = prompt;
  pair.response = response;
  pair.c0 = embed(vocab, table, prompt);
  pair.x0 = embed(vocab, table, response);
  pair.validate(table.dim());
  return pair;
}

double DlmSchedule::a_bar(double t) const {
  if (!(t >= 0.0 && t <= 1.0))
    throw std::invalid_argument("embedlm: schedule time must lie in [0, 1]");
  return 1.0 - std::sqrt(t);
}

double DlmSchedule::alpha(double t) const { return std::sqrt(a_bar(t)); }

double DlmSchedule::sigma(double t) const {
  return std::sqrt(1.0 - a_bar(t));
}

std::vector<std::vector<double>> dlm_forward(
    const DlmSchedule& sched, const std::vector<std::vector<double>>& x0,
    double t, Rng& rng) {
  const double ab = sched.a_bar(t);
  const double keep = std::sqrt(ab);
  const double mix = std::sqrt(1.0 - ab);
  std::vector<std::vector<double>> xt(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    xt[i].resize(x0[i].size());
    for (std::size_t j = 0; j < x0[i].size(); ++j)
      xt[i][j] = keep * x0[i][j] + mix * rng.gaussian();
  }
  return xt;
}

PromptResponse sample_task_pair(DlmTask task, const Vocab& vocab,
                                const EmbeddingTable& table, int prompt_len,
                                int response_len, Rng& rng) {
  if (prompt_len < 1)
    throw std::invalid_argument("embedlm: tasks need at least one prompt token");
  if (response_len < 1)
    throw std::invalid_argument("embedlm: response length must be positive");
  if (task == DlmTask::kCopy && response_len != prompt_len)
    throw std::invalid_argument(
        "embedlm: copy task needs matching prompt and response lengths");
  std::vector<int> prompt(prompt_len);
  for (int& id : prompt) id = rng.uniform_int(vocab.size());
  std::vector<int> response(response_len);
  if (task == DlmTask::kCopy) {
    response = prompt;
  } else {
    int prev = prompt.back();
    for (int& id : response) {
      prev = successor(prev, vocab.size());
      id = prev;
    }
  }
  return make_prompt_response(vocab, table, prompt, response);
}

MlpSpec dlm_model_spec(int dim, int prompt_len, int response_len,
                       std::vector<int> hidden) {
  if (dim < 1) throw std::invalid_argument("embedlm: model needs dim >= 1");
  if (prompt_len < 0 || response_len < 1)
    throw std::invalid_argument("embedlm: bad prompt/response lengths");
  MlpSpec spec;
  spec.dim = dim * (prompt_len + response_len);
  spec.out_dim = dim * response_len;
  spec.hidden = std::move(hidden);
  return spec;
}

DlmLoss dlm_loss_on(const Mlp& net, const EmbeddingTable& table,
                    const DlmSchedule& sched,
                    const std::vector<DlmBatchItem>& batch,
                    const DlmWeights& weights) {
  check_weights(weights);
  if (batch.empty()) throw std::invalid_argument("embedlm: empty batch");
  const NoiseSchedule induced = sched.induced();
  const int d = table.dim();
  const int vocab = table.vocab();

  DlmLoss loss;
  loss.grad.assign(net.parameter_count(), 0.0);
  const double inv_batch = 1.0 / batch.size();
  Mlp::Trace trace;
  std::vector<double> logits(vocab), probs(vocab);
  for (const DlmBatchItem& item : batch) {
    check_block_shapes(net, table, item.pair);
    if (item.xt.size() != item.pair.x0.size())
      throw std::invalid_argument(
          "embedlm: noised block must match the response shape");
    std::vector<double> xcat = flatten(item.pair.c0);
    const auto xt_flat = flatten(item.xt);
    xcat.insert(xcat.end(), xt_flat.begin(), xt_flat.end());
    const auto out =
        net.forward(net.assemble_input(induced, xcat, item.t, kNullCondition),
                    &trace);

    const auto x0_flat = flatten(item.pair.x0);
    const int len = static_cast<int>(item.pair.response.size());
    std::vector<double> out_grad(out.size(), 0.0);
    double sq = 0.0;
    for (std::size_t j = 0; j < out.size(); ++j) {
      const double r = out[j] - x0_flat[j];
      sq += r * r;
      out_grad[j] = weights.x0 * 2.0 * r * inv_batch;
    }
    loss.x0_term += sq * inv_batch;

    double ce_sum = 0.0;
    const double inv_len = 1.0 / len;
    for (int i = 0; i < len; ++i) {
      double peak = -1e300;
      for (int u = 0; u < vocab; ++u) {
        const auto& col = table.column(u);
        double dot = 0.0;
        for (int k = 0; k < d; ++k) dot += col[k] * out[i * d + k];
        logits[u] = dot;
        peak = std::max(peak, dot);
      }
      double z = 0.0;
      for (int u = 0; u < vocab; ++u) z += std::exp(logits[u] - peak);
      const double lse = peak + std::log(z);
      const int target = item.pair.response[i];
      ce_sum += lse - logits[target];
      for (int u = 0; u < vocab; ++u) {
        probs[u] = std::exp(logits[u] - lse);
        const double dlogit =
            (probs[u] - (u == target ? 1.0 : 0.0)) * inv_len;
        const auto& col = table.column(u);
        for (int k = 0; k < d; ++k)
          out_grad[i * d + k] += weights.round * dlogit * col[k] * inv_batch;
      }
    }
    loss.round_term += ce_sum * inv_len * inv_batch;
    net.backward(trace, out_grad, loss.grad);
  }
  loss.total = weights.x0 * loss.x0_term + weights.round * loss.round_term;
  return loss;
}

DlmLoss dlm_train_step(const Mlp& net, const EmbeddingTable& table,
                       const DlmSchedule& sched,
                       const std::vector<PromptResponse>& batch,
                       const DlmWeights& weights, Rng& rng) {
  std::vector<DlmBatchItem> items;
  items.reserve(batch.size());
  for (const PromptResponse& pair : batch) {
    DlmBatchItem item;
    item.pair = pair;
    item.t = rng.uniform();
    item.xt = dlm_forward(sched, pair.x0, item.t, rng);
    items.push_back(std::move(item));
  }
  return dlm_loss_on(net, table, sched, items, weights);
}

DlmTrainReport dlm_train(Mlp& net, const Vocab& vocab,
                         const EmbeddingTable& table, const DlmSchedule& sched,
                         const DlmTrainConfig& cfg, Rng rng) {
  vocab.validate();
  check_weights(cfg.weights);
  if (cfg.batch < 1 || cfg.steps < 1)
    throw std::invalid_argument("embedlm: batch and steps must be positive");
  if (!(cfg.lr > 0.0) || cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw std::invalid_argument("embedlm: bad optimizer settings");

  Rng step_rng = rng.split("steps");
  std::vector<double> velocity(net.parameter_count(), 0.0);
  DlmTrainReport report;
  const int epoch_len = std::max(1, cfg.steps / 100);
  double run_sum = 0.0;
  int run_count = 0;
  std::vector<PromptResponse> batch;
  for (int step = 0; step < cfg.steps; ++step) {
    batch.clear();
    for (int i = 0; i < cfg.batch; ++i)
      batch.push_back(sample_task_pair(cfg.task, vocab, table, cfg.prompt_len,
                                       cfg.response_len, step_rng));
    const DlmLoss loss =
        dlm_train_step(net, table, sched, batch, cfg.weights, step_rng);
    if (!std::isfinite(loss.total))
      throw std::runtime_error("embedlm: non-finite loss at step " +
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
    run_sum += loss.total;
    if (++run_count == epoch_len) {
      report.epoch_mean.push_back(run_sum / run_count);
      run_sum = 0.0;
      run_count = 0;
    }
  }
  if (run_count > 0) report.epoch_mean.push_back(run_sum / run_count);
  report.final_loss = report.epoch_mean.back();
  return report;
}

std::vector<int> round_to_tokens(
    const EmbeddingTable& table,
    const std::vector<std::vector<double>>& x_hat) {
  const int d = table.dim();
  std::vector<int> tokens;
  tokens.reserve(x_hat.size());
  for (const auto& col : x_hat) {
    if (static_cast<int>(col.size()) != d)
      throw std::invalid_argument("embedlm: rounding column width mismatch");
    int best = 0;
    double best_logit = -1e300;
    for (int u = 0; u < table.vocab(); ++u) {
      const auto& e = table.column(u);
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += e[k] * col[k];
      if (dot > best_logit) {
        best_logit = dot;
        best = u;
      }
    }
    tokens.push_back(best);
  }
  return tokens;
}

std::vector<double> dlm_reverse_grid(int k_steps, double eps) {
  if (k_steps < 2)
    throw std::invalid_argument("embedlm: reverse grid needs >= 2 points");
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("embedlm: eps must lie in (0, 1)");
  std::vector<double> grid(k_steps);
  for (int i = 0; i < k_steps; ++i)
    grid[i] = 1.0 - (1.0 - eps) * i / (k_steps - 1);
  grid.front() = 1.0;
  grid.back() = eps;
  return grid;
}

double dlm_step_sigma(const DlmSchedule& sched, double t, double s,
                      double eta) {
  if (!(t > s))
    throw std::invalid_argument("embedlm: step needs t > s");
  if (eta < 0.0)
    throw std::invalid_argument("embedlm: eta must be non-negative");
  const double ab_t = sched.a_bar(t);
  const double ab_s = sched.a_bar(s);
  return eta * std::sqrt((1.0 - ab_s) / (1.0 - ab_t)) *
         std::sqrt(1.0 - ab_t / ab_s);
}

DiscreteSchedule dlm_induced_chain(const DlmSchedule& sched,
                                   const std::vector<double>& reverse_grid) {
  if (reverse_grid.size() < 2)
    throw std::invalid_argument("embedlm: chain needs >= 2 grid points");
  for (std::size_t i = 0; i + 1 < reverse_grid.size(); ++i)
    if (!(reverse_grid[i] > reverse_grid[i + 1]))
      throw std::invalid_argument("embedlm: reverse grid must decrease");
  if (!(reverse_grid.back() > 0.0))
    throw std::invalid_argument("embedlm: reverse grid must stay above 0");

  DiscreteSchedule ds;
  ds.t.push_back(0.0);
  for (auto it = reverse_grid.rbegin(); it != reverse_grid.rend(); ++it)
    ds.t.push_back(*it);
  const int n = ds.steps();
  ds.a_bar.resize(n + 1);
  ds.a.assign(n + 1, 0.0);
  ds.b.assign(n + 1, 0.0);
  ds.h.assign(n + 1, 0.0);
  ds.b_tilde.assign(n + 1, 0.0);
  for (int k = 0; k <= n; ++k) ds.a_bar[k] = sched.a_bar(ds.t[k]);
  for (int k = 1; k <= n; ++k) {
    ds.a[k] = ds.a_bar[k] / ds.a_bar[k - 1];
    ds.b[k] = 1.0 - ds.a[k];
    ds.h[k] = -std::log(ds.a[k]);
    ds.b_tilde[k] =
        (1.0 - ds.a_bar[k - 1]) / (1.0 - ds.a_bar[k]) * ds.b[k];
  }
  return ds;
}

DlmInferResult dlm_infer(const Mlp& net, const Vocab& vocab,
                         const EmbeddingTable& table, const DlmSchedule& sched,
                         const std::vector<int>& prompt, int response_len,
                         int k_steps, double eta, Rng& rng, bool want_trace) {
  if (response_len < 1)
    throw std::invalid_argument("embedlm: response length must be positive");
  if (eta < 0.0)
    throw std::invalid_argument("embedlm: eta must be non-negative");
  const auto c0 = embed(vocab, table, prompt);
  const int d = table.dim();
  const int width =
      d * static_cast<int>(prompt.size()) + d * response_len;
  if (net.spec().dim != width ||
      net.spec().output_width() != d * response_len)
    throw std::invalid_argument(
        "embedlm: model shape does not match the prompt/response layout");
  const auto grid = dlm_reverse_grid(k_steps);
  const NoiseSchedule induced = sched.induced();

  const auto c0_flat = flatten(c0);
  auto predict = [&](const std::vector<double>& state, double t) {
    std::vector<double> xcat = c0_flat;
    xcat.insert(xcat.end(), state.begin(), state.end());
    return net.forward(
        net.assemble_input(induced, xcat, t, kNullCondition));
  };

  std::vector<double> x(static_cast<std::size_t>(d) * response_len);
  for (double& v : x) v = table.lambda() * rng.gaussian();

  DlmInferResult out;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double t = grid[i];
    const double s = grid[i + 1];
    const double ab_t = sched.a_bar(t);
    const double ab_s = sched.a_bar(s);
    const auto x0_hat = predict(x, t);
    const double keep_t = std::sqrt(ab_t);
    const double noise_t = std::sqrt(1.0 - ab_t);
    std::vector<double> eps_pred(x.size());
    for (std::size_t j = 0; j < x.size(); ++j)
      eps_pred[j] = (x[j] - keep_t * x0_hat[j]) / noise_t;
    const double sigma = dlm_step_sigma(sched, t, s, eta);
    double radicand = 1.0 - ab_s - sigma * sigma;
    if (radicand < 0.0) {
      radicand = 0.0;
      ++out.radicand_clamps;
    }
    const double keep_s = std::sqrt(ab_s);
    const double dir = std::sqrt(radicand);
    for (std::size_t j = 0; j < x.size(); ++j)
      x[j] = keep_s * x0_hat[j] + dir * eps_pred[j];
    if (sigma > 0.0)
      for (double& v : x) v += sigma * rng.gaussian();
    if (want_trace)
      out.trace.push_back({static_cast<int>(i) + 1, t, s, sigma, rms(x),
                           rms(x0_hat)});
  }
  const auto x0_final = predict(x, grid.back());
  out.tokens = round_to_tokens(table, unflatten(x0_final, d));
  return out;
}

}  // namespace driftlab
