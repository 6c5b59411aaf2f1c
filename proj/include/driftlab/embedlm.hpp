#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "driftlab/mlp.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/samplers.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

// Ordered character vocabulary.
struct Vocab {
  std::string symbols;

  static Vocab toy16();  // "abcdefghijklmnop"

  int size() const { return static_cast<int>(symbols.size()); }
  int index_of(char c) const;  // throws on characters outside the vocabulary
  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;
  void validate() const;  // at least 2 symbols, all distinct
};

// Frozen d x |V| embedding table. Columns are unit directions scaled by
// sqrt(d) so the entry root-mean-square (lambda) is 1: exactly orthogonal by
// Gram-Schmidt when |V| <= d, otherwise random draws redrawn until every
// pair satisfies |cos| <= 0.8. No mutating access exists after construction.
class EmbeddingTable {
 public:
  EmbeddingTable(int dim, int vocab, Rng rng);

  int dim() const { return dim_; }
  int vocab() const { return static_cast<int>(cols_.size()); }
  const std::vector<double>& column(int v) const;
  double lambda() const { return lambda_; }
  std::uint64_t hash() const;  // FNV-1a over the column entry bytes

 private:
  int dim_ = 0;
  std::vector<std::vector<double>> cols_;
  double lambda_ = 0.0;
};

// Prompt-response pair with its embedded blocks, one column per token. The
// prompt may be empty (unconditional generation); the response may not.
struct PromptResponse {
  std::vector<int> prompt;
  std::vector<int> response;
  std::vector<std::vector<double>> c0;
  std::vector<std::vector<double>> x0;

  void validate(int dim) const;
};

// Column-stacked embedding lookups; ids outside the vocabulary throw.
std::vector<std::vector<double>> embed(const Vocab& vocab,
                                       const EmbeddingTable& table,
                                       const std::vector<int>& tokens);

PromptResponse make_prompt_response(const Vocab& vocab,
                                    const EmbeddingTable& table,
                                    const std::vector<int>& prompt,
                                    const std::vector<int>& response);

// abar(t) = 1 - sqrt(t), decreasing from abar(0) = 1 to abar(1) = 0, with
// alpha = sqrt(abar) and sigma = sqrt(1 - abar). induced() is the same
// schedule as a NoiseSchedule for drift/diffusion and time-feature queries.
struct DlmSchedule {
  double a_bar(double t) const;
  double alpha(double t) const;
  double sigma(double t) const;
  NoiseSchedule induced() const { return NoiseSchedule::dlm_sqrt(); }
};

// x_t = sqrt(abar) x0 + sqrt(1 - abar) eps entrywise on the response block;
// the prompt block is never noised. t in [0, 1].
std::vector<std::vector<double>> dlm_forward(
    const DlmSchedule& sched, const std::vector<std::vector<double>>& x0,
    double t, Rng& rng);

// Copy: the response repeats the prompt. Bigram: the response continues the
// fixed successor chain v -> (v + 1) mod |V| from the last prompt token.
enum class DlmTask { kCopy, kBigram };

PromptResponse sample_task_pair(DlmTask task, const Vocab& vocab,
                                const EmbeddingTable& table, int prompt_len,
                                int response_len, Rng& rng);

// Denoiser layout: input [prompt block | noisy response block] flattened
// column-major, output the predicted clean response block.
MlpSpec dlm_model_spec(int dim, int prompt_len, int response_len,
                       std::vector<int> hidden = {64});

struct DlmWeights {
  double x0 = 1.0;
  double round = 1.0;
};

// One noised training draw.
struct DlmBatchItem {
  PromptResponse pair;
  double t = 0.0;
  std::vector<std::vector<double>> xt;
};

struct DlmLoss {
  double total = 0.0;
  double x0_term = 0.0;     // mean squared Frobenius gap to the clean block
  double round_term = 0.0;  // mean per-token cross entropy of E^T x0_hat
  std::vector<double> grad;  // w.r.t. the flat parameter vector
};

// Mean over the batch of weights.x0 |x0_hat - x0|_F^2 +
// weights.round CE(E^T x0_hat, targets) / L, with gradients through both
// terms.
DlmLoss dlm_loss_on(const Mlp& net, const EmbeddingTable& table,
                    const DlmSchedule& sched,
                    const std::vector<DlmBatchItem>& batch,
                    const DlmWeights& weights);

// Draws t ~ Uniform(0,1) and noise per pair, then evaluates the loss.
DlmLoss dlm_train_step(const Mlp& net, const EmbeddingTable& table,
                       const DlmSchedule& sched,
                       const std::vector<PromptResponse>& batch,
                       const DlmWeights& weights, Rng& rng);

struct DlmTrainConfig {
  DlmTask task = DlmTask::kCopy;
  int prompt_len = 8;
  int response_len = 8;
  int batch = 32;
  int steps = 10000;
  double lr = 3e-3;
  double momentum = 0.9;
  bool cosine_decay = true;
  DlmWeights weights;
};

struct DlmTrainReport {
  std::vector<double> epoch_mean;
  double final_loss = 0.0;
};

// SGD with momentum over cfg.steps minibatches of freshly sampled task
// pairs; epochs group steps for the report.
DlmTrainReport dlm_train(Mlp& net, const Vocab& vocab,
                         const EmbeddingTable& table, const DlmSchedule& sched,
                         const DlmTrainConfig& cfg, Rng rng);

// Per-column argmax of E^T x_hat; ties resolve to the lowest token index.
std::vector<int> round_to_tokens(const EmbeddingTable& table,
                                 const std::vector<std::vector<double>>& x_hat);

// Descending inference grid 1 = t_1 > ... > t_K = eps, uniform in t.
std::vector<double> dlm_reverse_grid(int k_steps, double eps = kSamplerEps);

// sigma_i = eta sqrt((1 - abar_s)/(1 - abar_t)) sqrt(1 - abar_t/abar_s) for
// the step from t down to s.
double dlm_step_sigma(const DlmSchedule& sched, double t, double s,
                      double eta);

// Forward-time chain over the reverse grid's points with t = 0 prepended,
// for comparing sigma_i at eta = 1 against the chain's posterior variances.
// The top step ends at abar = 0, so its h entry is infinite.
DiscreteSchedule dlm_induced_chain(const DlmSchedule& sched,
                                   const std::vector<double>& reverse_grid);

struct DlmStepTrace {
  int index = 0;
  double t = 0.0;
  double s = 0.0;
  double sigma = 0.0;
  double x_rms = 0.0;   // response state after the update
  double x0_rms = 0.0;  // clean-block prediction at this step
};

struct DlmInferResult {
  std::vector<int> tokens;
  int radicand_clamps = 0;  // times sqrt(1 - abar - sigma^2) hit a negative
  std::vector<DlmStepTrace> trace;
};

// Starts from x_1 ~ N(0, lambda^2 I), walks the reverse grid with the
// predicted-x0 stochastic update, and decodes the final prediction. eta = 0
// consumes no noise draws beyond the initial state.
DlmInferResult dlm_infer(const Mlp& net, const Vocab& vocab,
                         const EmbeddingTable& table, const DlmSchedule& sched,
                         const std::vector<int>& prompt, int response_len,
                         int k_steps, double eta, Rng& rng,
                         bool want_trace = false);

}  // namespace driftlab
