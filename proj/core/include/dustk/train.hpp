#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dustk/autodiff.hpp"
#include "dustk/checkpoint.hpp"
#include "dustk/refmodel.hpp"
#include "json.hpp"

namespace dustk {

enum class OptimizerKind { kSgd, kAdamW };
enum class Schedule { kConstant, kCosine };

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch_size = 16;
  std::size_t seq_len = 64;
  double lr = 3e-4;
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  Schedule schedule = Schedule::kCosine;
  // Cosine decays to min_lr_ratio * lr at the final step.
  double min_lr_ratio = 0.1;
  std::size_t warmup_steps = 0;
  // Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;
  std::uint64_t seed = 0;
  std::size_t eval_every = 100;
  // Held-out windows (of seq_len) scored per evaluation.
  std::size_t eval_windows = 64;
};

// Throws ValidationError unless counts >= 1 and lr > 0 (lr == 0 is accepted
// as a no-op run).
void check_train_config(const TrainConfig& cfg);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys throw FormatError.
TrainConfig train_config_from_json(const nlohmann::json& j);

// Learning rate used for 1-based step `step`.
double scheduled_lr(const TrainConfig& cfg, std::size_t step);

struct LossPoint {
  std::size_t step = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
};

struct LossCurve {
  std::vector<LossPoint> points;
};

class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}
  // Updates every tensor that has a gradient, in place.
  void step(Checkpoint& params, const GradMap& grads, double lr);

 private:
  TrainConfig cfg_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>, std::less<>> m_;
  std::map<std::string, std::vector<double>, std::less<>> v_;
};

// Mean over positions i >= 1 of -log softmax(logits[i-1])[tokens[i]].
double cross_entropy_lm(const Mat& logits, std::span<const Token> tokens);

struct DpoTokens {
  std::vector<Token> prompt;
  std::vector<Token> chosen;
  std::vector<Token> rejected;
};

struct DpoConfig {
  double beta = 0.1;
  const RefModel* reference = nullptr;  // frozen
};

// log pi(response | prompt) summed over response tokens.
double response_logprob(const RefModel& model, const DpoTokens& triple, bool chosen);

// Mean of -log sigmoid(beta * [(pi_w - ref_w) - (pi_l - ref_l)]).
double dpo_loss(const RefModel& policy, const DpoConfig& cfg,
                std::span<const DpoTokens> batch);

// Tape form of dpo_loss over bound policy parameters. Reference log-probs
// enter as constants, so no gradient reaches the reference model.
Var dpo_loss_var(Tape& tape, const ParamBinding& policy, const ModelConfig& config,
                 const DpoConfig& cfg, std::span<const DpoTokens> batch);

// Tape form of the LM loss for whole windows of seq_len.
Var lm_loss_var(Tape& tape, const ParamBinding& params, const ModelConfig& config,
                std::span<const Token> windows, std::size_t seq_len);

struct TokenCorpus {
  std::vector<Token> train;
  std::vector<Token> eval;
};

// Holds out the final eval_fraction of the stream.
TokenCorpus split_corpus(std::span<const Token> tokens, double eval_fraction);

// Mean next-token loss over up to max_windows non-overlapping windows.
double eval_loss(const Checkpoint& ckpt, std::span<const Token> tokens, std::size_t seq_len,
                 std::size_t max_windows);

struct TrainResult {
  Checkpoint checkpoint;
  LossCurve curve;
  std::vector<double> step_losses;  // train loss of every step, pre-update
  bool diverged = false;
};

// Continued LM training. The model's checkpoint is copied; the input is
// left untouched. Deterministic for a fixed cfg.seed.
TrainResult train_lm(const RefModel& model, const TokenCorpus& corpus, const TrainConfig& cfg);

struct DpoTrainResult {
  Checkpoint checkpoint;
  std::vector<double> losses;   // per step, pre-update
  std::vector<double> margins;  // mean policy (chosen - rejected) log-prob, pre-update
  bool diverged = false;
};

// Full-batch preference tuning against a frozen reference. Uses steps, lr,
// optimizer settings and schedule from cfg.
DpoTrainResult train_dpo(const RefModel& policy, const DpoConfig& dpo,
                         std::span<const DpoTokens> triples, const TrainConfig& cfg);

nlohmann::json curve_to_json(const LossCurve& curve);

}  // namespace dustk
