#include "dustk/train.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "dustk/errors.hpp"

namespace dustk {

using nlohmann::json;

void check_train_config(const TrainConfig& c) {
  if (c.steps < 1 || c.batch_size < 1 || c.seq_len < 2 || c.eval_every < 1 ||
      c.eval_windows < 1) {
    throw ValidationError("train config counts must be >= 1 (seq_len >= 2)");
  }
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) throw ValidationError("lr must be >= 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw ValidationError("adam betas must lie in [0, 1)");
  }
  if (!(c.eps > 0.0)) throw ValidationError("adam eps must be positive");
  if (!(c.weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (!(c.min_lr_ratio >= 0.0 && c.min_lr_ratio <= 1.0)) {
    throw ValidationError("min_lr_ratio must lie in [0, 1]");
  }
  if (!(c.grad_clip >= 0.0)) throw ValidationError("grad_clip must be >= 0");
}

json train_config_to_json(const TrainConfig& c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"seq_len", c.seq_len},
          {"lr", c.lr},
          {"optimizer", c.optimizer == OptimizerKind::kSgd ? "sgd" : "adamw"},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"weight_decay", c.weight_decay},
          {"schedule", c.schedule == Schedule::kCosine ? "cosine" : "constant"},
          {"min_lr_ratio", c.min_lr_ratio},
          {"warmup_steps", c.warmup_steps},
          {"grad_clip", c.grad_clip},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"eval_windows", c.eval_windows}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("train config must be a JSON object");
  const json defaults = train_config_to_json(TrainConfig{});
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw FormatError("unknown train config field: " + key);
  }
  TrainConfig c;
  try {
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seq_len = j.value("seq_len", c.seq_len);
    c.lr = j.value("lr", c.lr);
    const std::string opt = j.value("optimizer", std::string("adamw"));
    if (opt == "sgd") {
      c.optimizer = OptimizerKind::kSgd;
    } else if (opt == "adamw") {
      c.optimizer = OptimizerKind::kAdamW;
    } else {
      throw FormatError("unknown optimizer: " + opt);
    }
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    const std::string sched = j.value("schedule", std::string("cosine"));
    if (sched == "cosine") {
      c.schedule = Schedule::kCosine;
    } else if (sched == "constant") {
      c.schedule = Schedule::kConstant;
    } else {
      throw FormatError("unknown schedule: " + sched);
    }
    c.min_lr_ratio = j.value("min_lr_ratio", c.min_lr_ratio);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.seed = j.value("seed", c.seed);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.eval_windows = j.value("eval_windows", c.eval_windows);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad train config: ") + e.what());
  }
  check_train_config(c);
  return c;
}

double scheduled_lr(const TrainConfig& c, std::size_t step) {
  if (c.warmup_steps > 0 && step <= c.warmup_steps) {
    return c.lr * static_cast<double>(step) / static_cast<double>(c.warmup_steps);
  }
  if (c.schedule == Schedule::kConstant) return c.lr;
  const std::size_t span = c.steps > c.warmup_steps + 1 ? c.steps - c.warmup_steps - 1 : 1;
  const double progress =
      std::min(1.0, static_cast<double>(step - 1 - std::min(step - 1, c.warmup_steps)) /
                        static_cast<double>(span));
  const double floor = c.min_lr_ratio * c.lr;
  return floor + 0.5 * (c.lr - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

void Optimizer::step(Checkpoint& params, const GradMap& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, grad] : grads) {
    std::vector<double>& w = params.at(name).data;
    const std::vector<double>& g = grad.data;
    if (cfg_.optimizer == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (cfg_.weight_decay > 0.0) w[i] -= lr * cfg_.weight_decay * w[i];
        w[i] -= lr * g[i];
      }
      continue;
    }
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(w.size(), 0.0);
      v.assign(w.size(), 0.0);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
      w[i] -= lr * (update + cfg_.weight_decay * w[i]);
    }
  }
}

double cross_entropy_lm(const Mat& logits, std::span<const Token> tokens) {
  if (tokens.size() < 2) throw ValidationError("cross-entropy needs at least 2 tokens");
  if (static_cast<std::size_t>(logits.rows()) != tokens.size()) {
    throw ValidationError("logits rows must equal token count");
  }
  const Mat logp = kernels::log_softmax_rows(logits);
  double total = 0.0;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= logits.cols()) {
      throw ValidationError("target id out of range");
    }
    total -= logp(static_cast<Eigen::Index>(i - 1), tokens[i]);
  }
  return total / static_cast<double>(tokens.size() - 1);
}

namespace {

std::vector<Token> joined(const DpoTokens& t, bool chosen) {
  if (t.prompt.empty()) throw ValidationError("DPO prompt is empty");
  const auto& resp = chosen ? t.chosen : t.rejected;
  if (resp.empty()) throw ValidationError("DPO response is empty");
  std::vector<Token> seq = t.prompt;
  seq.insert(seq.end(), resp.begin(), resp.end());
  return seq;
}

void check_dpo(const DpoConfig& cfg, std::span<const DpoTokens> batch) {
  if (batch.empty()) throw ValidationError("DPO batch is empty");
  if (!(cfg.beta > 0.0)) throw ValidationError("DPO beta must be positive");
  if (cfg.reference == nullptr) throw ValidationError("DPO needs a reference model");
  for (const auto& t : batch) {
    const std::size_t longest = t.prompt.size() + std::max(t.chosen.size(), t.rejected.size());
    if (longest > cfg.reference->max_seq_len()) {
      throw ValidationError("DPO triple exceeds max_seq_len");
    }
  }
}

struct RefLogps {
  double chosen;
  double rejected;
};

}  // namespace

double response_logprob(const RefModel& model, const DpoTokens& triple, bool chosen) {
  const auto seq = joined(triple, chosen);
  const auto lp = model.sequence_logprob(seq);
  double total = 0.0;
  for (std::size_t i = triple.prompt.size(); i < seq.size(); ++i) total += lp.per_token[i - 1];
  return total;
}

double dpo_loss(const RefModel& policy, const DpoConfig& cfg, std::span<const DpoTokens> batch) {
  check_dpo(cfg, batch);
  double total = 0.0;
  for (const auto& t : batch) {
    const double z = cfg.beta * ((response_logprob(policy, t, true) -
                                  response_logprob(*cfg.reference, t, true)) -
                                 (response_logprob(policy, t, false) -
                                  response_logprob(*cfg.reference, t, false)));
    total += kernels::softplus(-z);
  }
  return total / static_cast<double>(batch.size());
}

Var dpo_loss_var(Tape& tape, const ParamBinding& policy, const ModelConfig& config,
                 const DpoConfig& cfg, std::span<const DpoTokens> batch) {
  check_dpo(cfg, batch);
  std::vector<Var> terms;
  terms.reserve(batch.size());
  for (const auto& t : batch) {
    const RefLogps ref{response_logprob(*cfg.reference, t, true),
                       response_logprob(*cfg.reference, t, false)};
    const auto seq_w = joined(t, true);
    const auto seq_l = joined(t, false);
    Var lw = ops::span_logprob(lm_logits(tape, policy, config, seq_w, seq_w.size()), seq_w,
                               t.prompt.size());
    Var ll = ops::span_logprob(lm_logits(tape, policy, config, seq_l, seq_l.size()), seq_l,
                               t.prompt.size());
    Var z = ops::scale(ops::sub(ops::add_scalar(lw, -ref.chosen), ops::add_scalar(ll, -ref.rejected)),
                       cfg.beta);
    terms.push_back(ops::neg_log_sigmoid(z));
  }
  return ops::mean(terms);
}

Var lm_loss_var(Tape& tape, const ParamBinding& params, const ModelConfig& config,
                std::span<const Token> windows, std::size_t seq_len) {
  return ops::next_token_nll(lm_logits(tape, params, config, windows, seq_len), windows, seq_len);
}

TokenCorpus split_corpus(std::span<const Token> tokens, double eval_fraction) {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
    throw ValidationError("eval_fraction must lie in (0, 1)");
  }
  const auto n_eval = static_cast<std::size_t>(
      std::llround(eval_fraction * static_cast<double>(tokens.size())));
  const std::size_t cut = tokens.size() - n_eval;
  return {{tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(cut)},
          {tokens.begin() + static_cast<std::ptrdiff_t>(cut), tokens.end()}};
}

double eval_loss(const Checkpoint& ckpt, std::span<const Token> tokens, std::size_t seq_len,
                 std::size_t max_windows) {
  const std::size_t windows = std::min(max_windows, tokens.size() / seq_len);
  if (windows == 0) throw ValidationError("eval stream shorter than one window");
  constexpr std::size_t kChunk = 16;
  double total = 0.0;
  for (std::size_t w = 0; w < windows; w += kChunk) {
    const std::size_t n = std::min(kChunk, windows - w);
    const auto chunk = tokens.subspan(w * seq_len, n * seq_len);
    Tape tape;
    const auto params = bind_params(tape, ckpt, /*requires_grad=*/false);
    total += lm_loss_var(tape, params, ckpt.config, chunk, seq_len).value()(0, 0) *
             static_cast<double>(n);
  }
  return total / static_cast<double>(windows);
}

namespace {

void clip_gradients(GradMap& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& [_, g] : grads) {
    for (double v : g.data) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (auto& [_, g] : grads) {
    for (double& v : g.data) v *= s;
  }
}

}  // namespace

TrainResult train_lm(const RefModel& model, const TokenCorpus& corpus, const TrainConfig& cfg) {
  check_train_config(cfg);
  if (corpus.train.size() < cfg.batch_size * cfg.seq_len) {
    throw ValidationError("training corpus is shorter than one batch");
  }
  if (corpus.eval.size() < cfg.seq_len) {
    throw ValidationError("eval corpus is shorter than one window");
  }
  const ModelConfig& config = model.config();
  TrainResult out;
  out.checkpoint = model.checkpoint();
  Optimizer opt(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.train.size() - cfg.seq_len);
  auto evaluate = [&] {
    return eval_loss(out.checkpoint, corpus.eval, cfg.seq_len, cfg.eval_windows);
  };

  std::vector<Token> batch(cfg.batch_size * cfg.seq_len);
  double since_sum = 0.0;
  std::size_t since_n = 0;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const std::size_t start = pick(rng);
      std::copy_n(corpus.train.begin() + static_cast<std::ptrdiff_t>(start), cfg.seq_len,
                  batch.begin() + static_cast<std::ptrdiff_t>(b * cfg.seq_len));
    }
    Tape tape;
    const auto params = bind_params(tape, out.checkpoint);
    Var loss = lm_loss_var(tape, params, config, batch, cfg.seq_len);
    const double lv = loss.value()(0, 0);
    if (!std::isfinite(lv)) {
      out.diverged = true;
      break;
    }
    out.step_losses.push_back(lv);
    if (step == 1) out.curve.points.push_back({0, lv, evaluate()});
    GradMap grads = backward(tape, loss, params, out.checkpoint);
    clip_gradients(grads, cfg.grad_clip);
    opt.step(out.checkpoint, grads, scheduled_lr(cfg, step));
    since_sum += lv;
    ++since_n;
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      const double ev = evaluate();
      if (!std::isfinite(ev)) {
        out.diverged = true;
        break;
      }
      out.curve.points.push_back({step, since_sum / static_cast<double>(since_n), ev});
      since_sum = 0.0;
      since_n = 0;
    }
  }
  return out;
}

DpoTrainResult train_dpo(const RefModel& policy, const DpoConfig& dpo,
                         std::span<const DpoTokens> triples, const TrainConfig& cfg) {
  check_train_config(cfg);
  check_dpo(dpo, triples);
  DpoTrainResult out;
  out.checkpoint = policy.checkpoint();
  Optimizer opt(cfg);
  const ModelConfig& config = policy.config();
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    Tape tape;
    const auto params = bind_params(tape, out.checkpoint);
    Var loss = dpo_loss_var(tape, params, config, dpo, triples);
    const double lv = loss.value()(0, 0);
    if (!std::isfinite(lv)) {
      out.diverged = true;
      break;
    }
    // Margin from the current policy, before this step's update.
    const RefModel current(out.checkpoint, policy.max_seq_len(), /*strict=*/false);
    double margin = 0.0;
    for (const auto& t : triples) {
      margin += response_logprob(current, t, true) - response_logprob(current, t, false);
    }
    out.losses.push_back(lv);
    out.margins.push_back(margin / static_cast<double>(triples.size()));
    GradMap grads = backward(tape, loss, params, out.checkpoint);
    clip_gradients(grads, cfg.grad_clip);
    opt.step(out.checkpoint, grads, scheduled_lr(cfg, step));
  }
  return out;
}

json curve_to_json(const LossCurve& curve) {
  json arr = json::array();
  for (const auto& p : curve.points) {
    arr.push_back({{"step", p.step}, {"train_loss", p.train_loss}, {"eval_loss", p.eval_loss}});
  }
  return arr;
}

}  // namespace dustk
