#include "dustk/recovery.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "dustk/errors.hpp"
#include "dustk/fixture.hpp"
#include "dustk/surgery.hpp"

namespace dustk {

using nlohmann::json;

json experiment_config_to_json(const ExperimentConfig& c) {
  json model = config_to_json(c.model);
  model.erase("vocab_size");
  return {{"model", model},
          {"m", c.m},
          {"init_std", c.init_std},
          {"base_train", train_config_to_json(c.base_train)},
          {"continued_train", train_config_to_json(c.continued_train)},
          {"seeds", c.seeds},
          {"recovery_tolerance", c.recovery_tolerance},
          {"eval_fraction", c.eval_fraction},
          {"corpus_path", c.corpus_path},
          {"corpus_seed", c.corpus_seed},
          {"corpus_chars", c.corpus_chars}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("experiment config must be a JSON object");
  static const std::set<std::string> kKeys = {
      "model", "m", "init_std", "base_train", "continued_train", "seeds", "recovery_tolerance",
      "eval_fraction", "corpus_path", "corpus_seed", "corpus_chars"};
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) throw FormatError("unknown experiment field: " + key);
  }
  ExperimentConfig c;
  try {
    json model = j.at("model");
    model["vocab_size"] = std::size_t{1};  // placeholder, replaced by the corpus vocabulary
    c.model = config_from_json(model);
    c.m = j.value("m", c.m);
    c.init_std = j.value("init_std", c.init_std);
    if (j.contains("base_train")) c.base_train = train_config_from_json(j.at("base_train"));
    if (j.contains("continued_train")) {
      c.continued_train = train_config_from_json(j.at("continued_train"));
    }
    c.seeds = j.value("seeds", c.seeds);
    c.recovery_tolerance = j.value("recovery_tolerance", c.recovery_tolerance);
    c.eval_fraction = j.value("eval_fraction", c.eval_fraction);
    c.corpus_path = j.value("corpus_path", c.corpus_path);
    c.corpus_seed = j.value("corpus_seed", c.corpus_seed);
    c.corpus_chars = j.value("corpus_chars", c.corpus_chars);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad experiment config: ") + e.what());
  }
  if (c.seeds.empty()) throw ValidationError("experiment needs at least one seed");
  return c;
}

std::size_t RecoveryReport::seeds_scaled_above_base() const {
  std::size_t n = 0;
  for (const auto& s : seeds) n += s.scaled_loss0 > s.base_loss ? 1 : 0;
  return n;
}

std::size_t RecoveryReport::seeds_dus_recovered() const {
  std::size_t n = 0;
  for (const auto& s : seeds) n += (!s.dus.diverged && s.dus.recovered_step) ? 1 : 0;
  return n;
}

namespace {

std::optional<std::size_t> first_recovery(const LossCurve& curve, double bound) {
  for (const auto& p : curve.points) {
    if (p.eval_loss <= bound) return p.step;
  }
  return std::nullopt;
}

}  // namespace

ExperimentCorpus prepare_corpus(ExperimentConfig& cfg) {
  std::string text;
  if (cfg.corpus_path.empty()) {
    text = synthetic_corpus(cfg.corpus_seed, cfg.corpus_chars);
  } else {
    std::ifstream in(cfg.corpus_path, std::ios::binary);
    if (!in) throw FormatError("cannot read corpus " + cfg.corpus_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  ExperimentCorpus out{CharVocab::from_text(text), {}};
  out.tokens = out.vocab.encode(text);
  cfg.model.vocab_size = out.vocab.size();
  return out;
}

RecoveryReport recovery_experiment(std::span<const Token> corpus, const ExperimentConfig& cfg) {
  const ScalePlan plan = plan_scale(cfg.model.n_layers, cfg.m);
  const TokenCorpus split = split_corpus(corpus, cfg.eval_fraction);
  RecoveryReport report;
  report.config = cfg;
  for (std::uint64_t seed : cfg.seeds) {
    SeedReport sr;
    sr.seed = seed;
    FixtureOptions init;
    init.seed = seed;
    init.init_std = cfg.init_std;
    init.dtype = DType::kFloat64;
    const RefModel fresh(random_checkpoint(cfg.model, init), cfg.base_train.seq_len);

    TrainConfig base_cfg = cfg.base_train;
    base_cfg.seed = seed;
    TrainResult base = train_lm(fresh, split, base_cfg);
    sr.base = {"base", base.curve, base.diverged, std::nullopt};
    sr.base_loss = base.curve.points.empty() ? 0.0 : base.curve.points.back().eval_loss;
    const double bound = (1.0 + cfg.recovery_tolerance) * sr.base_loss;

    TrainConfig cont = cfg.continued_train;
    cont.seed = seed;
    auto run_arm = [&](const std::string& name, Checkpoint scaled, double& loss0) {
      loss0 = eval_loss(scaled, split.eval, cont.seq_len, cont.eval_windows);
      const RefModel model(std::move(scaled), cont.seq_len);
      TrainResult r = train_lm(model, split, cont);
      ArmResult arm{name, r.curve, r.diverged, std::nullopt};
      if (!base.diverged) arm.recovered_step = first_recovery(r.curve, bound);
      return arm;
    };
    sr.dus = run_arm("dus", depthwise_scale(base.checkpoint, plan), sr.scaled_loss0);
    sr.naive = run_arm("naive", naive_duplicate(base.checkpoint), sr.naive_loss0);
    report.seeds.push_back(std::move(sr));
  }
  return report;
}

json report_to_json(const RecoveryReport& report) {
  json seeds = json::array();
  auto arm_json = [](const ArmResult& a) {
    json j = {{"arm", a.arm}, {"diverged", a.diverged}, {"curve", curve_to_json(a.curve)}};
    j["recovered_step"] = a.recovered_step ? json(*a.recovered_step) : json(nullptr);
    return j;
  };
  for (const auto& s : report.seeds) {
    seeds.push_back({{"seed", s.seed},
                     {"L_base", s.base_loss},
                     {"L_scaled_0", s.scaled_loss0},
                     {"L_naive_0", s.naive_loss0},
                     {"arms", {arm_json(s.base), arm_json(s.dus), arm_json(s.naive)}}});
  }
  return {{"config", experiment_config_to_json(report.config)},
          {"plan", plan_to_json(plan_scale(report.config.model.n_layers, report.config.m))},
          {"vocab_size", report.config.model.vocab_size},
          {"seeds", seeds},
          {"summary",
           {{"n_seeds", report.seeds.size()},
            {"scaled_above_base", report.seeds_scaled_above_base()},
            {"dus_recovered", report.seeds_dus_recovered()}}}};
}

std::string curves_csv(const RecoveryReport& report) {
  std::string out = "arm,seed,step,train_loss,eval_loss\n";
  char line[160];
  for (const auto& s : report.seeds) {
    for (const ArmResult* arm : {&s.base, &s.dus, &s.naive}) {
      for (const auto& p : arm->curve.points) {
        std::snprintf(line, sizeof(line), "%s,%llu,%zu,%.17g,%.17g\n", arm->arm.c_str(),
                      static_cast<unsigned long long>(s.seed), p.step, p.train_loss,
                      p.eval_loss);
        out += line;
      }
    }
  }
  return out;
}

}  // namespace dustk
