#include <filesystem>
#include <iostream>
#include <memory>

#include "cli/common.hpp"
#include "dustk/corpus.hpp"
#include "dustk/errors.hpp"
#include "dustk/recovery.hpp"
#include "dustk/train.hpp"

namespace dustk::cli {
namespace {

using nlohmann::json;

// Flags that override fields of a --config training file.
struct TrainOverrides {
  std::optional<std::size_t> steps, batch_size, seq_len;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--steps", steps, "Optimizer steps");
    cmd.add_option("--batch-size", batch_size, "Sequences per step");
    cmd.add_option("--seq-len", seq_len, "Tokens per sequence");
    cmd.add_option("--lr", lr, "Peak learning rate");
    cmd.add_option("--seed", seed, "Batch sampling seed");
  }
  TrainConfig apply(TrainConfig c) const {
    if (steps) c.steps = *steps;
    if (batch_size) c.batch_size = *batch_size;
    if (seq_len) c.seq_len = *seq_len;
    if (lr) c.lr = *lr;
    if (seed) c.seed = *seed;
    return c;
  }
};

void add_train(CLI::App& app, Context& ctx) {
  struct Opts {
    std::string in, corpus, config, out, curve_out, tokenizer = "chars";
    double eval_fraction = 0.1;
    TrainOverrides overrides;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("train", "Continue language-model training on a text corpus");
  cmd->add_option("--in", o->in, "Starting checkpoint")->required();
  cmd->add_option("--corpus", o->corpus, "Training text")->required()->check(CLI::ExistingFile);
  cmd->add_option("--config", o->config, "Training config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--tokenizer", o->tokenizer, "chars (sorted distinct bytes) or bytes")
      ->check(CLI::IsMember({"chars", "bytes"}))
      ->capture_default_str();
  cmd->add_option("--eval-fraction", o->eval_fraction, "Held-out tail of the corpus")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  o->overrides.add_to(*cmd);
  cmd->add_option("--out", o->out, "Output checkpoint")->required();
  cmd->add_option("--curve-out", o->curve_out, "Loss curve JSON (default <out>.curve.json)");
  cmd->callback([o, &ctx] {
    TrainConfig cfg;
    if (!o->config.empty()) cfg = train_config_from_json(read_json(o->config));
    cfg = o->overrides.apply(cfg);
    const std::string text = read_file(o->corpus);
    const CharVocab vocab = o->tokenizer == "bytes" ? CharVocab::bytes() : CharVocab::from_text(text);
    const RefModel model(load(o->in), std::max(cfg.seq_len, RefModel::kDefaultMaxSeqLen));
    if (vocab.size() > model.config().vocab_size) {
      throw ValidationError("corpus needs " + std::to_string(vocab.size()) +
                            " token ids but the model vocabulary has " +
                            std::to_string(model.config().vocab_size));
    }
    const auto split = split_corpus(vocab.encode(text), o->eval_fraction);
    const TrainResult r = train_lm(model, split, cfg);
    for (const auto& p : r.curve.points) {
      log("step " + std::to_string(p.step) + " train " + std::to_string(p.train_loss) +
          " eval " + std::to_string(p.eval_loss));
    }
    save(r.checkpoint, o->out);
    const std::string curve_path =
        o->curve_out.empty() ? checkpoint_anchor(o->out) + ".curve.json" : o->curve_out;
    std::string symbols(vocab.symbols().begin(), vocab.symbols().end());
    const json curve = {{"config", train_config_to_json(cfg)},
                        {"tokenizer", o->tokenizer},
                        {"vocab", o->tokenizer == "chars" ? json(symbols) : json(nullptr)},
                        {"diverged", r.diverged},
                        {"curve", curve_to_json(r.curve)}};
    write_file(curve_path, curve.dump(2) + "\n");
    auto inputs = checkpoint_files(o->in);
    inputs.push_back(o->corpus);
    if (!o->config.empty()) inputs.push_back(o->config);
    auto outputs = checkpoint_files(o->out);
    outputs.push_back(curve_path);
    write_manifest(ctx, inputs, outputs, checkpoint_anchor(o->out));
    if (r.diverged) throw NumericError("training diverged; partial curve written");
  });
}

std::vector<DpoTokens> read_dpo_tokens(const std::string& path) {
  std::vector<DpoTokens> out;
  for (const auto& j : read_jsonl(path)) {
    try {
      out.push_back({j.at("prompt").get<std::vector<Token>>(),
                     j.at("chosen").get<std::vector<Token>>(),
                     j.at("rejected").get<std::vector<Token>>()});
    } catch (const json::exception& e) {
      throw FormatError(path + ": each line needs token arrays prompt, chosen, rejected (" +
                        e.what() + ")");
    }
  }
  return out;
}

void add_dpo(CLI::App& app, Context& ctx) {
  struct Opts {
    std::string in, reference, triples, config, out;
    double beta = 0.1;
    TrainOverrides overrides;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("dpo", "Preference-tune a policy with the DPO objective");
  cmd->add_option("--in", o->in, "Policy checkpoint")->required();
  cmd->add_option("--reference", o->reference, "Frozen reference (default: --in)");
  cmd->add_option("--triples", o->triples, "JSONL of token-id {prompt, chosen, rejected}")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--config", o->config, "Training config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--beta", o->beta, "DPO temperature")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  o->overrides.add_to(*cmd);
  cmd->add_option("--out", o->out, "Output checkpoint")->required();
  cmd->callback([o, &ctx] {
    TrainConfig cfg;
    if (!o->config.empty()) cfg = train_config_from_json(read_json(o->config));
    cfg = o->overrides.apply(cfg);
    const RefModel policy(load(o->in));
    const std::string ref_path = o->reference.empty() ? o->in : o->reference;
    const RefModel reference(load(ref_path));
    const auto triples = read_dpo_tokens(o->triples);
    const auto r = train_dpo(policy, {.beta = o->beta, .reference = &reference}, triples, cfg);
    save(r.checkpoint, o->out);
    const std::string log_path = checkpoint_anchor(o->out) + ".dpo.json";
    write_file(log_path, json({{"beta", o->beta},
                               {"config", train_config_to_json(cfg)},
                               {"losses", r.losses},
                               {"margins", r.margins},
                               {"diverged", r.diverged}})
                             .dump(2) +
                             "\n");
    if (!r.losses.empty()) {
      log("loss " + std::to_string(r.losses.front()) + " -> " + std::to_string(r.losses.back()));
    }
    auto inputs = checkpoint_files(o->in);
    if (!o->reference.empty()) {
      for (auto& f : checkpoint_files(o->reference)) inputs.push_back(f);
    }
    inputs.push_back(o->triples);
    auto outputs = checkpoint_files(o->out);
    outputs.push_back(log_path);
    write_manifest(ctx, inputs, outputs, checkpoint_anchor(o->out));
    if (r.diverged) throw NumericError("training diverged");
  });
}

void add_recover(CLI::App& app, Context& ctx) {
  struct Opts {
    std::string config, out_dir;
    std::vector<std::uint64_t> seeds;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand(
      "recover", "Base-train, scale (DUS and naive) and continue training; report recovery");
  cmd->add_option("--config", o->config, "Experiment config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seeds", o->seeds, "Override the config's seed list");
  cmd->add_option("--out-dir", o->out_dir, "Directory for report.json and curves.csv")
      ->required();
  cmd->callback([o, &ctx] {
    ExperimentConfig cfg = experiment_config_from_json(read_json(o->config));
    if (!o->seeds.empty()) cfg.seeds = o->seeds;
    const ExperimentCorpus corpus = prepare_corpus(cfg);
    log("corpus: " + std::to_string(corpus.tokens.size()) + " tokens, vocab " +
        std::to_string(cfg.model.vocab_size));
    const RecoveryReport report = recovery_experiment(corpus.tokens, cfg);
    for (const auto& s : report.seeds) {
      log("seed " + std::to_string(s.seed) + ": L_base " + std::to_string(s.base_loss) +
          " L_scaled_0 " + std::to_string(s.scaled_loss0) + " L_naive_0 " +
          std::to_string(s.naive_loss0) + " dus recovered at " +
          (s.dus.recovered_step ? std::to_string(*s.dus.recovered_step) : "never"));
    }
    const std::filesystem::path dir(o->out_dir);
    const auto report_path = (dir / "report.json").string();
    const auto csv_path = (dir / "curves.csv").string();
    write_file(report_path, report_to_json(report).dump(2) + "\n");
    write_file(csv_path, curves_csv(report));
    std::vector<std::string> inputs{o->config};
    if (!cfg.corpus_path.empty()) inputs.push_back(cfg.corpus_path);
    write_manifest(ctx, inputs, {report_path, csv_path}, (dir / "report").string());
    std::cout << report_to_json(report)["summary"].dump() << '\n';
  });
}

}  // namespace

void add_train_commands(CLI::App& app, Context& ctx) {
  add_train(app, ctx);
  add_dpo(app, ctx);
  add_recover(app, ctx);
}

}  // namespace dustk::cli
