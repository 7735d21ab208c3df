#include <algorithm>
#include <iostream>
#include <memory>

#include "cli/common.hpp"
#include "dustk/errors.hpp"
#include "dustk/fixture.hpp"
#include "dustk/merge.hpp"
#include "dustk/refmodel.hpp"
#include "dustk/surgery.hpp"

namespace dustk::cli {
namespace {

using nlohmann::json;

const char* kind_name(Violation::Kind k) {
  switch (k) {
    case Violation::Kind::kConfig: return "config";
    case Violation::Kind::kMissing: return "missing";
    case Violation::Kind::kUnexpected: return "unexpected";
    case Violation::Kind::kShape: return "shape";
    case Violation::Kind::kDataSize: return "data_size";
    case Violation::Kind::kNonFinite: return "non_finite";
  }
  return "unknown";
}

void add_init(CLI::App& app, Context& ctx) {
  struct Opts {
    std::string config, out, dtype = "f32";
    ModelConfig model;
    FixtureOptions fixture;
  };
  auto o = std::make_shared<Opts>();
  o->model.n_layers = 4;
  o->model.d_model = 32;
  o->model.n_heads = 4;
  o->model.n_kv_heads = 4;
  o->model.d_ff = 64;
  o->model.vocab_size = 256;
  auto* cmd = app.add_subcommand("init", "Write a randomly initialized checkpoint");
  cmd->add_option("--config", o->config, "Model config JSON (overrides shape flags)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--layers", o->model.n_layers, "Decoder layers")->capture_default_str();
  cmd->add_option("--d-model", o->model.d_model, "Hidden width")->capture_default_str();
  cmd->add_option("--heads", o->model.n_heads, "Attention heads")->capture_default_str();
  cmd->add_option("--kv-heads", o->model.n_kv_heads, "Key/value heads")->capture_default_str();
  cmd->add_option("--d-ff", o->model.d_ff, "MLP width")->capture_default_str();
  cmd->add_option("--vocab", o->model.vocab_size, "Vocabulary size")->capture_default_str();
  cmd->add_flag("--tied", o->model.tied_embeddings, "Tie output head to the embedding");
  cmd->add_option("--seed", o->fixture.seed, "RNG seed")->capture_default_str();
  cmd->add_option("--init-std", o->fixture.init_std, "Matrix init std")->capture_default_str();
  cmd->add_option("--dtype", o->dtype, "Stored dtype")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  cmd->add_option("--out", o->out, "Output checkpoint")->required();
  cmd->callback([o, &ctx] {
    if (!o->config.empty()) o->model = config_from_json(read_json(o->config));
    o->fixture.dtype = o->dtype == "f64" ? DType::kFloat64 : DType::kFloat32;
    const Checkpoint ck = random_checkpoint(o->model, o->fixture);
    save(ck, o->out);
    std::vector<std::string> inputs;
    if (!o->config.empty()) inputs.push_back(o->config);
    write_manifest(ctx, inputs, checkpoint_files(o->out), checkpoint_anchor(o->out));
  });
}

void add_inspect(CLI::App& app) {
  struct Opts {
    std::string in;
    OutputTarget out;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("inspect", "Summarize a checkpoint as JSON");
  cmd->add_option("--in", o->in, "Checkpoint")->required();
  o->out.add_to(*cmd);
  cmd->callback([o] {
    const Checkpoint ck = load(o->in, false);
    json tensors = json::array();
    for (const auto& [name, t] : ck.tensors) tensors.push_back({{"name", name}, {"shape", t.shape}});
    const json j = {{"config", config_to_json(ck.config)},
                    {"dtype", dtype_name(ck.dtype)},
                    {"params", count_params(ck)},
                    {"params_per_layer", params_per_layer(ck.config)},
                    {"tensors", tensors}};
    o->out.write(j.dump(2) + "\n");
  });
}

void add_validate(CLI::App& app) {
  struct Opts {
    std::string in;
    bool permissive = false;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("validate", "Check a checkpoint against its schema");
  cmd->add_option("--in", o->in, "Checkpoint")->required();
  cmd->add_flag("--allow-nonfinite", o->permissive, "Do not flag NaN/Inf values");
  cmd->callback([o] {
    const Checkpoint ck = load(o->in, false);
    const auto problems = validate(ck, {.check_finite = !o->permissive});
    json report = json::array();
    for (const auto& v : problems) {
      report.push_back({{"kind", kind_name(v.kind)}, {"tensor", v.tensor}, {"message", v.message}});
    }
    std::cout << report.dump(2) << '\n';
    if (!problems.empty()) {
      throw ValidationError(std::to_string(problems.size()) + " schema violation(s)");
    }
    log("ok: " + std::to_string(count_params(ck)) + " parameters");
  });
}

void add_scale(CLI::App& app, Context& ctx) {
  struct Opts {
    std::string in, out;
    std::optional<std::size_t> m;
    bool naive = false;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("scale", "Depthwise-scale a checkpoint");
  cmd->add_option("--in", o->in, "Base checkpoint")->required();
  cmd->add_option("--m", o->m, "Layers trimmed from each copy (default n/4)");
  cmd->add_flag("--naive", o->naive, "Stack two full copies (m = 0)");
  cmd->add_option("--out", o->out, "Output checkpoint")->required();
  cmd->callback([o, &ctx] {
    const Checkpoint base = load(o->in);
    const std::size_t n = base.config.n_layers;
    const std::size_t m = o->naive ? 0 : o->m.value_or(default_trim(n));
    const ScalePlan plan = plan_scale(n, m);
    const Checkpoint scaled = depthwise_scale(base, plan);
    save(scaled, o->out);
    json j = plan_to_json(plan);
    j["params_before"] = count_params(base);
    j["params_after"] = count_params(scaled);
    std::cout << j.dump() << '\n';
    write_manifest(ctx, checkpoint_files(o->in), checkpoint_files(o->out),
                   checkpoint_anchor(o->out));
  });
}

void add_seam(CLI::App& app) {
  struct Opts {
    std::string in;
    std::optional<std::size_t> n, m;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("seam", "Report the layer-index discontinuity of a scale plan");
  auto* in = cmd->add_option("--in", o->in, "Base checkpoint (supplies n)");
  auto* n = cmd->add_option("--n", o->n, "Base depth");
  in->excludes(n);
  cmd->add_option("--m", o->m, "Layers trimmed (default n/4)");
  cmd->callback([o] {
    std::size_t depth = 0;
    if (o->n) {
      depth = *o->n;
    } else if (!o->in.empty()) {
      depth = load(o->in, false).config.n_layers;
    } else {
      throw CLI::RequiredError("--in or --n");
    }
    const ScalePlan plan = plan_scale(depth, o->m.value_or(default_trim(depth)));
    json j = seam_to_json(seam_profile(plan));
    j["plan"] = plan_to_json(plan);
    j["naive_max_discontinuity"] = seam_profile(plan_scale(depth, 0)).max_discontinuity;
    std::cout << j.dump(2) << '\n';
  });
}

void add_merge(CLI::App& app, Context& ctx) {
  struct Opts {
    std::string config, mode, out;
    std::vector<std::string> inputs;
    std::vector<double> weights;
    std::optional<double> t;
    double parallel_eps = 1e-7;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("merge", "Merge checkpoints by weighted average or SLERP");
  cmd->add_option("--config", o->config, "Merge spec JSON {mode, inputs, weights | t}")
      ->check(CLI::ExistingFile);
  cmd->add_option("--mode", o->mode, "average or slerp")->check(CLI::IsMember({"average", "slerp"}));
  cmd->add_option("--weights", o->weights, "Averaging weights (sum to 1)");
  cmd->add_option("--t", o->t, "SLERP interpolation parameter")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--parallel-eps", o->parallel_eps, "SLERP linear-fallback angle")
      ->capture_default_str();
  cmd->add_option("inputs", o->inputs, "Source checkpoints");
  cmd->add_option("--out", o->out, "Output checkpoint")->required();
  cmd->callback([o, &ctx] {
    std::vector<std::string> manifest_inputs;
    if (!o->config.empty()) {
      const json spec = read_json(o->config);
      manifest_inputs.push_back(o->config);
      if (o->mode.empty()) o->mode = spec.value("mode", "");
      if (o->inputs.empty()) o->inputs = spec.value("inputs", std::vector<std::string>{});
      if (o->weights.empty()) o->weights = spec.value("weights", std::vector<double>{});
      if (!o->t && spec.contains("t")) o->t = spec.at("t").get<double>();
    }
    if (o->mode.empty()) throw CLI::RequiredError("--mode");
    std::vector<Checkpoint> sources;
    for (const auto& p : o->inputs) {
      sources.push_back(load(p));
      for (auto& f : checkpoint_files(p)) manifest_inputs.push_back(f);
    }
    Checkpoint merged;
    if (o->mode == "average") {
      if (o->weights.empty()) o->weights.assign(sources.size(), 1.0 / sources.size());
      if (o->weights.size() != sources.size()) {
        throw ValidationError("need one weight per input");
      }
      merged = merge_average(sources, o->weights);
    } else {
      if (sources.size() != 2) throw ValidationError("slerp needs exactly two inputs");
      if (!o->t) throw CLI::RequiredError("--t");
      if (!(*o->t >= 0.0 && *o->t <= 1.0)) throw CLI::ValidationError("--t", "must lie in [0, 1]");
      merged = merge_slerp(sources[0], sources[1], *o->t, {.parallel_eps = o->parallel_eps});
    }
    save(merged, o->out);
    write_manifest(ctx, manifest_inputs, checkpoint_files(o->out), checkpoint_anchor(o->out));
  });
}

std::vector<std::vector<Token>> read_token_rows(const std::string& path) {
  std::vector<std::vector<Token>> rows;
  for (const auto& j : read_jsonl(path)) {
    if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array()) {
      throw FormatError("each line needs {\"tokens\": [...]}");
    }
    rows.push_back(j["tokens"].get<std::vector<Token>>());
  }
  return rows;
}

void add_eval(CLI::App& app, Context& ctx) {
  struct Opts {
    std::string in, mode = "logprob", tokens, reference;
    double k = 0.2;
    std::optional<double> threshold;
    std::size_t max_seq_len = RefModel::kDefaultMaxSeqLen;
    OutputTarget out;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("eval", "Score token sequences with a checkpoint");
  cmd->add_option("--in", o->in, "Checkpoint")->required();
  cmd->add_option("--mode", o->mode, "logprob, min-k or hidden-diff")
      ->check(CLI::IsMember({"logprob", "min-k", "hidden-diff"}))
      ->capture_default_str();
  cmd->add_option("--tokens", o->tokens, "JSONL of {\"tokens\": [...]}")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--k", o->k, "Fraction of lowest tokens for min-k")
      ->check(CLI::Range(1e-12, 1.0))
      ->capture_default_str();
  cmd->add_option("--reference", o->reference,
                  "Second checkpoint (min-k comparison, required for hidden-diff)");
  cmd->add_option("--threshold", o->threshold,
                  "min-k with --reference: flag sequences whose delta is below this");
  cmd->add_option("--max-seq-len", o->max_seq_len, "Longest accepted sequence")
      ->capture_default_str();
  o->out.add_to(*cmd);
  cmd->callback([o, &ctx] {
    const RefModel model(load(o->in), o->max_seq_len);
    std::optional<RefModel> reference;
    if (!o->reference.empty()) reference.emplace(load(o->reference), o->max_seq_len);
    if (o->mode == "hidden-diff" && !reference) throw CLI::RequiredError("--reference");
    if (o->threshold && !(o->mode == "min-k" && reference)) {
      throw CLI::ValidationError("--threshold", "needs --mode min-k and --reference");
    }
    std::vector<json> rows;
    std::size_t below = 0;
    const auto seqs = read_token_rows(o->tokens);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const auto& s = seqs[i];
      json row = {{"index", i}};
      if (o->mode == "logprob") {
        const auto lp = model.sequence_logprob(s);
        row["logprob"] = lp.total;
        row["per_token"] = lp.per_token;
      } else if (o->mode == "min-k") {
        row["k"] = o->k;
        row["min_k"] = model.min_k_prob(s, o->k);
        if (reference) {
          row["reference_min_k"] = reference->min_k_prob(s, o->k);
          const double delta = row["min_k"].get<double>() - row["reference_min_k"].get<double>();
          row["delta"] = delta;
          if (o->threshold) {
            row["below_threshold"] = delta < *o->threshold;
            below += delta < *o->threshold ? 1 : 0;
          }
        }
      } else {
        const auto a = model.hidden_states(s);
        const auto b = reference->hidden_states(s);
        std::vector<double> diff;
        for (std::size_t k = 0; k < std::min(a.states.size(), b.states.size()); ++k) {
          diff.push_back((a.states[k] - b.states[k]).cwiseAbs().maxCoeff());
        }
        row["max_abs_diff"] = diff;
      }
      rows.push_back(std::move(row));
    }
    o->out.write(to_jsonl(rows));
    if (o->threshold && !seqs.empty()) {
      log("below threshold: " + std::to_string(below) + "/" + std::to_string(seqs.size()) + " (" +
          std::to_string(100.0 * static_cast<double>(below) / static_cast<double>(seqs.size())) +
          "%)");
    }
    auto inputs = checkpoint_files(o->in);
    if (reference) {
      for (auto& f : checkpoint_files(o->reference)) inputs.push_back(f);
    }
    inputs.push_back(o->tokens);
    write_manifest(ctx, inputs, o->out.files(), o->out.files().empty() ? "" : o->out.path);
  });
}

}  // namespace

void add_model_commands(CLI::App& app, Context& ctx) {
  add_init(app, ctx);
  add_inspect(app);
  add_validate(app);
  add_scale(app, ctx);
  add_seam(app);
  add_merge(app, ctx);
  add_eval(app, ctx);
}

}  // namespace dustk::cli
