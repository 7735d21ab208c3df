// Acceptance suite: one PASS/FAIL line per criterion.
//   dustk_acceptance [criterion numbers...] [--config recovery.json] [--out-dir DIR]
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dustk/ckptio.hpp"
#include "dustk/datapipe.hpp"
#include "dustk/fixture.hpp"
#include "dustk/merge.hpp"
#include "dustk/recovery.hpp"
#include "dustk/refmodel.hpp"
#include "dustk/report.hpp"
#include "dustk/surgery.hpp"
#include "dustk/train.hpp"
#include "gradcheck.hpp"

namespace dustk {
namespace {

namespace fs = std::filesystem;

// Tolerances and budgets.
constexpr double kPrefixTol = 1e-6;
constexpr double kSeamDivergence = 1e-3;
constexpr double kNormTol = 1e-6;
constexpr double kSpanTol = 1e-9;
constexpr double kSymmetryTol = 1e-9;
constexpr double kSelfMergeTol = 1e-12;
constexpr double kGradTol = 1e-4;
constexpr double kLn2Tol = 1e-9;
constexpr std::size_t kSeedsRequired = 4;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "FAILED " + what;
    }
  }
  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

struct Options {
  fs::path recovery_config = DUSTK_SOURCE_DIR "/configs/recovery_default.json";
  fs::path out_dir = "acceptance_out";
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

ModelConfig tiny(std::size_t n_layers) {
  ModelConfig c;
  c.n_layers = n_layers;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_kv_heads = 2;
  c.d_ff = 16;
  c.vocab_size = 32;
  return c;
}

Checkpoint generic(const ModelConfig& c, std::uint64_t seed) {
  return random_checkpoint(c, {.seed = seed, .init_std = 0.4, .norm_jitter = 0.2,
                               .dtype = DType::kFloat64});
}

Outcome scaling_arithmetic(const Options&) {
  Outcome o;
  const ScalePlan p = plan_scale(32, 8);
  std::vector<std::size_t> expected;
  for (std::size_t i = 0; i < 24; ++i) expected.push_back(i);
  for (std::size_t i = 8; i < 32; ++i) expected.push_back(i);
  o.require(p.s == 48, "s == 48");
  o.require(p.origin == expected, "origin == [0..23] ++ [8..31]");
  const Checkpoint base = random_checkpoint(tiny(32), {.seed = 1});
  const Checkpoint scaled = depthwise_scale(base, p);
  const std::size_t gain = count_params(scaled) - count_params(base);
  o.require(gain == 16 * params_per_layer(base.config), "gain == 16 layer blocks");
  o.require(scaled.config.n_layers == 48, "scaled depth 48");
  o.note("s=" + std::to_string(p.s) + ", params " + std::to_string(count_params(base)) + " -> " +
         std::to_string(count_params(scaled)) + " (+16 x " +
         std::to_string(params_per_layer(base.config)) + ")");
  return o;
}

Outcome seam_reduction(const Options&) {
  Outcome o;
  const auto dus = seam_profile(plan_scale(32, 8)).max_discontinuity;
  const auto naive = seam_profile(plan_scale(32, 0)).max_discontinuity;
  o.require(dus == 16, "max_discontinuity(32,8) == 16");
  o.require(naive == 32, "max_discontinuity(32,0) == 32");
  std::size_t checked = 0, violations = 0;
  for (std::size_t n = 3; n <= 64; ++n) {
    const auto base = seam_profile(plan_scale(n, 0)).max_discontinuity;
    for (std::size_t m = 1; m + 2 <= n; ++m) {
      ++checked;
      if (!(seam_profile(plan_scale(n, m)).max_discontinuity < base)) ++violations;
    }
  }
  o.require(violations == 0, "strict reduction for all 1 <= m <= n-2, n <= 64");
  o.note("dus=" + std::to_string(dus) + " naive=" + std::to_string(naive) + ", " +
         std::to_string(checked) + " (n,m) pairs enumerated");
  return o;
}

Outcome prefix_equivalence(const Options&) {
  Outcome o;
  std::mt19937_64 rng(20240);
  std::uniform_int_distribution<std::size_t> depth(4, 12), len(2, 24);
  std::uniform_int_distribution<Token> tok(0, 31);
  double worst_prefix = 0.0, weakest_seam = 1e300;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = depth(rng);
    const std::size_t m = default_trim(n);
    const Checkpoint base = generic(tiny(n), 500 + trial);
    std::vector<Token> prompt(len(rng));
    for (auto& t : prompt) t = tok(rng);
    const auto a = RefModel(base).hidden_states(prompt);
    const auto b = RefModel(depthwise_scale(base, plan_scale(n, m))).hidden_states(prompt);
    for (std::size_t k = 0; k <= n - m; ++k) {
      worst_prefix = std::max(worst_prefix, (a.states[k] - b.states[k]).cwiseAbs().maxCoeff());
    }
    weakest_seam = std::min(
        weakest_seam, (a.states[n - m + 1] - b.states[n - m + 1]).cwiseAbs().maxCoeff());
  }
  o.require(worst_prefix <= kPrefixTol, "prefix states within 1e-6");
  o.require(weakest_seam > kSeamDivergence, "divergence > 1e-3 after the seam");
  o.note("20 fixtures, max prefix diff " + fmt(worst_prefix) + ", min post-seam diff " +
         fmt(weakest_seam));
  return o;
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double span_residual(std::span<const double> u, std::span<const double> v,
                     std::span<const double> r) {
  // Orthonormal basis of span{u, v} by Gram-Schmidt.
  std::vector<double> e1(u.begin(), u.end()), e2(v.begin(), v.end());
  const double n1 = norm(e1);
  for (double& x : e1) x /= n1;
  double d = 0.0;
  for (std::size_t i = 0; i < e1.size(); ++i) d += e1[i] * e2[i];
  for (std::size_t i = 0; i < e1.size(); ++i) e2[i] -= d * e1[i];
  const double n2 = norm(e2);
  for (double& x : e2) x /= n2;
  double c1 = 0.0, c2 = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    c1 += r[i] * e1[i];
    c2 += r[i] * e2[i];
  }
  double res = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double e = r[i] - c1 * e1[i] - c2 * e2[i];
    res += e * e;
  }
  return std::sqrt(res);
}

Outcome merge_identities(const Options&) {
  Outcome o;
  double self_err = 0.0, endpoint_err = 0.0, sym_err = 0.0, norm_err = 0.0, span_err = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss;

    const Checkpoint x = generic(tiny(2), seed);
    const double a = unit(rng);
    const Checkpoint pair[] = {x, x};
    const double w[] = {a, 1.0 - a};
    const Checkpoint merged = merge_average(pair, w);
    for (const auto& [name, t] : merged.tensors) {
      for (std::size_t i = 0; i < t.data.size(); ++i) {
        self_err = std::max(self_err, std::abs(t.data[i] - x.at(name).data[i]));
      }
    }

    std::vector<double> u(64), v(64);
    for (double& e : u) e = gauss(rng);
    for (double& e : v) e = gauss(rng);
    const double nu = norm(u), nv = norm(v);
    for (double& e : u) e /= nu;
    for (double& e : v) e /= nv;
    const auto r0 = slerp_vec(u, v, 0.0);
    const auto r1 = slerp_vec(u, v, 1.0);
    for (std::size_t i = 0; i < u.size(); ++i) {
      endpoint_err = std::max({endpoint_err, std::abs(r0[i] - u[i]), std::abs(r1[i] - v[i])});
    }
    for (int k = 0; k < 5; ++k) {
      const double t = unit(rng);
      const auto r = slerp_vec(u, v, t);
      const auto back = slerp_vec(v, u, 1.0 - t);
      for (std::size_t i = 0; i < r.size(); ++i) sym_err = std::max(sym_err, std::abs(r[i] - back[i]));
      norm_err = std::max(norm_err, std::abs(norm(r) - 1.0));
      span_err = std::max(span_err, span_residual(u, v, r));
    }
  }
  o.require(self_err <= kSelfMergeTol, "average self-merge identity");
  o.require(endpoint_err == 0.0, "slerp endpoints exact");
  o.require(sym_err <= kSymmetryTol, "slerp symmetry within 1e-9");
  o.require(norm_err <= kNormTol, "slerp norm within 1e-6");
  o.require(span_err <= kSpanTol, "slerp span residual within 1e-9");
  o.note("100 seeds: self " + fmt(self_err) + ", symmetry " + fmt(sym_err) + ", norm " +
         fmt(norm_err) + ", span " + fmt(span_err));
  return o;
}

Outcome gradient_oracle(const Options&) {
  Outcome o;
  double worst = 0.0;
  std::string worst_name;
  auto track = [&](const std::string& name, double e) {
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
    o.require(e < kGradTol, name);
  };
  std::size_t n_ops = 0;
  for (const auto& c : testing::all_op_gradient_cases()) {
    ++n_ops;
    for (double e : c.errors) track(c.name, e);
  }

  ModelConfig micro;
  micro.n_layers = 1;
  micro.d_model = 4;
  micro.n_heads = 2;
  micro.n_kv_heads = 2;
  micro.d_ff = 6;
  micro.vocab_size = 7;
  const Checkpoint ck = generic(micro, 17);
  const std::vector<Token> windows{0, 3, 6, 1, 5, 2, 2, 4, 6, 0};
  for (const auto& [name, e] : testing::model_gradient_errors(
           ck, [&](Tape& t, const ParamBinding& p) { return lm_loss_var(t, p, micro, windows, 5); })) {
    track("lm:" + name, e);
  }
  const RefModel reference(generic(micro, 20));
  const DpoConfig dpo{.beta = 0.5, .reference = &reference};
  const std::vector<DpoTokens> batch{{{1, 2}, {3, 4, 5}, {6, 0}}, {{4}, {1}, {2, 2}}};
  for (const auto& [name, e] : testing::model_gradient_errors(
           ck, [&](Tape& t, const ParamBinding& p) { return dpo_loss_var(t, p, micro, dpo, batch); })) {
    track("dpo:" + name, e);
  }

  const RefModel same(ck);
  const DpoConfig self{.beta = 0.1, .reference = &same};
  const double ln2_err = std::abs(dpo_loss(same, self, batch) - std::numbers::ln2);
  o.require(ln2_err <= kLn2Tol, "dpo(policy == reference) == ln 2");
  o.note(std::to_string(n_ops) + " op checks + LM + DPO, worst rel err " + fmt(worst) + " (" +
         worst_name + "), |dpo - ln2| = " + fmt(ln2_err));
  return o;
}

Outcome recovery(const Options& opt) {
  Outcome o;
  std::ifstream in(opt.recovery_config);
  if (!in) {
    o.require(false, "read " + opt.recovery_config.string());
    return o;
  }
  ExperimentConfig cfg = experiment_config_from_json(nlohmann::json::parse(in));
  const ExperimentCorpus corpus = prepare_corpus(cfg);
  const RecoveryReport report = recovery_experiment(corpus.tokens, cfg);
  fs::create_directories(opt.out_dir);
  std::ofstream(opt.out_dir / "report.json") << report_to_json(report).dump(2) << '\n';
  std::ofstream(opt.out_dir / "curves.csv") << curves_csv(report);

  const std::size_t above = report.seeds_scaled_above_base();
  const std::size_t recovered = report.seeds_dus_recovered();
  o.require(report.seeds.size() == 5, "5 seeds");
  o.require(above >= kSeedsRequired, "L_scaled_0 > L_base in >= 4/5 seeds");
  o.require(recovered >= kSeedsRequired, "DUS within 5% of L_base within budget in >= 4/5 seeds");
  std::string per_seed;
  for (const auto& s : report.seeds) {
    per_seed += " [seed " + std::to_string(s.seed) + ": base " + fmt(s.base_loss) + ", dus0 " +
                fmt(s.scaled_loss0) + ", naive0 " + fmt(s.naive_loss0) + ", recovered@" +
                (s.dus.recovered_step ? std::to_string(*s.dus.recovered_step) : "none") + "]";
  }
  o.note("scaled above base " + std::to_string(above) + "/5, recovered " +
         std::to_string(recovered) + "/5;" + per_seed);
  return o;
}

Outcome h6(const Options&) {
  Outcome o;
  const double solar[] = {71.08, 88.16, 66.21, 71.43, 83.58, 64.75};
  const double mistral[] = {59.98, 83.31, 64.16, 42.15, 78.37, 37.83};
  const std::string a = format_score(h6_average(solar));
  const std::string b = format_score(h6_average(mistral));
  o.require(a == "74.20", "74.20");
  o.require(b == "60.97", "60.97");
  o.note(a + ", " + b);
  return o;
}

Outcome decontamination(const Options&) {
  Outcome o;
  std::vector<data::InstructionRecord> manifest;
  std::size_t i = 0;
  for (const auto& name : data::benchmark_task_names()) {
    manifest.push_back({"listed " + std::to_string(i), std::nullopt, "x", name});
    manifest.push_back({"decoy " + std::to_string(i++), std::nullopt, "x", name + "_v2"});
  }
  const auto filtered = data::filter_contaminated(manifest, data::benchmark_task_names());
  bool only_decoys = true;
  for (const auto& r : filtered.kept) only_decoys &= r.instruction.starts_with("decoy");
  o.require(filtered.dropped == 10 && filtered.kept.size() == 10 && only_decoys,
            "exactly the 10 listed tasks dropped");

  // Manifest stub: one id per line.
  std::vector<std::uint32_t> stub(2'910'000);
  for (std::uint32_t k = 0; k < stub.size(); ++k) stub[k] = k;
  const auto sample = data::subsample<std::uint32_t>(stub, 100'000, 42);
  o.require(sample.size() == 100'000, "subsample keeps 100,000");
  o.require(std::is_sorted(sample.begin(), sample.end()) &&
                std::adjacent_find(sample.begin(), sample.end()) == sample.end(),
            "subsample order preserved, no repeats");

  std::vector<data::MathRephrasePair> pairs;
  for (int k = 0; k < 50; ++k) {
    const std::string s = std::to_string(k);
    pairs.push_back({"Q" + s, "A" + s, "Q'" + s, "A'" + s});
  }
  const auto synth = data::synth_dpo_tuples(pairs);
  bool mapped = synth.triples.size() == pairs.size() && synth.skipped == 0;
  for (std::size_t k = 0; mapped && k < pairs.size(); ++k) {
    mapped = synth.triples[k] == data::DpoTriple{pairs[k].reph_question, pairs[k].reph_answer,
                                                 pairs[k].orig_answer};
  }
  o.require(mapped, "(Q,A,Q',A') -> {Q',A',A} on every record");
  o.note("dropped " + std::to_string(filtered.dropped) + "/20, subsample " +
         std::to_string(sample.size()) + " of " + std::to_string(stub.size()) + ", " +
         std::to_string(synth.triples.size()) + " triples");
  return o;
}

Outcome roundtrip_determinism(const Options& opt) {
  Outcome o;
  fs::create_directories(opt.out_dir);
  for (DType dt : {DType::kFloat32, DType::kFloat64}) {
    const Checkpoint ck = random_checkpoint(tiny(3), {.seed = 9, .init_std = 0.3, .dtype = dt});
    const auto path = opt.out_dir / (std::string("roundtrip_") + dtype_name(dt));
    save_checkpoint(ck, path);
    o.require(bitwise_equal(load_checkpoint(path), ck),
              std::string("save/load bitwise ") + dtype_name(dt));
  }

  std::string text = synthetic_corpus(3, 20000);
  const CharVocab vocab = CharVocab::from_text(text);
  ModelConfig c = tiny(2);
  c.vocab_size = vocab.size();
  const RefModel model(random_checkpoint(c, {.seed = 4, .dtype = DType::kFloat64}));
  const TokenCorpus corpus = split_corpus(vocab.encode(text), 0.1);
  TrainConfig cfg;
  cfg.steps = 40;
  cfg.batch_size = 8;
  cfg.seq_len = 32;
  cfg.lr = 3e-3;
  cfg.eval_every = 10;
  cfg.eval_windows = 16;
  cfg.seed = 11;
  const auto a = train_lm(model, corpus, cfg);
  const auto b = train_lm(model, corpus, cfg);
  o.require(curve_to_json(a.curve) == curve_to_json(b.curve) && a.step_losses == b.step_losses,
            "identical curves");
  o.require(encode_safetensors(a.checkpoint) == encode_safetensors(b.checkpoint),
            "identical trained checkpoint bytes");
  o.note("F32/F64 round trip exact; two 40-step runs byte-identical (final eval " +
         fmt(a.curve.points.back().eval_loss) + ")");
  return o;
}

struct Criterion {
  int id;
  const char* title;
  double budget_s;
  std::function<Outcome(const Options&)> run;
};

}  // namespace
}  // namespace dustk

int main(int argc, char** argv) {
  using namespace dustk;
  const std::vector<Criterion> criteria = {
      {1, "Scaling arithmetic", 1.0, scaling_arithmetic},
      {2, "Seam reduction", 1.0, seam_reduction},
      {3, "Prefix equivalence", 30.0, prefix_equivalence},
      {4, "Merge identities", 10.0, merge_identities},
      {5, "Gradient oracle", 60.0, gradient_oracle},
      {6, "Recovery experiment", 600.0, recovery},
      {7, "H6 reproduction", 1.0, h6},
      {8, "Decontamination", 5.0, decontamination},
      {9, "Round-trip and determinism", 30.0, roundtrip_determinism},
  };

  Options opt;
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) {
      opt.recovery_config = argv[++i];
    } else if (a == "--out-dir" && i + 1 < argc) {
      opt.out_dir = argv[++i];
    } else {
      try {
        selected.push_back(std::stoi(a));
      } catch (const std::exception&) {
        std::fprintf(stderr, "usage: %s [criterion...] [--config FILE] [--out-dir DIR]\n", argv[0]);
        return 2;
      }
    }
  }

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) {
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run(opt);
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) out.require(false, "time budget " + fmt(c.budget_s) + " s");
    failures += out.pass ? 0 : 1;
    std::printf("%s %d. %s (%.2f s / %.0f s): %s\n", out.pass ? "PASS" : "FAIL", c.id, c.title,
                secs, c.budget_s, out.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
