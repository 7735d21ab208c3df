#include <iostream>
#include <memory>
#include <sstream>

#include "cli/common.hpp"
#include "dustk/datapipe.hpp"
#include "dustk/errors.hpp"
#include "dustk/report.hpp"

namespace dustk::cli {
namespace {

using nlohmann::json;

std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::vector<data::InstructionRecord> read_records(const std::string& path) {
  std::vector<data::InstructionRecord> out;
  for (const auto& j : read_jsonl(path)) out.push_back(data::instruction_from_json(j));
  return out;
}

std::string records_jsonl(std::span<const data::InstructionRecord> records) {
  std::string out;
  for (const auto& r : records) out += data::to_json(r).dump() + "\n";
  return out;
}

struct DataOpts {
  std::string in;
  OutputTarget out;
};

CLI::App* data_command(CLI::App& data, const char* name, const char* help, DataOpts& o) {
  auto* cmd = data.add_subcommand(name, help);
  cmd->add_option("--in", o.in, "Input JSONL")->required()->check(CLI::ExistingFile);
  o.out.add_to(*cmd);
  return cmd;
}

void finish(const Context& ctx, const DataOpts& o, std::vector<std::string> extra_inputs = {}) {
  extra_inputs.insert(extra_inputs.begin(), o.in);
  write_manifest(ctx, extra_inputs, o.out.files(), o.out.files().empty() ? "" : o.out.path);
}

void add_format(CLI::App& data, Context& ctx) {
  auto o = std::make_shared<DataOpts>();
  data_command(data, "format", "Render instruction records with the Alpaca template", *o)
      ->callback([o, &ctx] {
        std::string out;
        for (const auto& r : read_records(o->in)) {
          out += json({{"text", data::format_alpaca(r)}}).dump() + "\n";
        }
        o->out.write(out);
        finish(ctx, *o);
      });
}

void add_filter(CLI::App& data, Context& ctx) {
  auto o = std::make_shared<DataOpts>();
  auto tasks = std::make_shared<std::string>();
  auto* cmd = data_command(data, "filter", "Drop records from benchmark-overlapping tasks", *o);
  cmd->add_option("--tasks", *tasks, "Task names, one per line (default: built-in list)")
      ->check(CLI::ExistingFile);
  cmd->callback([o, tasks, &ctx] {
    std::set<std::string, std::less<>> names;
    if (tasks->empty()) {
      names = data::benchmark_task_names();
    } else {
      for (auto& l : read_lines(*tasks)) names.insert(l);
    }
    const auto records = read_records(o->in);
    const auto r = data::filter_contaminated(records, names);
    o->out.write(records_jsonl(r.kept));
    log("kept " + std::to_string(r.kept.size()) + ", dropped " + std::to_string(r.dropped));
    finish(ctx, *o, tasks->empty() ? std::vector<std::string>{} : std::vector{*tasks});
  });
}

void add_ngram(CLI::App& data, Context& ctx) {
  struct Extra {
    std::string benchmark, report;
    std::size_t n = 8;
    double threshold = 0.5;
  };
  auto o = std::make_shared<DataOpts>();
  auto e = std::make_shared<Extra>();
  auto* cmd = data_command(data, "ngram", "Drop records whose word n-grams overlap a benchmark", *o);
  cmd->add_option("--benchmark", e->benchmark, "Benchmark texts, one per line")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--n", e->n, "Words per n-gram")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--threshold", e->threshold, "Overlap fraction that drops a record")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--report", e->report, "Per-record overlap report JSON");
  cmd->callback([o, e, &ctx] {
    const auto records = read_records(o->in);
    const auto bench = read_lines(e->benchmark);
    const auto r = data::ngram_overlap_filter(records, bench, e->n, e->threshold);
    o->out.write(records_jsonl(r.kept));
    log("kept " + std::to_string(r.kept.size()) + ", dropped " + std::to_string(r.dropped) +
        ", overall overlap " + std::to_string(r.report.overall_overlap()));
    if (!e->report.empty()) {
      write_file(e->report, json({{"n", e->n},
                                  {"threshold", e->threshold},
                                  {"total_ngrams", r.report.total_ngrams},
                                  {"matched_ngrams", r.report.matched_ngrams},
                                  {"overall_overlap", r.report.overall_overlap()},
                                  {"record_overlap", r.report.record_overlap},
                                  {"dropped", r.dropped}})
                                .dump(2) +
                                "\n");
    }
    finish(ctx, *o, {e->benchmark});
  });
}

void add_subsample(CLI::App& data, Context& ctx) {
  struct Extra {
    std::size_t max_n = 0;
    std::uint64_t seed = 0;
  };
  auto o = std::make_shared<DataOpts>();
  auto e = std::make_shared<Extra>();
  auto* cmd = data_command(data, "subsample", "Keep a seeded uniform sample of lines", *o);
  cmd->add_option("--max-n", e->max_n, "Maximum records kept")->required();
  cmd->add_option("--seed", e->seed, "Sampling seed")->capture_default_str();
  cmd->callback([o, e, &ctx] {
    const auto lines = read_lines(o->in);
    std::string out;
    for (std::size_t i : data::subsample_indices(lines.size(), e->max_n, e->seed)) {
      out += lines[i];
      out += '\n';
    }
    o->out.write(out);
    log("kept " + std::to_string(std::min(lines.size(), e->max_n)) + " of " +
        std::to_string(lines.size()));
    finish(ctx, *o);
  });
}

void add_synth_dpo(CLI::App& data, Context& ctx) {
  auto o = std::make_shared<DataOpts>();
  auto clean = std::make_shared<bool>(false);
  auto* cmd = data_command(data, "synth-dpo",
                           "Turn rephrased math pairs into {prompt, chosen, rejected} triples", *o);
  cmd->add_flag("--clean", *clean, "Also strip system turns and drop unusable triples");
  cmd->callback([o, clean, &ctx] {
    std::vector<data::MathRephrasePair> pairs;
    for (const auto& j : read_jsonl(o->in)) pairs.push_back(data::rephrase_from_json(j));
    const auto r = data::synth_dpo_tuples(pairs);
    std::string out;
    std::size_t cleaned_out = 0;
    for (const auto& t : r.triples) {
      std::optional<data::DpoTriple> kept = t;
      if (*clean) kept = data::clean_dpo_triple(t);
      if (!kept) {
        ++cleaned_out;
        continue;
      }
      out += data::to_json(*kept).dump() + "\n";
    }
    o->out.write(out);
    log("triples " + std::to_string(r.triples.size() - cleaned_out) + ", skipped " +
        std::to_string(r.skipped + cleaned_out));
    finish(ctx, *o);
  });
}

void add_h6(CLI::App& app) {
  auto scores = std::make_shared<std::vector<double>>();
  auto* cmd = app.add_subcommand("h6", "Average six benchmark scores (two decimals, half-up)");
  cmd->add_option("scores", *scores, "ARC HellaSwag MMLU TruthfulQA Winogrande GSM8K")
      ->required();
  cmd->callback([scores] { std::cout << format_score(h6_average(*scores)) << '\n'; });
}

}  // namespace

void add_data_commands(CLI::App& app, Context& ctx) {
  auto* data = app.add_subcommand("data", "Dataset preparation stages");
  data->require_subcommand(1);
  add_format(*data, ctx);
  add_filter(*data, ctx);
  add_ngram(*data, ctx);
  add_subsample(*data, ctx);
  add_synth_dpo(*data, ctx);
  add_h6(app);
}

}  // namespace dustk::cli
