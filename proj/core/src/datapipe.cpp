#include "dustk/datapipe.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <unordered_set>

#include "dustk/errors.hpp"

namespace dustk::data {

using nlohmann::json;

namespace {

std::string required_text(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw FormatError(std::string("record field '") + key + "' must be a string");
  }
  return j.at(key).get<std::string>();
}

std::optional<std::string> optional_text(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_string()) {
    throw FormatError(std::string("record field '") + key + "' must be a string");
  }
  return j.at(key).get<std::string>();
}

}  // namespace

InstructionRecord instruction_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("instruction record must be a JSON object");
  InstructionRecord r{required_text(j, "instruction"), optional_text(j, "input"),
                      required_text(j, "output"), optional_text(j, "source_task")};
  if (r.instruction.empty()) throw FormatError("instruction is empty");
  if (r.output.empty()) throw FormatError("output is empty");
  return r;
}

json to_json(const InstructionRecord& r) {
  json j = {{"instruction", r.instruction}, {"output", r.output}};
  j["input"] = r.input ? json(*r.input) : json(nullptr);
  j["source_task"] = r.source_task ? json(*r.source_task) : json(nullptr);
  return j;
}

DpoTriple dpo_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("DPO record must be a JSON object");
  return {required_text(j, "prompt"), required_text(j, "chosen"), required_text(j, "rejected")};
}

json to_json(const DpoTriple& t) {
  return {{"prompt", t.prompt}, {"chosen", t.chosen}, {"rejected", t.rejected}};
}

MathRephrasePair rephrase_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("rephrase record must be a JSON object");
  MathRephrasePair p{required_text(j, "orig_question"), required_text(j, "orig_answer"),
                     required_text(j, "reph_question"), required_text(j, "reph_answer")};
  if (p.orig_question.empty() || p.orig_answer.empty() || p.reph_question.empty() ||
      p.reph_answer.empty()) {
    throw FormatError("rephrase record has an empty field");
  }
  return p;
}

json to_json(const MathRephrasePair& p) {
  return {{"orig_question", p.orig_question},
          {"orig_answer", p.orig_answer},
          {"reph_question", p.reph_question},
          {"reph_answer", p.reph_answer}};
}

std::string format_alpaca(const InstructionRecord& rec) {
  if (rec.instruction.empty()) throw ValidationError("instruction is empty");
  std::string out(kAlpacaPreamble);
  out += "\n\n### Instruction:\n";
  out += rec.instruction;
  if (rec.input && !rec.input->empty()) {
    out += "\n\n### Input:\n";
    out += *rec.input;
  }
  out += "\n\n### Response:\n";
  out += rec.output;
  return out;
}

const std::set<std::string, std::less<>>& benchmark_task_names() {
  static const std::set<std::string, std::less<>> kNames = {
      "task228_arc_answer_generation_easy",
      "ai2_arc/ARC-Challenge:1.0.0",
      "ai2_arc/ARC-Easy:1.0.0",
      "task229_arc_answer_generation_hard",
      "hellaswag:1.1.0",
      "task1389_hellaswag_completion",
      "cot_gsm8k",
      "cot_gsm8k_ii",
      "drop:2.0.0",
      "winogrande:1.1.0",
  };
  return kNames;
}

FilterResult filter_contaminated(std::span<const InstructionRecord> records,
                                 const std::set<std::string, std::less<>>& tasknames) {
  if (tasknames.empty()) throw ValidationError("task-name list is empty");
  FilterResult out;
  for (const auto& r : records) {
    if (r.source_task && tasknames.contains(*r.source_task)) {
      ++out.dropped;
    } else {
      out.kept.push_back(r);
    }
  }
  return out;
}

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

namespace {

// Words joined by a single space; the separator cannot occur inside a word.
std::vector<std::string> ngrams(const std::vector<std::string>& words, std::size_t n) {
  std::vector<std::string> out;
  if (words.size() < n) return out;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    std::string g = words[i];
    for (std::size_t k = 1; k < n; ++k) {
      g += ' ';
      g += words[i + k];
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

std::string record_query_text(const InstructionRecord& rec) {
  std::string text = rec.instruction;
  if (rec.input && !rec.input->empty()) {
    text += ' ';
    text += *rec.input;
  }
  return text;
}

NgramFilterResult ngram_overlap_filter(std::span<const InstructionRecord> records,
                                       std::span<const std::string> benchmark_texts,
                                       std::size_t n, double threshold) {
  if (n < 1) throw ValidationError("n-gram size must be >= 1");
  std::unordered_set<std::string> bench;
  for (const auto& text : benchmark_texts) {
    for (auto& g : ngrams(normalize_words(text), n)) bench.insert(std::move(g));
  }
  NgramFilterResult out;
  for (const auto& r : records) {
    const auto grams = ngrams(normalize_words(record_query_text(r)), n);
    const auto hits = static_cast<std::size_t>(std::count_if(
        grams.begin(), grams.end(), [&](const std::string& g) { return bench.contains(g); }));
    const double frac =
        grams.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(grams.size());
    out.report.record_overlap.push_back(frac);
    out.report.total_ngrams += grams.size();
    out.report.matched_ngrams += hits;
    if (frac >= threshold) {
      ++out.dropped;
    } else {
      out.kept.push_back(r);
    }
  }
  return out;
}

std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t max_n,
                                           std::uint64_t seed) {
  std::vector<std::size_t> out;
  if (total <= max_n) {
    out.resize(total);
    for (std::size_t i = 0; i < total; ++i) out[i] = i;
    return out;
  }
  // Selection sampling: visits indices in order and keeps each with
  // probability needed / remaining, so exactly max_n survive.
  std::mt19937_64 rng(seed);
  out.reserve(max_n);
  std::size_t needed = max_n;
  for (std::size_t i = 0; i < total && needed > 0; ++i) {
    const std::size_t remaining = total - i;
    std::uniform_int_distribution<std::size_t> draw(0, remaining - 1);
    if (draw(rng) < needed) {
      out.push_back(i);
      --needed;
    }
  }
  return out;
}

SynthResult synth_dpo_tuples(std::span<const MathRephrasePair> pairs) {
  SynthResult out;
  for (const auto& p : pairs) {
    if (p.reph_answer == p.orig_answer) {
      ++out.skipped;
      continue;
    }
    out.triples.push_back({p.reph_question, p.reph_answer, p.orig_answer});
  }
  return out;
}

std::optional<DpoTriple> clean_dpo_triple(DpoTriple t) {
  constexpr std::string_view kSystem = "<|system|>";
  constexpr std::string_view kUser = "<|user|>";
  if (t.prompt.starts_with(kSystem)) {
    const auto user = t.prompt.find(kUser);
    t.prompt = user == std::string::npos ? std::string() : t.prompt.substr(user + kUser.size());
  } else if (t.prompt.starts_with(kUser)) {
    t.prompt.erase(0, kUser.size());
  }
  t.prompt.erase(0, t.prompt.find_first_not_of(" \t\r\n") == std::string::npos
                        ? t.prompt.size()
                        : t.prompt.find_first_not_of(" \t\r\n"));
  if (t.prompt.empty() || t.chosen.empty() || t.rejected.empty() || t.chosen == t.rejected) {
    return std::nullopt;
  }
  return t;
}

}  // namespace dustk::data
