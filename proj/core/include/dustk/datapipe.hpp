#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace dustk::data {

struct InstructionRecord {
  std::string instruction;
  std::optional<std::string> input;
  std::string output;
  std::optional<std::string> source_task;

  bool operator==(const InstructionRecord&) const = default;
};

struct DpoTriple {
  std::string prompt;
  std::string chosen;
  std::string rejected;

  bool operator==(const DpoTriple&) const = default;
};

struct MathRephrasePair {
  std::string orig_question;
  std::string orig_answer;
  std::string reph_question;
  std::string reph_answer;
};

// JSONL codecs. Parsing throws FormatError on schema violations.
InstructionRecord instruction_from_json(const nlohmann::json& j);
nlohmann::json to_json(const InstructionRecord& r);
DpoTriple dpo_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DpoTriple& t);
MathRephrasePair rephrase_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MathRephrasePair& p);

inline constexpr std::string_view kAlpacaPreamble =
    "Below is an instruction that describes a task. Write a response that "
    "appropriately completes the request.";

// Alpaca chat template; the "### Input:" block appears only when input is set
// and non-empty.
std::string format_alpaca(const InstructionRecord& rec);

// The ten FLAN task names screened out for benchmark overlap.
const std::set<std::string, std::less<>>& benchmark_task_names();

struct FilterResult {
  std::vector<InstructionRecord> kept;
  std::size_t dropped = 0;
};

// Drops records whose source_task equals one of tasknames exactly.
FilterResult filter_contaminated(std::span<const InstructionRecord> records,
                                 const std::set<std::string, std::less<>>& tasknames);

// Lower-cased, whitespace-split words.
std::vector<std::string> normalize_words(std::string_view text);

struct NgramReport {
  // Fraction of each input record's n-grams found in the benchmark set.
  std::vector<double> record_overlap;
  std::size_t total_ngrams = 0;
  std::size_t matched_ngrams = 0;
  double overall_overlap() const {
    return total_ngrams == 0 ? 0.0
                             : static_cast<double>(matched_ngrams) /
                                   static_cast<double>(total_ngrams);
  }
};

struct NgramFilterResult {
  std::vector<InstructionRecord> kept;
  std::size_t dropped = 0;
  NgramReport report;
};

// Text scored for a record: instruction and input (the query side).
std::string record_query_text(const InstructionRecord& rec);

// Drops a record iff the fraction of its word n-grams present in the
// benchmark n-gram set is >= threshold. Records with fewer than n words
// have no n-grams and score 0.
NgramFilterResult ngram_overlap_filter(std::span<const InstructionRecord> records,
                                       std::span<const std::string> benchmark_texts,
                                       std::size_t n = 8, double threshold = 0.5);

// Indices (ascending) of a uniform sample of min(total, max_n) out of total,
// deterministic per seed.
std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t max_n,
                                           std::uint64_t seed);

template <typename T>
std::vector<T> subsample(std::span<const T> records, std::size_t max_n, std::uint64_t seed) {
  std::vector<T> out;
  if (records.size() <= max_n) return {records.begin(), records.end()};
  const auto idx = subsample_indices(records.size(), max_n, seed);
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(records[i]);
  return out;
}

struct SynthResult {
  std::vector<DpoTriple> triples;
  std::size_t skipped = 0;
};

// (Q, A, Q', A') -> {prompt: Q', chosen: A', rejected: A}; pairs with A' == A
// are skipped.
SynthResult synth_dpo_tuples(std::span<const MathRephrasePair> pairs);

// Strips a leading system turn and the user marker from a prompt, then
// enforces the triple schema.
// Returns nullopt when the triple is unusable (empty field or chosen == rejected).
std::optional<DpoTriple> clean_dpo_triple(DpoTriple t);

}  // namespace dustk::data
