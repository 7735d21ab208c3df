#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dustk/corpus.hpp"
#include "dustk/model_config.hpp"
#include "dustk/train.hpp"
#include "json.hpp"

namespace dustk {

// Base-train -> scale -> continue-train experiment. The base model is
// trained from a random init, then scaled twice (DUS with trim m, and naive
// duplication) and both scaled models are trained further under identical
// settings.
struct ExperimentConfig {
  ModelConfig model;  // n_layers is the base depth n; vocab_size is set from the corpus
  std::size_t m = 2;
  double init_std = 0.02;
  TrainConfig base_train;
  TrainConfig continued_train;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  // Recovered once eval loss <= (1 + tolerance) * base eval loss.
  double recovery_tolerance = 0.05;
  double eval_fraction = 0.1;
  // Corpus: a text file when set, else synthetic_corpus(corpus_seed, corpus_chars).
  std::string corpus_path;
  std::uint64_t corpus_seed = 1234;
  std::size_t corpus_chars = 200000;
};

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

struct ArmResult {
  std::string arm;  // "base", "dus" or "naive"
  LossCurve curve;
  bool diverged = false;
  // First curve step whose eval loss meets the recovery bound.
  std::optional<std::size_t> recovered_step;
};

struct SeedReport {
  std::uint64_t seed = 0;
  double base_loss = 0.0;     // base eval loss after base training
  double scaled_loss0 = 0.0;  // DUS model eval loss before continued training
  double naive_loss0 = 0.0;
  ArmResult base;
  ArmResult dus;
  ArmResult naive;
};

struct RecoveryReport {
  ExperimentConfig config;
  std::vector<SeedReport> seeds;

  std::size_t seeds_scaled_above_base() const;
  std::size_t seeds_dus_recovered() const;
};

// Reads corpus_path (or generates the synthetic corpus), builds its character
// vocabulary and sets cfg.model.vocab_size to match.
struct ExperimentCorpus {
  CharVocab vocab;
  std::vector<Token> tokens;
};
ExperimentCorpus prepare_corpus(ExperimentConfig& cfg);

// corpus must already be encoded; config.model.vocab_size must cover it.
RecoveryReport recovery_experiment(std::span<const Token> corpus, const ExperimentConfig& cfg);

nlohmann::json report_to_json(const RecoveryReport& report);
// Columns: arm,seed,step,train_loss,eval_loss
std::string curves_csv(const RecoveryReport& report);

}  // namespace dustk
