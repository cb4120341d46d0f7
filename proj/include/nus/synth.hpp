#pragma once

// Seeded problem/solution dialog corpus with planted distractors and fixture
// man pages, for smoke tests and desk-scale experiments.

#include "nus/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace nus::synth {

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t n_dialogs = 100;
  std::size_t n_templates = 10;
  /// Number of generic filler words shared by every template.
  std::size_t vocab_size = 60;
  std::size_t n_candidates = 10;
  double train_fraction = 0.6;
  double valid_fraction = 0.2;
  /// Template-specific words drawn per problem turn and for the solution turn.
  std::size_t problem_words = 8;
  std::size_t solution_words = 6;
  std::size_t words_per_turn = 3;
  /// Every n-th template mentions a fixture command (0 disables commands).
  std::size_t command_every = 2;
  /// Probability that a response repeats one problem word of its own dialog.
  double overlap_rate = 1.0;

  /// Throws std::invalid_argument for non-positive sizes or bad fractions.
  void validate() const;
};

struct SynthCorpus {
  std::vector<corpus::Example> train, valid, test;
  /// File name -> man page text.
  std::map<std::string, std::string> man_pages;
  /// Dialog id -> template index.
  std::map<std::string, std::size_t> template_of;
  /// Template index -> fixture command ("" when it has none).
  std::vector<std::string> commands;
};

/// Splits are filled in round-robin template order, so train covers every
/// template once it holds at least n_templates dialogs. Same config, same corpus.
SynthCorpus generate(const SynthConfig& cfg);

/// Writes train.jsonl, valid.jsonl, test.jsonl and manpages/<command>.txt.
void write(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace nus::synth
