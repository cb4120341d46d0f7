#pragma once

// Flat key=value run configuration with named profiles.

#include "nus/esim.hpp"
#include "nus/train.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace nus::harness {

struct RunConfig {
  esim::ModelConfig model;
  TrainConfig train;
  bool tesim = false;
  int subtask = 1;
  std::size_t sampled_negatives = 0;
  bool candidate_reduction = false;
  std::size_t shortlist_size = 100;
  /// Asset paths; empty when unused.
  std::string embeddings_a, embeddings_b, man_pages, courses, snippets, global_pool, subdialog_index;

  /// Every key with its current value, in key order.
  std::map<std::string, std::string> to_map() const;
};

/// "full": the published sizes (embeddings 300/100/80, hidden 200, MLP 256, batch 128).
/// "desk": hidden 16, embeddings 32/16/16, MLP 32, batch 16, lr 0.003.
RunConfig profile(const std::string& name);

/// Applies one key; throws std::invalid_argument for unknown keys or bad values.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);

/// Lines "key = value"; '#' starts a comment. A "profile" key, if present, is
/// applied first. Errors name the line.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);

/// Word-vector tables named by the config, when given.
struct EmbeddingTables {
  std::optional<embedding::EmbeddingTable> a, b;
};
EmbeddingTables load_tables(const RunConfig& cfg);

/// A trained model with the configuration and vocabulary it was built from.
struct ModelBundle {
  RunConfig config;
  corpus::Vocabulary vocab;
  EmbeddingTables tables;
  std::unique_ptr<esim::ResponseModel> model;
};

/// Fresh model for the config's variant over vocab.
ModelBundle build_model(const RunConfig& cfg, corpus::Vocabulary vocab);

/// Directory with config.txt, vocab.txt and model.ckpt.
void save_bundle(const std::filesystem::path& dir, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& dir);

/// Text form accepted by parse_config.
std::string serialize_config(const RunConfig& cfg);

}  // namespace nus::harness
