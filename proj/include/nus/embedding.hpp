#pragma once

// Word representation layer: two word-vector tables plus a character-composed
// BiLSTM embedding, concatenated per token.

#include "nus/autodiff.hpp"
#include "nus/corpus.hpp"
#include "nus/layers.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace nus::embedding {

using ad::Tape;
using ad::Var;
using RowVec = Eigen::RowVectorXd;

inline constexpr double kOovScale = 0.1;

/// Deterministic vector for a token absent from a table: uniform in
/// [-kOovScale, kOovScale], seeded only by (token, seed).
RowVec oov_vector(const std::string& token, int dim, std::uint64_t seed);

/// Token -> vector table of fixed width. Lookups of absent tokens return
/// oov_vector(token, dim, seed).
class EmbeddingTable {
 public:
  EmbeddingTable(int dim, std::uint64_t seed = 0);

  /// Text file, one token per line followed by expected_dim numbers.
  /// Duplicate tokens keep their first occurrence.
  static EmbeddingTable load_vectors(const std::string& path, int expected_dim, std::uint64_t seed = 0);

  int dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  int row(const std::string& token) const;

  /// Returns false (and keeps the old vector) if the token already exists.
  bool insert(const std::string& token, const RowVec& v);
  RowVec lookup(const std::string& token) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  ad::Mat values() const;

 private:
  int dim_;
  std::uint64_t seed_;
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> tokens_;
  std::vector<RowVec> rows_;
};

struct EmbeddingConfig {
  int dim_a = 300;
  int dim_b = 100;
  int char_dim = 80;
  int char_emb_dim = 16;
  std::uint64_t seed = 7;
  double init_scale = 0.05;
  /// Train vectors loaded from files; fallback tables always train.
  bool finetune_pretrained = false;

  int output_dim() const { return dim_a + dim_b + char_dim; }
};

/// Character BiLSTM; output is [forward final state; backward final state].
struct CharEncoder {
  ad::Parameter* chars = nullptr;
  nn::Lstm forward;
  nn::Lstm backward;

  static CharEncoder create(ad::ParameterStore& store, const std::string& prefix, std::size_t n_chars,
                            int char_emb_dim, int out_dim, double init_scale, std::mt19937_64& rng);
  int out_dim() const { return 2 * forward.hidden; }
};

/// 1 x out_dim composition of one token. Throws on an empty token.
Var char_compose(Tape& tape, const std::string& token, const CharEncoder& enc, const corpus::Vocabulary& vocab);

/// Composes [table A; table B; char] per token. The PAD token maps to zeros.
class Embedder {
 public:
  /// Without a loaded table the corresponding part becomes a trainable table
  /// over the vocabulary, initialised with oov_vector values.
  Embedder(ad::ParameterStore& store, const EmbeddingConfig& cfg, corpus::Vocabulary vocab,
           const EmbeddingTable* table_a = nullptr, const EmbeddingTable* table_b = nullptr);

  int dim() const { return cfg_.output_dim(); }
  const EmbeddingConfig& config() const { return cfg_; }
  const corpus::Vocabulary& vocabulary() const { return vocab_; }
  const CharEncoder& char_encoder() const { return chars_; }

  /// One L x dim matrix per sequence; tokens shared between sequences are
  /// composed once per call.
  std::vector<Var> represent(Tape& tape, std::span<const corpus::Tokens* const> seqs) const;
  Var represent(Tape& tape, const corpus::Tokens& seq) const;

  RowVec word_repr(const std::string& token) const;

 private:
  struct Table {
    ad::Parameter* weights = nullptr;
    std::unordered_map<std::string, int> rows;
    int dim = 0;
    std::uint64_t seed = 0;
  };

  Table make_table(ad::ParameterStore& store, const std::string& name, int dim, std::uint64_t seed,
                   const EmbeddingTable* loaded);
  Var lookup(Tape& tape, const Table& table, const std::vector<std::string>& tokens) const;

  EmbeddingConfig cfg_;
  corpus::Vocabulary vocab_;
  Table a_;
  Table b_;
  CharEncoder chars_;
};

}  // namespace nus::embedding
