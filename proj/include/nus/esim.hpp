#pragma once

// ESIM response scorer: BiLSTM encoding, co-attention, enrichment, matching
// aggregation, max/final-state pooling and a sigmoid prediction layer.

#include "nus/autodiff.hpp"
#include "nus/corpus.hpp"
#include "nus/embedding.hpp"
#include "nus/layers.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nus::esim {

using ad::Tape;
using ad::Var;

enum class Variant { esim, kesim };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

struct ModelConfig {
  int hidden = 200;
  int mlp_hidden = 256;
  embedding::EmbeddingConfig embedding;
  std::size_t max_context_len = corpus::kDefaultMaxContextLen;
  std::size_t max_knowledge_len = 200;
  double init_scale = 0.05;
  std::uint64_t seed = 7;
  bool untie_knowledge_encoder = false;

  int input_dim() const { return embedding.output_dim(); }
  /// Throws std::invalid_argument when a size is not positive.
  void validate() const;
};

// --- Functional layers ------------------------------------------------------

/// L x 2h encoding; throws on an empty sequence.
Var bilstm_encode(Tape& tape, Var reprs, const nn::BiLstm& encoder);

struct CoAttention {
  Var scores;       // m x n, E_ij = a_i . b_j
  Var weights_a;    // m x n, rows softmax over j
  Var weights_b;    // n x m, rows softmax over i
  Var attended_a;   // m x 2h: each context row's view of the response
  Var attended_b;   // n x 2h: each response row's view of the context
};

CoAttention co_attend(Var a_bar, Var b_bar);

/// [orig; attended; orig - attended; orig * attended], width 4x.
Var enrich(Var orig, Var attended);

/// 1 x 4h: [column max over time; final state] of an aggregated sequence.
Var pool_sequence(Var aggregated, const nn::BiLstm& aggregator);

/// 1 x 8h: [max_a; max_b; last_a; last_b] after aggregating both sequences.
Var aggregate_and_pool(Tape& tape, Var m_a, Var m_b, const nn::BiLstm& aggregator);

/// N x 1 probabilities.
Var score(Tape& tape, Var v, const nn::Mlp& mlp);

/// Mean binary cross-entropy with probabilities clamped to [1e-12, 1 - 1e-12].
Var bce_loss(Var probs, const std::vector<double>& labels);

// --- Models -----------------------------------------------------------------

struct PairInput {
  const corpus::Tokens* context = nullptr;
  const corpus::Tokens* response = nullptr;
  const corpus::Tokens* knowledge = nullptr;
};

/// Intermediate widths of one forward pass, for structural checks.
struct Trace {
  std::vector<std::pair<std::string, Eigen::Index>> widths;
  std::vector<ad::Mat> attention_weights;
};

class ResponseModel {
 public:
  virtual ~ResponseModel() = default;

  virtual Variant variant() const = 0;

  /// N x 1 probabilities for the pairs, all recorded on one tape.
  virtual Var forward(Tape& tape, std::span<const PairInput> pairs, Trace* trace = nullptr) const = 0;

  /// Inference scores (no gradient recording).
  std::vector<double> score(std::span<const PairInput> pairs) const;

  ad::ParameterStore& params() { return *params_; }
  const ad::ParameterStore& params() const { return *params_; }
  const ModelConfig& config() const { return cfg_; }
  const embedding::Embedder& embedder() const { return *embedder_; }

 protected:
  ResponseModel(const ModelConfig& cfg, const corpus::Vocabulary& vocab, const embedding::EmbeddingTable* table_a,
                const embedding::EmbeddingTable* table_b);

  corpus::Tokens clip_context(const corpus::Tokens& t) const;

  ModelConfig cfg_;
  std::unique_ptr<ad::ParameterStore> params_;
  std::unique_ptr<embedding::Embedder> embedder_;
  std::mt19937_64 rng_;
};

class EsimModel : public ResponseModel {
 public:
  EsimModel(const ModelConfig& cfg, const corpus::Vocabulary& vocab,
            const embedding::EmbeddingTable* table_a = nullptr, const embedding::EmbeddingTable* table_b = nullptr);

  Variant variant() const override { return Variant::esim; }
  Var forward(Tape& tape, std::span<const PairInput> pairs, Trace* trace = nullptr) const override;

  const nn::BiLstm& encoder() const { return encoder_; }
  const nn::BiLstm& aggregator() const { return aggregator_; }
  const nn::Mlp& mlp() const { return mlp_; }

 private:
  nn::BiLstm encoder_;
  nn::BiLstm aggregator_;
  nn::Mlp mlp_;
};

std::unique_ptr<ResponseModel> make_model(Variant variant, const ModelConfig& cfg, const corpus::Vocabulary& vocab,
                                          const embedding::EmbeddingTable* table_a = nullptr,
                                          const embedding::EmbeddingTable* table_b = nullptr);

}  // namespace nus::esim
