#pragma once

// Knowledge-augmented ESIM: context, response and knowledge snippet are
// encoded by one shared BiLSTM, attended pairwise, aggregated by one shared
// BiLSTM and merged per stream by addition before the prediction layer.

#include "nus/esim.hpp"

#include <array>

namespace nus::kesim {

using ad::Tape;
using ad::Var;

struct TripleEncoded {
  Var context;
  Var response;
  Var knowledge;
};

enum class Stream { context = 0, response = 1, knowledge = 2 };

/// One attended view: `stream` rows attending over `other`.
struct View {
  Stream stream;
  Stream other;
  Var attended;
};

struct TripleAttended {
  /// Order: context|response, context|knowledge, response|context,
  /// response|knowledge, knowledge|context, knowledge|response.
  std::array<View, 6> views;
  /// Softmax weights of the three co-attentions (two matrices each).
  std::array<Var, 6> weights;

  const View& view(Stream s, Stream other) const;
};

TripleAttended triple_co_attend(const TripleEncoded& t);

/// Pools one view per stream into [max; last] (4h), adds the two views of a
/// stream, and concatenates streams: 1 x 12h.
Var merge_pooled(Tape& tape, const TripleAttended& views, const TripleEncoded& t, const nn::BiLstm& aggregator);

/// merge_pooled followed by the prediction layer.
Var merge_pool_score(Tape& tape, const TripleAttended& views, const TripleEncoded& t, const nn::BiLstm& aggregator,
                     const nn::Mlp& mlp);

/// Additive merge of two pooled views of one stream.
Var additive_merge(Var first, Var second);

class KesimModel : public esim::ResponseModel {
 public:
  KesimModel(const esim::ModelConfig& cfg, const corpus::Vocabulary& vocab,
             const embedding::EmbeddingTable* table_a = nullptr, const embedding::EmbeddingTable* table_b = nullptr);

  esim::Variant variant() const override { return esim::Variant::kesim; }
  Var forward(Tape& tape, std::span<const esim::PairInput> pairs, esim::Trace* trace = nullptr) const override;

  const nn::BiLstm& encoder() const { return encoder_; }
  const nn::BiLstm& knowledge_encoder() const { return untied_ ? knowledge_encoder_ : encoder_; }
  const nn::BiLstm& aggregator() const { return aggregator_; }
  const nn::Mlp& mlp() const { return mlp_; }

  /// Knowledge tokens fed to the model: clipped, or a single PAD when absent.
  corpus::Tokens knowledge_input(const corpus::Tokens* knowledge) const;

 private:
  bool untied_;
  nn::BiLstm encoder_;
  nn::BiLstm knowledge_encoder_;
  nn::BiLstm aggregator_;
  nn::Mlp mlp_;
};

}  // namespace nus::kesim
