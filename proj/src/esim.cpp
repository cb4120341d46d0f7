#include "nus/esim.hpp"

#include "nus/kesim.hpp"

#include <map>

namespace nus::esim {

std::string_view to_string(Variant v) { return v == Variant::esim ? "esim" : "kesim"; }

Variant parse_variant(std::string_view s) {
  if (s == "esim") return Variant::esim;
  if (s == "kesim") return Variant::kesim;
  throw std::invalid_argument("unknown model variant: " + std::string(s));
}

void ModelConfig::validate() const {
  if (hidden <= 0 || mlp_hidden <= 0 || embedding.dim_a <= 0 || embedding.dim_b <= 0 || embedding.char_dim <= 0 ||
      embedding.char_emb_dim <= 0 || max_context_len == 0 || max_knowledge_len == 0 || !(init_scale > 0))
    throw std::invalid_argument("model config: all sizes must be positive");
}

Var bilstm_encode(Tape& tape, Var reprs, const nn::BiLstm& encoder) {
  if (reprs.rows() == 0) throw std::invalid_argument("bilstm_encode: zero-length input");
  return encoder.encode(tape, reprs);
}

CoAttention co_attend(Var a_bar, Var b_bar) {
  if (a_bar.cols() != b_bar.cols())
    throw std::invalid_argument("co_attend: width mismatch " + std::to_string(a_bar.cols()) + " vs " +
                                std::to_string(b_bar.cols()));
  CoAttention c;
  c.scores = ad::matmul(a_bar, ad::transpose(b_bar));
  c.weights_a = ad::softmax_rows(c.scores);
  c.weights_b = ad::softmax_rows(ad::transpose(c.scores));
  c.attended_a = ad::matmul(c.weights_a, b_bar);
  c.attended_b = ad::matmul(c.weights_b, a_bar);
  return c;
}

Var enrich(Var orig, Var attended) {
  if (orig.rows() != attended.rows() || orig.cols() != attended.cols())
    throw std::invalid_argument("enrich: shape mismatch");
  return ad::concat_cols({orig, attended, ad::sub(orig, attended), ad::elemwise_mul(orig, attended)});
}

Var pool_sequence(Var aggregated, const nn::BiLstm& aggregator) {
  return ad::concat_cols({ad::max_over_rows(aggregated), aggregator.final_state(aggregated)});
}

Var aggregate_and_pool(Tape& tape, Var m_a, Var m_b, const nn::BiLstm& aggregator) {
  if (m_a.rows() == 0 || m_b.rows() == 0) throw std::invalid_argument("aggregate_and_pool: empty sequence");
  Var va = aggregator.encode(tape, m_a);
  Var vb = aggregator.encode(tape, m_b);
  return ad::concat_cols({ad::max_over_rows(va), ad::max_over_rows(vb), aggregator.final_state(va),
                          aggregator.final_state(vb)});
}

Var score(Tape& tape, Var v, const nn::Mlp& mlp) { return mlp.probability(tape, v); }

Var bce_loss(Var probs, const std::vector<double>& labels) {
  for (double y : labels)
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("bce_loss: labels must be 0 or 1");
  return ad::binary_cross_entropy(probs, labels);
}

// ---------------------------------------------------------------------------

ResponseModel::ResponseModel(const ModelConfig& cfg, const corpus::Vocabulary& vocab,
                             const embedding::EmbeddingTable* table_a, const embedding::EmbeddingTable* table_b)
    : cfg_(cfg), params_(std::make_unique<ad::ParameterStore>()), rng_(cfg.seed) {
  cfg_.validate();
  auto ecfg = cfg_.embedding;
  ecfg.init_scale = cfg_.init_scale;
  ecfg.seed = cfg_.seed;
  embedder_ = std::make_unique<embedding::Embedder>(*params_, ecfg, vocab, table_a, table_b);
}

corpus::Tokens ResponseModel::clip_context(const corpus::Tokens& t) const {
  return corpus::truncate_recent(t, cfg_.max_context_len);
}

std::vector<double> ResponseModel::score(std::span<const PairInput> pairs) const {
  Tape tape(false);
  Var p = forward(tape, pairs);
  std::vector<double> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[static_cast<std::size_t>(i)] = p.value()(i, 0);
  return out;
}

EsimModel::EsimModel(const ModelConfig& cfg, const corpus::Vocabulary& vocab,
                     const embedding::EmbeddingTable* table_a, const embedding::EmbeddingTable* table_b)
    : ResponseModel(cfg, vocab, table_a, table_b) {
  const int h = cfg_.hidden;
  encoder_ = nn::BiLstm::create(*params_, "encoder", cfg_.input_dim(), h, cfg_.init_scale, rng_);
  aggregator_ = nn::BiLstm::create(*params_, "aggregator", 8 * h, h, cfg_.init_scale, rng_);
  mlp_ = nn::Mlp::create(*params_, "mlp", 8 * h, cfg_.mlp_hidden, cfg_.init_scale, rng_);
}

Var EsimModel::forward(Tape& tape, std::span<const PairInput> pairs, Trace* trace) const {
  if (pairs.empty()) throw std::invalid_argument("forward: no pairs");
  std::vector<corpus::Tokens> contexts;
  contexts.reserve(pairs.size());
  for (const auto& p : pairs) contexts.push_back(clip_context(*p.context));
  std::vector<const corpus::Tokens*> seqs;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    seqs.push_back(&contexts[i]);
    seqs.push_back(pairs[i].response);
  }
  auto reprs = embedder_->represent(tape, seqs);

  // Contexts repeat across the candidates of one example; encode each distinct one once.
  std::map<const corpus::Tokens*, Var> encoded_context;
  std::vector<Var> pooled;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto it = encoded_context.find(pairs[i].context);
    if (it == encoded_context.end())
      it = encoded_context.emplace(pairs[i].context, bilstm_encode(tape, reprs[2 * i], encoder_)).first;
    Var a_bar = it->second;
    Var b_bar = bilstm_encode(tape, reprs[2 * i + 1], encoder_);
    CoAttention att = co_attend(a_bar, b_bar);
    Var m_a = enrich(a_bar, att.attended_a);
    Var m_b = enrich(b_bar, att.attended_b);
    Var v = aggregate_and_pool(tape, m_a, m_b, aggregator_);
    if (trace && i == 0) {
      trace->widths = {{"input", reprs[0].cols()}, {"encoded", a_bar.cols()}, {"enriched", m_a.cols()},
                       {"aggregated", aggregator_.width()}, {"pooled", v.cols()}};
    }
    if (trace) {
      trace->attention_weights.push_back(att.weights_a.value());
      trace->attention_weights.push_back(att.weights_b.value());
    }
    pooled.push_back(v);
  }
  return esim::score(tape, ad::concat_rows(std::span<const Var>(pooled)), mlp_);
}

std::unique_ptr<ResponseModel> make_model(Variant variant, const ModelConfig& cfg, const corpus::Vocabulary& vocab,
                                          const embedding::EmbeddingTable* table_a,
                                          const embedding::EmbeddingTable* table_b) {
  if (variant == Variant::esim) return std::make_unique<EsimModel>(cfg, vocab, table_a, table_b);
  return std::make_unique<kesim::KesimModel>(cfg, vocab, table_a, table_b);
}

}  // namespace nus::esim
