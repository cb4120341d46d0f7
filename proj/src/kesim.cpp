#include "nus/kesim.hpp"

#include <map>

namespace nus::kesim {

const View& TripleAttended::view(Stream s, Stream other) const {
  for (const auto& v : views)
    if (v.stream == s && v.other == other) return v;
  throw std::invalid_argument("no such attended view");
}

TripleAttended triple_co_attend(const TripleEncoded& t) {
  const auto w = t.context.cols();
  if (t.response.cols() != w || t.knowledge.cols() != w)
    throw std::invalid_argument("triple_co_attend: width mismatch");
  auto cr = esim::co_attend(t.context, t.response);
  auto ck = esim::co_attend(t.context, t.knowledge);
  auto rk = esim::co_attend(t.response, t.knowledge);
  TripleAttended out;
  out.views = {View{Stream::context, Stream::response, cr.attended_a},
               View{Stream::context, Stream::knowledge, ck.attended_a},
               View{Stream::response, Stream::context, cr.attended_b},
               View{Stream::response, Stream::knowledge, rk.attended_a},
               View{Stream::knowledge, Stream::context, ck.attended_b},
               View{Stream::knowledge, Stream::response, rk.attended_b}};
  out.weights = {cr.weights_a, cr.weights_b, ck.weights_a, ck.weights_b, rk.weights_a, rk.weights_b};
  return out;
}

Var additive_merge(Var first, Var second) {
  if (first.cols() != second.cols() || first.rows() != second.rows())
    throw std::invalid_argument("additive_merge: shape mismatch");
  return ad::add(first, second);
}

Var merge_pooled(Tape& tape, const TripleAttended& views, const TripleEncoded& t, const nn::BiLstm& aggregator) {
  auto orig = [&](Stream s) {
    switch (s) {
      case Stream::context: return t.context;
      case Stream::response: return t.response;
      case Stream::knowledge: return t.knowledge;
    }
    return t.context;
  };
  std::array<Var, 6> pooled;
  for (std::size_t i = 0; i < views.views.size(); ++i) {
    const auto& v = views.views[i];
    Var m = esim::enrich(orig(v.stream), v.attended);
    pooled[i] = esim::pool_sequence(aggregator.encode(tape, m), aggregator);
  }
  return ad::concat_cols(
      {additive_merge(pooled[0], pooled[1]), additive_merge(pooled[2], pooled[3]), additive_merge(pooled[4], pooled[5])});
}

Var merge_pool_score(Tape& tape, const TripleAttended& views, const TripleEncoded& t, const nn::BiLstm& aggregator,
                     const nn::Mlp& mlp) {
  return esim::score(tape, merge_pooled(tape, views, t, aggregator), mlp);
}

KesimModel::KesimModel(const esim::ModelConfig& cfg, const corpus::Vocabulary& vocab,
                       const embedding::EmbeddingTable* table_a, const embedding::EmbeddingTable* table_b)
    : ResponseModel(cfg, vocab, table_a, table_b), untied_(cfg.untie_knowledge_encoder) {
  const int h = cfg_.hidden;
  encoder_ = nn::BiLstm::create(*params_, "encoder", cfg_.input_dim(), h, cfg_.init_scale, rng_);
  if (untied_)
    knowledge_encoder_ = nn::BiLstm::create(*params_, "knowledge_encoder", cfg_.input_dim(), h, cfg_.init_scale, rng_);
  aggregator_ = nn::BiLstm::create(*params_, "aggregator", 8 * h, h, cfg_.init_scale, rng_);
  mlp_ = nn::Mlp::create(*params_, "mlp", 12 * h, cfg_.mlp_hidden, cfg_.init_scale, rng_);
}

corpus::Tokens KesimModel::knowledge_input(const corpus::Tokens* knowledge) const {
  if (!knowledge || knowledge->empty()) return {std::string(corpus::kPad)};
  if (knowledge->size() <= cfg_.max_knowledge_len) return *knowledge;
  return corpus::Tokens(knowledge->begin(), knowledge->begin() + static_cast<std::ptrdiff_t>(cfg_.max_knowledge_len));
}

Var KesimModel::forward(Tape& tape, std::span<const esim::PairInput> pairs, esim::Trace* trace) const {
  if (pairs.empty()) throw std::invalid_argument("forward: no pairs");
  std::vector<corpus::Tokens> contexts, knowledge;
  contexts.reserve(pairs.size());
  knowledge.reserve(pairs.size());
  for (const auto& p : pairs) {
    contexts.push_back(clip_context(*p.context));
    knowledge.push_back(knowledge_input(p.knowledge));
  }
  std::vector<const corpus::Tokens*> seqs;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    seqs.push_back(&contexts[i]);
    seqs.push_back(pairs[i].response);
    seqs.push_back(&knowledge[i]);
  }
  auto reprs = embedder_->represent(tape, seqs);

  std::map<const corpus::Tokens*, Var> enc_context;
  std::map<const corpus::Tokens*, Var> enc_knowledge;
  const nn::BiLstm& kenc = knowledge_encoder();
  std::vector<Var> merged;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto c = enc_context.find(pairs[i].context);
    if (c == enc_context.end())
      c = enc_context.emplace(pairs[i].context, esim::bilstm_encode(tape, reprs[3 * i], encoder_)).first;
    auto k = pairs[i].knowledge ? enc_knowledge.find(pairs[i].knowledge) : enc_knowledge.end();
    Var k_bar = k != enc_knowledge.end() ? k->second : esim::bilstm_encode(tape, reprs[3 * i + 2], kenc);
    if (pairs[i].knowledge) enc_knowledge.emplace(pairs[i].knowledge, k_bar);
    TripleEncoded t{c->second, esim::bilstm_encode(tape, reprs[3 * i + 1], encoder_), k_bar};
    TripleAttended views = triple_co_attend(t);
    Var v = merge_pooled(tape, views, t, aggregator_);
    if (trace && i == 0) {
      trace->widths = {{"input", reprs[0].cols()},      {"encoded", t.context.cols()},
                       {"enriched", 4 * t.context.cols()}, {"aggregated", aggregator_.width()},
                       {"merged", v.cols()}};
    }
    if (trace)
      for (const auto& w : views.weights) trace->attention_weights.push_back(w.value());
    merged.push_back(v);
  }
  return esim::score(tape, ad::concat_rows(std::span<const Var>(merged)), mlp_);
}

}  // namespace nus::kesim
