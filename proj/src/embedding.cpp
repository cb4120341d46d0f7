#include "nus/embedding.hpp"

#include <fstream>
#include <sstream>

namespace nus::embedding {
namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

RowVec oov_vector(const std::string& token, int dim, std::uint64_t seed) {
  std::uint64_t state = fnv1a(token) ^ (seed * 0xD1B54A32D192ED03ULL);
  RowVec v(dim);
  for (int i = 0; i < dim; ++i) {
    const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    v(i) = (2.0 * u - 1.0) * kOovScale;
  }
  return v;
}

EmbeddingTable::EmbeddingTable(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim <= 0) throw std::invalid_argument("embedding dim must be positive");
}

EmbeddingTable EmbeddingTable::load_vectors(const std::string& path, int expected_dim, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vector file: " + path);
  EmbeddingTable table(expected_dim, seed);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> values;
    std::string field;
    while (ss >> field) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": not a number: " + field);
      }
    }
    if (static_cast<int>(values.size()) != expected_dim)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(expected_dim) + " values, got " + std::to_string(values.size()));
    table.insert(token, Eigen::Map<const RowVec>(values.data(), expected_dim));
  }
  return table;
}

int EmbeddingTable::row(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

bool EmbeddingTable::insert(const std::string& token, const RowVec& v) {
  if (v.size() != dim_) throw std::invalid_argument("embedding insert: wrong width for " + token);
  auto [it, inserted] = index_.emplace(token, static_cast<int>(tokens_.size()));
  if (!inserted) return false;
  tokens_.push_back(token);
  rows_.push_back(v);
  return true;
}

RowVec EmbeddingTable::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? oov_vector(token, dim_, seed_) : rows_[static_cast<std::size_t>(it->second)];
}

ad::Mat EmbeddingTable::values() const {
  ad::Mat m(static_cast<Eigen::Index>(rows_.size()), dim_);
  for (std::size_t i = 0; i < rows_.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows_[i];
  return m;
}

CharEncoder CharEncoder::create(ad::ParameterStore& store, const std::string& prefix, std::size_t n_chars,
                                int char_emb_dim, int out_dim, double init_scale, std::mt19937_64& rng) {
  if (out_dim <= 0 || out_dim % 2 != 0) throw std::invalid_argument("char_dim must be positive and even");
  CharEncoder enc;
  enc.chars = &store.add_uniform(prefix + ".chars", static_cast<Eigen::Index>(n_chars), char_emb_dim, init_scale, rng);
  enc.forward = nn::Lstm::create(store, prefix + ".fwd", char_emb_dim, out_dim / 2, init_scale, rng);
  enc.backward = nn::Lstm::create(store, prefix + ".bwd", char_emb_dim, out_dim / 2, init_scale, rng);
  return enc;
}

Var char_compose(Tape& tape, const std::string& token, const CharEncoder& enc, const corpus::Vocabulary& vocab) {
  if (token.empty()) throw std::invalid_argument("char_compose: empty token");
  std::vector<Eigen::Index> ids;
  for (char32_t c : corpus::utf8_decode(token)) ids.push_back(vocab.char_index(c));
  Var seq = ad::gather_rows(tape.param(*enc.chars), std::move(ids));
  Var fwd = enc.forward.run(tape, seq, false);
  Var bwd = enc.backward.run(tape, seq, true);
  return ad::concat_cols({ad::slice_rows(fwd, fwd.rows() - 1, 1), ad::slice_rows(bwd, 0, 1)});
}

Embedder::Table Embedder::make_table(ad::ParameterStore& store, const std::string& name, int dim,
                                     std::uint64_t seed, const EmbeddingTable* loaded) {
  Table t;
  t.dim = dim;
  t.seed = seed;
  if (loaded) {
    if (loaded->dim() != dim) throw std::invalid_argument(name + ": loaded table has the wrong dimension");
    t.seed = loaded->seed();
    for (std::size_t i = 0; i < loaded->tokens().size(); ++i) t.rows.emplace(loaded->tokens()[i], static_cast<int>(i));
    t.weights = &store.add(name, loaded->values(), cfg_.finetune_pretrained);
    return t;
  }
  const auto& toks = vocab_.tokens();
  ad::Mat m(static_cast<Eigen::Index>(toks.size()), dim);
  for (std::size_t i = 0; i < toks.size(); ++i) {
    t.rows.emplace(toks[i], static_cast<int>(i));
    m.row(static_cast<Eigen::Index>(i)) = toks[i] == corpus::kPad ? RowVec::Zero(dim) : oov_vector(toks[i], dim, seed);
  }
  t.weights = &store.add(name, std::move(m), true);
  return t;
}

Embedder::Embedder(ad::ParameterStore& store, const EmbeddingConfig& cfg, corpus::Vocabulary vocab,
                   const EmbeddingTable* table_a, const EmbeddingTable* table_b)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  std::mt19937_64 rng(cfg.seed);
  a_ = make_table(store, "embed.table_a", cfg.dim_a, cfg.seed, table_a);
  b_ = make_table(store, "embed.table_b", cfg.dim_b, cfg.seed + 1, table_b);
  chars_ = CharEncoder::create(store, "embed.char", vocab_.char_size(), cfg.char_emb_dim, cfg.char_dim,
                               cfg.init_scale, rng);
}

Var Embedder::lookup(Tape& tape, const Table& table, const std::vector<std::string>& tokens) const {
  const auto n = static_cast<Eigen::Index>(tokens.size());
  ad::Mat out(n, table.dim);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> hits;  // (output row, table row)
  for (Eigen::Index i = 0; i < n; ++i) {
    auto it = table.rows.find(tokens[static_cast<std::size_t>(i)]);
    if (it == table.rows.end()) {
      out.row(i) = oov_vector(tokens[static_cast<std::size_t>(i)], table.dim, table.seed);
    } else {
      out.row(i) = table.weights->value.row(it->second);
      hits.emplace_back(i, it->second);
    }
  }
  // Gradients go straight into the parameter's rows; this avoids copying the
  // whole table onto the tape.
  ad::Parameter* w = table.weights;
  const bool grad = w->trainable && !hits.empty();
  return tape.push(std::move(out), grad, [w, hits = std::move(hits)](Tape&, const ad::Mat& g) {
    for (auto [i, r] : hits) w->grad.row(r) += g.row(i);
  });
}

std::vector<Var> Embedder::represent(Tape& tape, std::span<const corpus::Tokens* const> seqs) const {
  std::vector<std::string> unique;
  std::unordered_map<std::string, Eigen::Index> slot;
  for (const auto* seq : seqs)
    for (const auto& t : *seq)
      if (t != corpus::kPad && slot.emplace(t, static_cast<Eigen::Index>(unique.size())).second) unique.push_back(t);
  const auto pad_row = static_cast<Eigen::Index>(unique.size());

  std::vector<Var> blocks;
  if (!unique.empty()) {
    std::vector<Var> composed;
    composed.reserve(unique.size());
    for (const auto& t : unique) composed.push_back(char_compose(tape, t, chars_, vocab_));
    blocks.push_back(ad::concat_cols({lookup(tape, a_, unique), lookup(tape, b_, unique),
                                      ad::concat_rows(std::span<const Var>(composed))}));
  }
  blocks.push_back(tape.constant(ad::Mat::Zero(1, dim())));
  Var table = ad::concat_rows(std::span<const Var>(blocks));

  std::vector<Var> out;
  out.reserve(seqs.size());
  for (const auto* seq : seqs) {
    if (seq->empty()) throw std::invalid_argument("embedder: empty token sequence");
    std::vector<Eigen::Index> ids;
    ids.reserve(seq->size());
    for (const auto& t : *seq) ids.push_back(t == corpus::kPad ? pad_row : slot.at(t));
    out.push_back(ad::gather_rows(table, std::move(ids)));
  }
  return out;
}

Var Embedder::represent(Tape& tape, const corpus::Tokens& seq) const {
  const corpus::Tokens* p = &seq;
  return represent(tape, std::span<const corpus::Tokens* const>(&p, 1))[0];
}

RowVec Embedder::word_repr(const std::string& token) const {
  Tape tape(false);
  return represent(tape, corpus::Tokens{token}).value().row(0);
}

}  // namespace nus::embedding
