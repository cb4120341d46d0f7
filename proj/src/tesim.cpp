#include "nus/tesim.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_set>

namespace nus::tesim {

using nlohmann::json;

std::vector<SubDialog> split_subdialogs(const corpus::Dialog& dialog) {
  std::vector<SubDialog> out;
  for (std::size_t t = 2; t <= dialog.turns.size(); ++t) {
    SubDialog s;
    s.parent_id = dialog.id;
    s.split_point = t;
    s.context = corpus::flatten_turns({dialog.turns.begin(), dialog.turns.begin() + static_cast<std::ptrdiff_t>(t - 1)});
    s.response = dialog.turns[t - 1].tokens;
    out.push_back(std::move(s));
  }
  return out;
}

SubDialogIndex::SubDialogIndex(std::vector<SubDialog> subs) : subs_(std::move(subs)) {
  std::vector<Tokens> docs;
  docs.reserve(subs_.size());
  for (const auto& s : subs_) docs.push_back(s.context);
  tfidf_ = TfidfModel::fit(docs);
  vectors_.reserve(subs_.size());
  for (const auto& d : docs) vectors_.push_back(tfidf_.transform(d));
}

SubDialogIndex SubDialogIndex::from_examples(const std::vector<Example>& train) {
  std::vector<SubDialog> subs;
  for (const auto& ex : train) {
    auto s = split_subdialogs(corpus::to_dialog(ex));
    subs.insert(subs.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return SubDialogIndex(std::move(subs));
}

std::vector<Retrieved> SubDialogIndex::find_similar(const Tokens& context, std::size_t k,
                                                    const std::string& exclude_parent) const {
  if (k == 0) throw std::invalid_argument("find_similar: k must be >= 1");
  std::vector<Retrieved> hits;
  if (subs_.empty()) return hits;
  const SparseVec q = tfidf_.transform(context);
  for (std::size_t i = 0; i < subs_.size(); ++i) {
    if (subs_[i].parent_id == exclude_parent) continue;
    hits.push_back({&subs_[i], cosine(vectors_[i], q)});
  }
  auto better = [](const Retrieved& a, const Retrieved& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    if (a.sub->parent_id != b.sub->parent_id) return a.sub->parent_id < b.sub->parent_id;
    return a.sub->split_point < b.sub->split_point;
  };
  const auto n = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), better);
  hits.resize(n);
  return hits;
}

void SubDialogIndex::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write sub-dialog index: " + path);
  for (const auto& s : subs_)
    out << json{{"parent-id", s.parent_id}, {"split-point", s.split_point}, {"context", s.context}, {"response", s.response}}
               .dump()
        << '\n';
}

SubDialogIndex SubDialogIndex::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read sub-dialog index: " + path);
  std::vector<SubDialog> subs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json o = json::parse(line);
    subs.push_back({o.at("parent-id").get<std::string>(), o.at("context").get<Tokens>(), o.at("response").get<Tokens>(),
                    o.at("split-point").get<std::size_t>()});
  }
  return SubDialogIndex(std::move(subs));
}

std::vector<AugmentedExample> augment(const Example& example, const std::vector<Retrieved>& similar, Mode mode) {
  std::vector<AugmentedExample> out;
  if (similar.empty()) {
    out.push_back({example, {}, {}});
    return out;
  }
  const std::size_t n = mode == Mode::eval ? 1 : similar.size();
  for (std::size_t i = 0; i < n; ++i) {
    const SubDialog& s = *similar[i].sub;
    if (s.parent_id == example.dialog_id)
      throw std::invalid_argument("augment: retrieved sub-dialog shares the example's parent " + s.parent_id);
    AugmentedExample a{example, s.response, s.parent_id};
    corpus::Utterance u;
    u.speaker = corpus::Speaker::Retrieved;
    for (const auto& t : s.response) u.text += (u.text.empty() ? "" : " ") + t;
    u.tokens = s.response;
    a.example.turns.push_back(std::move(u));
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Example> augment_dataset(const std::vector<Example>& examples, const SubDialogIndex& index, Mode mode) {
  const std::size_t k = mode == Mode::train ? kTrainK : kEvalK;
  std::vector<Example> out;
  for (const auto& ex : examples) {
    auto similar = index.find_similar(ex.context_tokens(), k, ex.dialog_id);
    for (auto& a : augment(ex, similar, mode)) out.push_back(std::move(a.example));
  }
  return out;
}

namespace {

std::uint64_t mix(std::uint64_t seed, const std::string& id) {
  std::uint64_t h = 1469598103934665603ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

Example sample_negatives(const Example& example, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(mix(seed, example.dialog_id));
  std::vector<std::size_t> correct, incorrect;
  for (std::size_t i = 0; i < example.candidates.size(); ++i)
    (example.is_correct(example.candidates[i]) ? correct : incorrect).push_back(i);
  // Partial Fisher-Yates over the incorrect indices.
  const std::size_t take = std::min(n, incorrect.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (incorrect.size() - i));
    std::swap(incorrect[i], incorrect[j]);
  }
  std::vector<std::size_t> keep = correct;
  keep.insert(keep.end(), incorrect.begin(), incorrect.begin() + static_cast<std::ptrdiff_t>(take));
  for (std::size_t i = keep.size(); i > 1; --i) std::swap(keep[i - 1], keep[static_cast<std::size_t>(rng() % i)]);
  Example out = example;
  out.candidates.clear();
  for (auto i : keep) out.candidates.push_back(example.candidates[i]);
  return out;
}

std::set<std::string> seen_correct_responses(const std::vector<Example>& examples) {
  std::set<std::string> out;
  for (const auto& ex : examples)
    for (const auto& c : ex.candidates)
      if (ex.is_correct(c) && !c.is_none()) out.insert(corpus::normalize_text(c.text));
  return out;
}

Example reduce_candidates(const Example& example, const std::set<std::string>& seen_correct, bool protect_ground_truth,
                          std::vector<std::string>* removed) {
  if (seen_correct.empty()) return example;
  Example out = example;
  out.candidates.clear();
  for (const auto& c : example.candidates) {
    const bool seen = !c.is_none() && seen_correct.count(corpus::normalize_text(c.text)) > 0;
    if (seen && !(protect_ground_truth && example.is_correct(c))) {
      if (removed) removed->push_back(c.id);
      continue;
    }
    out.candidates.push_back(c);
  }
  if (!protect_ground_truth)
    for (auto it = out.correct_ids.begin(); it != out.correct_ids.end();) {
      const bool present = std::any_of(out.candidates.begin(), out.candidates.end(),
                                       [&](const Candidate& c) { return c.id == *it; });
      it = present ? std::next(it) : out.correct_ids.erase(it);
    }
  return out;
}

CandidatePool::CandidatePool(std::vector<Candidate> pool) : pool_(std::move(pool)) {
  std::vector<Tokens> docs;
  docs.reserve(pool_.size());
  for (const auto& c : pool_) docs.push_back(c.tokens);
  tfidf_ = TfidfModel::fit(docs);
  for (const auto& d : docs) vectors_.push_back(tfidf_.transform(d));
}

std::vector<Candidate> CandidatePool::shortlist(const Tokens& context, std::size_t size,
                                                const std::function<bool(const Candidate&)>& keep) const {
  const SparseVec q = tfidf_.transform(context);
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < pool_.size(); ++i)
    if (!keep || keep(pool_[i])) scored.emplace_back(cosine(vectors_[i], q), i);
  auto better = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return pool_[a.second].id < pool_[b.second].id;
  };
  const auto n = std::min(size, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
  std::vector<Candidate> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool_[scored[i].second]);
  return out;
}

std::vector<Candidate> shortlist_global_pool(const Tokens& context, const std::vector<Candidate>& pool,
                                             std::size_t size) {
  return CandidatePool(pool).shortlist(context, size);
}

std::vector<Candidate> union_pool(const std::vector<Example>& examples) {
  std::vector<Candidate> out;
  std::unordered_set<std::string> seen;
  for (const auto& ex : examples)
    for (const auto& c : ex.candidates)
      if (!c.is_none() && seen.insert(c.id).second) out.push_back(c);
  return out;
}

}  // namespace nus::tesim
