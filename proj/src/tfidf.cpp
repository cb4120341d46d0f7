#include "nus/tfidf.hpp"

#include <cmath>
#include <map>
#include <set>

namespace nus {

TfidfModel TfidfModel::fit(const std::vector<corpus::Tokens>& docs) {
  TfidfModel m;
  m.n_docs_ = docs.size();
  // Ordered map keeps term ids independent of hash iteration order.
  std::map<std::string, int> df;
  for (const auto& d : docs) {
    std::set<std::string> seen(d.begin(), d.end());
    for (const auto& t : seen) ++df[t];
  }
  for (const auto& [term, n] : df) {
    m.vocab_.emplace(term, static_cast<int>(m.idf_.size()));
    m.idf_.push_back(std::log(static_cast<double>(m.n_docs_) / (1.0 + n)) + 1.0);
  }
  return m;
}

SparseVec TfidfModel::transform(const corpus::Tokens& tokens) const {
  std::map<int, double> counts;
  for (const auto& t : tokens) {
    auto it = vocab_.find(t);
    if (it != vocab_.end()) counts[it->second] += 1.0;
  }
  SparseVec v(static_cast<Eigen::Index>(idf_.size()));
  v.reserve(static_cast<Eigen::Index>(counts.size()));
  double norm2 = 0;
  for (auto& [id, c] : counts) {
    c *= idf_[static_cast<std::size_t>(id)];
    norm2 += c * c;
  }
  if (norm2 == 0) return v;
  const double inv = 1.0 / std::sqrt(norm2);
  for (const auto& [id, w] : counts) v.insertBack(id) = w * inv;
  return v;
}

double TfidfModel::idf(const std::string& term) const {
  auto it = vocab_.find(term);
  return it == vocab_.end() ? 0.0 : idf_[static_cast<std::size_t>(it->second)];
}

double cosine(const SparseVec& a, const SparseVec& b) {
  if (a.nonZeros() == 0 || b.nonZeros() == 0 || a.size() != b.size()) return 0.0;
  return a.dot(b);
}

}  // namespace nus
