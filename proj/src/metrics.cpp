#include "nus/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace nus::harness {

std::vector<std::string> rank_by_score(const std::vector<std::string>& ids, const std::vector<double>& scores) {
  if (ids.size() != scores.size()) throw std::invalid_argument("rank_by_score: size mismatch");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto i : order) out.push_back(ids[i]);
  return out;
}

std::size_t best_rank(const Ranking& r) {
  for (std::size_t i = 0; i < r.ranked_ids.size(); ++i)
    if (r.correct_ids.count(r.ranked_ids[i])) return i + 1;
  return 0;
}

Metrics compute_metrics(const std::vector<Ranking>& rankings) {
  Metrics m;
  m.examples = rankings.size();
  if (rankings.empty()) return m;
  std::size_t hit1 = 0, hit10 = 0, hit50 = 0;
  double rr = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    if (rankings[i].correct_ids.empty())
      throw std::invalid_argument("compute_metrics: example " + std::to_string(i) + " has no correct id");
    const auto rank = best_rank(rankings[i]);
    if (rank == 0) continue;
    hit1 += rank <= 1;
    hit10 += rank <= 10;
    hit50 += rank <= 50;
    rr += 1.0 / static_cast<double>(rank);
  }
  const auto n = static_cast<double>(rankings.size());
  m.recall_at_1 = static_cast<double>(hit1) / n;
  m.recall_at_10 = static_cast<double>(hit10) / n;
  m.recall_at_50 = static_cast<double>(hit50) / n;
  m.mrr = rr / n;
  return m;
}

}  // namespace nus::harness
