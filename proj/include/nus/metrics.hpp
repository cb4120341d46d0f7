#pragma once

// Recall@k and mean reciprocal rank over ranked candidate lists.

#include <set>
#include <string>
#include <vector>

namespace nus::harness {

struct Metrics {
  double recall_at_1 = 0;
  double recall_at_10 = 0;
  double recall_at_50 = 0;
  double mrr = 0;
  std::size_t examples = 0;

  bool operator==(const Metrics&) const = default;
};

struct Ranking {
  std::vector<std::string> ranked_ids;  // best first
  std::set<std::string> correct_ids;
};

/// Candidate ids ordered by descending score; equal scores keep input order.
std::vector<std::string> rank_by_score(const std::vector<std::string>& ids, const std::vector<double>& scores);

/// 1-based rank of the best-ranked correct id, or 0 if none is ranked.
std::size_t best_rank(const Ranking& r);

/// R@k counts an example when any correct id is within the top k; MRR
/// averages 1 / best rank (0 when no correct id was ranked). Throws
/// std::invalid_argument for an example with no correct id.
Metrics compute_metrics(const std::vector<Ranking>& rankings);

}  // namespace nus::harness
