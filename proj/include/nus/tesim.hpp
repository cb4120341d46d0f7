#pragma once

// Similar-dialog retrieval and the data strategies built on it: context
// augmentation, negative sampling, candidate reduction and global-pool
// shortlisting.

#include "nus/corpus.hpp"
#include "nus/tfidf.hpp"

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

namespace nus::tesim {

using corpus::Candidate;
using corpus::Example;
using corpus::Tokens;

inline constexpr std::size_t kTrainK = 3;
inline constexpr std::size_t kEvalK = 1;
inline constexpr std::size_t kSampledNegatives = 9;
inline constexpr std::size_t kShortlistSize = 100;

struct SubDialog {
  std::string parent_id;
  Tokens context;
  Tokens response;
  std::size_t split_point = 0;  // 1-based index of the response turn
};

/// One sub-dialog per split point t in [2, turns]: turns 1..t-1 as context, turn t as response.
std::vector<SubDialog> split_subdialogs(const corpus::Dialog& dialog);

struct Retrieved {
  const SubDialog* sub = nullptr;
  double cosine = 0.0;
};

class SubDialogIndex {
 public:
  SubDialogIndex() = default;
  explicit SubDialogIndex(std::vector<SubDialog> subs);

  /// Sub-dialogs of every training example's dialog (context plus correct response).
  static SubDialogIndex from_examples(const std::vector<Example>& train);

  std::size_t size() const { return subs_.size(); }
  bool empty() const { return subs_.empty(); }
  const std::vector<SubDialog>& subdialogs() const { return subs_; }
  const TfidfModel& tfidf() const { return tfidf_; }
  std::size_t vector_count() const { return vectors_.size(); }

  /// Top-k by TF-IDF cosine, skipping every sub-dialog whose parent is
  /// exclude_parent. Ties: higher cosine, then lower parent id, then lower
  /// split point.
  std::vector<Retrieved> find_similar(const Tokens& context, std::size_t k, const std::string& exclude_parent) const;

  void save(const std::string& path) const;
  static SubDialogIndex load(const std::string& path);

 private:
  std::vector<SubDialog> subs_;
  std::vector<SparseVec> vectors_;
  TfidfModel tfidf_;
};

enum class Mode { train, eval };

struct AugmentedExample {
  Example example;
  Tokens retrieved_response;
  std::string source_parent;
};

/// Train mode: one copy per retrieved sub-dialog, each with that response
/// appended as a new final turn. Eval mode: one copy with the top-1 response.
/// With nothing retrieved the example passes through unchanged.
std::vector<AugmentedExample> augment(const Example& example, const std::vector<Retrieved>& similar, Mode mode);

/// find_similar with k = 3 (train) or 1 (eval) followed by augment, for every example.
std::vector<Example> augment_dataset(const std::vector<Example>& examples, const SubDialogIndex& index, Mode mode);

/// All correct candidates plus n incorrect ones drawn uniformly without
/// replacement, shuffled. The draw depends only on (seed, example id).
Example sample_negatives(const Example& example, std::size_t n = kSampledNegatives, std::uint64_t seed = 0);

/// Normalised texts of the correct (non-None) candidates.
std::set<std::string> seen_correct_responses(const std::vector<Example>& examples);

/// Drops candidates whose normalised text is in seen_correct. With
/// protect_ground_truth, correct candidates are always kept. Removed ids are
/// appended to *removed.
Example reduce_candidates(const Example& example, const std::set<std::string>& seen_correct,
                          bool protect_ground_truth = true, std::vector<std::string>* removed = nullptr);

/// TF-IDF view of a candidate pool, fitted once and queried per context.
class CandidatePool {
 public:
  explicit CandidatePool(std::vector<Candidate> pool);

  std::size_t size() const { return pool_.size(); }
  const std::vector<Candidate>& candidates() const { return pool_; }

  /// Top `size` entries by cosine to the context among those accepted by
  /// `keep` (all when empty); ties go to the lower candidate id.
  std::vector<Candidate> shortlist(const Tokens& context, std::size_t size = kShortlistSize,
                                   const std::function<bool(const Candidate&)>& keep = {}) const;

 private:
  std::vector<Candidate> pool_;
  std::vector<SparseVec> vectors_;
  TfidfModel tfidf_;
};

std::vector<Candidate> shortlist_global_pool(const Tokens& context, const std::vector<Candidate>& pool,
                                             std::size_t size = kShortlistSize);

/// Distinct candidates (by id) across examples, in first-seen order.
std::vector<Candidate> union_pool(const std::vector<Example>& examples);

}  // namespace nus::tesim
