#pragma once

// Subtask evaluation: knowledge attachment, T-ESIM augmentation, candidate
// reduction and shortlisting ahead of model scoring.

#include "nus/corpus.hpp"
#include "nus/esim.hpp"
#include "nus/knowledge.hpp"
#include "nus/metrics.hpp"
#include "nus/tesim.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace nus::harness {

/// A required asset is missing for the requested mode.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KnowledgeSources {
  const knowledge::KnowledgeIndex* man_pages = nullptr;
  const std::map<std::string, knowledge::CourseRecord>* courses = nullptr;
};

/// Leaves existing knowledge alone; otherwise extracts a man-page snippet, or
/// a course snippet when only course records are available. Throws
/// ConfigError when neither source is given.
void attach_knowledge(corpus::Example& ex, const KnowledgeSources& sources);

struct EvalOptions {
  corpus::Subtask subtask = corpus::Subtask::one;
  bool tesim = false;
  const tesim::SubDialogIndex* subdialogs = nullptr;
  bool candidate_reduction = false;
  const std::set<std::string>* seen_correct = nullptr;
  KnowledgeSources knowledge;
  /// Subtask 2 candidate pool; examples keep their own candidates when null.
  const tesim::CandidatePool* global_pool = nullptr;
  std::size_t shortlist_size = tesim::kShortlistSize;
};

/// The examples exactly as the model will see them.
std::vector<corpus::Example> prepare_eval(const std::vector<corpus::Example>& data, esim::Variant variant,
                                          const EvalOptions& opts);

struct EvalResult {
  Metrics metrics;
  std::vector<Ranking> rankings;
  std::vector<std::vector<double>> scores;
};

/// Scores the candidates of prepared examples.
EvalResult score_examples(const esim::ResponseModel& model, const std::vector<corpus::Example>& prepared);

EvalResult evaluate_subtask(const esim::ResponseModel& model, const std::vector<corpus::Example>& data,
                            const EvalOptions& opts);

struct TrainDataOptions {
  bool tesim = false;
  const tesim::SubDialogIndex* subdialogs = nullptr;
  /// Negatives kept per example; 0 keeps every candidate.
  std::size_t sampled_negatives = 0;
  std::uint64_t seed = 0;
  KnowledgeSources knowledge;
};

/// Training set for a variant: knowledge, k=3 augmentation and negative sampling as requested.
std::vector<corpus::Example> prepare_train(const std::vector<corpus::Example>& data, esim::Variant variant,
                                           const TrainDataOptions& opts);

/// One JSON object: recall@1/10/50, mrr, examples and an "options" object.
std::string metrics_line(const Metrics& m, const std::map<std::string, std::string>& options);

}  // namespace nus::harness
