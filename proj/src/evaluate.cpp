#include "nus/evaluate.hpp"

#include "nus/train.hpp"

#include "json.hpp"

namespace nus::harness {

void attach_knowledge(corpus::Example& ex, const KnowledgeSources& sources) {
  if (ex.knowledge) return;
  if (sources.man_pages) {
    ex.knowledge = knowledge::extract_snippet(ex.context_tokens(), *sources.man_pages);
  } else if (sources.courses) {
    ex.knowledge = knowledge::course_snippet(ex, *sources.courses);
  } else {
    throw ConfigError("K-ESIM needs knowledge: provide man pages, course records or precomputed snippets");
  }
}

std::vector<corpus::Example> prepare_eval(const std::vector<corpus::Example>& data, esim::Variant variant,
                                          const EvalOptions& opts) {
  if (opts.tesim && !opts.subdialogs) throw ConfigError("T-ESIM evaluation needs a sub-dialog index");
  if (opts.candidate_reduction && !opts.seen_correct)
    throw ConfigError("candidate reduction needs the seen-correct response set");
  if (opts.subtask == corpus::Subtask::two && !opts.global_pool) {
    for (const auto& ex : data)
      if (ex.candidates.empty()) throw ConfigError("subtask 2 needs a global candidate pool");
  }

  std::vector<corpus::Example> out;
  out.reserve(data.size());
  for (const auto& original : data) {
    corpus::Example ex = original;
    if (opts.subtask == corpus::Subtask::two && opts.global_pool) {
      const auto context = ex.context_tokens();
      const auto& correct = ex.correct_ids;
      std::function<bool(const corpus::Candidate&)> keep;
      if (opts.candidate_reduction) {
        const auto* seen = opts.seen_correct;
        keep = [&correct, seen](const corpus::Candidate& c) {
          return correct.count(c.id) > 0 || seen->count(corpus::normalize_text(c.text)) == 0;
        };
      }
      ex.candidates = opts.global_pool->shortlist(context, opts.shortlist_size, keep);
    } else if (opts.candidate_reduction) {
      ex = tesim::reduce_candidates(ex, *opts.seen_correct, true);
    }
    if (opts.tesim) {
      auto similar = opts.subdialogs->find_similar(ex.context_tokens(), tesim::kEvalK, ex.dialog_id);
      ex = std::move(tesim::augment(ex, similar, tesim::Mode::eval).front().example);
    }
    if (variant == esim::Variant::kesim) attach_knowledge(ex, opts.knowledge);
    out.push_back(std::move(ex));
  }
  return out;
}

EvalResult score_examples(const esim::ResponseModel& model, const std::vector<corpus::Example>& prepared) {
  EvalResult result;
  for (const auto& ex : prepared) {
    const auto context = ex.context_tokens();
    std::vector<double> scores;
    std::vector<std::string> ids;
    if (!ex.candidates.empty()) {
      const auto inputs = example_inputs(ex, context);
      scores = model.score(inputs);
      for (const auto& c : ex.candidates) ids.push_back(c.id);
    }
    result.rankings.push_back({rank_by_score(ids, scores), ex.correct_ids});
    result.scores.push_back(std::move(scores));
  }
  result.metrics = compute_metrics(result.rankings);
  return result;
}

EvalResult evaluate_subtask(const esim::ResponseModel& model, const std::vector<corpus::Example>& data,
                            const EvalOptions& opts) {
  return score_examples(model, prepare_eval(data, model.variant(), opts));
}

std::vector<corpus::Example> prepare_train(const std::vector<corpus::Example>& data, esim::Variant variant,
                                           const TrainDataOptions& opts) {
  if (opts.tesim && !opts.subdialogs) throw ConfigError("T-ESIM training needs a sub-dialog index");
  std::vector<corpus::Example> out = opts.tesim ? tesim::augment_dataset(data, *opts.subdialogs, tesim::Mode::train)
                                                : data;
  if (opts.sampled_negatives > 0)
    for (auto& ex : out) ex = tesim::sample_negatives(ex, opts.sampled_negatives, opts.seed);
  if (variant == esim::Variant::kesim)
    for (auto& ex : out) attach_knowledge(ex, opts.knowledge);
  return out;
}

std::string metrics_line(const Metrics& m, const std::map<std::string, std::string>& options) {
  nlohmann::ordered_json j;
  j["recall@1"] = m.recall_at_1;
  j["recall@10"] = m.recall_at_10;
  j["recall@50"] = m.recall_at_50;
  j["mrr"] = m.mrr;
  j["examples"] = m.examples;
  j["options"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : options) j["options"][k] = v;
  return j.dump();
}

}  // namespace nus::harness
