// nus: train and evaluate next-utterance selection models.

#include "nus/config.hpp"
#include "nus/evaluate.hpp"
#include "nus/knowledge.hpp"
#include "nus/synth.hpp"
#include "nus/tesim.hpp"
#include "nus/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

using namespace nus;
using harness::RunConfig;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::string> tesim;
  std::optional<int> subtask;
};

// A --config file replaces the base (the saved model config, if any); the
// global flags then override single keys.
RunConfig resolve(const Globals& g, const std::optional<RunConfig>& base = std::nullopt) {
  try {
    RunConfig cfg = !g.config.empty() ? harness::load_config(g.config) : base ? *base : harness::profile("desk");
    if (g.seed) harness::set_key(cfg, "seed", std::to_string(*g.seed));
    if (g.variant) harness::set_key(cfg, "variant", *g.variant);
    if (g.tesim) harness::set_key(cfg, "tesim", *g.tesim);
    if (g.subtask) harness::set_key(cfg, "subtask", std::to_string(*g.subtask));
    return cfg;
  } catch (const std::exception& e) {
    throw harness::ConfigError(e.what());
  }
}

corpus::Subtask subtask_of(const RunConfig& cfg) { return corpus::subtask_from_int(cfg.subtask); }

/// Snippets from the cache file, attached to matching example ids.
void apply_snippets(std::vector<corpus::Example>& data, const std::string& path) {
  if (path.empty()) return;
  const auto cache = knowledge::load_snippets(path);
  for (auto& ex : data)
    if (auto it = cache.find(ex.dialog_id); it != cache.end()) ex.knowledge = it->second;
}

struct Knowledge {
  std::optional<knowledge::KnowledgeIndex> man_pages;
  std::optional<std::map<std::string, knowledge::CourseRecord>> courses;

  harness::KnowledgeSources sources() const {
    return {man_pages ? &*man_pages : nullptr, courses ? &*courses : nullptr};
  }
};

Knowledge load_knowledge(const std::string& man_dir, const std::string& courses) {
  Knowledge k;
  if (!man_dir.empty()) k.man_pages = knowledge::KnowledgeIndex::build(knowledge::parse_man_pages(man_dir));
  if (!courses.empty()) k.courses = knowledge::load_courses(courses);
  return k;
}

std::vector<corpus::Candidate> load_pool(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open pool " + path);
  std::vector<corpus::Candidate> pool;
  std::string line;
  for (std::size_t n = 0; std::getline(f, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      pool.push_back(corpus::make_candidate(j.at("id").get<std::string>(), j.at("text").get<std::string>()));
    } catch (const nlohmann::json::exception& ex) {
      throw std::runtime_error(path + ": line " + std::to_string(n + 1) + ": " + ex.what());
    }
  }
  return pool;
}

std::set<std::string> load_seen(const std::vector<std::string>& paths, corpus::Subtask subtask) {
  std::vector<corpus::Example> all;
  for (const auto& p : paths) {
    auto d = corpus::load_dataset(p, subtask);
    all.insert(all.end(), d.begin(), d.end());
  }
  return tesim::seen_correct_responses(all);
}

std::map<std::string, std::string> run_options(const RunConfig& cfg) {
  return {{"variant", std::string(esim::to_string(cfg.train.variant))},
          {"tesim", cfg.tesim ? "on" : "off"},
          {"subtask", std::to_string(cfg.subtask)},
          {"candidate_reduction", cfg.candidate_reduction ? "on" : "off"},
          {"sampled_negatives", std::to_string(cfg.sampled_negatives)},
          {"seed", std::to_string(cfg.train.seed)}};
}

struct EvalAssets {
  std::optional<tesim::SubDialogIndex> index;
  std::set<std::string> seen;
  std::optional<tesim::CandidatePool> pool;
  Knowledge knowledge;
};

harness::EvalOptions eval_options(const RunConfig& cfg, EvalAssets& assets) {
  harness::EvalOptions o;
  o.subtask = subtask_of(cfg);
  o.tesim = cfg.tesim;
  o.subdialogs = assets.index ? &*assets.index : nullptr;
  o.candidate_reduction = cfg.candidate_reduction;
  o.seen_correct = cfg.candidate_reduction ? &assets.seen : nullptr;
  o.knowledge = assets.knowledge.sources();
  o.global_pool = assets.pool ? &*assets.pool : nullptr;
  o.shortlist_size = cfg.shortlist_size;
  return o;
}

void print_gradcheck(esim::Variant variant, std::uint64_t seed) {
  esim::ModelConfig mc;
  mc.hidden = 4;
  mc.mlp_hidden = 4;
  mc.embedding.dim_a = 3;
  mc.embedding.dim_b = 2;
  mc.embedding.char_dim = 2;
  mc.embedding.char_emb_dim = 2;
  mc.init_scale = 0.5;
  mc.embedding.init_scale = 0.5;
  mc.seed = seed;
  const std::vector<corpus::Tokens> seqs = {{"how", "do", "i", "ls", "__eot__"}, {"try", "ls", "-la"}, {"no"},
                                            {"ls", "lists", "files"}};
  corpus::Vocabulary vocab;
  for (const auto& s : seqs)
    for (const auto& t : s) {
      vocab.add(t);
      for (char32_t c : corpus::utf8_decode(t)) vocab.add_char(c);
    }
  auto model = esim::make_model(variant, mc, vocab);
  const std::vector<esim::PairInput> pairs = {{&seqs[0], &seqs[1], &seqs[3]}, {&seqs[0], &seqs[2], &seqs[3]}};
  const std::vector<double> labels = {1, 0};
  auto loss = [&](ad::Tape& tape) { return esim::bce_loss(model->forward(tape, pairs), labels); };
  const auto r = ad::gradient_check(loss, model->params());
  nlohmann::ordered_json j;
  j["variant"] = esim::to_string(variant);
  j["max_rel_error"] = r.max_rel_error;
  j["worst_parameter"] = r.worst_parameter;
  j["checked"] = r.checked;
  std::cout << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Next-utterance selection with ESIM, K-ESIM and T-ESIM"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "key=value config file");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--variant", g.variant, "model variant")->check(CLI::IsMember({"esim", "kesim"}));
  app.add_option("--tesim", g.tesim, "similar-dialog augmentation")->check(CLI::IsMember({"off", "on"}));
  app.add_option("--subtask", g.subtask, "DSTC7 subtask")->check(CLI::Range(1, 5));

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus and fixture man pages");
  synth->fallthrough();
  synth::SynthConfig sc;
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--dialogs", sc.n_dialogs);
  synth->add_option("--templates", sc.n_templates);
  synth->add_option("--vocab", sc.vocab_size, "filler vocabulary size");
  synth->add_option("--candidates", sc.n_candidates);
  synth->add_option("--train-fraction", sc.train_fraction);
  synth->add_option("--valid-fraction", sc.valid_fraction);
  synth->add_option("--overlap", sc.overlap_rate, "probability that a response repeats a context word");

  // train
  auto* train = app.add_subcommand("train", "train a model and save it to a directory");
  train->fallthrough();
  std::string train_path, valid_path, model_dir, man_dir, courses_path;
  std::optional<std::int64_t> steps;
  train->add_option("--train", train_path, "training set (JSON lines)")->required();
  train->add_option("--valid", valid_path, "evaluate on this set after training");
  train->add_option("--out", model_dir, "model directory")->required();
  train->add_option("--man-pages", man_dir, "man page directory (kesim)");
  train->add_option("--courses", courses_path, "course records (kesim)");
  train->add_option("--steps", steps, "override max_steps");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score a dataset and print one metrics line");
  evaluate->fallthrough();
  std::string eval_data, eval_pool;
  std::vector<std::string> seen_paths;
  std::string cr = "off";
  evaluate->add_option("--model", model_dir, "model directory")->required();
  evaluate->add_option("--data", eval_data, "dataset (JSON lines)")->required();
  evaluate->add_option("--seen", seen_paths, "datasets whose correct responses feed candidate reduction");
  evaluate->add_option("--cr", cr, "candidate reduction")->check(CLI::IsMember({"off", "on"}));
  evaluate->add_option("--pool", eval_pool, "global candidate pool for subtask 2 ({\"id\",\"text\"} lines)");
  evaluate->add_option("--man-pages", man_dir);
  evaluate->add_option("--courses", courses_path);

  // extract-knowledge
  auto* extract = app.add_subcommand("extract-knowledge", "write knowledge snippets for a dataset");
  extract->fallthrough();
  std::string data_path, out_path;
  extract->add_option("--data", data_path)->required();
  extract->add_option("--man-pages", man_dir);
  extract->add_option("--courses", courses_path);
  extract->add_option("--out", out_path)->required();

  // build-subdialog-index
  auto* build_index = app.add_subcommand("build-subdialog-index", "index the sub-dialogs of a training set");
  build_index->fallthrough();
  build_index->add_option("--train", train_path)->required();
  build_index->add_option("--out", out_path)->required();

  // augment
  auto* augment = app.add_subcommand("augment", "append retrieved responses to contexts");
  augment->fallthrough();
  std::string index_path, mode = "eval";
  augment->add_option("--data", data_path)->required();
  augment->add_option("--index", index_path)->required();
  augment->add_option("--mode", mode)->check(CLI::IsMember({"train", "eval"}));
  augment->add_option("--out", out_path)->required();

  // reduce-candidates
  auto* reduce = app.add_subcommand("reduce-candidates", "drop candidates already seen as correct responses");
  reduce->fallthrough();
  std::string report_path;
  bool unprotected = false;
  reduce->add_option("--data", data_path)->required();
  reduce->add_option("--seen", seen_paths)->required();
  reduce->add_option("--out", out_path)->required();
  reduce->add_option("--report", report_path, "removed ids per example");
  reduce->add_flag("--unprotected", unprotected, "also drop ground-truth candidates");

  // shortlist
  auto* shortlist = app.add_subcommand("shortlist", "replace candidates with the top IR matches from a pool");
  shortlist->fallthrough();
  std::size_t size = tesim::kShortlistSize;
  shortlist->add_option("--data", data_path)->required();
  shortlist->add_option("--pool", eval_pool)->required();
  shortlist->add_option("--size", size);
  shortlist->add_option("--out", out_path)->required();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of a tiny model");
  gradcheck->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      if (g.seed) sc.seed = *g.seed;
      synth::write(synth::generate(sc), synth_out);
      return 0;
    }
    if (*gradcheck) {
      const auto cfg = resolve(g);
      print_gradcheck(cfg.train.variant, cfg.train.seed);
      return 0;
    }
    if (*build_index) {
      const auto cfg = resolve(g);
      tesim::SubDialogIndex::from_examples(corpus::load_dataset(train_path, subtask_of(cfg))).save(out_path);
      return 0;
    }
    if (*augment) {
      const auto cfg = resolve(g);
      const auto index = tesim::SubDialogIndex::load(index_path);
      corpus::save_dataset(out_path, tesim::augment_dataset(corpus::load_dataset(data_path, subtask_of(cfg)), index,
                                                            mode == "train" ? tesim::Mode::train : tesim::Mode::eval));
      return 0;
    }
    if (*reduce) {
      const auto cfg = resolve(g);
      const auto seen = load_seen(seen_paths, subtask_of(cfg));
      std::vector<corpus::Example> out;
      std::ofstream report;
      if (!report_path.empty()) {
        report.open(report_path);
        if (!report) throw std::runtime_error("cannot write " + report_path);
      }
      for (const auto& ex : corpus::load_dataset(data_path, subtask_of(cfg))) {
        std::vector<std::string> removed;
        out.push_back(tesim::reduce_candidates(ex, seen, !unprotected, &removed));
        if (report.is_open()) report << nlohmann::json{{"example-id", ex.dialog_id}, {"removed", removed}}.dump() << "\n";
      }
      corpus::save_dataset(out_path, out);
      return 0;
    }
    if (*shortlist) {
      const auto cfg = resolve(g);
      const tesim::CandidatePool pool(load_pool(eval_pool));
      auto data = corpus::load_dataset(data_path, subtask_of(cfg));
      for (auto& ex : data) ex.candidates = pool.shortlist(ex.context_tokens(), size);
      corpus::save_dataset(out_path, data);
      return 0;
    }
    if (*extract) {
      const auto cfg = resolve(g);
      const auto k = load_knowledge(man_dir.empty() ? cfg.man_pages : man_dir,
                                    courses_path.empty() ? cfg.courses : courses_path);
      std::vector<std::pair<std::string, corpus::Tokens>> snippets;
      for (auto ex : corpus::load_dataset(data_path, subtask_of(cfg))) {
        ex.knowledge.reset();
        harness::attach_knowledge(ex, k.sources());
        snippets.emplace_back(ex.dialog_id, *ex.knowledge);
      }
      knowledge::save_snippets(out_path, snippets);
      return 0;
    }
    if (*train) {
      auto cfg = resolve(g);
      if (steps) cfg.train.max_steps = *steps;
      if (!man_dir.empty()) cfg.man_pages = man_dir;
      if (!courses_path.empty()) cfg.courses = courses_path;
      auto data = corpus::load_dataset(train_path, subtask_of(cfg));
      apply_snippets(data, cfg.snippets);
      const bool kesim = cfg.train.variant == esim::Variant::kesim;
      Knowledge k = kesim ? load_knowledge(cfg.man_pages, cfg.courses) : Knowledge{};

      std::optional<tesim::SubDialogIndex> index;
      if (cfg.tesim) {
        index = tesim::SubDialogIndex::from_examples(data);
        std::filesystem::create_directories(model_dir);
        const auto index_file = std::filesystem::path(model_dir) / "subdialogs.jsonl";
        index->save(index_file.string());
        cfg.subdialog_index = index_file.string();
      }
      harness::TrainDataOptions td;
      td.tesim = cfg.tesim;
      td.subdialogs = index ? &*index : nullptr;
      td.sampled_negatives = cfg.sampled_negatives;
      td.seed = cfg.train.seed;
      td.knowledge = k.sources();
      const auto prepared = harness::prepare_train(data, cfg.train.variant, td);

      auto bundle = harness::build_model(cfg, corpus::build_vocabulary(prepared));
      const auto start = std::chrono::steady_clock::now();
      const auto log = harness::train(cfg.train, prepared, *bundle.model);
      for (const auto& [step, loss] : log.losses)
        std::cerr << "step " << step << " loss " << loss << "\n";
      std::cerr << "trained " << log.steps << " steps in "
                << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s\n";
      harness::save_bundle(model_dir, bundle);

      if (!valid_path.empty()) {
        EvalAssets assets;
        assets.index = std::move(index);
        assets.knowledge = std::move(k);
        if (cfg.candidate_reduction) assets.seen = tesim::seen_correct_responses(data);
        auto valid = corpus::load_dataset(valid_path, subtask_of(cfg));
        apply_snippets(valid, cfg.snippets);
        const auto r = harness::evaluate_subtask(*bundle.model, valid, eval_options(cfg, assets));
        std::cout << harness::metrics_line(r.metrics, run_options(cfg)) << "\n";
      }
      return 0;
    }
    if (*evaluate) {
      auto bundle = harness::load_bundle(model_dir);
      auto cfg = resolve(g, bundle.config);
      if (cr == "on") cfg.candidate_reduction = true;
      if (cfg.train.variant != bundle.model->variant())
        throw harness::ConfigError("--variant does not match the saved model");
      EvalAssets assets;
      if (cfg.tesim) {
        if (cfg.subdialog_index.empty()) throw harness::ConfigError("T-ESIM evaluation needs a sub-dialog index");
        assets.index = tesim::SubDialogIndex::load(cfg.subdialog_index);
      }
      if (cfg.candidate_reduction) {
        if (seen_paths.empty()) throw harness::ConfigError("candidate reduction needs --seen datasets");
        assets.seen = load_seen(seen_paths, subtask_of(cfg));
      }
      if (!eval_pool.empty()) assets.pool.emplace(load_pool(eval_pool));
      if (cfg.train.variant == esim::Variant::kesim)
        assets.knowledge = load_knowledge(man_dir.empty() ? cfg.man_pages : man_dir,
                                          courses_path.empty() ? cfg.courses : courses_path);
      auto data = corpus::load_dataset(eval_data, subtask_of(cfg));
      apply_snippets(data, cfg.snippets);
      const auto r = harness::evaluate_subtask(*bundle.model, data, eval_options(cfg, assets));
      std::cout << harness::metrics_line(r.metrics, run_options(cfg)) << "\n";
      return 0;
    }
  } catch (const harness::ConfigError& ex) {
    std::cerr << "configuration error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
