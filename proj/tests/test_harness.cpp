#include "nus/config.hpp"
#include "nus/evaluate.hpp"
#include "nus/metrics.hpp"
#include "nus/synth.hpp"
#include "nus/train.hpp"

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace nus;
using namespace nus::harness;
namespace fs = std::filesystem;

namespace {

// Rank of candidate i counts strictly better scores plus ties listed earlier.
std::size_t brute_rank(const std::vector<double>& s, std::size_t i) {
  std::size_t r = 1;
  for (std::size_t j = 0; j < s.size(); ++j)
    if (s[j] > s[i] || (s[j] == s[i] && j < i)) ++r;
  return r;
}

Metrics brute_metrics(const std::vector<std::vector<double>>& scores, const std::vector<std::set<std::size_t>>& correct) {
  Metrics m;
  m.examples = scores.size();
  for (std::size_t e = 0; e < scores.size(); ++e) {
    std::size_t best = SIZE_MAX;
    for (auto i : correct[e]) best = std::min(best, brute_rank(scores[e], i));
    m.recall_at_1 += best <= 1;
    m.recall_at_10 += best <= 10;
    m.recall_at_50 += best <= 50;
    m.mrr += 1.0 / double(best);
  }
  const double n = double(scores.size());
  m.recall_at_1 /= n;
  m.recall_at_10 /= n;
  m.recall_at_50 /= n;
  m.mrr /= n;
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

synth::SynthConfig tiny_synth() {
  synth::SynthConfig sc;
  sc.n_dialogs = 12;
  sc.n_templates = 3;
  sc.n_candidates = 4;
  sc.train_fraction = 0.5;
  sc.valid_fraction = 0.25;
  return sc;
}

RunConfig tiny_run() {
  auto cfg = profile("desk");
  cfg.model.hidden = 4;
  cfg.model.mlp_hidden = 6;
  cfg.model.embedding.dim_a = 6;
  cfg.model.embedding.dim_b = 4;
  cfg.model.embedding.char_dim = 4;
  cfg.model.embedding.char_emb_dim = 3;
  cfg.train.batch_size = 4;
  cfg.train.max_steps = 6;
  cfg.train.log_every = 2;
  return cfg;
}

}  // namespace

TEST_CASE("metrics on hand rankings") {
  const std::vector<Ranking> r{{{"a", "b", "c"}, {"a"}}, {{"a", "b", "c"}, {"c"}}, {{"a", "b", "c"}, {"b", "c"}}};
  const Metrics m = compute_metrics(r);
  CHECK(m.recall_at_1 == doctest::Approx(1.0 / 3));
  CHECK(m.recall_at_10 == 1.0);
  CHECK(m.mrr == doctest::Approx((1.0 + 1.0 / 3 + 0.5) / 3));
  CHECK(best_rank({{"a", "b"}, {"z"}}) == 0);
  CHECK_THROWS_AS(compute_metrics({{{"a"}, {}}}), std::invalid_argument);
  CHECK(rank_by_score({"x", "y", "z"}, {0.5, 0.9, 0.5}) == std::vector<std::string>{"y", "x", "z"});
}

TEST_CASE("metrics agree with brute force ranking") {
  std::mt19937_64 rng(3);
  std::vector<std::vector<double>> scores;
  std::vector<std::set<std::size_t>> correct;
  std::vector<Ranking> rankings;
  for (int e = 0; e < 100; ++e) {
    const std::size_t n = 2 + rng() % 120;
    std::vector<double> s(n);
    // Coarse scores so ties happen.
    for (auto& x : s) x = double(rng() % 20) / 20.0;
    std::set<std::size_t> c{static_cast<std::size_t>(rng() % n)};
    if (rng() % 3 == 0) c.insert(rng() % n);
    std::vector<std::string> ids;
    std::set<std::string> cid;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("c" + std::to_string(i));
    for (auto i : c) cid.insert(ids[i]);
    rankings.push_back({rank_by_score(ids, s), cid});
    scores.push_back(s);
    correct.push_back(c);
  }
  const Metrics got = compute_metrics(rankings), want = brute_metrics(scores, correct);
  CHECK(got.recall_at_1 == doctest::Approx(want.recall_at_1).epsilon(1e-12));
  CHECK(got.recall_at_10 == doctest::Approx(want.recall_at_10).epsilon(1e-12));
  CHECK(got.recall_at_50 == doctest::Approx(want.recall_at_50).epsilon(1e-12));
  CHECK(got.mrr == doctest::Approx(want.mrr).epsilon(1e-12));
}

TEST_CASE("learning rate staircase") {
  TrainConfig cfg;
  CHECK(lr_schedule(0, cfg) == 0.001);
  CHECK(lr_schedule(4999, cfg) == 0.001);
  CHECK(std::abs(lr_schedule(5000, cfg) - 0.001 * 0.96) < 1e-15);
  CHECK(std::abs(lr_schedule(10000, cfg) - 0.0009216) < 1e-15);
  cfg.batch_size = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("config parsing") {
  const auto cfg = parse_config("# run\nvariant = kesim\nprofile = full\nlr = 0.01\ntesim = on\nseed = 5\n");
  CHECK(cfg.train.variant == esim::Variant::kesim);
  CHECK(cfg.train.batch_size == 128);
  CHECK(cfg.model.hidden == 200);
  CHECK(cfg.train.lr0 == 0.01);
  CHECK(cfg.tesim);
  CHECK(cfg.train.seed == 5);
  CHECK(cfg.model.seed == 5);
  CHECK(parse_config("").model.hidden == 16);

  try {
    parse_config("hidden = 3\nbogus = 1\n");
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS(parse_config("tesim = maybe"));
  CHECK_THROWS(parse_config("hidden 3"));
  CHECK_THROWS(profile("huge"));

  const auto back = parse_config(serialize_config(cfg));
  CHECK(back.to_map() == cfg.to_map());
}

TEST_CASE("synthetic corpus") {
  const auto sc = tiny_synth();
  const auto a = synth::generate(sc);
  CHECK(a.train.size() + a.valid.size() + a.test.size() == sc.n_dialogs);
  CHECK(a.train.size() == 6);
  for (const auto* split : {&a.train, &a.valid, &a.test})
    for (const auto& ex : *split) {
      CHECK(ex.candidates.size() == sc.n_candidates);
      CHECK(ex.correct_ids.size() == 1);
      CHECK_NOTHROW(corpus::validate(ex));
    }

  const auto d1 = fs::temp_directory_path() / "nus_synth_a", d2 = fs::temp_directory_path() / "nus_synth_b";
  synth::write(a, d1);
  synth::write(synth::generate(sc), d2);
  for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl"}) CHECK(slurp(d1 / f) == slurp(d2 / f));
  auto other = sc;
  other.seed = 2;
  CHECK(synth::generate(other).train[0].turns[0].text != a.train[0].turns[0].text);

  // Every dialog that names a command gets man-page knowledge.
  const auto idx = knowledge::KnowledgeIndex::build(knowledge::parse_man_pages((d1 / "manpages").string()));
  std::size_t with_command = 0;
  for (const auto& ex : a.train) {
    const auto ctx = ex.context_tokens();
    const bool names = std::any_of(a.commands.begin(), a.commands.end(),
                                   [&](const auto& c) { return std::find(ctx.begin(), ctx.end(), c) != ctx.end(); });
    if (!names) continue;
    ++with_command;
    CHECK_FALSE(knowledge::extract_snippet(ctx, idx).empty());
  }
  CHECK(with_command > 0);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("subtask 2 applies reduction before the shortlist") {
  corpus::Example ex;
  ex.dialog_id = "q";
  ex.subtask = corpus::Subtask::two;
  ex.turns.emplace_back(corpus::Speaker::A, "printer queue stuck cups");
  ex.correct_ids = {"p2"};
  std::vector<corpus::Candidate> pool{corpus::make_candidate("p1", "restart cups printer queue"),
                                      corpus::make_candidate("p2", "cups queue clear"),
                                      corpus::make_candidate("p3", "printer is stuck"),
                                      corpus::make_candidate("p4", "kernel panic"),
                                      corpus::make_candidate("p5", "nothing here")};
  const tesim::CandidatePool cp(pool);
  const std::set<std::string> seen{corpus::normalize_text("restart cups printer queue"),
                                   corpus::normalize_text("cups queue clear")};
  EvalOptions opts;
  opts.subtask = corpus::Subtask::two;
  opts.global_pool = &cp;
  opts.shortlist_size = 3;

  const auto plain = prepare_eval({ex}, esim::Variant::esim, opts)[0].candidates;
  REQUIRE(plain.size() == 3);
  CHECK(plain[0].id == "p1");

  opts.candidate_reduction = true;
  opts.seen_correct = &seen;
  const auto reduced = prepare_eval({ex}, esim::Variant::esim, opts)[0].candidates;
  // p1 is gone and the freed slot is refilled from the pool; p2 is protected.
  CHECK(reduced.size() == 3);
  CHECK(std::none_of(reduced.begin(), reduced.end(), [](const auto& c) { return c.id == "p1"; }));
  CHECK(std::any_of(reduced.begin(), reduced.end(), [](const auto& c) { return c.id == "p2"; }));

  EvalOptions missing;
  missing.subtask = corpus::Subtask::two;
  CHECK_THROWS_AS(prepare_eval({ex}, esim::Variant::esim, missing), ConfigError);
}

TEST_CASE("missing assets are configuration errors") {
  const auto data = synth::generate(tiny_synth());
  EvalOptions opts;
  CHECK_THROWS_AS(prepare_eval(data.valid, esim::Variant::kesim, opts), ConfigError);
  opts.tesim = true;
  CHECK_THROWS_AS(prepare_eval(data.valid, esim::Variant::esim, opts), ConfigError);
  EvalOptions cr;
  cr.candidate_reduction = true;
  CHECK_THROWS_AS(prepare_eval(data.valid, esim::Variant::esim, cr), ConfigError);
}

TEST_CASE("subtask 4 ranks None like any candidate") {
  const auto data = synth::generate(tiny_synth());
  auto cfg = tiny_run();
  auto bundle = build_model(cfg, corpus::build_vocabulary(data.train));
  auto ex = data.valid[0];
  ex.subtask = corpus::Subtask::four;
  ex.candidates.push_back(corpus::none_candidate());
  ex.correct_ids = {std::string(corpus::kNoneId)};
  EvalOptions opts;
  opts.subtask = corpus::Subtask::four;
  const auto r = evaluate_subtask(*bundle.model, {ex}, opts);
  REQUIRE(r.rankings.size() == 1);
  CHECK(r.rankings[0].ranked_ids.size() == ex.candidates.size());
  const std::size_t rank = best_rank(r.rankings[0]);
  CHECK(rank >= 1);
  CHECK(r.metrics.mrr == doctest::Approx(1.0 / double(rank)));
}

TEST_CASE("training, checkpoints and determinism") {
  const auto data = synth::generate(tiny_synth());
  const auto cfg = tiny_run();
  const auto vocab = corpus::build_vocabulary(data.train);

  auto run = [&] {
    auto bundle = build_model(cfg, vocab);
    auto log = train(cfg.train, data.train, *bundle.model);
    auto r = evaluate_subtask(*bundle.model, data.valid, EvalOptions{});
    return std::make_tuple(std::move(bundle), log, r);
  };
  auto [b1, log1, r1] = run();
  auto [b2, log2, r2] = run();
  CHECK(log1.steps == cfg.train.max_steps);
  CHECK(log1.losses == log2.losses);
  CHECK(r1.scores == r2.scores);
  CHECK(metrics_line(r1.metrics, {{"k", "v"}}) == metrics_line(r2.metrics, {{"k", "v"}}));

  const auto dir = fs::temp_directory_path() / "nus_bundle_test";
  save_bundle(dir, b1);
  const auto loaded = load_bundle(dir);
  const auto r3 = evaluate_subtask(*loaded.model, data.valid, EvalOptions{});
  REQUIRE(r3.scores.size() == r1.scores.size());
  for (std::size_t e = 0; e < r1.scores.size(); ++e)
    for (std::size_t i = 0; i < r1.scores[e].size(); ++i) CHECK(std::abs(r3.scores[e][i] - r1.scores[e][i]) <= 1e-12);
  fs::remove_all(dir);

  int calls = 0;
  auto b4 = build_model(cfg, vocab);
  const auto short_log = train(cfg.train, data.train, *b4.model, [&](std::int64_t, double) { return ++calls < 3; });
  CHECK(short_log.steps == 3);

  auto wrong = cfg.train;
  wrong.variant = esim::Variant::kesim;
  CHECK_THROWS(train(wrong, data.train, *b4.model));
}

TEST_CASE("metrics line layout") {
  Metrics m{0.5, 0.75, 1.0, 0.625, 4};
  const auto line = metrics_line(m, {{"variant", "esim"}});
  CHECK(line.find("\"recall@1\":0.5") != std::string::npos);
  CHECK(line.find("recall@1") < line.find("recall@10"));
  CHECK(line.find("\"options\":{\"variant\":\"esim\"}") != std::string::npos);
}
