#include "nus/tesim.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

using namespace nus;
using corpus::Speaker;

namespace {

corpus::Example make_example(const std::string& id, const std::vector<std::string>& turns, const std::string& response) {
  corpus::Example ex;
  ex.dialog_id = id;
  for (std::size_t i = 0; i < turns.size(); ++i) ex.turns.emplace_back(i % 2 ? Speaker::B : Speaker::A, turns[i]);
  ex.candidates.push_back(corpus::make_candidate(id + "-ok", response));
  ex.candidates.push_back(corpus::make_candidate(id + "-bad", "unrelated filler text"));
  ex.correct_ids = {id + "-ok"};
  return ex;
}

corpus::Dialog make_dialog(const std::string& id, std::size_t turns) {
  corpus::Dialog d{id, {}};
  for (std::size_t i = 0; i < turns; ++i) d.turns.emplace_back(Speaker::A, "turn " + std::to_string(i));
  return d;
}

std::vector<corpus::Example> small_train() {
  return {make_example("d1", {"my wifi driver crashes", "which card"}, "install the firmware package"),
          make_example("d2", {"sound is muted after boot", "alsamixer"}, "unmute the master channel"),
          make_example("d3", {"grub menu missing", "dual boot"}, "run update-grub as root")};
}

}  // namespace

TEST_CASE("sub-dialog split counts") {
  CHECK(tesim::split_subdialogs(make_dialog("x", 4)).size() == 3);
  CHECK(tesim::split_subdialogs(make_dialog("x", 2)).size() == 1);
  CHECK(tesim::split_subdialogs(make_dialog("x", 1)).empty());

  const auto subs = tesim::split_subdialogs(make_dialog("x", 4));
  CHECK(subs[0].split_point == 2);
  CHECK(subs[2].response == corpus::Tokens{"turn", "3"});
  CHECK(subs[2].context == corpus::Tokens{"turn", "0", "__eot__", "turn", "1", "__eot__", "turn", "2", "__eot__"});
}

TEST_CASE("retrieval finds duplicates and skips the same parent") {
  const auto train = small_train();
  const auto index = tesim::SubDialogIndex::from_examples(train);
  CHECK(index.size() == 6);

  // A query equal to one indexed context scores a cosine of one.
  const auto& target = index.subdialogs()[4];
  const auto hits = index.find_similar(target.context, 1, "elsewhere");
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].sub == &target);
  CHECK(hits[0].cosine == doctest::Approx(1.0).epsilon(1e-12));

  for (const auto& h : index.find_similar(target.context, 9, target.parent_id)) CHECK(h.sub->parent_id != target.parent_id);
  CHECK(index.find_similar(target.context, 50, target.parent_id).size() == 4);
  CHECK_THROWS(index.find_similar(target.context, 0, ""));
  CHECK(tesim::SubDialogIndex{}.find_similar(target.context, 3, "").empty());

  const auto sorted = index.find_similar(target.context, 9, "");
  for (std::size_t i = 1; i < sorted.size(); ++i) CHECK(sorted[i - 1].cosine >= sorted[i].cosine);
}

TEST_CASE("augmentation modes") {
  const auto train = small_train();
  const auto index = tesim::SubDialogIndex::from_examples(train);
  const auto query = make_example("q", {"wifi driver crashes on my laptop", "which card"}, "try the firmware");

  const auto tr = tesim::augment(query, index.find_similar(query.context_tokens(), tesim::kTrainK, "q"), tesim::Mode::train);
  REQUIRE(tr.size() == 3);
  for (const auto& a : tr) {
    CHECK(a.example.turns.size() == query.turns.size() + 1);
    CHECK(a.example.turns.back().speaker == Speaker::Retrieved);
    CHECK(a.example.turns.back().tokens == a.retrieved_response);
    CHECK(a.example.candidates.size() == query.candidates.size());
    CHECK(a.example.correct_ids == query.correct_ids);
  }

  const auto ev = tesim::augment_dataset({query}, index, tesim::Mode::eval);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].turns.size() == 3);
  CHECK(ev[0].turns.back().tokens == tr[0].retrieved_response);

  // Training examples never retrieve from their own dialog.
  const auto aug = tesim::augment_dataset(train, index, tesim::Mode::train);
  CHECK(aug.size() == 9);
  const auto bad = index.find_similar(train[0].context_tokens(), 1, "");
  if (bad[0].sub->parent_id == "d1") CHECK_THROWS(tesim::augment(train[0], bad, tesim::Mode::eval));
  CHECK(tesim::augment(query, {}, tesim::Mode::train).size() == 1);
}

TEST_CASE("sampled negatives") {
  corpus::Example ex;
  ex.dialog_id = "big";
  ex.turns.emplace_back(Speaker::A, "hello");
  for (int i = 0; i < 100; ++i) ex.candidates.push_back(corpus::make_candidate("c" + std::to_string(i), "text " + std::to_string(i)));
  ex.correct_ids = {"c42"};

  const auto a = tesim::sample_negatives(ex, 9, 7);
  CHECK(a.candidates.size() == 10);
  CHECK(a.first_correct_index() != std::string::npos);
  std::set<std::string> ids;
  for (const auto& c : a.candidates) ids.insert(c.id);
  CHECK(ids.size() == 10);

  const auto b = tesim::sample_negatives(ex, 9, 7);
  CHECK(std::equal(a.candidates.begin(), a.candidates.end(), b.candidates.begin(),
                   [](const auto& x, const auto& y) { return x.id == y.id; }));
  const auto c = tesim::sample_negatives(ex, 9, 8);
  CHECK_FALSE(std::equal(a.candidates.begin(), a.candidates.end(), c.candidates.begin(),
                         [](const auto& x, const auto& y) { return x.id == y.id; }));
  CHECK(tesim::sample_negatives(ex, 500, 1).candidates.size() == 100);
}

TEST_CASE("candidate reduction") {
  corpus::Example ex;
  ex.dialog_id = "e";
  ex.turns.emplace_back(Speaker::A, "hi");
  ex.candidates = {corpus::make_candidate("c1", "Fresh answer"), corpus::make_candidate("c2", "Seen  before!"),
                   corpus::make_candidate("c3", "also seen"), corpus::none_candidate()};
  ex.correct_ids = {"c2"};
  const std::set<std::string> seen{corpus::normalize_text("seen before !"), corpus::normalize_text("Also seen")};

  std::vector<std::string> removed;
  const auto kept = tesim::reduce_candidates(ex, seen, true, &removed);
  CHECK(removed == std::vector<std::string>{"c3"});
  CHECK(kept.candidates.size() == 3);
  CHECK(kept.correct_ids == ex.correct_ids);

  removed.clear();
  const auto raw = tesim::reduce_candidates(ex, seen, false, &removed);
  CHECK(removed == std::vector<std::string>{"c2", "c3"});
  CHECK(raw.correct_ids.empty());

  CHECK(tesim::reduce_candidates(ex, {}).candidates.size() == 4);

  const auto s = tesim::seen_correct_responses({ex});
  CHECK(s == std::set<std::string>{corpus::normalize_text("seen before")});
}

TEST_CASE("global pool shortlist") {
  std::mt19937_64 rng(5);
  std::vector<std::string> words;
  for (int i = 0; i < 300; ++i) words.push_back("w" + std::to_string(i));
  std::vector<corpus::Candidate> pool;
  for (int i = 0; i < 1000; ++i) {
    std::string text;
    for (int j = 0; j < 8; ++j) text += words[rng() % words.size()] + " ";
    pool.push_back(corpus::make_candidate("p" + std::to_string(i), text));
  }
  pool[613] = corpus::make_candidate("p613", "zebra quokka axolotl narwhal");
  const auto context = corpus::tokenize("have you seen a zebra quokka or narwhal axolotl");

  const auto short_list = tesim::shortlist_global_pool(context, pool);
  CHECK(short_list.size() == 100);
  CHECK(short_list.front().id == "p613");

  const std::vector<corpus::Candidate> small(pool.begin(), pool.begin() + 50);
  CHECK(tesim::shortlist_global_pool(context, small).size() == 50);

  const tesim::CandidatePool cp(pool);
  const auto filtered = cp.shortlist(context, 100, [](const corpus::Candidate& c) { return c.id != "p613"; });
  CHECK(std::none_of(filtered.begin(), filtered.end(), [](const auto& c) { return c.id == "p613"; }));
}

TEST_CASE("sub-dialog index round trip") {
  const auto index = tesim::SubDialogIndex::from_examples(small_train());
  const auto path = (std::filesystem::temp_directory_path() / "nus_subdialogs_test.jsonl").string();
  index.save(path);
  const auto back = tesim::SubDialogIndex::load(path);
  REQUIRE(back.size() == index.size());
  const auto q = corpus::tokenize("grub menu missing after update");
  const auto a = index.find_similar(q, 3, ""), b = back.find_similar(q, 3, "");
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sub->parent_id == b[i].sub->parent_id);
    CHECK(a[i].sub->split_point == b[i].sub->split_point);
    CHECK(a[i].cosine == b[i].cosine);
  }
  std::filesystem::remove(path);
}
