#include "nus/corpus.hpp"

#include "doctest.h"

#include <fstream>
#include <sstream>

using namespace nus::corpus;

namespace {

Tokens split_ws(const std::string& s) {
  Tokens out;
  std::istringstream in(s);
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

}  // namespace

TEST_CASE("tokenize reference cases") {
  CHECK(tokenize("").empty());
  std::ifstream f(NUS_FIXTURES "/tokenize_cases.tsv");
  REQUIRE(f);
  int cases = 0;
  for (std::string line; std::getline(f, line);) {
    const auto tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    INFO("input: " << line.substr(0, tab));
    CHECK(tokenize(line.substr(0, tab)) == split_ws(line.substr(tab + 1)));
    ++cases;
  }
  CHECK(cases >= 10);
}

TEST_CASE("flatten context") {
  Dialog d{"x", {Utterance(Speaker::A, "hi"), Utterance(Speaker::B, "hello")}};
  CHECK(flatten_context(d) == Tokens{"hi", "__eot__", "hello", "__eot__"});
  Dialog one{"y", {Utterance(Speaker::A, "ok")}};
  CHECK(flatten_context(one) == Tokens{"ok", "__eot__"});
  CHECK(truncate_recent({"a", "b", "c", "d"}, 2) == Tokens{"c", "d"});
}

TEST_CASE("parse subtask 1 record") {
  std::string line = R"({"example-id": "e1", "data-split": "train", "context": [{"speaker": "A", "text": "How do I list files?"}], "candidates": [)";
  for (int i = 0; i < 100; ++i) {
    if (i) line += ",";
    line += R"({"id": "c)" + std::to_string(i) + R"(", "text": "answer )" + std::to_string(i) + R"("})";
  }
  line += R"(], "correct-ids": ["c7"]})";
  const Example ex = parse_record(line, Subtask::one, 0);
  CHECK(ex.candidates.size() == 100);
  CHECK(ex.correct_ids.size() == 1);
  CHECK(ex.first_correct_index() == 7);
  CHECK(ex.context_tokens() == Tokens{"how", "do", "i", "list", "files", "__eot__"});

  const Example again = parse_record(serialize_record(ex), Subtask::one, 0);
  CHECK(again.candidates.size() == 100);
  CHECK(again.correct_ids == ex.correct_ids);
  CHECK(again.dialog_id == "e1");
}

TEST_CASE("DSTC7 field names") {
  const std::string line = R"({"example-id": 42, "messages-so-far": [{"speaker": "participant_1", "utterance": "hey"}], "options-for-next": [{"candidate-id": "a", "utterance": "yo"}, {"candidate-id": "b", "utterance": "no"}], "options-for-correct-answers": [{"candidate-id": "b", "utterance": "no"}]})";
  const Example ex = parse_record(line, Subtask::one, 3);
  CHECK(ex.dialog_id == "42");
  CHECK(ex.turns[0].speaker == Speaker::A);
  CHECK(ex.correct_ids == std::set<std::string>{"b"});
}

TEST_CASE("subtask 4 None candidate") {
  const std::string none_correct = R"({"example-id": "n", "context": [{"text": "q"}], "candidates": [{"id": "a", "text": "x"}, {"id": "b", "text": "y"}], "correct-ids": []})";
  const Example ex = parse_record(none_correct, Subtask::four, 0);
  CHECK(ex.correct_ids == std::set<std::string>{std::string(kNoneId)});
  CHECK(ex.candidates.back().is_none());
  CHECK(ex.candidates.back().tokens == Tokens{"none"});

  const std::string with_answer = R"({"example-id": "m", "context": [{"text": "q"}], "candidates": [{"id": "a", "text": "x"}], "correct-ids": ["a"]})";
  const Example ex2 = parse_record(with_answer, Subtask::four, 0);
  CHECK(ex2.candidates.size() == 2);
  CHECK(ex2.correct_ids == std::set<std::string>{"a"});
}

TEST_CASE("malformed records name the record") {
  const std::string no_cands = R"({"example-id": "e", "context": [{"text": "q"}], "correct-ids": ["a"]})";
  try {
    parse_record(no_cands, Subtask::one, 5);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.record() == 5);
    CHECK(std::string(e.what()).find("record 5") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_dataset("{\"example-id\": \"a\"}\nnot json\n", Subtask::one), ParseError);
  const std::string two_correct = R"({"example-id": "e", "context": [{"text": "q"}], "candidates": [{"id": "a", "text": "x"}, {"id": "b", "text": "y"}], "correct-ids": ["a", "b"]})";
  CHECK_THROWS_AS(parse_record(two_correct, Subtask::one, 0), ParseError);
  CHECK_NOTHROW(parse_record(two_correct, Subtask::three, 0));
}

TEST_CASE("pooled subtask 2 record") {
  const std::string line = R"({"example-id": "p", "context": [{"text": "q"}], "candidates": [], "correct-ids": ["g17"]})";
  const Example ex = parse_record(line, Subtask::two, 0);
  CHECK(ex.candidates.empty());
  CHECK(ex.correct_ids.count("g17"));
}

TEST_CASE("vocabulary") {
  auto make = [](const std::string& text) {
    Example ex;
    ex.dialog_id = "v";
    ex.turns.emplace_back(Speaker::A, text);
    ex.candidates.push_back(make_candidate("c", "a"));
    ex.correct_ids.insert("c");
    return ex;
  };
  // "a" appears three times, "b" once.
  const auto v = build_vocabulary({make("a b")}, 2);
  CHECK(v.contains("a"));
  CHECK(v.index("b") == Vocabulary::kUnkId);
  CHECK(v.index("<pad>") == Vocabulary::kPadId);
  CHECK(v.index("__eot__") == Vocabulary::kEotId);

  const auto empty = build_vocabulary({});
  CHECK(empty.size() == 3);

  const auto x = build_vocabulary({make("z y x w"), make("y x")});
  const auto y = build_vocabulary({make("z y x w"), make("y x")});
  CHECK(x == y);
  CHECK(Vocabulary::deserialize(x.serialize()) == x);
}
