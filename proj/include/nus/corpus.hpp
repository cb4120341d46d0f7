#pragma once

// Dialog data model, tokenization, dataset IO and vocabulary.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace nus::corpus {

using Tokens = std::vector<std::string>;

inline constexpr std::string_view kEot = "__eot__";
inline constexpr std::string_view kPad = "<pad>";
inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kNoneId = "__none__";
inline constexpr std::string_view kNoneText = "none";
inline constexpr std::size_t kDefaultMaxContextLen = 400;

enum class Speaker { A, B, Retrieved };

std::string_view to_string(Speaker s);
/// Accepts "A"/"B" (any case), "retrieved", and the DSTC7 participant names
/// "participant_1"/"participant_2" and "student"/"advisor".
Speaker parse_speaker(std::string_view s);

/// Lowercases, splits on whitespace and strips punctuation from token edges.
/// Hyphens, dots and underscores inside a token are kept ("apt-get",
/// "file.txt"), and a leading hyphen survives so flags such as "-la" stay intact.
Tokens tokenize(std::string_view text);

/// Tokens re-joined with single spaces; used as the identity of a response text.
std::string normalize_text(std::string_view text);

struct Utterance {
  Speaker speaker = Speaker::A;
  std::string text;
  Tokens tokens;

  Utterance() = default;
  Utterance(Speaker s, std::string t) : speaker(s), text(std::move(t)), tokens(tokenize(text)) {}
};

struct Dialog {
  std::string id;
  std::vector<Utterance> turns;
};

struct Candidate {
  std::string id;
  std::string text;
  Tokens tokens;

  bool is_none() const { return id == kNoneId; }
};

Candidate make_candidate(std::string id, std::string text);
Candidate none_candidate();

enum class Subtask { one = 1, two = 2, three = 3, four = 4, five = 5 };

Subtask subtask_from_int(int n);
int to_int(Subtask s);

struct Example {
  std::string split;
  std::string dialog_id;
  std::vector<Utterance> turns;
  std::vector<Candidate> candidates;
  std::set<std::string> correct_ids;
  std::optional<Tokens> knowledge;
  std::vector<std::string> suggested_courses;
  Subtask subtask = Subtask::one;

  /// Flattened context tokens, each turn followed by __eot__.
  Tokens context_tokens() const;
  bool is_correct(const Candidate& c) const { return correct_ids.count(c.id) > 0; }
  /// Index of the first correct candidate, or npos.
  std::size_t first_correct_index() const;
};

/// Turns in order, each followed by the __eot__ separator.
Tokens flatten_context(const Dialog& dialog);
Tokens flatten_turns(const std::vector<Utterance>& turns);

/// Keeps the most recent max_len tokens.
Tokens truncate_recent(const Tokens& tokens, std::size_t max_len);

/// Context turns plus the (single) correct response as the final turn.
/// Examples whose correct answer is not among the candidates yield the context only.
Dialog to_dialog(const Example& ex);

/// Checks the per-subtask label invariants; throws std::invalid_argument.
void validate(const Example& ex);

/// Raised for malformed dataset records; carries the 0-based record index.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t record, const std::string& what)
      : std::runtime_error("record " + std::to_string(record) + ": " + what), record_(record) {}
  std::size_t record() const { return record_; }

 private:
  std::size_t record_;
};

/// Parses one JSON-lines record (see README for field names).
Example parse_record(std::string_view line, Subtask subtask, std::size_t record_index);
std::string serialize_record(const Example& ex);

/// One Example per non-blank line. Subtask-4 examples always carry the None
/// candidate; a record without a correct id is labelled with it.
std::vector<Example> load_dataset(const std::string& path, Subtask subtask);
std::vector<Example> parse_dataset(std::string_view content, Subtask subtask);
void save_dataset(const std::string& path, const std::vector<Example>& examples);

class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kEotId = 2;

  Vocabulary();

  int index(const std::string& token) const;
  bool contains(const std::string& token) const { return tokens_.count(token) > 0; }
  const std::string& token(int id) const { return by_id_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return by_id_.size(); }
  const std::vector<std::string>& tokens() const { return by_id_; }

  int char_index(char32_t c) const;
  std::size_t char_size() const { return chars_.size() + 2; }

  /// Appends a token if unseen; returns its index.
  int add(const std::string& token);
  void add_char(char32_t c);

  /// Plain-text form: one token per line, then a "#chars" line and one
  /// code point per line. Reserved entries are implied.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);

  bool operator==(const Vocabulary& other) const {
    return by_id_ == other.by_id_ && chars_ == other.chars_;
  }

 private:
  std::unordered_map<std::string, int> tokens_;
  std::vector<std::string> by_id_;
  std::map<char32_t, int> chars_;
};

/// Tokens of contexts, candidates and knowledge with frequency >= min_count,
/// ordered by (frequency desc, token asc). Characters are collected from every
/// token regardless of count.
Vocabulary build_vocabulary(const std::vector<Example>& examples, int min_count = 1);

/// Decodes UTF-8 leniently; invalid bytes become U+FFFD.
std::u32string utf8_decode(std::string_view s);

}  // namespace nus::corpus
