#pragma once

// External knowledge for K-ESIM: man-page entity/relation hashtables with
// TF-IDF snippet selection, and course KB records rendered as sentences.

#include "nus/corpus.hpp"
#include "nus/tfidf.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace nus::knowledge {

using corpus::Tokens;

/// The checked-in list of common English words filtered from relation keys.
const std::set<std::string>& default_stopwords();

struct ManPage {
  std::string command;
  Tokens name_summary;               // NAME summary after stopword filtering
  std::vector<std::string> description;  // DESCRIPTION split into sentences
};

/// Splits on '.', '!' or '?' followed by whitespace or end of text.
std::vector<std::string> split_sentences(std::string_view text);

/// Parses one plain-text page. Returns nullopt (and sets *why) if the page has
/// no usable NAME or DESCRIPTION section.
std::optional<ManPage> parse_man_page(std::string_view text, std::string* why = nullptr,
                                      const std::set<std::string>& stopwords = default_stopwords());

/// One ManPage per parseable file, in filename order. Unparseable pages are
/// skipped; a warning naming the file is appended to *warnings (or printed
/// to stderr when warnings is null).
std::vector<ManPage> parse_man_pages(const std::filesystem::path& dir, std::vector<std::string>* warnings = nullptr);

class KnowledgeIndex {
 public:
  /// Throws std::invalid_argument if pages is empty.
  static KnowledgeIndex build(const std::vector<ManPage>& pages,
                              const std::set<std::string>& stopwords = default_stopwords());

  bool has_entity(const std::string& command) const { return entity_.count(command) > 0; }
  /// Full description text of a command.
  const std::string& entity(const std::string& command) const;
  const std::vector<std::string>& sentences(const std::string& command) const;
  const std::map<std::string, std::string>& entities() const { return entity_; }
  const std::map<std::string, std::vector<std::string>>& relation() const { return relation_; }
  const TfidfModel& tfidf() const { return tfidf_; }
  const SparseVec& description_vector(const std::string& command) const;

 private:
  std::map<std::string, std::string> entity_;
  std::map<std::string, std::vector<std::string>> sentences_;
  std::map<std::string, std::vector<std::string>> relation_;
  std::map<std::string, SparseVec> vectors_;
  TfidfModel tfidf_;
};

enum class MatchSource { none, entity, relation };

struct CommandMatch {
  std::vector<std::string> commands;
  MatchSource source = MatchSource::none;
};

/// Direct entity hits and, for tokens longer than 8 characters, entity keys
/// related by substring containment in either direction. Only when both find
/// nothing are tokens looked up in the relation hashtable. De-duplicated, in
/// first-mention order.
CommandMatch match_commands_detailed(const Tokens& context, const KnowledgeIndex& index);
std::vector<std::string> match_commands(const Tokens& context, const KnowledgeIndex& index);

inline constexpr std::size_t kPartialMatchMinLength = 9;
inline constexpr std::size_t kTopCommands = 5;
inline constexpr std::size_t kSnippetWords = 200;

/// Ranks commands by description/context cosine, keeps the top k, ranks all
/// their description sentences by cosine to the context and emits tokens in
/// that order, cutting at max_words.
Tokens select_snippet(const std::vector<std::string>& commands, const Tokens& context, const KnowledgeIndex& index,
                      std::size_t k = kTopCommands, std::size_t max_words = kSnippetWords);

/// match_commands followed by select_snippet.
Tokens extract_snippet(const Tokens& context, const KnowledgeIndex& index);

struct CourseRecord {
  std::string id;
  std::optional<std::string> name;
  std::optional<std::string> workload;
  std::optional<std::string> class_size;
  std::optional<int> credits;
  std::optional<bool> discussion;
  std::vector<std::string> meeting_times;
  std::map<std::string, std::string> attributes;
};

/// "<id> is <name>, has <workload> workload, <size> class size, <n> credits,
/// has a discussion, the classes are on <times>"; absent fields drop their clause.
std::string course_to_sentence(const CourseRecord& rec);

CourseRecord parse_course(std::string_view json_line);
std::map<std::string, CourseRecord> load_courses(const std::string& path);

/// Sentences for the example's suggested courses (or, when none are listed,
/// course ids mentioned in the context), concatenated up to max_words tokens.
Tokens course_snippet(const corpus::Example& ex, const std::map<std::string, CourseRecord>& courses,
                      std::size_t max_words = kSnippetWords);

/// Snippet cache: one {"example-id", "knowledge": [tokens]} object per line.
void save_snippets(const std::string& path, const std::vector<std::pair<std::string, Tokens>>& snippets);
std::unordered_map<std::string, Tokens> load_snippets(const std::string& path);

}  // namespace nus::knowledge
