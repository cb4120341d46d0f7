#include "nus/knowledge.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace nus::knowledge {

using nlohmann::json;

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "a",       "about",   "above",  "after",  "again",   "against", "all",     "am",      "an",     "and",
      "any",     "are",     "as",     "at",     "be",      "because", "been",    "before",  "being",  "below",
      "between", "both",    "but",    "by",     "can",     "could",   "did",     "do",      "does",   "doing",
      "down",    "during",  "each",   "either", "else",    "etc",     "ever",    "every",   "few",    "for",
      "from",    "further", "get",    "gets",   "given",   "had",     "has",     "have",    "having", "he",
      "her",     "here",    "hers",   "him",    "his",     "how",     "i",       "if",      "in",     "into",
      "is",      "it",      "its",    "itself", "just",    "like",    "may",     "me",      "might",  "more",
      "most",    "much",    "must",   "my",     "no",      "nor",     "not",     "now",     "of",     "off",
      "often",   "on",      "once",   "one",    "only",    "or",      "other",   "our",     "ours",   "out",
      "over",    "own",     "per",    "same",   "she",     "should",  "since",   "so",      "some",   "such",
      "than",    "that",    "the",    "their",  "them",    "then",    "there",   "these",   "they",   "this",
      "those",   "through", "thus",   "to",     "too",     "under",   "until",   "up",      "upon",   "us",
      "use",     "used",    "uses",   "using",  "very",    "via",     "was",     "we",      "were",   "what",
      "when",    "where",   "whether", "which", "while",   "who",     "whom",    "why",     "will",   "with",
      "within",  "without", "would",  "yet",    "you",     "your",    "yours",   "also",    "another", "around",
      "cannot",  "either",  "instead", "least", "less",    "many",    "neither", "rather",  "several", "shall",
  };
  return words;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto push = [&](std::size_t end) {
    std::string_view s = text.substr(start, end - start);
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return;
    const auto e = s.find_last_not_of(" \t\r\n");
    out.emplace_back(s.substr(b, e - b + 1));
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') &&
        (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
      push(i + 1);
      start = i + 1;
    }
  }
  push(text.size());
  return out;
}

namespace {

bool is_section_header(const std::string& line) {
  if (line.empty() || std::isspace(static_cast<unsigned char>(line[0]))) return false;
  bool letter = false;
  for (unsigned char c : line) {
    if (std::isalpha(c)) {
      if (!std::isupper(c)) return false;
      letter = true;
    } else if (c != ' ' && c != '\t' && c != '\r') {
      return false;
    }
  }
  return letter;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

Tokens filter_stopwords(const Tokens& toks, const std::set<std::string>& stopwords) {
  Tokens out;
  for (const auto& t : toks)
    if (!stopwords.count(t)) out.push_back(t);
  return out;
}

}  // namespace

std::optional<ManPage> parse_man_page(std::string_view text, std::string* why, const std::set<std::string>& stopwords) {
  std::map<std::string, std::string> sections;
  std::string current;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (is_section_header(line)) {
      current = trim(line);
      sections[current];
      continue;
    }
    if (current.empty()) continue;
    auto body = trim(line);
    if (body.empty()) continue;
    auto& s = sections[current];
    if (!s.empty()) s += ' ';
    s += body;
  }
  auto fail = [&](const char* msg) -> std::optional<ManPage> {
    if (why) *why = msg;
    return std::nullopt;
  };
  auto name = sections.find("NAME");
  if (name == sections.end() || name->second.empty()) return fail("no NAME section");
  auto desc = sections.find("DESCRIPTION");
  if (desc == sections.end() || desc->second.empty()) return fail("no DESCRIPTION section");

  const std::string& n = name->second;
  auto dash = n.find(" - ");
  std::size_t dash_len = 3;
  if (dash == std::string::npos) {
    dash = n.find(" \\- ");
    dash_len = 4;
  }
  if (dash == std::string::npos) return fail("NAME section lacks 'command - summary'");
  std::string names = trim(n.substr(0, dash));
  const auto comma = names.find(',');
  ManPage page;
  page.command = trim(names.substr(0, comma));
  std::transform(page.command.begin(), page.command.end(), page.command.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (page.command.empty()) return fail("empty command name");
  page.name_summary = filter_stopwords(corpus::tokenize(n.substr(dash + dash_len)), stopwords);
  page.description = split_sentences(desc->second);
  return page;
}

std::vector<ManPage> parse_man_pages(const std::filesystem::path& dir, std::vector<std::string>* warnings) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<ManPage> pages;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string why;
    if (auto p = parse_man_page(ss.str(), &why)) {
      pages.push_back(std::move(*p));
    } else {
      std::string msg = "skipping man page " + f.filename().string() + ": " + why;
      if (warnings) warnings->push_back(std::move(msg));
      else std::cerr << "warning: " << msg << '\n';
    }
  }
  return pages;
}

KnowledgeIndex KnowledgeIndex::build(const std::vector<ManPage>& pages, const std::set<std::string>& stopwords) {
  if (pages.empty()) throw std::invalid_argument("knowledge index needs at least one man page");
  KnowledgeIndex idx;
  std::vector<std::string> order;
  for (const auto& p : pages) {
    if (idx.entity_.count(p.command)) continue;
    std::string text;
    for (const auto& s : p.description) {
      if (!text.empty()) text += ' ';
      text += s;
    }
    idx.entity_.emplace(p.command, text);
    idx.sentences_.emplace(p.command, p.description);
    order.push_back(p.command);
    for (const auto& w : p.name_summary) {
      if (stopwords.count(w)) continue;
      auto& cmds = idx.relation_[w];
      if (std::find(cmds.begin(), cmds.end(), p.command) == cmds.end()) cmds.push_back(p.command);
    }
  }
  std::vector<Tokens> docs;
  for (const auto& c : order) docs.push_back(corpus::tokenize(idx.entity_.at(c)));
  idx.tfidf_ = TfidfModel::fit(docs);
  for (std::size_t i = 0; i < order.size(); ++i) idx.vectors_.emplace(order[i], idx.tfidf_.transform(docs[i]));
  return idx;
}

const std::string& KnowledgeIndex::entity(const std::string& command) const { return entity_.at(command); }
const std::vector<std::string>& KnowledgeIndex::sentences(const std::string& command) const {
  return sentences_.at(command);
}
const SparseVec& KnowledgeIndex::description_vector(const std::string& command) const { return vectors_.at(command); }

CommandMatch match_commands_detailed(const Tokens& context, const KnowledgeIndex& index) {
  CommandMatch m;
  std::set<std::string> seen;
  auto take = [&](const std::string& c) {
    if (seen.insert(c).second) m.commands.push_back(c);
  };
  for (const auto& tok : context) {
    if (index.has_entity(tok)) take(tok);
    if (tok.size() >= kPartialMatchMinLength) {
      for (const auto& [cmd, _] : index.entities())
        if (cmd != tok && (tok.find(cmd) != std::string::npos || cmd.find(tok) != std::string::npos)) take(cmd);
    }
  }
  if (!m.commands.empty()) {
    m.source = MatchSource::entity;
    return m;
  }
  for (const auto& tok : context) {
    auto it = index.relation().find(tok);
    if (it == index.relation().end()) continue;
    for (const auto& c : it->second) take(c);
  }
  if (!m.commands.empty()) m.source = MatchSource::relation;
  return m;
}

std::vector<std::string> match_commands(const Tokens& context, const KnowledgeIndex& index) {
  return match_commands_detailed(context, index).commands;
}

Tokens select_snippet(const std::vector<std::string>& commands, const Tokens& context, const KnowledgeIndex& index,
                      std::size_t k, std::size_t max_words) {
  if (commands.empty() || max_words == 0) return {};
  const SparseVec query = index.tfidf().transform(context);

  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < commands.size(); ++i)
    ranked.emplace_back(cosine(index.description_vector(commands[i]), query), i);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  ranked.resize(std::min(k, ranked.size()));

  struct Sentence {
    double score;
    Tokens tokens;
  };
  std::vector<Sentence> sentences;
  for (const auto& [_, i] : ranked)
    for (const auto& s : index.sentences(commands[i])) {
      Tokens toks = corpus::tokenize(s);
      sentences.push_back({cosine(index.tfidf().transform(toks), query), std::move(toks)});
    }
  std::stable_sort(sentences.begin(), sentences.end(),
                   [](const Sentence& a, const Sentence& b) { return a.score > b.score; });

  Tokens out;
  for (const auto& s : sentences)
    for (const auto& t : s.tokens) {
      if (out.size() == max_words) return out;
      out.push_back(t);
    }
  return out;
}

Tokens extract_snippet(const Tokens& context, const KnowledgeIndex& index) {
  return select_snippet(match_commands(context, index), context, index);
}

std::string course_to_sentence(const CourseRecord& rec) {
  std::string s = rec.id;
  std::vector<std::string> clauses;
  if (rec.name) s += " is " + *rec.name;
  if (rec.workload) clauses.push_back("has " + *rec.workload + " workload");
  if (rec.class_size) clauses.push_back(*rec.class_size + " class size");
  if (rec.credits) clauses.push_back(std::to_string(*rec.credits) + " credits");
  if (rec.discussion) clauses.push_back(*rec.discussion ? "has a discussion" : "has no discussion");
  if (!rec.meeting_times.empty()) {
    std::string t = "the classes are on ";
    for (std::size_t i = 0; i < rec.meeting_times.size(); ++i) t += (i ? ", " : "") + rec.meeting_times[i];
    clauses.push_back(t);
  }
  for (const auto& c : clauses) s += ", " + c;
  return s;
}

CourseRecord parse_course(std::string_view json_line) {
  const json obj = json::parse(json_line);
  CourseRecord r;
  for (const auto& [key, value] : obj.items()) {
    if (key == "id") r.id = value.get<std::string>();
    else if (key == "name") r.name = value.get<std::string>();
    else if (key == "workload") r.workload = value.get<std::string>();
    else if (key == "class_size") r.class_size = value.get<std::string>();
    else if (key == "credits") r.credits = value.get<int>();
    else if (key == "discussion") r.discussion = value.get<bool>();
    else if (key == "meeting_times") r.meeting_times = value.get<std::vector<std::string>>();
    else r.attributes[key] = value.is_string() ? value.get<std::string>() : value.dump();
  }
  if (r.id.empty()) throw std::invalid_argument("course record without id");
  return r;
}

std::map<std::string, CourseRecord> load_courses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read course file: " + path);
  std::map<std::string, CourseRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto r = parse_course(line);
    out.emplace(r.id, std::move(r));
  }
  return out;
}

Tokens course_snippet(const corpus::Example& ex, const std::map<std::string, CourseRecord>& courses,
                      std::size_t max_words) {
  std::vector<std::string> ids = ex.suggested_courses;
  if (ids.empty()) {
    std::map<std::string, std::string> lower;
    for (const auto& [id, _] : courses) {
      std::string l = id;
      std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      lower.emplace(l, id);
    }
    for (const auto& t : ex.context_tokens()) {
      auto it = lower.find(t);
      if (it != lower.end() && std::find(ids.begin(), ids.end(), it->second) == ids.end()) ids.push_back(it->second);
    }
  }
  Tokens out;
  for (const auto& id : ids) {
    auto it = courses.find(id);
    if (it == courses.end()) continue;
    for (auto& t : corpus::tokenize(course_to_sentence(it->second))) {
      if (out.size() == max_words) return out;
      out.push_back(std::move(t));
    }
  }
  return out;
}

void save_snippets(const std::string& path, const std::vector<std::pair<std::string, Tokens>>& snippets) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write snippet cache: " + path);
  for (const auto& [id, toks] : snippets) out << json{{"example-id", id}, {"knowledge", toks}}.dump() << '\n';
}

std::unordered_map<std::string, Tokens> load_snippets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read snippet cache: " + path);
  std::unordered_map<std::string, Tokens> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json obj = json::parse(line);
    out[obj.at("example-id").get<std::string>()] = obj.at("knowledge").get<Tokens>();
  }
  return out;
}

}  // namespace nus::knowledge
