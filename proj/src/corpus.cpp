#include "nus/corpus.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace nus::corpus {

using nlohmann::json;

std::string_view to_string(Speaker s) {
  switch (s) {
    case Speaker::A: return "A";
    case Speaker::B: return "B";
    case Speaker::Retrieved: return "retrieved";
  }
  return "A";
}

Speaker parse_speaker(std::string_view s) {
  std::string l(s);
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "a" || l == "participant_1" || l == "student") return Speaker::A;
  if (l == "b" || l == "participant_2" || l == "advisor") return Speaker::B;
  if (l == "retrieved") return Speaker::Retrieved;
  throw std::invalid_argument("unknown speaker: " + std::string(s));
}

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

// Inner punctuation survives; these also survive at the edges.
bool keep_leading(unsigned char c) { return c == '-' || c == '_'; }
bool keep_trailing(unsigned char c) { return c == '_'; }

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      std::size_t b = i, e = j;
      while (b < e && is_punct(static_cast<unsigned char>(text[b])) &&
             !keep_leading(static_cast<unsigned char>(text[b])))
        ++b;
      while (e > b && is_punct(static_cast<unsigned char>(text[e - 1])) &&
             !keep_trailing(static_cast<unsigned char>(text[e - 1])))
        --e;
      if (e > b) {
        std::string tok(text.substr(b, e - b));
        for (auto& c : tok)
          if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        out.push_back(std::move(tok));
      }
    }
    i = j;
  }
  return out;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  for (const auto& t : tokenize(text)) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

Candidate make_candidate(std::string id, std::string text) {
  Candidate c;
  c.id = std::move(id);
  c.text = std::move(text);
  c.tokens = tokenize(c.text);
  return c;
}

Candidate none_candidate() { return make_candidate(std::string(kNoneId), std::string(kNoneText)); }

Subtask subtask_from_int(int n) {
  if (n < 1 || n > 5) throw std::invalid_argument("subtask must be in 1..5, got " + std::to_string(n));
  return static_cast<Subtask>(n);
}

int to_int(Subtask s) { return static_cast<int>(s); }

Tokens flatten_turns(const std::vector<Utterance>& turns) {
  Tokens out;
  for (const auto& t : turns) {
    out.insert(out.end(), t.tokens.begin(), t.tokens.end());
    out.emplace_back(kEot);
  }
  return out;
}

Tokens flatten_context(const Dialog& dialog) { return flatten_turns(dialog.turns); }

Tokens Example::context_tokens() const { return flatten_turns(turns); }

std::size_t Example::first_correct_index() const {
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (is_correct(candidates[i])) return i;
  return static_cast<std::size_t>(-1);
}

Tokens truncate_recent(const Tokens& tokens, std::size_t max_len) {
  if (tokens.size() <= max_len) return tokens;
  return Tokens(tokens.end() - static_cast<std::ptrdiff_t>(max_len), tokens.end());
}

Dialog to_dialog(const Example& ex) {
  Dialog d;
  d.id = ex.dialog_id;
  d.turns = ex.turns;
  const auto k = ex.first_correct_index();
  if (k != static_cast<std::size_t>(-1) && !ex.candidates[k].is_none()) {
    Utterance u;
    u.speaker = ex.turns.empty() || ex.turns.back().speaker != Speaker::A ? Speaker::A : Speaker::B;
    u.text = ex.candidates[k].text;
    u.tokens = ex.candidates[k].tokens;
    d.turns.push_back(std::move(u));
  }
  return d;
}

void validate(const Example& ex) {
  std::set<std::string> ids;
  for (const auto& c : ex.candidates) {
    if (!ids.insert(c.id).second) throw std::invalid_argument("duplicate candidate id " + c.id);
    if (c.tokens.empty() && !c.is_none()) throw std::invalid_argument("empty candidate " + c.id);
  }
  // Subtask 2 records may leave candidates to a global pool.
  const bool pooled = ex.subtask == Subtask::two && ex.candidates.empty();
  for (const auto& id : ex.correct_ids)
    if (!pooled && !ids.count(id)) throw std::invalid_argument("correct id " + id + " is not a candidate");
  const auto n = ex.correct_ids.size();
  switch (ex.subtask) {
    case Subtask::one:
    case Subtask::five:
      if (n != 1) throw std::invalid_argument("subtask " + std::to_string(to_int(ex.subtask)) +
                                              " needs exactly one correct id, got " + std::to_string(n));
      break;
    case Subtask::two:
      if (n != 1) throw std::invalid_argument("subtask 2 needs exactly one correct id");
      break;
    case Subtask::three:
      if (n < 1 || n > 5) throw std::invalid_argument("subtask 3 needs 1-5 correct ids, got " + std::to_string(n));
      break;
    case Subtask::four:
      if (n != 1) throw std::invalid_argument("subtask 4 needs one correct id (None included)");
      break;
  }
}

namespace {

const json* field(const json& obj, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    auto it = obj.find(n);
    if (it != obj.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

std::string as_id(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw std::invalid_argument("identifier must be a string or integer");
}

}  // namespace

Example parse_record(std::string_view line, Subtask subtask, std::size_t record_index) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(record_index, std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw ParseError(record_index, "record is not an object");
  try {
    Example ex;
    ex.subtask = subtask;
    if (const auto* s = field(obj, {"data-split", "data_split"})) ex.split = s->get<std::string>();
    const auto* id = field(obj, {"example-id", "example_id", "id"});
    if (!id) throw ParseError(record_index, "missing example-id");
    ex.dialog_id = as_id(*id);

    const auto* ctx = field(obj, {"context", "messages-so-far"});
    if (!ctx || !ctx->is_array() || ctx->empty()) throw ParseError(record_index, "missing or empty context");
    for (const auto& turn : *ctx) {
      const auto* text = field(turn, {"text", "utterance"});
      if (!text) throw ParseError(record_index, "context turn without text");
      Speaker sp = Speaker::A;
      if (const auto* s = field(turn, {"speaker"})) sp = parse_speaker(s->get<std::string>());
      ex.turns.emplace_back(sp, text->get<std::string>());
    }

    const auto* cands = field(obj, {"candidates", "options-for-next"});
    if (!cands || !cands->is_array()) throw ParseError(record_index, "missing candidates");
    if (cands->empty() && subtask != Subtask::two) throw ParseError(record_index, "empty candidate list");
    for (const auto& c : *cands) {
      const auto* cid = field(c, {"id", "candidate-id"});
      const auto* text = field(c, {"text", "utterance"});
      if (!cid || !text) throw ParseError(record_index, "candidate without id or text");
      ex.candidates.push_back(make_candidate(as_id(*cid), text->get<std::string>()));
    }

    if (const auto* corr = field(obj, {"correct-ids", "correct_ids"})) {
      for (const auto& c : *corr) ex.correct_ids.insert(as_id(c));
    } else if (const auto* ans = field(obj, {"options-for-correct-answers"})) {
      for (const auto& c : *ans) ex.correct_ids.insert(as_id(*field(c, {"candidate-id", "id"})));
    }

    if (const auto* k = field(obj, {"knowledge"})) {
      ex.knowledge = k->is_string() ? tokenize(k->get<std::string>()) : k->get<Tokens>();
    }
    if (const auto* sc = field(obj, {"suggested-courses"})) ex.suggested_courses = sc->get<std::vector<std::string>>();

    if (subtask == Subtask::four) {
      const bool has_none = std::any_of(ex.candidates.begin(), ex.candidates.end(),
                                        [](const Candidate& c) { return c.is_none(); });
      if (!has_none) ex.candidates.push_back(none_candidate());
      if (ex.correct_ids.empty()) ex.correct_ids.insert(std::string(kNoneId));
    }
    validate(ex);
    return ex;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(record_index, e.what());
  }
}

std::string serialize_record(const Example& ex) {
  json obj;
  obj["data-split"] = ex.split;
  obj["example-id"] = ex.dialog_id;
  json ctx = json::array();
  for (const auto& t : ex.turns) ctx.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}});
  obj["context"] = std::move(ctx);
  json cands = json::array();
  for (const auto& c : ex.candidates) cands.push_back({{"id", c.id}, {"text", c.text}});
  obj["candidates"] = std::move(cands);
  obj["correct-ids"] = ex.correct_ids;
  if (ex.knowledge) obj["knowledge"] = *ex.knowledge;
  if (!ex.suggested_courses.empty()) obj["suggested-courses"] = ex.suggested_courses;
  return obj.dump();
}

std::vector<Example> parse_dataset(std::string_view content, Subtask subtask) {
  std::vector<Example> out;
  std::size_t record = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    auto line = content.substr(pos, nl - pos);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) out.push_back(parse_record(line, subtask, record++));
    pos = nl + 1;
  }
  return out;
}

std::vector<Example> load_dataset(const std::string& path, Subtask subtask) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), subtask);
}

void save_dataset(const std::string& path, const std::vector<Example>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  for (const auto& ex : examples) out << serialize_record(ex) << '\n';
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  for (auto r : {kPad, kUnk, kEot}) add(std::string(r));
}

int Vocabulary::index(const std::string& token) const {
  auto it = tokens_.find(token);
  return it == tokens_.end() ? kUnkId : it->second;
}

int Vocabulary::add(const std::string& token) {
  auto [it, inserted] = tokens_.emplace(token, static_cast<int>(by_id_.size()));
  if (inserted) by_id_.push_back(token);
  return it->second;
}

void Vocabulary::add_char(char32_t c) {
  if (!chars_.count(c)) chars_.emplace(c, static_cast<int>(chars_.size()) + 2);
}

int Vocabulary::char_index(char32_t c) const {
  auto it = chars_.find(c);
  return it == chars_.end() ? 1 : it->second;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 3; i < by_id_.size(); ++i) out += by_id_[i] + '\n';
  out += "#chars\n";
  std::vector<std::pair<int, char32_t>> ordered;
  for (auto [c, i] : chars_) ordered.emplace_back(i, c);
  std::sort(ordered.begin(), ordered.end());
  for (auto [i, c] : ordered) out += std::to_string(static_cast<std::uint32_t>(c)) + '\n';
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  Vocabulary v;
  bool chars = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    if (!chars && line == "#chars") {
      chars = true;
      continue;
    }
    if (chars) v.add_char(static_cast<char32_t>(std::stoul(line)));
    else v.add(line);
  }
  return v;
}

std::u32string utf8_decode(std::string_view s) {
  std::u32string out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    int len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
    if (len == 0 || i + static_cast<std::size_t>(len) > s.size()) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
    bool ok = true;
    for (int k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((cc >> 6) != 0x2) ok = false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    out.push_back(ok ? cp : 0xFFFD);
    i += ok ? static_cast<std::size_t>(len) : 1;
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<Example>& examples, int min_count) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  std::unordered_map<std::string, int> freq;
  auto count = [&](const Tokens& toks) {
    for (const auto& t : toks) ++freq[t];
  };
  for (const auto& ex : examples) {
    for (const auto& t : ex.turns) count(t.tokens);
    for (const auto& c : ex.candidates) count(c.tokens);
    if (ex.knowledge) count(*ex.knowledge);
  }
  std::vector<std::pair<std::string, int>> items;
  for (auto& [t, n] : freq)
    if (t != kPad && t != kUnk && t != kEot) items.emplace_back(t, n);
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  std::set<char32_t> chars;
  for (const auto& [t, n] : items) {
    for (char32_t c : utf8_decode(t))
      if (c >= 0x20 && c != 0x7F) chars.insert(c);
    if (n >= min_count) v.add(t);
  }
  for (char32_t c : chars) v.add_char(c);
  return v;
}

}  // namespace nus::corpus
