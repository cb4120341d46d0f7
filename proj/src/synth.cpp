#include "nus/synth.hpp"

#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

namespace nus::synth {

void SynthConfig::validate() const {
  if (n_dialogs == 0 || n_templates == 0 || vocab_size == 0 || n_candidates == 0 || problem_words == 0 ||
      solution_words == 0 || words_per_turn == 0)
    throw std::invalid_argument("synth: sizes must be positive");
  if (train_fraction <= 0 || valid_fraction < 0 || train_fraction + valid_fraction > 1)
    throw std::invalid_argument("synth: split fractions must be positive and sum to at most 1");
  if (overlap_rate < 0 || overlap_rate > 1) throw std::invalid_argument("synth: overlap_rate must be in [0, 1]");
  if (words_per_turn > problem_words || words_per_turn > solution_words)
    throw std::invalid_argument("synth: words_per_turn exceeds a template word set");
  if (n_candidates > 1 && n_templates < 2) throw std::invalid_argument("synth: distractors need two templates");
}

namespace {

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {}

  std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }

  std::string fresh_word() {
    static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
    static constexpr std::string_view kVowels = "aeiou";
    for (;;) {
      std::string w;
      for (int s = 0; s < 3; ++s) {
        w += kConsonants[below(kConsonants.size())];
        w += kVowels[below(kVowels.size())];
      }
      if (used_.insert(w).second) return w;
    }
  }

  std::vector<std::string> fresh_words(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(fresh_word());
    return out;
  }

  /// k distinct entries, in draw order.
  std::vector<std::string> pick(const std::vector<std::string>& from, std::size_t k) {
    std::vector<std::string> pool = from;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k && !pool.empty(); ++i) {
      const auto j = below(pool.size());
      out.push_back(pool[j]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
    }
    return out;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 rng_;
  std::set<std::string> used_;
};

struct Template {
  std::vector<std::string> problem;
  std::vector<std::string> solution;
  std::string command;
};

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string man_page(const Template& t, Generator& gen, const std::vector<std::string>& fillers) {
  std::string text = "NAME\n       " + t.command + " - " + join(gen.pick(t.solution, 2)) + "\n\nDESCRIPTION\n";
  for (std::size_t s = 0; s + 1 < t.solution.size(); s += 2) {
    std::vector<std::string> words = {t.solution[s], t.solution[s + 1]};
    for (const auto& f : gen.pick(fillers, 2)) words.push_back(f);
    gen.shuffle(words);
    text += "       " + t.command + " " + join(words) + ".\n";
  }
  return text;
}

}  // namespace

SynthCorpus generate(const SynthConfig& cfg) {
  cfg.validate();
  Generator gen(cfg.seed);
  const auto fillers = gen.fresh_words(cfg.vocab_size);
  const auto question = gen.pick(fillers, std::min<std::size_t>(4, fillers.size()));

  std::vector<Template> templates(cfg.n_templates);
  SynthCorpus out;
  for (std::size_t t = 0; t < cfg.n_templates; ++t) {
    templates[t].problem = gen.fresh_words(cfg.problem_words);
    templates[t].solution = gen.fresh_words(cfg.solution_words);
    if (cfg.command_every > 0 && t % cfg.command_every == 0) templates[t].command = gen.fresh_word();
    out.commands.push_back(templates[t].command);
  }
  for (const auto& t : templates)
    if (!t.command.empty()) out.man_pages[t.command + ".txt"] = man_page(t, gen, fillers);

  auto response_of = [&](std::size_t t, const std::vector<std::string>& mentioned) {
    auto words = gen.pick(templates[t].solution, cfg.words_per_turn + 1);
    if (!mentioned.empty() && static_cast<double>(gen.below(1000000)) < cfg.overlap_rate * 1e6)
      words.push_back(mentioned[gen.below(mentioned.size())]);
    else
      words.push_back(fillers[gen.below(fillers.size())]);
    gen.shuffle(words);
    return join(words);
  };
  std::vector<std::string> mentioned;
  auto problem_turn = [&](std::size_t t, bool mention_command) {
    auto words = gen.pick(templates[t].problem, cfg.words_per_turn);
    mentioned.insert(mentioned.end(), words.begin(), words.end());
    words.push_back(fillers[gen.below(fillers.size())]);
    if (mention_command && !templates[t].command.empty()) words.push_back(templates[t].command);
    gen.shuffle(words);
    return join(words);
  };

  const auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.train_fraction * cfg.n_dialogs));
  const auto n_valid = std::min(cfg.n_dialogs - n_train, static_cast<std::size_t>(cfg.valid_fraction * cfg.n_dialogs));
  std::vector<corpus::Example> dialogs(cfg.n_dialogs);
  std::vector<std::string> responses(cfg.n_dialogs);
  for (std::size_t i = 0; i < cfg.n_dialogs; ++i) {
    const std::size_t t = i % cfg.n_templates;
    auto& ex = dialogs[i];
    ex.split = i < n_train ? "train" : i < n_train + n_valid ? "valid" : "test";
    ex.dialog_id = "d" + std::to_string(i);
    mentioned.clear();
    ex.turns.emplace_back(corpus::Speaker::A, problem_turn(t, true));
    ex.turns.emplace_back(corpus::Speaker::B, join(question) + " ?");
    ex.turns.emplace_back(corpus::Speaker::A, problem_turn(t, false));
    responses[i] = response_of(t, mentioned);
    out.template_of[ex.dialog_id] = t;
  }

  // Distractors are responses of same-split dialogs from other templates, so
  // no response text is a positive everywhere it appears.
  for (std::size_t i = 0; i < cfg.n_dialogs; ++i) {
    const std::size_t t = i % cfg.n_templates;
    auto& ex = dialogs[i];
    std::vector<std::pair<std::string, bool>> texts;
    texts.emplace_back(responses[i], true);
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < cfg.n_dialogs; ++j)
      if (j % cfg.n_templates != t && dialogs[j].split == ex.split) others.push_back(j);
    for (std::size_t c = 1; c < cfg.n_candidates; ++c) {
      if (!others.empty()) {
        const auto k = gen.below(others.size());
        texts.emplace_back(responses[others[k]], false);
        others.erase(others.begin() + static_cast<std::ptrdiff_t>(k));
      } else {
        std::size_t other = gen.below(cfg.n_templates - 1);
        if (other >= t) ++other;
        texts.emplace_back(response_of(other, {}), false);
      }
    }
    gen.shuffle(texts);
    for (std::size_t c = 0; c < texts.size(); ++c) {
      ex.candidates.push_back(corpus::make_candidate(ex.dialog_id + "-c" + std::to_string(c), texts[c].first));
      if (texts[c].second) ex.correct_ids.insert(ex.candidates.back().id);
    }
    (ex.split == "train" ? out.train : ex.split == "valid" ? out.valid : out.test).push_back(std::move(ex));
  }
  return out;
}

void write(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "manpages");
  corpus::save_dataset((dir / "train.jsonl").string(), corpus.train);
  corpus::save_dataset((dir / "valid.jsonl").string(), corpus.valid);
  corpus::save_dataset((dir / "test.jsonl").string(), corpus.test);
  for (const auto& [name, text] : corpus.man_pages) {
    std::ofstream f(dir / "manpages" / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / "manpages" / name).string());
    f << text;
  }
}

}  // namespace nus::synth
