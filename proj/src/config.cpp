#include "nus/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace nus::harness {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end) throw std::invalid_argument(key + ": not a number: '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw std::invalid_argument(key + ": expected on/off, got '" + v + "'");
}

std::string fmt(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace

RunConfig profile(const std::string& name) {
  RunConfig cfg;
  // Config files carry one seed, so every default starts from it.
  cfg.model.seed = cfg.model.embedding.seed = cfg.train.seed;
  if (name == "full") {
    cfg.train.batch_size = 128;
    return cfg;
  }
  if (name == "desk") {
    cfg.model.hidden = 16;
    cfg.model.mlp_hidden = 32;
    cfg.model.embedding.dim_a = 32;
    cfg.model.embedding.dim_b = 16;
    cfg.model.embedding.char_dim = 16;
    cfg.model.embedding.char_emb_dim = 8;
    cfg.model.init_scale = 0.1;
    cfg.model.embedding.init_scale = 0.1;
    cfg.train.batch_size = 16;
    cfg.train.lr0 = 0.003;
    return cfg;
  }
  throw std::invalid_argument("unknown profile '" + name + "' (expected full or desk)");
}

void set_key(RunConfig& c, const std::string& key, const std::string& v) {
  auto& m = c.model;
  auto& e = c.model.embedding;
  auto& t = c.train;
  if (key == "seed") {
    const auto s = parse_number<std::uint64_t>(key, v);
    t.seed = s;
    m.seed = s;
    e.seed = s;
  } else if (key == "variant") {
    t.variant = esim::parse_variant(v);
  } else if (key == "tesim") {
    c.tesim = parse_bool(key, v);
  } else if (key == "subtask") {
    c.subtask = corpus::to_int(corpus::subtask_from_int(parse_number<int>(key, v)));
  } else if (key == "hidden") {
    m.hidden = parse_number<int>(key, v);
  } else if (key == "mlp_hidden") {
    m.mlp_hidden = parse_number<int>(key, v);
  } else if (key == "dim_a") {
    e.dim_a = parse_number<int>(key, v);
  } else if (key == "dim_b") {
    e.dim_b = parse_number<int>(key, v);
  } else if (key == "char_dim") {
    e.char_dim = parse_number<int>(key, v);
  } else if (key == "char_emb_dim") {
    e.char_emb_dim = parse_number<int>(key, v);
  } else if (key == "init_scale") {
    m.init_scale = parse_number<double>(key, v);
    e.init_scale = m.init_scale;
  } else if (key == "max_context_len") {
    m.max_context_len = parse_number<std::size_t>(key, v);
  } else if (key == "max_knowledge_len") {
    m.max_knowledge_len = parse_number<std::size_t>(key, v);
  } else if (key == "untie_knowledge_encoder") {
    m.untie_knowledge_encoder = parse_bool(key, v);
  } else if (key == "finetune_pretrained") {
    e.finetune_pretrained = parse_bool(key, v);
  } else if (key == "lr") {
    t.lr0 = parse_number<double>(key, v);
  } else if (key == "decay_rate") {
    t.decay_rate = parse_number<double>(key, v);
  } else if (key == "decay_every") {
    t.decay_every = parse_number<std::int64_t>(key, v);
  } else if (key == "batch_size") {
    t.batch_size = parse_number<std::size_t>(key, v);
  } else if (key == "max_steps") {
    t.max_steps = parse_number<std::int64_t>(key, v);
  } else if (key == "log_every") {
    t.log_every = parse_number<std::int64_t>(key, v);
  } else if (key == "sampled_negatives") {
    c.sampled_negatives = parse_number<std::size_t>(key, v);
  } else if (key == "candidate_reduction") {
    c.candidate_reduction = parse_bool(key, v);
  } else if (key == "shortlist_size") {
    c.shortlist_size = parse_number<std::size_t>(key, v);
  } else if (key == "embeddings_a") {
    c.embeddings_a = v;
  } else if (key == "embeddings_b") {
    c.embeddings_b = v;
  } else if (key == "man_pages") {
    c.man_pages = v;
  } else if (key == "courses") {
    c.courses = v;
  } else if (key == "snippets") {
    c.snippets = v;
  } else if (key == "global_pool") {
    c.global_pool = v;
  } else if (key == "subdialog_index") {
    c.subdialog_index = v;
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

std::map<std::string, std::string> RunConfig::to_map() const {
  const auto& e = model.embedding;
  auto b = [](bool x) { return std::string(x ? "on" : "off"); };
  return {
      {"seed", std::to_string(train.seed)},
      {"variant", std::string(esim::to_string(train.variant))},
      {"tesim", b(tesim)},
      {"subtask", std::to_string(subtask)},
      {"hidden", std::to_string(model.hidden)},
      {"mlp_hidden", std::to_string(model.mlp_hidden)},
      {"dim_a", std::to_string(e.dim_a)},
      {"dim_b", std::to_string(e.dim_b)},
      {"char_dim", std::to_string(e.char_dim)},
      {"char_emb_dim", std::to_string(e.char_emb_dim)},
      {"init_scale", fmt(model.init_scale)},
      {"max_context_len", std::to_string(model.max_context_len)},
      {"max_knowledge_len", std::to_string(model.max_knowledge_len)},
      {"untie_knowledge_encoder", b(model.untie_knowledge_encoder)},
      {"finetune_pretrained", b(e.finetune_pretrained)},
      {"lr", fmt(train.lr0)},
      {"decay_rate", fmt(train.decay_rate)},
      {"decay_every", std::to_string(train.decay_every)},
      {"batch_size", std::to_string(train.batch_size)},
      {"max_steps", std::to_string(train.max_steps)},
      {"log_every", std::to_string(train.log_every)},
      {"sampled_negatives", std::to_string(sampled_negatives)},
      {"candidate_reduction", b(candidate_reduction)},
      {"shortlist_size", std::to_string(shortlist_size)},
      {"embeddings_a", embeddings_a},
      {"embeddings_b", embeddings_b},
      {"man_pages", man_pages},
      {"courses", courses},
      {"snippets", snippets},
      {"global_pool", global_pool},
      {"subdialog_index", subdialog_index},
  };
}

RunConfig parse_config(std::string_view text) {
  std::vector<std::tuple<std::size_t, std::string, std::string>> entries;
  std::string profile_name = "desk";
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("line " + std::to_string(n) + ": expected key = value");
    auto key = trim(std::string_view(body).substr(0, eq));
    auto value = trim(std::string_view(body).substr(eq + 1));
    if (key == "profile")
      profile_name = value;
    else
      entries.emplace_back(n, std::move(key), std::move(value));
  }
  RunConfig cfg = profile(profile_name);
  for (const auto& [n, key, value] : entries) {
    try {
      set_key(cfg, key, value);
    } catch (const std::exception& ex) {
      throw std::invalid_argument("line " + std::to_string(n) + ": " + ex.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const std::invalid_argument& ex) {
    throw std::invalid_argument(path + ": " + ex.what());
  }
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.to_map()) out += k + " = " + v + "\n";
  return out;
}

EmbeddingTables load_tables(const RunConfig& cfg) {
  EmbeddingTables t;
  const auto& e = cfg.model.embedding;
  if (!cfg.embeddings_a.empty()) t.a = embedding::EmbeddingTable::load_vectors(cfg.embeddings_a, e.dim_a, e.seed);
  if (!cfg.embeddings_b.empty()) t.b = embedding::EmbeddingTable::load_vectors(cfg.embeddings_b, e.dim_b, e.seed + 1);
  return t;
}

ModelBundle build_model(const RunConfig& cfg, corpus::Vocabulary vocab) {
  ModelBundle b;
  b.config = cfg;
  b.vocab = std::move(vocab);
  b.tables = load_tables(cfg);
  b.model = esim::make_model(cfg.train.variant, cfg.model, b.vocab, b.tables.a ? &*b.tables.a : nullptr,
                             b.tables.b ? &*b.tables.b : nullptr);
  return b;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

void save_bundle(const std::filesystem::path& dir, const ModelBundle& bundle) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.txt", serialize_config(bundle.config));
  write_text(dir / "vocab.txt", bundle.vocab.serialize());
  ad::save_checkpoint((dir / "model.ckpt").string(), bundle.model->params());
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
  auto cfg = load_config((dir / "config.txt").string());
  auto bundle = build_model(cfg, corpus::Vocabulary::deserialize(read_text(dir / "vocab.txt")));
  ad::load_checkpoint((dir / "model.ckpt").string(), bundle.model->params());
  return bundle;
}

}  // namespace nus::harness
