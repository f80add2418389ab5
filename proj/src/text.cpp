#include "commx/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "commx/error.hpp"
#include "commx/hash.hpp"

namespace commx {

namespace {

// Kept in sync with data/stopwords_en.txt (checked by a unit test).
constexpr std::array<std::string_view, 127> kStopwords = {
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your",
    "yours", "yourself", "yourselves", "he", "him", "his", "himself", "she",
    "her", "hers", "herself", "it", "its", "itself", "they", "them", "their",
    "theirs", "themselves", "what", "which", "who", "whom", "this", "that",
    "these", "those", "am", "is", "are", "was", "were", "be", "been", "being",
    "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an",
    "the", "and", "but", "if", "or", "because", "as", "until", "while", "of",
    "at", "by", "for", "with", "about", "against", "between", "into",
    "through", "during", "before", "after", "above", "below", "to", "from",
    "up", "down", "in", "out", "on", "off", "over", "under", "again",
    "further", "then", "once", "here", "there", "when", "where", "why", "how",
    "all", "any", "both", "each", "few", "more", "most", "other", "some",
    "such", "no", "nor", "not", "only", "own", "same", "so", "than", "too",
    "very", "s", "t", "can", "will", "just", "don", "should", "now",
};

bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

std::string trim_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

std::string to_string(Task task) {
  return task == Task::Nli ? "nli" : "textclf";
}

Task parse_task(std::string_view text) {
  if (text == "textclf") return Task::TextClassification;
  if (text == "nli") return Task::Nli;
  fail(ErrorKind::Config, "unknown task: " + std::string(text));
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kUnkToken));
}

TokenId Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  stopword_.push_back(false);
  index_.emplace(token, id);
  return id;
}

TokenId Vocabulary::id(std::string_view token) const {
  if (auto it = index_.find(std::string(token)); it != index_.end()) {
    return it->second;
  }
  return kUnk;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

std::vector<TokenId> Vocabulary::encode(
    std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

void Vocabulary::mark_stopwords(std::span<const std::string_view> words) {
  for (auto w : words) {
    if (auto it = index_.find(std::string(w)); it != index_.end()) {
      stopword_[it->second] = true;
    }
  }
}

std::string Vocabulary::fingerprint() const {
  Fnv1a h;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    h.update(tokens_[i]);
    h.update(stopword_[i] ? "\x01" : "\x00", 1);
    h.update("\n");
  }
  return h.hex();
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json j;
  j["tokens"] = tokens_;
  std::vector<TokenId> stops;
  for (std::size_t i = 0; i < stopword_.size(); ++i) {
    if (stopword_[i]) stops.push_back(static_cast<TokenId>(i));
  }
  j["stopwords"] = stops;
  j["fingerprint"] = fingerprint();
  return j;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  const auto tokens = j.at("tokens").get<std::vector<std::string>>();
  if (tokens.size() < 2 || tokens[kPad] != kPadToken ||
      tokens[kUnk] != kUnkToken) {
    fail(ErrorKind::Format, "vocabulary must start with <pad>, <unk>");
  }
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (v.add(tokens[i]) != i) {
      fail(ErrorKind::Format, "duplicate vocabulary token: " + tokens[i]);
    }
  }
  for (auto id : j.at("stopwords").get<std::vector<TokenId>>()) {
    if (id >= v.size()) fail(ErrorKind::Format, "stopword id out of range");
    v.stopword_[id] = true;
  }
  if (j.contains("fingerprint") &&
      j.at("fingerprint").get<std::string>() != v.fingerprint()) {
    fail(ErrorKind::Fingerprint, "vocabulary file fingerprint mismatch");
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << to_json().dump() << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

std::span<const std::string_view> english_stopwords() { return kStopwords; }

std::vector<bool> stopword_mask(const Vocabulary& vocab) {
  const std::set<std::string_view> words(kStopwords.begin(), kStopwords.end());
  std::vector<bool> mask(vocab.size(), false);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    mask[i] = words.contains(vocab.token(static_cast<TokenId>(i)));
  }
  return mask;
}

std::size_t LabelSet::index(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  fail(ErrorKind::Label, "unknown label: " + std::string(name));
}

LabelSet LabelSet::snli() { return {{"entailment", "neutral", "contradiction"}}; }

CorpusFormat parse_format(std::string_view text) {
  if (text == "tsv") return CorpusFormat::TsvLabelText;
  if (text == "snli") return CorpusFormat::SnliJsonl;
  if (text == "esnli") return CorpusFormat::EsnliJsonl;
  fail(ErrorKind::Config, "unknown corpus format: " + std::string(text));
}

namespace {

struct RawExample {
  std::string id;
  std::string label;
  std::vector<std::string> tokens;
  std::vector<std::string> hypothesis;
  std::optional<std::vector<std::size_t>> highlights;
};

std::vector<RawExample> read_raw(const std::filesystem::path& path,
                                 CorpusFormat format,
                                 const std::string& id_prefix) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<RawExample> out;
  std::string line;
  std::size_t lineno = 0;
  const auto where = [&] { return path.string() + ":" + std::to_string(lineno); };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim_cr(std::move(line));
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    RawExample ex;
    ex.id = id_prefix + std::to_string(lineno);
    if (format == CorpusFormat::TsvLabelText) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        fail(ErrorKind::Format, where() + ": expected label<TAB>text");
      }
      ex.label = line.substr(0, tab);
      ex.tokens = tokenize(std::string_view(line).substr(tab + 1));
      if (ex.label.empty()) fail(ErrorKind::Format, where() + ": empty label");
      if (ex.tokens.empty()) fail(ErrorKind::Data, where() + ": empty text");
    } else {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
        ex.label = j.at("gold_label").get<std::string>();
        ex.tokens = tokenize(j.at("sentence1").get<std::string>());
        ex.hypothesis = tokenize(j.at("sentence2").get<std::string>());
        if (j.contains("pairID")) ex.id = j["pairID"].get<std::string>();
        if (format == CorpusFormat::EsnliJsonl &&
            j.contains("premise_highlights")) {
          ex.highlights =
              j["premise_highlights"].get<std::vector<std::size_t>>();
        }
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, where() + ": " + e.what());
      }
      // Pairs without annotator consensus carry "-" and are skipped.
      if (ex.label == "-") continue;
      if (ex.tokens.empty() || ex.hypothesis.empty()) {
        fail(ErrorKind::Data, where() + ": empty premise or hypothesis");
      }
      if (ex.highlights) {
        for (auto pos : *ex.highlights) {
          if (pos >= ex.tokens.size()) {
            fail(ErrorKind::Data, where() + ": highlight index " +
                                      std::to_string(pos) +
                                      " beyond premise length");
          }
        }
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<RawExample> keep_only(std::vector<RawExample> raw,
                                  const CorpusOptions& options) {
  if (!options.keep_labels) return raw;
  const auto& keep = *options.keep_labels;
  std::erase_if(raw, [&](const RawExample& ex) {
    return std::find(keep.begin(), keep.end(), ex.label) == keep.end();
  });
  return raw;
}

std::vector<Example> encode_split(const std::vector<RawExample>& raw,
                                  const Vocabulary& vocab,
                                  const LabelSet& labels) {
  std::vector<Example> out;
  out.reserve(raw.size());
  for (const auto& r : raw) {
    Example ex;
    ex.id = r.id;
    ex.tokens = vocab.encode(r.tokens);
    ex.hypothesis = vocab.encode(r.hypothesis);
    ex.label = labels.index(r.label);
    ex.highlights = r.highlights;
    out.push_back(std::move(ex));
  }
  return out;
}

Corpus build_corpus(Task task, const LabelSet& labels,
                    const std::vector<RawExample>& train,
                    const std::vector<RawExample>& dev,
                    const std::vector<RawExample>& test) {
  Corpus c;
  c.task = task;
  c.labels = labels;
  for (const auto& r : train) {
    for (const auto& t : r.tokens) c.vocab.add(t);
    for (const auto& t : r.hypothesis) c.vocab.add(t);
  }
  c.vocab.mark_stopwords(english_stopwords());
  c.train = encode_split(train, c.vocab, labels);
  c.dev = encode_split(dev, c.vocab, labels);
  c.test = encode_split(test, c.vocab, labels);
  return c;
}

LabelSet labels_for(const std::vector<RawExample>& train,
                    const CorpusOptions& options) {
  if (options.format != CorpusFormat::TsvLabelText) {
    if (options.keep_labels) return {*options.keep_labels};
    return LabelSet::snli();
  }
  if (options.keep_labels) return {*options.keep_labels};
  std::set<std::string> seen;
  for (const auto& r : train) seen.insert(r.label);
  return {{seen.begin(), seen.end()}};
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& train,
                   const std::optional<std::filesystem::path>& dev,
                   const std::optional<std::filesystem::path>& test,
                   const CorpusOptions& options) {
  auto train_raw = keep_only(read_raw(train, options.format, "train-"), options);
  std::vector<RawExample> dev_raw, test_raw;
  if (dev) dev_raw = keep_only(read_raw(*dev, options.format, "dev-"), options);
  if (test) {
    test_raw = keep_only(read_raw(*test, options.format, "test-"), options);
  }
  const Task task = options.format == CorpusFormat::TsvLabelText
                        ? Task::TextClassification
                        : Task::Nli;
  return build_corpus(task, labels_for(train_raw, options), train_raw, dev_raw,
                      test_raw);
}

Corpus load_corpus(const std::filesystem::path& train,
                   const CorpusOptions& options) {
  return load_corpus(train, std::nullopt, std::nullopt, options);
}

std::vector<Example> load_split(const std::filesystem::path& path,
                                const CorpusOptions& options,
                                const Vocabulary& vocab,
                                const LabelSet& labels,
                                const std::string& id_prefix) {
  return encode_split(keep_only(read_raw(path, options.format, id_prefix),
                                options),
                      vocab, labels);
}

void write_tsv(const std::filesystem::path& path, const Corpus& corpus,
               std::span<const Example> examples) {
  if (corpus.task != Task::TextClassification) {
    fail(ErrorKind::Config, "TSV output only supports text classification");
  }
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& ex : examples) {
    out << corpus.labels.names.at(ex.label) << '\t';
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
      if (i) out << ' ';
      out << corpus.vocab.token(ex.tokens[i]);
    }
    out << '\n';
  }
}

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const Vocabulary& vocab, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  EmbeddingTable table;
  std::vector<double> rows;
  std::vector<char> exact, found;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim_cr(std::move(line));
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    std::vector<double> values;
    double v;
    while (fields >> v) values.push_back(v);
    if (!fields.eof()) {
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(lineno) +
                                  ": non-numeric vector component");
    }
    if (table.dimension == 0) {
      if (values.empty()) {
        fail(ErrorKind::Format, path.string() + ":1: no vector components");
      }
      table.dimension = values.size();
      rows.assign(vocab.size() * table.dimension, 0.0);
      exact.assign(vocab.size(), 0);
      found.assign(vocab.size(), 0);
    } else if (values.size() != table.dimension) {
      fail(ErrorKind::Format,
           path.string() + ":" + std::to_string(lineno) + ": dimension " +
               std::to_string(values.size()) + ", expected " +
               std::to_string(table.dimension));
    }
    // Exact matches win over case-folded ones.
    bool is_exact = vocab.contains(token);
    std::string key = token;
    if (!is_exact) {
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) {
        return c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c);
      });
      if (!vocab.contains(key)) continue;
    }
    const TokenId id = vocab.id(key);
    if (id == Vocabulary::kPad || id == Vocabulary::kUnk) continue;
    if (exact[id] || (found[id] && !is_exact)) continue;
    std::copy(values.begin(), values.end(),
              rows.begin() + static_cast<std::ptrdiff_t>(id * table.dimension));
    found[id] = 1;
    exact[id] = is_exact ? 1 : 0;
  }
  if (table.dimension == 0) {
    fail(ErrorKind::Format, path.string() + ": empty embedding file");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (id == Vocabulary::kPad || found[id]) continue;
    for (std::size_t j = 0; j < table.dimension; ++j) {
      rows[id * table.dimension + j] = dist(rng);
    }
    if (id != Vocabulary::kUnk) ++table.random_rows;
  }
  const std::size_t content = vocab.size() - 2;
  if (content > 0 && table.random_rows == content) {
    table.warnings.push_back("embedding file covers no vocabulary entry");
  }
  table.vectors = Tensor({vocab.size(), table.dimension}, std::move(rows));
  table.frozen = true;
  return table;
}

std::string synthetic_keyword(std::size_t c, std::size_t j) {
  return "kw" + std::to_string(c) + "x" + std::to_string(j);
}

Corpus generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_classes < 2) fail(ErrorKind::Config, "synthetic: need >= 2 classes");
  if (cfg.keywords_per_class == 0) {
    fail(ErrorKind::Config, "synthetic: keywords_per_class must be positive");
  }
  if (cfg.keywords_per_class * cfg.n_classes >= cfg.vocab_size) {
    fail(ErrorKind::Config,
         "synthetic: keywords_per_class * n_classes must be < vocab_size");
  }
  const std::size_t n_noise = cfg.vocab_size - cfg.keywords_per_class * cfg.n_classes;
  std::vector<std::string> noise;
  constexpr std::string_view kNoiseStopwords[] = {"the", "a", "and", "of", "to"};
  for (auto w : kNoiseStopwords) {
    if (noise.size() < n_noise) noise.emplace_back(w);
  }
  for (std::size_t i = 0; noise.size() < n_noise; ++i) {
    noise.push_back("w" + std::to_string(i));
  }
  LabelSet labels;
  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    labels.names.push_back("c" + std::to_string(c));
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick_noise(0, noise.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_kw(0, cfg.keywords_per_class - 1);
  std::uniform_int_distribution<int> kw_count(1, 3);

  auto make_split = [&](std::size_t n, const std::string& prefix) {
    std::vector<std::size_t> ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = i % cfg.n_classes;
    std::shuffle(ys.begin(), ys.end(), rng);
    std::vector<RawExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      RawExample ex;
      ex.id = prefix + std::to_string(i + 1);
      ex.label = labels.names[ys[i]];
      for (std::size_t t = 0; t < cfg.noise_len; ++t) {
        ex.tokens.push_back(noise[pick_noise(rng)]);
      }
      const int k = kw_count(rng);
      for (int j = 0; j < k; ++j) {
        std::uniform_int_distribution<std::size_t> pos(0, ex.tokens.size());
        const auto at = static_cast<std::ptrdiff_t>(pos(rng));
        ex.tokens.insert(ex.tokens.begin() + at,
                         synthetic_keyword(ys[i], pick_kw(rng)));
      }
      out.push_back(std::move(ex));
    }
    return out;
  };
  const auto train = make_split(cfg.n_train, "train-");
  const auto dev = make_split(cfg.n_dev, "dev-");
  const auto test = make_split(cfg.n_test, "test-");
  return build_corpus(Task::TextClassification, labels, train, dev, test);
}

}  // namespace commx
