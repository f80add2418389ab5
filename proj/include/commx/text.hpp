#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "commx/tensor.hpp"

namespace commx {

using TokenId = std::uint32_t;

enum class Task { TextClassification, Nli };

std::string to_string(Task task);
Task parse_task(std::string_view text);

// Lowercases ASCII letters and splits on whitespace; each ASCII punctuation
// character becomes its own token. Bytes >= 0x80 are treated as word
// characters so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  TokenId add(const std::string& token);
  // kUnk when absent.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::size_t size() const noexcept { return tokens_.size(); }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;

  // Flags every vocabulary entry present in `words`.
  void mark_stopwords(std::span<const std::string_view> words);
  bool is_stopword(TokenId id) const { return stopword_[id]; }
  const std::vector<bool>& stopword_flags() const { return stopword_; }

  // Content hash over tokens (in id order) and stopword flags.
  std::string fingerprint() const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::vector<bool> stopword_;
  std::unordered_map<std::string, TokenId> index_;
};

// The bundled English stopword list (127 words). Also committed as
// data/stopwords_en.txt.
std::span<const std::string_view> english_stopwords();

// Flag vector aligned with vocabulary ids, from the bundled list.
std::vector<bool> stopword_mask(const Vocabulary& vocab);

struct Example {
  std::string id;
  // Text classification input, or the premise for NLI.
  std::vector<TokenId> tokens;
  // NLI only.
  std::vector<TokenId> hypothesis;
  std::size_t label = 0;
  // Premise token positions highlighted by a human (e-SNLI).
  std::optional<std::vector<std::size_t>> highlights;
};

struct LabelSet {
  std::vector<std::string> names;

  std::size_t size() const noexcept { return names.size(); }
  // Throws a label error for unknown names.
  std::size_t index(std::string_view name) const;
  static LabelSet snli();
};

struct Corpus {
  Task task = Task::TextClassification;
  LabelSet labels;
  Vocabulary vocab;
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
};

enum class CorpusFormat { TsvLabelText, SnliJsonl, EsnliJsonl };

CorpusFormat parse_format(std::string_view text);

struct CorpusOptions {
  CorpusFormat format = CorpusFormat::TsvLabelText;
  // When set, only these labels are kept, in this class order (for example
  // a two-class subset of a four-class corpus).
  std::optional<std::vector<std::string>> keep_labels;
};

// Loads train (required) and optional dev/test files. The vocabulary is
// built from the training split only; unseen tokens elsewhere map to <unk>.
// The bundled stopword list is applied to the vocabulary.
Corpus load_corpus(const std::filesystem::path& train,
                   const std::optional<std::filesystem::path>& dev,
                   const std::optional<std::filesystem::path>& test,
                   const CorpusOptions& options);
Corpus load_corpus(const std::filesystem::path& train,
                   const CorpusOptions& options);

// Re-encodes raw files against an existing vocabulary (for a trained model).
std::vector<Example> load_split(const std::filesystem::path& path,
                                const CorpusOptions& options,
                                const Vocabulary& vocab,
                                const LabelSet& labels,
                                const std::string& id_prefix);

// Writes a text-classification split back out as `label<TAB>text`.
void write_tsv(const std::filesystem::path& path, const Corpus& corpus,
               std::span<const Example> examples);

struct EmbeddingTable {
  std::size_t dimension = 0;
  Tensor vectors;  // [vocab size x dimension]
  bool frozen = true;
  // Content ids (excluding <pad> and <unk>) not found in the file.
  std::size_t random_rows = 0;
  std::vector<std::string> warnings;
};

// Reads `token v1 … vd` lines. Rows for tokens missing from the file are
// drawn from U(−0.1, 0.1); <pad> is zero, <unk> is random but not counted.
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const Vocabulary& vocab, std::uint64_t seed);

struct SyntheticConfig {
  std::size_t n_train = 2000;
  std::size_t n_dev = 500;
  std::size_t n_test = 500;
  std::size_t vocab_size = 500;
  std::size_t n_classes = 2;
  std::size_t keywords_per_class = 10;
  std::size_t noise_len = 20;
  std::uint64_t seed = 13;
};

// Documents of `noise_len` tokens drawn uniformly from the non-keyword
// words, plus 1–3 keywords of the document's class at random positions.
// Classes are balanced to within one example per split. The noise words
// include a few entries of the stopword list.
Corpus generate_synthetic(const SyntheticConfig& config);

// Keyword strings of class `c` in a synthetic corpus.
std::string synthetic_keyword(std::size_t c, std::size_t j);

}  // namespace commx
