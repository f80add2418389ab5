#pragma once

// Explainers turn (x, ŷ, internal state of C) into a bag-of-words Message.
// Wrappers (random, erasure) only query C; filters read gradients or
// attention; the joint explainer is trained with its own layperson.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "commx/models.hpp"
#include "commx/text.hpp"

namespace commx {

struct Message {
  // Distinct token ids, ascending.
  std::vector<TokenId> tokens;
  // Selected source positions, ascending.
  std::vector<std::size_t> positions;
  std::optional<std::size_t> k_requested;
  // NLI: the full hypothesis travels with the message.
  std::vector<TokenId> hypothesis;

  // Builds the token set from premise positions of `x`.
  static Message from_positions(const Example& x,
                                std::vector<std::size_t> positions,
                                std::optional<std::size_t> k);
  std::size_t size() const noexcept { return tokens.size(); }
};

enum class ExplainerKind {
  Random,
  Erasure,
  TopkGradient,
  TopkAttention,
  Selective,
  Joint,
  HumanHighlights,
};

std::string to_string(ExplainerKind kind);
ExplainerKind parse_explainer_kind(std::string_view text);

struct ExplainerConfig {
  ExplainerKind kind = ExplainerKind::TopkAttention;
  std::optional<std::size_t> k;
  std::uint64_t seed = 0;

  // k is required for random, erasure, top-k and joint, and forbidden for
  // selective attention.
  void validate() const;
  nlohmann::json to_json() const;
};

// Indices of the k largest scores among `eligible` positions; ties go to the
// earlier position. Result is ascending.
std::vector<std::size_t> top_k_positions(std::span<const double> scores,
                                         const std::vector<bool>& eligible,
                                         std::size_t k);

// Non-pad positions.
std::vector<bool> content_positions(const Example& x);

Message explain_random(const Example& x, std::size_t k, std::uint64_t seed);

// Erases (zeroes the embedding of) the most attended remaining position k
// times. Performs min(k, length) + 1 forward passes; the count is added to
// `forward_passes` when given.
Message explain_erasure(const AttentionClassifier& c, const Example& x,
                        std::size_t k, std::size_t* forward_passes = nullptr);

// |⟨∂ target / ∂e_i, e_i⟩| for each embedding input; `target` must be a
// scalar on `graph`. Backpropagates through the graph.
std::vector<double> input_x_gradient(ad::Graph& graph, ad::Var target,
                                     std::span<const ad::Var> embeddings);
// Scores |⟨∂ logit_ŷ / ∂e_i, e_i⟩| per position; pads score 0.
std::vector<double> gradient_scores(const AttentionClassifier& c,
                                    const Example& x);
Message explain_topk_gradient(const AttentionClassifier& c, const Example& x,
                              std::size_t k);

Message explain_topk_attention(const AttentionClassifier& c, const Example& x,
                               std::size_t k,
                               std::size_t* forward_passes = nullptr);
// Every position in the attention support. Config error on a softmax head.
Message explain_selective(const AttentionClassifier& c, const Example& x);

// Data error when the example carries no highlight mask.
Message explain_human_highlights(const Example& x);

struct JointConfig {
  std::size_t embedding_dim = 64;
  std::size_t hidden_size = 64;
  double lambda = 1.0;
  double beta = 0.2;
  std::size_t k = 5;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static JointConfig from_json(const nlohmann::json& j);
};

// The explainer E of the joint game: its own embedding + BiLSTM + additive
// sparsemax attention, a label embedding added to the attention query when E
// may see ŷ, and an FFN mapping its states into the classifier's state space
// for the faithfulness term.
class JointExplainer {
 public:
  JointExplainer(JointConfig config, Task task, std::size_t vocab_size,
                 std::size_t n_classes, std::size_t classifier_state_dim,
                 std::vector<bool> stopwords);

  const JointConfig& config() const noexcept { return cfg_; }
  std::size_t state_dim() const noexcept { return state_dim_; }
  const std::vector<bool>& stopwords() const noexcept { return stopwords_; }

  // Eligible positions: non-pad and not a stopword.
  std::vector<bool> eligible(const Example& x) const;

  struct Pass {
    ClassifierGraph graph;
    bool empty = false;  // no eligible position; attention is unset
  };
  Pass forward(ad::Graph& graph, const Example& x,
               std::optional<std::size_t> y_hat) const;
  // h̃ = mean over non-pad positions of FFN(state_i).
  ad::Var faithfulness(ad::Graph& graph, const Pass& pass) const;

  // Top-k of the sparsemax attention with stopwords excluded. E sees ŷ when
  // `y_hat` is given.
  Message explain(const Example& x, std::size_t k,
                  std::optional<std::size_t> y_hat) const;

  std::vector<ad::ParameterStore*> stores();
  CheckpointBundle to_bundle() const;
  void load(const CheckpointBundle& bundle);

 private:
  JointConfig cfg_;
  Task task_;
  std::size_t n_classes_;
  std::size_t state_dim_;
  std::vector<bool> stopwords_;
  AttentionClassifier encoder_;
  mutable ad::ParameterStore head_;
};

struct JointTrainResult {
  TrainResult train;
  // Train-split ŷ/h targets are computed once; this counts classifier calls.
  std::size_t classifier_calls = 0;
};

// Minimizes λ‖h̃ − h‖² − log p_L(ŷ | soft message) with sparsemax attention
// over non-stopword positions. E sees ŷ with a probability that grows
// linearly from 0 to β over training steps. The classifier is only read.
// Dev selection uses CSR of the top-k messages.
JointTrainResult train_joint(JointExplainer& e, BowLayperson& l,
                             const AttentionClassifier& c, const Corpus& corpus,
                             const TrainConfig& config,
                             const MetricSink& sink = {});

// Uniform interface over every explainer kind.
class Explainer {
 public:
  virtual ~Explainer() = default;
  virtual std::string name() const = 0;
  virtual Message explain(const Example& x) const = 0;
};

// `classifier` is required for every kind except random and human
// highlights; `joint` only for the joint kind.
std::unique_ptr<Explainer> make_explainer(const ExplainerConfig& config,
                                          const AttentionClassifier* classifier,
                                          const JointExplainer* joint = nullptr);

// One line of an explanation dump.
struct ExplanationRecord {
  std::string example_id;
  std::string explainer;
  std::optional<std::size_t> k;
  std::vector<std::string> message_tokens;
  std::vector<std::size_t> positions;
  std::vector<std::string> hypothesis_tokens;
  std::string y_hat;
  std::string y;
  // Layperson prediction, once known.
  std::optional<std::string> y_tilde;

  nlohmann::json to_json() const;
  static ExplanationRecord from_json(const nlohmann::json& j);
};

// Runs C and the explainer over `examples`.
std::vector<ExplanationRecord> explain_split(const Explainer& explainer,
                                             const AttentionClassifier* classifier,
                                             std::span<const Example> examples,
                                             const Vocabulary& vocab,
                                             const LabelSet& labels,
                                             std::optional<std::size_t> k);

void write_dump(const std::filesystem::path& path,
                std::span<const ExplanationRecord> records);
std::vector<ExplanationRecord> read_dump(const std::filesystem::path& path);

// Layperson items from a dump, mapping token strings through `vocab`.
std::vector<LaypersonItem> layperson_items(std::span<const ExplanationRecord> records,
                                           const Vocabulary& vocab,
                                           const LabelSet& labels);

}  // namespace commx
