#pragma once

// The classifier C (BiLSTM encoder + additive attention with a pluggable
// simplex transform), the bag-of-words layperson L, and the shared training
// loop with dev-metric model selection.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "commx/autodiff.hpp"
#include "commx/checkpoint.hpp"
#include "commx/lstm.hpp"
#include "commx/simplex.hpp"
#include "commx/text.hpp"

namespace commx {

struct ClassifierConfig {
  Task task = Task::TextClassification;
  std::size_t vocab_size = 0;
  std::size_t n_classes = 2;
  std::size_t embedding_dim = 64;
  std::size_t hidden_size = 128;  // per direction
  Transform transform = Transform::softmax();
  // Scorer output vector starts at zero, so every position gets the same
  // score until training moves it.
  bool zero_scorer = false;
  bool freeze_embeddings = false;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static ClassifierConfig from_json(const nlohmann::json& j);
};

struct ForwardOptions {
  // Premise positions whose embedding is replaced by zeros. The position stays
  // in the sequence.
  std::vector<bool> erased;
  // Feed premise embeddings as differentiable inputs so their gradients can be
  // read back from the graph.
  bool embedding_inputs = false;
  // Added to every attention score; exists to check shift invariance.
  double score_shift = 0.0;
  // Positions that still feed the encoder but get no attention.
  std::vector<bool> excluded;
  // Added to the attention query; must live on the graph being built.
  std::optional<ad::Var> query_offset;
};

// Graph handles for one example. Vectors are indexed by premise position;
// <pad> positions carry zero constants and are masked out of attention.
struct ClassifierGraph {
  ad::Var logits;
  ad::Var attention;
  ad::Var context;
  ad::Var query;
  std::vector<ad::Var> states;
  std::vector<ad::Var> embeddings;
  std::vector<bool> mask;
};

struct Prediction {
  std::size_t label = 0;
  std::vector<double> logits;
  Distribution attention;
  Tensor states;  // [positions x 2h]
  // Mean of the BiLSTM states over non-pad positions.
  std::vector<double> mean_state;
  std::vector<double> context;
};

// Lowest index wins ties.
std::size_t argmax(std::span<const double> values);

class AttentionClassifier {
 public:
  explicit AttentionClassifier(ClassifierConfig config,
                               const EmbeddingTable* pretrained = nullptr);

  const ClassifierConfig& config() const noexcept { return cfg_; }
  ad::ParameterStore& parameters() noexcept { return store_; }
  const ad::ParameterStore& parameters() const noexcept { return store_; }

  // Records the forward pass of one example on `graph`. Parameter values are
  // read in place; calling backward on the graph adds into their gradients.
  ClassifierGraph build(ad::Graph& graph, const Example& x,
                        const ForwardOptions& options = {}) const;
  Prediction classify(const Example& x, const ForwardOptions& options = {}) const;

  // Snapshot with the vocabulary and label names embedded in the config.
  CheckpointBundle to_bundle(const Vocabulary& vocab,
                             const LabelSet& labels) const;
  static AttentionClassifier from_bundle(const CheckpointBundle& bundle);

 private:
  void bind();

  ClassifierConfig cfg_;
  // Mutable because graph leaves need non-const access even for inference.
  mutable ad::ParameterStore store_;
  ad::Parameter* embed_ = nullptr;
  LstmParams enc_fwd_, enc_bwd_, hyp_fwd_, hyp_bwd_;
  ad::Parameter* w_key_ = nullptr;
  ad::Parameter* w_query_ = nullptr;
  ad::Parameter* score_v_ = nullptr;
  ad::Parameter* query_ = nullptr;  // text classification only
  ad::Parameter* w_out_ = nullptr;
  ad::Parameter* b_out_ = nullptr;
};

struct LaypersonConfig {
  Task task = Task::TextClassification;
  std::size_t vocab_size = 0;
  std::size_t n_classes = 2;
  // NLI hypothesis encoder sizes.
  std::size_t embedding_dim = 64;
  std::size_t hidden_size = 64;
  bool zero_init = false;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static LaypersonConfig from_json(const nlohmann::json& j);
};

// Text classification: logits = Σ_{w ∈ set(m)} W[w], no bias, so an empty
// message gives all-zero logits and class 0. NLI: z = BiLSTM summary of the
// hypothesis + Σ_{w ∈ set(m)} U[w], logits = A z + b.
class BowLayperson {
 public:
  explicit BowLayperson(LaypersonConfig config);

  const LaypersonConfig& config() const noexcept { return cfg_; }
  ad::ParameterStore& parameters() noexcept { return store_; }
  const ad::ParameterStore& parameters() const noexcept { return store_; }

  // Duplicates in `message` collapse before scoring.
  ad::Var logits(ad::Graph& graph, std::span<const TokenId> message,
                 std::span<const TokenId> hypothesis) const;
  // Soft bag: Σ_i weights[i] · W[tokens[i]], for training through attention.
  ad::Var soft_logits(ad::Graph& graph, ad::Var weights,
                      std::span<const TokenId> tokens,
                      std::span<const TokenId> hypothesis) const;
  std::size_t predict(std::span<const TokenId> message,
                      std::span<const TokenId> hypothesis) const;

  CheckpointBundle to_bundle(const Vocabulary& vocab,
                             const LabelSet& labels) const;
  static BowLayperson from_bundle(const CheckpointBundle& bundle);

 private:
  ad::Var finish(ad::Graph& graph, ad::Var bag,
                 std::span<const TokenId> hypothesis) const;

  LaypersonConfig cfg_;
  mutable ad::ParameterStore store_;
  ad::Parameter* words_ = nullptr;
  ad::Parameter* hyp_embed_ = nullptr;
  LstmParams hyp_fwd_, hyp_bwd_;
  ad::Parameter* w_out_ = nullptr;
  ad::Parameter* b_out_ = nullptr;
};

enum class DevMetric { Accuracy, Csr };

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;  // decoupled (AdamW)
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  std::size_t patience = 5;
  std::uint64_t seed = 7;
  DevMetric dev_metric = DevMetric::Accuracy;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct MetricRecord {
  std::size_t epoch = 0;
  std::string split;
  std::string metric;
  double value = 0.0;

  nlohmann::json to_json() const;
};

using MetricSink = std::function<void(const MetricRecord&)>;

struct TrainResult {
  CheckpointBundle best;
  std::vector<MetricRecord> log;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
};

// Minibatch AdamW over per-example graphs. After every epoch `dev` is
// evaluated; training stops after `patience` epochs without improvement and
// `store` is left holding the best-dev parameters. A non-finite loss aborts
// with a numeric error naming the epoch and step.
TrainResult fit(ad::ParameterStore& store, std::size_t n_train,
                const std::function<ad::Var(ad::Graph&, std::size_t)>& loss,
                const std::function<double()>& dev, const TrainConfig& config,
                const std::string& kind, const MetricSink& sink = {});
// Same, training several stores jointly. The returned bundle holds the
// parameters of every store.
TrainResult fit(std::span<ad::ParameterStore* const> stores, std::size_t n_train,
                const std::function<ad::Var(ad::Graph&, std::size_t)>& loss,
                const std::function<double()>& dev, const TrainConfig& config,
                const std::string& kind, const MetricSink& sink = {});

double accuracy(const AttentionClassifier& model,
                std::span<const Example> examples);

TrainResult train_classifier(AttentionClassifier& model, const Corpus& corpus,
                             const TrainConfig& config,
                             const MetricSink& sink = {});

// One layperson training or evaluation item: a message with the classifier's
// prediction as target.
struct LaypersonItem {
  std::vector<TokenId> message;
  std::vector<TokenId> hypothesis;
  std::size_t target = 0;  // ŷ
  std::size_t gold = 0;    // y
};

// Fraction of items where L's prediction equals the target.
double layperson_csr(const BowLayperson& model,
                     std::span<const LaypersonItem> items);

TrainResult train_layperson(BowLayperson& model,
                            std::span<const LaypersonItem> train,
                            std::span<const LaypersonItem> dev,
                            const TrainConfig& config,
                            const MetricSink& sink = {});

}  // namespace commx
