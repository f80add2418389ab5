#pragma once

// The communication game: C → E → L pipelines, CSR/ACC reports, k-sweeps
// and the diagnostics used to compare explainers (entropy of selected words,
// message overlap, annotator agreement).

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "commx/explainers.hpp"
#include "commx/models.hpp"

namespace commx {

struct CommunicationRecord {
  std::string example_id;
  std::size_t y = 0;
  std::size_t y_hat = 0;
  std::size_t y_tilde = 0;
  std::vector<std::string> message;  // distinct tokens
  std::size_t message_size = 0;
};

// Metric error on an empty list.
double csr(std::span<const CommunicationRecord> records);
// Layperson accuracy against the gold label.
double acc(std::span<const CommunicationRecord> records);

struct RunReport {
  std::string explainer;
  std::string classifier;
  std::optional<std::size_t> k;  // unset for emergent-length explainers
  std::size_t n = 0;
  double csr = 0.0;
  double acc = 0.0;
  double mean_k = 0.0;
  // confusion[ŷ][ỹ]
  std::vector<std::vector<std::size_t>> confusion;
  // Unset when every message is empty.
  std::optional<double> entropy;

  nlohmann::json to_json(const LabelSet& labels) const;
};

RunReport make_report(std::string explainer, std::string classifier,
                      std::optional<std::size_t> k,
                      std::span<const CommunicationRecord> records,
                      std::size_t n_classes);

// Records from a dump whose ỹ column is filled. Data error if a record has
// no ỹ.
std::vector<CommunicationRecord> records_from_dump(
    std::span<const ExplanationRecord> dump, const LabelSet& labels);

// Runs L over the dump's messages and fills ỹ.
std::vector<CommunicationRecord> play(const BowLayperson& layperson,
                                      std::span<ExplanationRecord> dump,
                                      const Vocabulary& vocab,
                                      const LabelSet& labels);

// Aligned columns: explainer, k, CSR, ACC_L (percentages), H.
std::string format_table(std::span<const RunReport> reports);

// Shannon entropy of the relative frequency of each selected word over all
// messages. Metric error when every message is empty.
double explanation_entropy(std::span<const std::vector<std::string>> messages,
                           double base = 2.0);

// |A ∩ B| / |A ∪ B| over deduplicated sets; two empty sets give 1.
double jaccard(std::span<const std::string> a, std::span<const std::string> b);
// Mean per-example Jaccard. Alignment error unless both dumps list the same
// example ids in the same order.
double word_overlap(std::span<const ExplanationRecord> a,
                    std::span<const ExplanationRecord> b);

struct Agreement {
  double p_o = 0.0;
  double p_e = 0.0;
  double kappa = 0.0;
  // p_e = 1: both annotators used one and the same label throughout, κ is
  // set to 1 by convention.
  bool degenerate = false;

  nlohmann::json to_json() const;
};

// Cohen's κ with chance agreement from the two annotators' marginals.
// Alignment error on a length mismatch, Metric error when empty.
Agreement agreement(std::span<const std::string> a, std::span<const std::string> b);

struct HumanAnswer {
  std::string label;
  bool unsure = false;
};

struct HumanReport {
  std::size_t n = 0;
  std::size_t n_unsure = 0;
  double csr = 0.0;
  double acc = 0.0;
  // Over items not marked unsure; unset when every item is unsure.
  std::optional<double> csr_sure;
  std::optional<double> acc_sure;
  double unsure_fraction = 0.0;

  nlohmann::json to_json() const;
};

// `y_hat` and `y` are aligned with `answers`.
HumanReport human_report(std::span<const HumanAnswer> answers,
                         std::span<const std::string> y_hat,
                         std::span<const std::string> y);

struct SweepPoint {
  std::optional<std::size_t> k;  // unset for the full-length point
  RunReport report;
};

struct SweepConfig {
  ExplainerKind kind = ExplainerKind::TopkAttention;
  std::vector<std::size_t> ks;
  bool include_full = true;
  std::uint64_t seed = 0;
  LaypersonConfig layperson;
  TrainConfig train;
};

// For each k (ascending), explains train/dev/test, trains a fresh layperson
// on the train messages selecting by dev CSR, and reports on test. Errors
// raised inside a cell are rethrown with the k prepended.
std::vector<SweepPoint> k_sweep(const AttentionClassifier& classifier,
                                const Corpus& corpus, const SweepConfig& config,
                                const JointExplainer* joint = nullptr);

// k, CSR, ACC_L, mean message size; "full" in the k column for the terminal
// point.
std::string sweep_csv(std::span<const SweepPoint> points);

}  // namespace commx
