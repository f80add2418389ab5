#pragma once

// Mappings from real score vectors onto the probability simplex: softmax,
// sparsemax (Euclidean projection) and α-entmax, the maximizer of
// pᵀs + H_α(p) with H_α the Tsallis entropy. α = 1 is softmax and α = 2 is
// sparsemax; for α > 1 the output may contain exact zeros.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "commx/autodiff.hpp"

namespace commx {

// Scores plus a validity mask. Invalid positions behave as −∞: they get
// probability zero and never enter a normalizer or a threshold search.
struct ScoreVector {
  std::vector<double> scores;
  std::vector<bool> mask;  // true = valid; empty means all valid

  ScoreVector() = default;
  explicit ScoreVector(std::vector<double> s) : scores(std::move(s)) {}
  ScoreVector(std::vector<double> s, std::vector<bool> m)
      : scores(std::move(s)), mask(std::move(m)) {}

  bool valid(std::size_t i) const { return mask.empty() || mask[i]; }
  std::size_t size() const noexcept { return scores.size(); }
};

struct Distribution {
  std::vector<double> probs;
  std::vector<std::size_t> support;  // ascending indices with probs > 0

  static Distribution from_probs(std::vector<double> probs);
  std::size_t size() const noexcept { return probs.size(); }
};

enum class TransformKind { Softmax, Entmax, Sparsemax };

struct Transform {
  TransformKind kind = TransformKind::Softmax;
  double alpha = 1.0;

  static Transform softmax() { return {TransformKind::Softmax, 1.0}; }
  static Transform sparsemax() { return {TransformKind::Sparsemax, 2.0}; }
  static Transform entmax(double a) { return {TransformKind::Entmax, a}; }

  bool sparse() const noexcept { return alpha > 1.0; }
  std::string name() const;
  // Accepts "softmax", "sparsemax", "entmax15" / "entmax-1.5", "entmax:<α>".
  static Transform parse(const std::string& text);
};

Distribution softmax(const ScoreVector& s);
Distribution sparsemax(const ScoreVector& s);
// Bisection on the threshold τ with p_i = [(α−1)s_i − τ]_+^{1/(α−1)}; α = 1
// and α = 2 dispatch to the closed forms.
Distribution entmax(const ScoreVector& s, double alpha);
Distribution apply(const Transform& t, const ScoreVector& s);

// α = 1: Shannon entropy in nats. Otherwise (1/(α(α−1))) Σ (p_j − p_j^α).
double tsallis_entropy(const Distribution& p, double alpha);

// Jacobian-vector products. Each Jacobian is symmetric, so these double as
// vector-Jacobian products in backward passes.
std::vector<double> softmax_jvp(const Distribution& p, std::span<const double> v);
std::vector<double> sparsemax_jvp(const Distribution& p,
                                  std::span<const double> v);
std::vector<double> entmax_jvp(const Distribution& p, std::span<const double> v,
                               double alpha);

// Differentiable transform node over a rank-1 score node.
ad::Var attention(ad::Var scores, const std::vector<bool>& mask,
                  const Transform& t);

}  // namespace commx
