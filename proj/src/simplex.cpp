#include "commx/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "commx/error.hpp"

namespace commx {

namespace {

constexpr double kClampBelow = 1e-12;
constexpr double kBisectTolerance = 1e-12;
constexpr int kBisectIterations = 100;

std::vector<std::size_t> valid_indices(const ScoreVector& s) {
  if (!s.mask.empty() && s.mask.size() != s.scores.size()) {
    fail(ErrorKind::Dimension, "score mask has " +
                                   std::to_string(s.mask.size()) +
                                   " entries for " +
                                   std::to_string(s.scores.size()) + " scores");
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.valid(i)) idx.push_back(i);
  }
  if (idx.empty()) fail(ErrorKind::Data, "simplex transform on empty input");
  return idx;
}

}  // namespace

Distribution Distribution::from_probs(std::vector<double> probs) {
  Distribution d;
  d.probs = std::move(probs);
  for (std::size_t i = 0; i < d.probs.size(); ++i) {
    if (d.probs[i] > 0.0) d.support.push_back(i);
  }
  return d;
}

std::string Transform::name() const {
  switch (kind) {
    case TransformKind::Softmax: return "softmax";
    case TransformKind::Sparsemax: return "sparsemax";
    case TransformKind::Entmax:
      if (alpha == 1.5) return "entmax15";
      return "entmax:" + std::to_string(alpha);
  }
  return "unknown";
}

Transform Transform::parse(const std::string& text) {
  if (text == "softmax") return softmax();
  if (text == "sparsemax") return sparsemax();
  if (text == "entmax15" || text == "entmax-1.5" || text == "1.5-entmax") {
    return entmax(1.5);
  }
  if (text.rfind("entmax:", 0) == 0) {
    const double a = std::stod(text.substr(7));
    if (a < 1.0) fail(ErrorKind::Domain, "entmax alpha must be >= 1");
    return entmax(a);
  }
  fail(ErrorKind::Config, "unknown attention transform: " + text);
}

Distribution softmax(const ScoreVector& s) {
  const auto idx = valid_indices(s);
  double mx = -std::numeric_limits<double>::infinity();
  for (auto i : idx) mx = std::max(mx, s.scores[i]);
  std::vector<double> p(s.size(), 0.0);
  double z = 0.0;
  for (auto i : idx) {
    p[i] = std::exp(s.scores[i] - mx);
    z += p[i];
  }
  for (auto i : idx) p[i] /= z;
  Distribution d;
  d.probs = std::move(p);
  d.support = idx;
  return d;
}

Distribution sparsemax(const ScoreVector& s) {
  const auto idx = valid_indices(s);
  std::vector<double> z;
  z.reserve(idx.size());
  for (auto i : idx) z.push_back(s.scores[i]);
  std::sort(z.begin(), z.end(), std::greater<>());
  // Largest k with 1 + k·z_k > Σ_{j≤k} z_j; k = 1 always qualifies.
  double cumsum = 0.0, support_sum = z[0];
  std::size_t k_star = 1;
  for (std::size_t k = 1; k <= z.size(); ++k) {
    cumsum += z[k - 1];
    if (1.0 + static_cast<double>(k) * z[k - 1] > cumsum) {
      k_star = k;
      support_sum = cumsum;
    }
  }
  const double tau = (support_sum - 1.0) / static_cast<double>(k_star);
  std::vector<double> p(s.size(), 0.0);
  for (auto i : idx) p[i] = std::max(s.scores[i] - tau, 0.0);
  return Distribution::from_probs(std::move(p));
}

Distribution entmax(const ScoreVector& s, double alpha) {
  if (!(alpha >= 1.0)) {
    fail(ErrorKind::Domain, "entmax alpha must be >= 1, got " +
                                std::to_string(alpha));
  }
  if (alpha == 1.0) return softmax(s);
  if (alpha == 2.0) return sparsemax(s);
  const auto idx = valid_indices(s);
  const double am1 = alpha - 1.0;
  const double inv = 1.0 / am1;
  std::vector<double> scaled;
  scaled.reserve(idx.size());
  for (auto i : idx) scaled.push_back(am1 * s.scores[i]);
  const auto [mn_it, mx_it] = std::minmax_element(scaled.begin(), scaled.end());
  double lo = *mn_it - 1.0;  // Σp ≥ 1 here
  double hi = *mx_it;        // Σp = 0 here
  auto mass = [&](double tau, std::vector<double>& out) {
    double total = 0.0;
    for (std::size_t j = 0; j < scaled.size(); ++j) {
      const double base = scaled[j] - tau;
      out[j] = base > 0.0 ? std::pow(base, inv) : 0.0;
      total += out[j];
    }
    return total;
  };
  std::vector<double> q(scaled.size());
  for (int it = 0; it < kBisectIterations; ++it) {
    const double tau = 0.5 * (lo + hi);
    const double total = mass(tau, q);
    if (std::abs(total - 1.0) <= kBisectTolerance) break;
    if (total > 1.0) {
      lo = tau;
    } else {
      hi = tau;
    }
  }
  double total = mass(0.5 * (lo + hi), q);
  if (total <= 0.0) total = mass(lo, q);
  std::vector<double> p(s.size(), 0.0);
  for (std::size_t j = 0; j < idx.size(); ++j) p[idx[j]] = q[j] / total;
  double kept = 0.0;
  for (auto i : idx) {
    if (p[i] < kClampBelow) p[i] = 0.0;
    kept += p[i];
  }
  for (auto i : idx) p[i] /= kept;
  return Distribution::from_probs(std::move(p));
}

Distribution apply(const Transform& t, const ScoreVector& s) {
  switch (t.kind) {
    case TransformKind::Softmax: return softmax(s);
    case TransformKind::Sparsemax: return sparsemax(s);
    case TransformKind::Entmax: return entmax(s, t.alpha);
  }
  fail(ErrorKind::Config, "unknown transform kind");
}

double tsallis_entropy(const Distribution& p, double alpha) {
  if (!(alpha >= 1.0)) fail(ErrorKind::Domain, "Tsallis alpha must be >= 1");
  double h = 0.0;
  if (alpha == 1.0) {
    for (double pj : p.probs) {
      if (pj > 0.0) h -= pj * std::log(pj);
    }
    return h;
  }
  for (double pj : p.probs) h += pj - std::pow(pj, alpha);
  return h / (alpha * (alpha - 1.0));
}

std::vector<double> softmax_jvp(const Distribution& p,
                                std::span<const double> v) {
  if (v.size() != p.size()) {
    fail(ErrorKind::Dimension, "softmax_jvp: direction size mismatch");
  }
  double pv = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) pv += p.probs[i] * v[i];
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = p.probs[i] * (v[i] - pv);
  return out;
}

std::vector<double> sparsemax_jvp(const Distribution& p,
                                  std::span<const double> v) {
  if (v.size() != p.size()) {
    fail(ErrorKind::Dimension, "sparsemax_jvp: direction size mismatch");
  }
  if (p.support.empty()) {
    fail(ErrorKind::Contract, "sparsemax_jvp: empty support");
  }
  double mean = 0.0;
  for (auto i : p.support) mean += v[i];
  mean /= static_cast<double>(p.support.size());
  std::vector<double> out(v.size(), 0.0);
  for (auto i : p.support) out[i] = v[i] - mean;
  return out;
}

std::vector<double> entmax_jvp(const Distribution& p, std::span<const double> v,
                               double alpha) {
  if (!(alpha > 1.0)) {
    fail(ErrorKind::Domain, "entmax_jvp requires alpha > 1");
  }
  if (v.size() != p.size()) {
    fail(ErrorKind::Dimension, "entmax_jvp: direction size mismatch");
  }
  std::vector<double> g(p.size(), 0.0);
  double gsum = 0.0, gv = 0.0;
  for (auto i : p.support) {
    g[i] = alpha == 2.0 ? 1.0 : std::pow(p.probs[i], 2.0 - alpha);
    gsum += g[i];
    gv += g[i] * v[i];
  }
  if (gsum <= 0.0) fail(ErrorKind::Contract, "entmax_jvp: empty support");
  const double ratio = gv / gsum;
  std::vector<double> out(v.size(), 0.0);
  for (auto i : p.support) out[i] = g[i] * v[i] - ratio * g[i];
  return out;
}

ad::Var attention(ad::Var scores, const std::vector<bool>& mask,
                  const Transform& t) {
  const Tensor& s = scores.value();
  if (s.rank() != 1) {
    fail(ErrorKind::Dimension,
         "attention expects rank-1 scores, got " + shape_string(s.shape));
  }
  ScoreVector sv(s.data, mask);
  Distribution dist = apply(t, sv);
  Tensor out = Tensor::vector(dist.probs);
  const auto is = scores.id();
  return scores.graph().record(
      "attention", std::move(out), {is},
      [is, t, dist = std::move(dist)](ad::Graph& g, std::size_t self) {
        const auto& gy = g.grad_of(self).data;
        std::vector<double> d;
        switch (t.kind) {
          case TransformKind::Softmax: d = softmax_jvp(dist, gy); break;
          case TransformKind::Sparsemax: d = sparsemax_jvp(dist, gy); break;
          case TransformKind::Entmax:
            d = t.alpha == 1.0 ? softmax_jvp(dist, gy)
                               : entmax_jvp(dist, gy, t.alpha);
            break;
        }
        g.accumulate(is, d);
      });
}

}  // namespace commx
