#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "commx/autodiff.hpp"

namespace commx {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;
};

// One AdamW update on a flat parameter block. The state is zero-initialized
// on first use. Weight decay is decoupled: p ← p − lr·wd·p is applied beside
// the bias-corrected Adam step, never folded into the gradient.
void adamw_step(std::span<double> params, std::span<const double> grads,
                AdamWState& state, const AdamWConfig& cfg);

class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg);

  // Updates every trainable parameter from its accumulated gradient.
  void step(ad::ParameterStore& params);
  const AdamWConfig& config() const noexcept { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::vector<AdamWState> states_;
};

}  // namespace commx
