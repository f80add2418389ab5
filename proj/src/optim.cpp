#include "commx/optim.hpp"

#include <cmath>

#include "commx/error.hpp"

namespace commx {

namespace {

void validate(const AdamWConfig& cfg) {
  if (cfg.lr < 0.0) fail(ErrorKind::Config, "AdamW: negative learning rate");
  if (cfg.weight_decay < 0.0) {
    fail(ErrorKind::Config, "AdamW: negative weight decay");
  }
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 ||
      cfg.beta2 >= 1.0) {
    fail(ErrorKind::Config, "AdamW: betas must lie in [0, 1)");
  }
}

}  // namespace

void adamw_step(std::span<double> params, std::span<const double> grads,
                AdamWState& state, const AdamWConfig& cfg) {
  validate(cfg);
  if (params.size() != grads.size()) {
    fail(ErrorKind::Dimension, "AdamW: " + std::to_string(params.size()) +
                                   " params vs " +
                                   std::to_string(grads.size()) + " grads");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= cfg.lr * cfg.weight_decay * params[i];
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

AdamW::AdamW(AdamWConfig cfg) : cfg_(cfg) { validate(cfg_); }

void AdamW::step(ad::ParameterStore& params) {
  states_.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    adamw_step(p.value.data, p.grad.data, states_[i], cfg_);
  }
}

}  // namespace commx
