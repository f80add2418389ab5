#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "commx/autodiff.hpp"

namespace commx {

using Rng = std::mt19937_64;

// Gate layout inside the 4h-row blocks: input, forget, cell candidate, output.
struct LstmParams {
  ad::Parameter* w_input = nullptr;   // [4h x d]
  ad::Parameter* w_hidden = nullptr;  // [4h x h]
  ad::Parameter* bias = nullptr;      // [4h]
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
};

// Registers "<prefix>.w_input", "<prefix>.w_hidden", "<prefix>.bias".
// Weights ~ U(−1/√h, 1/√h); forget-gate bias starts at +1.
LstmParams add_lstm(ad::ParameterStore& store, const std::string& prefix,
                    std::size_t input_size, std::size_t hidden_size, Rng& rng);
// Rebinds parameter pointers by name after a store was rebuilt or loaded.
LstmParams bind_lstm(ad::ParameterStore& store, const std::string& prefix);

struct LstmState {
  ad::Var h;
  ad::Var c;
};

LstmState lstm_cell(ad::Var x, ad::Var h_prev, ad::Var c_prev,
                    const LstmParams& params, std::size_t step = 0);

struct BiLstmOutput {
  // Per position: [forward_i ; backward_i], size 2h.
  std::vector<ad::Var> states;
  // [forward state at last position ; backward state at first position].
  ad::Var summary;
};

BiLstmOutput run_bilstm(ad::Graph& graph, std::span<const ad::Var> inputs,
                        const LstmParams& forward, const LstmParams& backward);

}  // namespace commx
