#include "commx/lstm.hpp"

#include <cmath>

#include "commx/error.hpp"

namespace commx {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = dist(rng);
  return t;
}

}  // namespace

LstmParams add_lstm(ad::ParameterStore& store, const std::string& prefix,
                    std::size_t input_size, std::size_t hidden_size, Rng& rng) {
  if (input_size == 0 || hidden_size == 0) {
    fail(ErrorKind::Config, "LSTM sizes must be positive");
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  const std::size_t g = 4 * hidden_size;
  store.add(prefix + ".w_input", uniform_tensor({g, input_size}, bound, rng));
  store.add(prefix + ".w_hidden", uniform_tensor({g, hidden_size}, bound, rng));
  Tensor bias = uniform_tensor({g}, bound, rng);
  for (std::size_t i = hidden_size; i < 2 * hidden_size; ++i) bias[i] = 1.0;
  store.add(prefix + ".bias", std::move(bias));
  return bind_lstm(store, prefix);
}

LstmParams bind_lstm(ad::ParameterStore& store, const std::string& prefix) {
  LstmParams p;
  p.w_input = &store.get(prefix + ".w_input");
  p.w_hidden = &store.get(prefix + ".w_hidden");
  p.bias = &store.get(prefix + ".bias");
  p.input_size = p.w_input->value.cols();
  p.hidden_size = p.w_hidden->value.cols();
  const auto g = 4 * p.hidden_size;
  if (p.w_input->value.rows() != g || p.w_hidden->value.rows() != g ||
      p.bias->value.size() != g) {
    fail(ErrorKind::Dimension, "inconsistent LSTM parameter shapes under " +
                                   prefix);
  }
  return p;
}

namespace {

// Parameter leaves bound once per sequence, so every step shares one gradient
// buffer per weight matrix.
struct BoundLstm {
  ad::Var w_input, w_hidden, bias;
};

BoundLstm bind_leaves(ad::Graph& g, const LstmParams& p) {
  return {g.param(*p.w_input), g.param(*p.w_hidden), g.param(*p.bias)};
}

LstmState step_cell(ad::Var x, ad::Var h_prev, ad::Var c_prev,
                    const BoundLstm& w, const LstmParams& params,
                    std::size_t step) {
  const auto h = params.hidden_size;
  if (x.value().size() != params.input_size || h_prev.value().size() != h ||
      c_prev.value().size() != h) {
    fail(ErrorKind::Dimension,
         "lstm_cell: input " + shape_string(x.value().shape) + ", state " +
             shape_string(h_prev.value().shape) + " vs sizes d=" +
             std::to_string(params.input_size) + " h=" + std::to_string(h));
  }
  try {
    ad::Var gates = ad::add(ad::add(ad::matmul(w.w_input, x),
                                    ad::matmul(w.w_hidden, h_prev)),
                            w.bias);
    ad::Var i_gate = ad::sigmoid(ad::slice(gates, 0, h));
    ad::Var f_gate = ad::sigmoid(ad::slice(gates, h, h));
    ad::Var cand = ad::tanh(ad::slice(gates, 2 * h, h));
    ad::Var o_gate = ad::sigmoid(ad::slice(gates, 3 * h, h));
    ad::Var c = ad::add(ad::mul(f_gate, c_prev), ad::mul(i_gate, cand));
    ad::Var h_out = ad::mul(o_gate, ad::tanh(c));
    return {h_out, c};
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Numeric) throw;
    fail(ErrorKind::Numeric, std::string(e.what()) + " at LSTM step " +
                                 std::to_string(step));
  }
}

}  // namespace

LstmState lstm_cell(ad::Var x, ad::Var h_prev, ad::Var c_prev,
                    const LstmParams& params, std::size_t step) {
  return step_cell(x, h_prev, c_prev, bind_leaves(x.graph(), params), params,
                   step);
}

BiLstmOutput run_bilstm(ad::Graph& graph, std::span<const ad::Var> inputs,
                        const LstmParams& forward,
                        const LstmParams& backward) {
  const std::size_t n = inputs.size();
  if (n == 0) fail(ErrorKind::Data, "BiLSTM over an empty sequence");
  std::vector<ad::Var> fwd(n), bwd(n);
  LstmState s{graph.constant(Tensor::zeros({forward.hidden_size})),
              graph.constant(Tensor::zeros({forward.hidden_size}))};
  const BoundLstm fw = bind_leaves(graph, forward);
  for (std::size_t t = 0; t < n; ++t) {
    s = step_cell(inputs[t], s.h, s.c, fw, forward, t);
    fwd[t] = s.h;
  }
  s = {graph.constant(Tensor::zeros({backward.hidden_size})),
       graph.constant(Tensor::zeros({backward.hidden_size}))};
  const BoundLstm bw = bind_leaves(graph, backward);
  for (std::size_t t = n; t-- > 0;) {
    s = step_cell(inputs[t], s.h, s.c, bw, backward, t);
    bwd[t] = s.h;
  }
  BiLstmOutput out;
  out.states.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const ad::Var parts[] = {fwd[t], bwd[t]};
    out.states.push_back(ad::concat(parts));
  }
  const ad::Var ends[] = {fwd[n - 1], bwd[0]};
  out.summary = ad::concat(ends);
  return out;
}

}  // namespace commx
