#pragma once

// Tape-based reverse-mode automatic differentiation over dense rank 0-2
// tensors. A Graph records every op in creation order, so the tape order is
// already a topological order and backward is a single reverse sweep.

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "commx/tensor.hpp"

namespace commx::ad {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)),
        grad(Tensor::zeros(value.shape)) {}

  void zero_grad() { grad.fill(0.0); }
};

// Owns parameters with stable addresses, in insertion order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor init);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();
  std::size_t value_count() const;

  // Deep copy of all values into another store with identical layout.
  void copy_values_to(ParameterStore& other) const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  const Tensor& value() const;
  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Non-differentiable input.
  Var constant(Tensor value);
  // Differentiable input that is not a parameter; read its gradient via grad().
  Var input(Tensor value);
  // Full parameter as a leaf. The value is read in place, not copied.
  Var param(Parameter& p);
  // Row `r` of a rank-2 parameter as a rank-1 leaf; backward scatters into
  // that row only, so large embedding tables stay cheap.
  Var param_row(Parameter& p, std::size_t r);

  // Appends an op node. `backward` reads grad(self) and accumulates into the
  // parents through accumulate(). Throws a numeric error naming `op` when the
  // value contains non-finite entries.
  Var record(std::string_view op, Tensor value,
             std::vector<std::size_t> parents, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1, sweeps the tape, then adds leaf gradients into
  // their Parameter::grad. May be called once per graph.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  // Gradient of the last backward root wrt node `id`; zeros if unreached.
  Tensor grad(Var v) const;
  const Tensor& grad_of(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Adds `delta` (same size as the node value) into the node's gradient.
  void accumulate(std::size_t id, std::span<const double> delta);
  Tensor& grad_buffer(std::size_t id);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  static constexpr std::size_t kWholeParam = static_cast<std::size_t>(-1);

  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    std::size_t param_row = kWholeParam;
    const Tensor* external = nullptr;
  };
  Var push(Node node);

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

// Ops. Rank-1 tensors act as column vectors in matmul.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sigmoid(Var a);
Var tanh(Var a);
Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);
Var concat(std::span<const Var> parts);
Var slice(Var a, std::size_t begin, std::size_t length);
// Row `r` of a rank-2 node as a rank-1 node.
Var row(Var matrix, std::size_t r);
// Σ_i weights[i] · rows[i]; weights is rank 1 with rows.size() entries.
Var weighted_sum(Var weights, std::span<const Var> rows);
// Elementwise mean of equally shaped vectors.
Var average(std::span<const Var> parts);
// −log softmax(logits)[target].
Var cross_entropy(Var logits, std::size_t target);
// ‖a − b‖².
Var squared_distance(Var a, Var b);

}  // namespace commx::ad
