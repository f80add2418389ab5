#include "commx/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "commx/error.hpp"

namespace commx::ad {

Parameter& ParameterStore::add(std::string name, Tensor init) {
  if (contains(name)) {
    fail(ErrorKind::Contract, "duplicate parameter name: " + name);
  }
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(init)));
  return *params_.back();
}

Parameter& ParameterStore::get(std::string_view name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  fail(ErrorKind::Contract, "unknown parameter: " + std::string(name));
}

const Parameter& ParameterStore::get(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

bool ParameterStore::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const auto& p) { return p->name == name; });
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParameterStore::value_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::copy_values_to(ParameterStore& other) const {
  if (other.size() != size()) {
    fail(ErrorKind::Contract, "parameter store layouts differ");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (other[i].name != params_[i]->name ||
        other[i].value.shape != params_[i]->value.shape) {
      fail(ErrorKind::Contract, "parameter mismatch at " + params_[i]->name);
    }
    other[i].value = params_[i]->value;
  }
}

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::input(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::param(Parameter& p) {
  Node n;
  n.external = &p.value;
  n.requires_grad = true;
  n.param = &p;
  return push(std::move(n));
}

Var Graph::param_row(Parameter& p, std::size_t r) {
  if (p.value.rank() != 2 || r >= p.value.shape[0]) {
    fail(ErrorKind::Dimension, "param_row: index " + std::to_string(r) +
                                   " outside " + shape_string(p.value.shape));
  }
  Node n;
  auto rv = p.value.row(r);
  n.value = Tensor::vector({rv.begin(), rv.end()});
  n.requires_grad = true;
  n.param = &p;
  n.param_row = r;
  return push(std::move(n));
}

Var Graph::record(std::string_view op, Tensor value,
                  std::vector<std::size_t> parents, BackwardFn backward) {
  if (!value.all_finite()) {
    fail(ErrorKind::Numeric, "non-finite value produced by " + std::string(op));
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(parents.begin(), parents.end(), [&](auto id) {
    return nodes_[id].requires_grad;
  });
  if (n.requires_grad) n.backward = std::move(backward);
  n.parents = std::move(parents);
  return push(std::move(n));
}

Tensor& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros(value(id).shape);
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::accumulate(std::size_t id, std::span<const double> delta) {
  if (!nodes_[id].requires_grad) return;
  Tensor& g = grad_buffer(id);
  for (std::size_t i = 0; i < delta.size(); ++i) g.data[i] += delta[i];
}

void Graph::backward(Var loss) {
  if (loss.value().size() != 1) {
    fail(ErrorKind::Contract, "backward root must be scalar, got shape " +
                                  shape_string(loss.value().shape));
  }
  if (backward_done_) {
    fail(ErrorKind::Contract, "backward already run on this graph");
  }
  backward_done_ = true;
  grad_buffer(loss.id()).data[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr && n.param->trainable) {
      const auto& g = n.grad.data;
      const std::size_t offset =
          n.param_row == kWholeParam ? 0 : n.param_row * n.param->value.cols();
      auto* pg = n.param->grad.data.data() + offset;
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
  }
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (!n.has_grad) return Tensor::zeros(value(v.id()).shape);
  return n.grad;
}

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    fail(ErrorKind::Dimension, std::string(op) + ": shape mismatch " +
                                   shape_string(a.shape) + " vs " +
                                   shape_string(b.shape));
  }
}

template <typename F, typename DF>
Var unary(const char* op, Var a, F f, DF df) {
  const Tensor& x = a.value();
  Tensor out = Tensor::zeros(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x.data[i]);
  const auto ia = a.id();
  return a.graph().record(op, std::move(out), {ia},
                          [ia, df](Graph& g, std::size_t self) {
                            const auto& y = g.value(self).data;
                            const auto& gy = g.grad_of(self).data;
                            std::vector<double> d(y.size());
                            for (std::size_t i = 0; i < y.size(); ++i) {
                              d[i] = gy[i] * df(y[i]);
                            }
                            g.accumulate(ia, d);
                          });
}

// Matrix-vector product; the general loop below degrades badly when the
// right operand has a single column.
Var matvec(Var a, Var b, Tensor out, std::size_t m, std::size_t k) {
  const double* A = a.value().data.data();
  const double* x = b.value().data.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += arow[p] * x[p];
    out.data[i] = acc;
  }
  const auto ia = a.id(), ib = b.id();
  return a.graph().record(
      "matmul", std::move(out), {ia, ib},
      [ia, ib, m, k](Graph& g, std::size_t self) {
        const double* G = g.grad_of(self).data.data();
        if (g.requires_grad(ia)) {
          const double* xv = g.value(ib).data.data();
          double* ga = g.grad_buffer(ia).data.data();
          for (std::size_t i = 0; i < m; ++i) {
            const double gi = G[i];
            double* garow = ga + i * k;
            for (std::size_t p = 0; p < k; ++p) garow[p] += gi * xv[p];
          }
        }
        if (g.requires_grad(ib)) {
          const double* Av = g.value(ia).data.data();
          double* gb = g.grad_buffer(ib).data.data();
          for (std::size_t i = 0; i < m; ++i) {
            const double gi = G[i];
            const double* arow = Av + i * k;
            for (std::size_t p = 0; p < k; ++p) gb[p] += gi * arow[p];
          }
        }
      });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || (B.rank() != 1 && B.rank() != 2) ||
      A.shape[1] != B.shape[0]) {
    fail(ErrorKind::Dimension, "matmul: incompatible shapes " +
                                   shape_string(A.shape) + " and " +
                                   shape_string(B.shape));
  }
  const std::size_t m = A.shape[0], k = A.shape[1];
  const std::size_t n = B.rank() == 2 ? B.shape[1] : 1;
  Shape out_shape = B.rank() == 2 ? Shape{m, n} : Shape{m};
  Tensor out = Tensor::zeros(out_shape);
  if (n == 1) {
    return matvec(a, b, std::move(out), m, k);
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A.data.data() + i * k;
    double* orow = out.data.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = B.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  const auto ia = a.id(), ib = b.id();
  return a.graph().record(
      "matmul", std::move(out), {ia, ib},
      [ia, ib, m, k, n](Graph& g, std::size_t self) {
        const auto& G = g.grad_of(self).data;
        const auto& Av = g.value(ia).data;
        const auto& Bv = g.value(ib).data;
        if (g.requires_grad(ia)) {
          auto& ga = g.grad_buffer(ia).data;
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = G.data() + i * n;
            double* garow = ga.data() + i * k;
            for (std::size_t p = 0; p < k; ++p) {
              const double* brow = Bv.data() + p * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              garow[p] += acc;
            }
          }
        }
        if (g.requires_grad(ib)) {
          auto& gb = g.grad_buffer(ib).data;
          for (std::size_t i = 0; i < m; ++i) {
            const double* arow = Av.data() + i * k;
            const double* grow = G.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double av = arow[p];
              double* gbrow = gb.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
            }
          }
        }
      });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph().record("add", std::move(out), {ia, ib},
                          [ia, ib](Graph& g, std::size_t self) {
                            const auto& gy = g.grad_of(self).data;
                            g.accumulate(ia, gy);
                            g.accumulate(ib, gy);
                          });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.value().data[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph().record("sub", std::move(out), {ia, ib},
                          [ia, ib](Graph& g, std::size_t self) {
                            const auto& gy = g.grad_of(self).data;
                            g.accumulate(ia, gy);
                            std::vector<double> neg(gy.size());
                            for (std::size_t i = 0; i < gy.size(); ++i) {
                              neg[i] = -gy[i];
                            }
                            g.accumulate(ib, neg);
                          });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph().record(
      "mul", std::move(out), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
        const auto& gy = g.grad_of(self).data;
        const auto& av = g.value(ia).data;
        const auto& bv = g.value(ib).data;
        std::vector<double> d(gy.size());
        if (g.requires_grad(ia)) {
          for (std::size_t i = 0; i < gy.size(); ++i) d[i] = gy[i] * bv[i];
          g.accumulate(ia, d);
        }
        if (g.requires_grad(ib)) {
          for (std::size_t i = 0; i < gy.size(); ++i) d[i] = gy[i] * av[i];
          g.accumulate(ib, d);
        }
      });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data) v *= factor;
  const auto ia = a.id();
  return a.graph().record("scale", std::move(out), {ia},
                          [ia, factor](Graph& g, std::size_t self) {
                            const auto& gy = g.grad_of(self).data;
                            std::vector<double> d(gy.size());
                            for (std::size_t i = 0; i < gy.size(); ++i) {
                              d[i] = gy[i] * factor;
                            }
                            g.accumulate(ia, d);
                          });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        // Split on sign so exp never overflows.
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double y) { return 1.0 - y * y; });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  const auto ia = a.id();
  const auto n = a.value().size();
  return a.graph().record("sum", Tensor::scalar(s), {ia},
                          [ia, n](Graph& g, std::size_t self) {
                            std::vector<double> d(n, g.grad_of(self).data[0]);
                            g.accumulate(ia, d);
                          });
}

Var mean(Var a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var dot(Var a, Var b) {
  require_same_shape("dot", a.value(), b.value());
  double s = 0.0;
  const auto& av = a.value().data;
  const auto& bv = b.value().data;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph().record(
      "dot", Tensor::scalar(s), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
        const double gy = g.grad_of(self).data[0];
        const auto& av = g.value(ia).data;
        const auto& bv = g.value(ib).data;
        std::vector<double> d(av.size());
        if (g.requires_grad(ia)) {
          for (std::size_t i = 0; i < d.size(); ++i) d[i] = gy * bv[i];
          g.accumulate(ia, d);
        }
        if (g.requires_grad(ib)) {
          for (std::size_t i = 0; i < d.size(); ++i) d[i] = gy * av[i];
          g.accumulate(ib, d);
        }
      });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorKind::Dimension, "concat: no inputs");
  std::vector<double> out;
  std::vector<std::size_t> ids, offsets;
  for (const Var& p : parts) {
    if (p.value().rank() > 1) {
      fail(ErrorKind::Dimension,
           "concat: expected rank <= 1, got " + shape_string(p.value().shape));
    }
    ids.push_back(p.id());
    offsets.push_back(out.size());
    out.insert(out.end(), p.value().data.begin(), p.value().data.end());
  }
  Graph& graph = parts.front().graph();
  return graph.record(
      "concat", Tensor::vector(std::move(out)), ids,
      [ids, offsets](Graph& g, std::size_t self) {
        const auto& gy = g.grad_of(self).data;
        for (std::size_t j = 0; j < ids.size(); ++j) {
          const auto n = g.value(ids[j]).size();
          g.accumulate(ids[j], std::span(gy).subspan(offsets[j], n));
        }
      });
}

Var slice(Var a, std::size_t begin, std::size_t length) {
  const Tensor& x = a.value();
  if (x.rank() != 1 || begin + length > x.size()) {
    fail(ErrorKind::Dimension, "slice: range [" + std::to_string(begin) + ", " +
                                   std::to_string(begin + length) +
                                   ") outside " + shape_string(x.shape));
  }
  std::vector<double> out(x.data.begin() + begin,
                          x.data.begin() + begin + length);
  const auto ia = a.id();
  const auto n = x.size();
  return a.graph().record("slice", Tensor::vector(std::move(out)), {ia},
                          [ia, n, begin](Graph& g, std::size_t self) {
                            if (!g.requires_grad(ia)) return;
                            const auto& gy = g.grad_of(self).data;
                            auto& ga = g.grad_buffer(ia).data;
                            for (std::size_t i = 0; i < gy.size(); ++i) {
                              ga[begin + i] += gy[i];
                            }
                            (void)n;
                          });
}

Var row(Var matrix, std::size_t r) {
  const Tensor& m = matrix.value();
  if (m.rank() != 2 || r >= m.shape[0]) {
    fail(ErrorKind::Dimension, "row: index " + std::to_string(r) +
                                   " outside " + shape_string(m.shape));
  }
  const auto cols = m.shape[1];
  auto rv = m.row(r);
  const auto ia = matrix.id();
  return matrix.graph().record(
      "row", Tensor::vector({rv.begin(), rv.end()}), {ia},
      [ia, r, cols](Graph& g, std::size_t self) {
        if (!g.requires_grad(ia)) return;
        const auto& gy = g.grad_of(self).data;
        auto& ga = g.grad_buffer(ia).data;
        for (std::size_t j = 0; j < cols; ++j) ga[r * cols + j] += gy[j];
      });
}

Var weighted_sum(Var weights, std::span<const Var> rows) {
  const Tensor& w = weights.value();
  if (w.rank() != 1 || w.size() != rows.size() || rows.empty()) {
    fail(ErrorKind::Dimension,
         "weighted_sum: " + std::to_string(rows.size()) + " rows vs weights " +
             shape_string(w.shape));
  }
  const Shape& rs = rows.front().value().shape;
  Tensor out = Tensor::zeros(rs);
  std::vector<std::size_t> ids{weights.id()};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require_same_shape("weighted_sum", rows[i].value(), rows.front().value());
    ids.push_back(rows[i].id());
    if (w.data[i] == 0.0) continue;
    const auto& rv = rows[i].value().data;
    for (std::size_t j = 0; j < rv.size(); ++j) out.data[j] += w.data[i] * rv[j];
  }
  return weights.graph().record(
      "weighted_sum", std::move(out), ids, [ids](Graph& g, std::size_t self) {
        const auto& gy = g.grad_of(self).data;
        const auto& wv = g.value(ids[0]).data;
        const std::size_t n = ids.size() - 1;
        if (g.requires_grad(ids[0])) {
          std::vector<double> gw(n);
          for (std::size_t i = 0; i < n; ++i) {
            const auto& rv = g.value(ids[i + 1]).data;
            double acc = 0.0;
            for (std::size_t j = 0; j < rv.size(); ++j) acc += gy[j] * rv[j];
            gw[i] = acc;
          }
          g.accumulate(ids[0], gw);
        }
        std::vector<double> d(gy.size());
        for (std::size_t i = 0; i < n; ++i) {
          if (!g.requires_grad(ids[i + 1])) continue;
          for (std::size_t j = 0; j < d.size(); ++j) d[j] = wv[i] * gy[j];
          g.accumulate(ids[i + 1], d);
        }
      });
}

Var average(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorKind::Dimension, "average: no inputs");
  Tensor out = Tensor::zeros(parts.front().value().shape);
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    require_same_shape("average", p.value(), out);
    ids.push_back(p.id());
    for (std::size_t j = 0; j < out.size(); ++j) out.data[j] += p.value().data[j];
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  for (auto& v : out.data) v *= inv;
  return parts.front().graph().record(
      "average", std::move(out), ids, [ids, inv](Graph& g, std::size_t self) {
        const auto& gy = g.grad_of(self).data;
        std::vector<double> d(gy.size());
        for (std::size_t j = 0; j < d.size(); ++j) d[j] = gy[j] * inv;
        for (auto id : ids) g.accumulate(id, d);
      });
}

Var cross_entropy(Var logits, std::size_t target) {
  const auto& z = logits.value().data;
  if (logits.value().rank() != 1 || target >= z.size()) {
    fail(ErrorKind::Dimension, "cross_entropy: target " +
                                   std::to_string(target) + " outside " +
                                   shape_string(logits.value().shape));
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  const auto ia = logits.id();
  return logits.graph().record(
      "cross_entropy", Tensor::scalar(lse - z[target]), {ia},
      [ia, target, lse](Graph& g, std::size_t self) {
        const double gy = g.grad_of(self).data[0];
        const auto& zv = g.value(ia).data;
        std::vector<double> d(zv.size());
        for (std::size_t i = 0; i < zv.size(); ++i) {
          d[i] = gy * (std::exp(zv[i] - lse) - (i == target ? 1.0 : 0.0));
        }
        g.accumulate(ia, d);
      });
}

Var squared_distance(Var a, Var b) {
  require_same_shape("squared_distance", a.value(), b.value());
  Var diff = sub(a, b);
  return dot(diff, diff);
}

}  // namespace commx::ad
