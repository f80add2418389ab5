#include "commx/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "commx/error.hpp"

namespace commx {

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
  if (shape.size() > 2) {
    fail(ErrorKind::Dimension, "tensor rank > 2: " + shape_string(shape));
  }
  if (shape_size(shape) != data.size()) {
    fail(ErrorKind::Dimension,
         "tensor shape " + shape_string(shape) + " does not hold " +
             std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::zeros(Shape s) {
  const auto n = shape_size(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data.begin(), data.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

}  // namespace commx
