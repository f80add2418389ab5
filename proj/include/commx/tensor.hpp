#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace commx {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles with rank 0, 1 or 2.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() : shape{}, data(1, 0.0) {}
  Tensor(Shape s, std::vector<double> values);

  static Tensor zeros(Shape s);
  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t rows() const noexcept { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const noexcept { return shape.size() < 2 ? 1 : shape[1]; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols(), cols()};
  }
  std::span<double> row(std::size_t r) {
    return {data.data() + r * cols(), cols()};
  }

  bool all_finite() const noexcept;
  void fill(double v);

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace commx
