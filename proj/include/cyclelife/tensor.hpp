#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cyclelife::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s);

// Dense row-major tensor of doubles. Plain value type; `node` links the
// tensor to the tape that recorded it (-1 = not recorded, treated as a
// constant by every op).
struct Tensor {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  int node = -1;

  Tensor() = default;

  Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (shape_size(shape) != values.size())
      throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match " +
                                  std::to_string(values.size()) + " values");
    for (auto e : shape)
      if (e == 0) throw std::invalid_argument("tensor: zero extent in shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) {
    const std::size_t n = shape_size(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  static Tensor full(Shape s, double v) {
    const std::size_t n = shape_size(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Shape s{rows.size(), rows.begin()->size()};
    std::vector<double> v;
    v.reserve(shape_size(s));
    for (const auto& r : rows) {
      if (r.size() != s[1]) throw std::invalid_argument("tensor: ragged rows");
      v.insert(v.end(), r.begin(), r.end());
    }
    return Tensor(std::move(s), std::move(v));
  }

  std::size_t size() const { return values.size(); }
  bool is_scalar() const { return values.size() == 1; }

  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
};

}  // namespace cyclelife::ad
