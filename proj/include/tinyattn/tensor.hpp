#pragma once

#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tinyattn {

// Dense row-major tensor of doubles. Plain value type: copy/move freely.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> values;
  std::optional<std::vector<double>> grad;
  bool trainable = false;

  Tensor() = default;
  Tensor(std::vector<int64_t> s, std::vector<double> v, bool train = false)
      : shape(std::move(s)), values(std::move(v)), trainable(train) {
    if (numel_of(shape) != static_cast<int64_t>(values.size()))
      throw std::invalid_argument("Tensor: shape/value size mismatch");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> s, bool train = false) {
    int64_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0), train);
  }

  static Tensor full(std::vector<int64_t> s, double fill, bool train = false) {
    int64_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), fill), train);
  }

  // 2-D matrix from nested initializer data.
  static Tensor matrix(int64_t rows, int64_t cols, std::vector<double> v, bool train = false) {
    return Tensor({rows, cols}, std::move(v), train);
  }

  int64_t numel() const { return static_cast<int64_t>(values.size()); }
  int64_t ndim() const { return static_cast<int64_t>(shape.size()); }
  int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
  int64_t cols() const {
    if (shape.size() == 2) return shape[1];
    if (shape.size() == 1) return shape[0];
    throw std::logic_error("Tensor::cols: not a matrix/vector");
  }

  double& at(int64_t r, int64_t c) { return values[static_cast<size_t>(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return values[static_cast<size_t>(r * cols() + c)]; }

  void zero_grad() { grad.reset(); }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
  }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

// Stable (name, storage) pair used for checkpointing, freezing and the
// optimizer's trainable-set enumeration. Order of enumeration is fixed by
// the owning module.
struct NamedParam {
  std::string name;
  Tensor* tensor;
};

}  // namespace tinyattn
