#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixvi {

// Dense row-major tensor of 64-bit reals. Rank is the length of `shape`;
// scalars are rank-1 tensors of size one.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)), data(static_cast<size_t>(numel(shape)), 0.0) {}
  Tensor(std::vector<int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match data length " +
                                  std::to_string(data.size()));
  }

  static int64_t numel(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int64_t> s, double v) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = v;
    return t;
  }
  static Tensor ones(std::vector<int64_t> s) { return full(std::move(s), 1.0); }
  static Tensor identity(int64_t d) {
    Tensor t({d, d});
    for (int64_t i = 0; i < d; ++i) t.data[static_cast<size_t>(i * d + i)] = 1.0;
    return t;
  }
  static Tensor vec(std::vector<double> d) {
    auto n = static_cast<int64_t>(d.size());
    return Tensor({n}, std::move(d));
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  bool is_scalar() const { return size() == 1; }
  double scalar_value() const {
    if (!is_scalar()) throw std::invalid_argument("tensor: expected scalar, got shape " + shape_str(shape));
    return data[0];
  }

  int64_t rows() const { return shape.size() >= 1 ? shape[0] : 1; }
  int64_t cols() const {
    if (shape.size() < 2) throw std::invalid_argument("tensor: cols() on rank-" + std::to_string(rank()));
    int64_t c = 1;
    for (size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return c;
  }

  double& operator()(int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator()(int64_t i) const { return data[static_cast<size_t>(i)]; }
  double& operator()(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  double operator()(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  static std::string shape_str(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
  }
  std::string shape_str() const { return shape_str(shape); }
};

}  // namespace mixvi
