#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "protofed/errors.hpp"

namespace protofed {

std::size_t shape_size(const std::vector<std::size_t>& shape);

/// Dense row-major tensor of 64-bit reals with an optional gradient buffer
/// of the same shape. This is the only numeric container in the project;
/// all layers operate on it.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until ensure_grad()/zero_grad()

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), data(shape_size(shape), 0.0) {}
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t axis) const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool has_grad() const { return !grad.empty(); }
  /// Allocates a zero gradient buffer if absent.
  void ensure_grad();
  /// Allocates (if needed) and zeroes the gradient buffer.
  void zero_grad();

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  /// True iff every value (and gradient, when present) is finite.
  bool all_finite() const;
};

/// Throws DimensionError unless the tensor has exactly the given shape.
void require_shape(const Tensor& t, std::initializer_list<std::size_t> shape,
                   const char* what);
/// Throws DimensionError unless the tensor has the given rank.
void require_rank(const Tensor& t, std::size_t rank, const char* what);

}  // namespace protofed
