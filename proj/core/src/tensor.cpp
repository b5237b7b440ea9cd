#include "protofed/tensor.hpp"

#include <cmath>
#include <string>

namespace protofed {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_size(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape product " +
                         std::to_string(shape_size(shape)));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(shape.size()));
  }
  return shape[axis];
}

void Tensor::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  for (double g : grad) {
    if (!std::isfinite(g)) return false;
  }
  return true;
}

void require_shape(const Tensor& t, std::initializer_list<std::size_t> shape,
                   const char* what) {
  if (t.shape.size() != shape.size() ||
      !std::equal(shape.begin(), shape.end(), t.shape.begin())) {
    std::string msg = std::string(what) + ": expected shape (";
    for (std::size_t d : shape) msg += std::to_string(d) + ",";
    msg += "), got (";
    for (std::size_t d : t.shape) msg += std::to_string(d) + ",";
    msg += ")";
    throw DimensionError(msg);
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " +
                         std::to_string(rank) + ", got " +
                         std::to_string(t.rank()));
  }
}

}  // namespace protofed
