#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace pcta {

/// Dense n-dimensional array of 64-bit floats, flat row-major storage.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_in);  // zero-filled
  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in);

  static Tensor zeros(std::vector<std::size_t> shape_in) { return Tensor(std::move(shape_in)); }
  static Tensor full(std::vector<std::size_t> shape_in, double value);

  std::size_t numel() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  /// Same data, new shape; element count must match.
  Tensor reshaped(std::vector<std::size_t> new_shape) const;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

/// Winning-index map recorded by maxpool_forward for the exact adjoint.
struct PoolIndices {
  std::vector<std::size_t> input_shape;
  std::vector<std::size_t> output_shape;
  std::vector<std::size_t> winner;  // flat input index per output element
};

struct PoolResult {
  Tensor output;
  PoolIndices indices;
};

struct DenseVjp {
  Tensor dx;
  Tensor dw;
  Tensor db;
};

struct ConvVjp {
  Tensor dx;
  Tensor dk;
  Tensor db;
};

/// y = W.x + b for W [out x in], x [in], b [out].
Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b);

/// Adjoints of dense_forward: dx = W^T.u, dw = u (outer) x, db = u.
DenseVjp dense_vjp(const Tensor& x, const Tensor& w, const Tensor& upstream);

/// Valid (no padding) stride-1 cross-correlation with per-channel bias.
/// x [Ci x H x W], k [Co x Ci x kh x kw], b [Co] -> [Co x H-kh+1 x W-kw+1].
Tensor conv2d_forward(const Tensor& x, const Tensor& k, const Tensor& b);

/// Exact adjoints of conv2d_forward.
ConvVjp conv2d_vjp(const Tensor& x, const Tensor& k, const Tensor& upstream);

/// Non-overlapping size x size max pooling over [C x H x W]; H, W must be
/// divisible by size. Ties go to the first (row-major lowest) index.
PoolResult maxpool_forward(const Tensor& x, std::size_t size);

/// Routes each upstream element to its recorded argmax position.
Tensor maxpool_vjp(const PoolIndices& indices, const Tensor& upstream);

Tensor relu(const Tensor& x);

/// 1 where x > 0, else 0 (the derivative at exactly 0 is defined as 0).
Tensor relu_deriv(const Tensor& x);

}  // namespace pcta
