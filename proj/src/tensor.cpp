#include "pcta/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <utility>

namespace pcta {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << "x";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

namespace {

void require_positive_dims(const std::vector<std::size_t>& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor shape has a zero dimension " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_in) : shape(std::move(shape_in)) {
  require_positive_dims(shape);
  data.assign(shape_numel(shape), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  require_positive_dims(shape);
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
}

Tensor Tensor::full(std::vector<std::size_t> shape_in, double value) {
  Tensor t(std::move(shape_in));
  for (double& v : t.data) v = value;
  return t;
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw std::invalid_argument("cannot reshape " + shape_str(shape) + " to " + shape_str(new_shape));
  }
  return Tensor(std::move(new_shape), data);
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.ndim() != 2 || x.ndim() != 1 || b.ndim() != 1) {
    throw std::invalid_argument("dense_forward: expected W " + shape_str(w.shape) +
                                " 2-d, x " + shape_str(x.shape) + " and b " + shape_str(b.shape) + " 1-d");
  }
  const std::size_t out = w.shape[0];
  const std::size_t in = w.shape[1];
  if (x.shape[0] != in || b.shape[0] != out) {
    throw std::invalid_argument("dense_forward: W " + shape_str(w.shape) + " does not conform with x " +
                                shape_str(x.shape) + " and b " + shape_str(b.shape));
  }
  Tensor y({out});
  for (std::size_t o = 0; o < out; ++o) {
    double acc = b[o];
    const double* row = w.data.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
  return y;
}

DenseVjp dense_vjp(const Tensor& x, const Tensor& w, const Tensor& upstream) {
  if (w.ndim() != 2 || x.ndim() != 1 || upstream.ndim() != 1) {
    throw std::invalid_argument("dense_vjp: expected W 2-d, x and upstream 1-d");
  }
  const std::size_t out = w.shape[0];
  const std::size_t in = w.shape[1];
  if (x.shape[0] != in || upstream.shape[0] != out) {
    throw std::invalid_argument("dense_vjp: W " + shape_str(w.shape) + " does not conform with x " +
                                shape_str(x.shape) + " and upstream " + shape_str(upstream.shape));
  }
  DenseVjp g{Tensor({in}), Tensor({out, in}), Tensor({out})};
  for (std::size_t o = 0; o < out; ++o) {
    const double u = upstream[o];
    const double* row = w.data.data() + o * in;
    double* dwrow = g.dw.data.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) {
      g.dx[i] += row[i] * u;
      dwrow[i] = u * x[i];
    }
    g.db[o] = u;
  }
  return g;
}

namespace {

void check_conv_shapes(const Tensor& x, const Tensor& k, const Tensor* b) {
  if (x.ndim() != 3 || k.ndim() != 4) {
    throw std::invalid_argument("conv2d: expected x [C x H x W] and kernel [Co x Ci x kh x kw], got x " +
                                shape_str(x.shape) + " and kernel " + shape_str(k.shape));
  }
  if (k.shape[1] != x.shape[0]) {
    throw std::invalid_argument("conv2d: kernel input channels " + shape_str(k.shape) +
                                " do not match x " + shape_str(x.shape));
  }
  if (k.shape[2] > x.shape[1] || k.shape[3] > x.shape[2]) {
    throw std::invalid_argument("conv2d: kernel " + shape_str(k.shape) + " larger than input " +
                                shape_str(x.shape));
  }
  if (b != nullptr && (b->ndim() != 1 || b->shape[0] != k.shape[0])) {
    throw std::invalid_argument("conv2d: bias " + shape_str(b->shape) + " does not match kernel " +
                                shape_str(k.shape));
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& k, const Tensor& b) {
  check_conv_shapes(x, k, &b);
  const std::size_t ci = x.shape[0], h = x.shape[1], w = x.shape[2];
  const std::size_t co = k.shape[0], kh = k.shape[2], kw = k.shape[3];
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  Tensor y({co, oh, ow});
  for (std::size_t f = 0; f < co; ++f) {
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t c = 0; c < ow; ++c) {
        double acc = b[f];
        for (std::size_t ch = 0; ch < ci; ++ch) {
          const double* xrow = x.data.data() + (ch * h + r) * w + c;
          const double* krow = k.data.data() + ((f * ci + ch) * kh) * kw;
          for (std::size_t p = 0; p < kh; ++p) {
            for (std::size_t q = 0; q < kw; ++q) {
              acc += xrow[p * w + q] * krow[p * kw + q];
            }
          }
        }
        y.data[(f * oh + r) * ow + c] = acc;
      }
    }
  }
  return y;
}

ConvVjp conv2d_vjp(const Tensor& x, const Tensor& k, const Tensor& upstream) {
  check_conv_shapes(x, k, nullptr);
  const std::size_t ci = x.shape[0], h = x.shape[1], w = x.shape[2];
  const std::size_t co = k.shape[0], kh = k.shape[2], kw = k.shape[3];
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  if (upstream.shape != std::vector<std::size_t>{co, oh, ow}) {
    throw std::invalid_argument("conv2d_vjp: upstream " + shape_str(upstream.shape) +
                                " does not match forward output [" + std::to_string(co) + "x" +
                                std::to_string(oh) + "x" + std::to_string(ow) + "]");
  }
  ConvVjp g{Tensor(x.shape), Tensor(k.shape), Tensor({co})};
  for (std::size_t f = 0; f < co; ++f) {
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t c = 0; c < ow; ++c) {
        const double u = upstream.data[(f * oh + r) * ow + c];
        g.db[f] += u;
        for (std::size_t ch = 0; ch < ci; ++ch) {
          double* dxrow = g.dx.data.data() + (ch * h + r) * w + c;
          const double* xrow = x.data.data() + (ch * h + r) * w + c;
          double* dkrow = g.dk.data.data() + ((f * ci + ch) * kh) * kw;
          const double* krow = k.data.data() + ((f * ci + ch) * kh) * kw;
          for (std::size_t p = 0; p < kh; ++p) {
            for (std::size_t q = 0; q < kw; ++q) {
              dkrow[p * kw + q] += u * xrow[p * w + q];
              dxrow[p * w + q] += u * krow[p * kw + q];
            }
          }
        }
      }
    }
  }
  return g;
}

PoolResult maxpool_forward(const Tensor& x, std::size_t size) {
  if (x.ndim() != 3) {
    throw std::invalid_argument("maxpool_forward: expected [C x H x W], got " + shape_str(x.shape));
  }
  if (size == 0) throw std::invalid_argument("maxpool_forward: pool size must be positive");
  const std::size_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
  if (h % size != 0 || w % size != 0) {
    throw std::invalid_argument("maxpool_forward: spatial dims of " + shape_str(x.shape) +
                                " not divisible by pool size " + std::to_string(size));
  }
  const std::size_t oh = h / size, ow = w / size;
  PoolResult res{Tensor({c, oh, ow}), PoolIndices{x.shape, {c, oh, ow}, {}}};
  res.indices.winner.resize(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t col = 0; col < ow; ++col) {
        std::size_t best = (ch * h + r * size) * w + col * size;
        double best_val = x.data[best];
        for (std::size_t p = 0; p < size; ++p) {
          for (std::size_t q = 0; q < size; ++q) {
            const std::size_t idx = (ch * h + r * size + p) * w + col * size + q;
            if (x.data[idx] > best_val) {  // strict: first index wins ties
              best_val = x.data[idx];
              best = idx;
            }
          }
        }
        const std::size_t out_idx = (ch * oh + r) * ow + col;
        res.output.data[out_idx] = best_val;
        res.indices.winner[out_idx] = best;
      }
    }
  }
  return res;
}

Tensor maxpool_vjp(const PoolIndices& indices, const Tensor& upstream) {
  if (upstream.shape != indices.output_shape) {
    throw std::invalid_argument("maxpool_vjp: upstream " + shape_str(upstream.shape) +
                                " does not match recorded output " + shape_str(indices.output_shape));
  }
  Tensor dx(indices.input_shape);
  for (std::size_t i = 0; i < upstream.numel(); ++i) {
    dx.data[indices.winner[i]] += upstream.data[i];
  }
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  return y;
}

Tensor relu_deriv(const Tensor& x) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) y.data[i] = x.data[i] > 0.0 ? 1.0 : 0.0;
  return y;
}

}  // namespace pcta
