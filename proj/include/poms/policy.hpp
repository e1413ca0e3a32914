#pragma once

// Feed-forward policies with tanh hidden layers and a linear output layer,
// flattened to/from contiguous parameter vectors.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "poms/errors.hpp"
#include "poms/numkit.hpp"
#include "poms/rng.hpp"

namespace poms {

struct PolicyShape {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 0;

  // (fan_in, fan_out) of each affine layer, input to output.
  std::vector<std::pair<std::size_t, std::size_t>> layer_dims() const {
    std::vector<std::pair<std::size_t, std::size_t>> dims;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
      dims.emplace_back(in, h);
      in = h;
    }
    dims.emplace_back(in, output_dim);
    return dims;
  }

  // Total parameter count: sum over layers of (fan_in + 1) * fan_out.
  std::size_t param_count() const {
    std::size_t p = 0;
    for (auto [in, out] : layer_dims()) p += (in + 1) * out;
    return p;
  }

  bool operator==(const PolicyShape& o) const {
    return input_dim == o.input_dim && hidden == o.hidden && output_dim == o.output_dim;
  }
};

struct ParamVector {
  std::vector<double> values;
  PolicyShape shape;
};

struct PolicyLayers {
  std::vector<Matrix> weights;              // weights[l] is (fan_out x fan_in)
  std::vector<std::vector<double>> biases;  // biases[l] has length fan_out
};

// Flatten order per layer: weight matrix in row-major order, then the bias
// vector; layers from input to output.
inline ParamVector flatten(const PolicyLayers& layers, const PolicyShape& shape) {
  ParamVector pv;
  pv.shape = shape;
  pv.values.reserve(shape.param_count());
  const auto dims = shape.layer_dims();
  if (layers.weights.size() != dims.size() || layers.biases.size() != dims.size())
    throw ShapeMismatch("flatten: layer count does not match shape");
  for (std::size_t l = 0; l < dims.size(); ++l) {
    const auto [in, out] = dims[l];
    const Matrix& w = layers.weights[l];
    if (w.rows != out || w.cols != in || layers.biases[l].size() != out)
      throw ShapeMismatch("flatten: layer dimensions do not match shape");
    pv.values.insert(pv.values.end(), w.data.begin(), w.data.end());
    pv.values.insert(pv.values.end(), layers.biases[l].begin(), layers.biases[l].end());
  }
  return pv;
}

inline PolicyLayers unflatten(const ParamVector& pv) {
  if (pv.values.size() != pv.shape.param_count())
    throw LengthMismatch("unflatten: value count does not match shape");
  PolicyLayers layers;
  std::size_t pos = 0;
  for (auto [in, out] : pv.shape.layer_dims()) {
    Matrix w(out, in);
    std::copy_n(pv.values.begin() + static_cast<std::ptrdiff_t>(pos), out * in, w.data.begin());
    pos += out * in;
    std::vector<double> b(pv.values.begin() + static_cast<std::ptrdiff_t>(pos),
                          pv.values.begin() + static_cast<std::ptrdiff_t>(pos + out));
    pos += out;
    layers.weights.push_back(std::move(w));
    layers.biases.push_back(std::move(b));
  }
  return layers;
}

// Unflattened once, then cheap to evaluate repeatedly within a rollout.
class CompiledPolicy {
 public:
  explicit CompiledPolicy(const ParamVector& pv)
      : layers_(unflatten(pv)), shape_(pv.shape) {
    for (double v : pv.values)
      if (!std::isfinite(v)) throw NonFiniteParams("policy parameters must be finite");
  }

  const PolicyShape& shape() const { return shape_; }

  std::vector<double> act(std::span<const double> obs) const {
    std::vector<double> h(obs.begin(), obs.end());
    const std::size_t last = layers_.weights.size() - 1;
    for (std::size_t l = 0; l <= last; ++l) {
      const Matrix& w = layers_.weights[l];
      std::vector<double> out(w.rows);
      for (std::size_t i = 0; i < w.rows; ++i) {
        const double* wi = w.row(i);
        double acc = layers_.biases[l][i];
        for (std::size_t j = 0; j < w.cols; ++j) acc += wi[j] * h[j];
        out[i] = l < last ? std::tanh(acc) : acc;
      }
      h = std::move(out);
    }
    return h;
  }

 private:
  PolicyLayers layers_;
  PolicyShape shape_;
};

// One-shot forward pass with validation; rollouts use CompiledPolicy instead.
inline std::vector<double> forward(const ParamVector& pv, std::span<const double> obs) {
  if (obs.size() != pv.shape.input_dim)
    throw DimensionMismatch("forward: observation length does not match input_dim");
  for (double v : obs)
    if (!std::isfinite(v)) throw NonFiniteParams("forward: non-finite observation");
  return CompiledPolicy(pv).act(obs);
}

// All parameters (weights and biases) i.i.d. uniform on [-1, 1].
inline ParamVector init_uniform(const PolicyShape& shape, Rng& rng) {
  ParamVector pv;
  pv.shape = shape;
  pv.values.resize(shape.param_count());
  for (auto& v : pv.values) v = rng.uniform(-1.0, 1.0);
  return pv;
}

// Weights N(0, 2 / (fan_in + fan_out)), biases zero.
inline ParamVector init_glorot(const PolicyShape& shape, Rng& rng) {
  ParamVector pv;
  pv.shape = shape;
  pv.values.reserve(shape.param_count());
  for (auto [in, out] : shape.layer_dims()) {
    const double sd = std::sqrt(2.0 / static_cast<double>(in + out));
    for (std::size_t k = 0; k < in * out; ++k) pv.values.push_back(sd * rng.normal());
    pv.values.insert(pv.values.end(), out, 0.0);
  }
  return pv;
}

}  // namespace poms
