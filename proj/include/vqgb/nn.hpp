#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vqgb/rng.hpp"

namespace vqgb {

struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

enum class Activation { kTanh, kRelu, kIdentity };

// Fully-connected network shape: layer_widths = {in, hidden..., out}.
// The activation applies to hidden layers; the output layer is linear.
struct MlpSpec {
  std::vector<std::size_t> layer_widths;
  Activation activation = Activation::kTanh;

  std::size_t input_width() const { return layer_widths.front(); }
  std::size_t output_width() const { return layer_widths.back(); }
  std::size_t num_layers() const { return layer_widths.size() - 1; }
  std::size_t param_count() const;

  // Offset of layer l's weight block; biases follow the weights.
  std::size_t layer_offset(std::size_t l) const;

  void validate() const;  // throws std::invalid_argument
};

// One completed forward pass: the network shape, a snapshot of the parameters
// it ran with, and every intermediate activation. Single-consumer; backward
// may run once.
struct MlpTape {
  MlpSpec spec;
  std::vector<double> params;
  std::vector<double> input;
  std::vector<std::vector<double>> pre;   // pre-activation per layer
  std::vector<std::vector<double>> post;  // post-activation per layer
  bool consumed = false;

  const std::vector<double>& output() const { return post.back(); }
};

struct MlpGradients {
  std::vector<double> param_grad;
  std::vector<double> input_grad;
};

// Evaluates the network. Throws std::invalid_argument on shape mismatch.
// When tape is non-null, records everything backward needs.
std::vector<double> mlp_forward(const MlpSpec& spec, std::span<const double> params,
                                std::span<const double> x, MlpTape* tape = nullptr);

// Gradients of <upstream, output> w.r.t. params and input. Consumes the tape;
// a second call throws std::logic_error.
MlpGradients mlp_backward(MlpTape& tape, std::span<const double> upstream);

// Same, but adds the parameter gradient into param_grad_acc (sized
// spec.param_count()) and, when input_grad is non-null, overwrites it.
void mlp_backward_accumulate(MlpTape& tape, std::span<const double> upstream,
                             std::span<double> param_grad_acc,
                             std::vector<double>* input_grad);

// Uniform in [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))], biases 0.
std::vector<double> mlp_init_params(const MlpSpec& spec, Rng& rng);

// A scalar function of a parameter vector that can also report its gradient.
// grad, when non-null, is resized and overwritten.
using DifferentiableScalarFn =
    std::function<double(std::span<const double> point, std::vector<double>* grad)>;

// Max over checked coordinates of |analytic - central difference| / max(1, |analytic|).
// coords empty means all coordinates. Throws std::runtime_error when f returns
// a non-finite value anywhere in the stencil.
double grad_check(const DifferentiableScalarFn& f, std::span<const double> point,
                  double eps, std::span<const std::size_t> coords = {});

}  // namespace vqgb
