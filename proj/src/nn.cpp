#include "vqgb/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace vqgb {

namespace {

double activate(Activation a, double v) {
  switch (a) {
    case Activation::kTanh:
      return std::tanh(v);
    case Activation::kRelu:
      return v > 0.0 ? v : 0.0;
    case Activation::kIdentity:
      return v;
  }
  return v;
}

// Derivative expressed through the post-activation value.
double activate_deriv(Activation a, double pre, double post) {
  switch (a) {
    case Activation::kTanh:
      return 1.0 - post * post;
    case Activation::kRelu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

}  // namespace

std::size_t MlpSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l) {
    n += layer_widths[l + 1] * layer_widths[l] + layer_widths[l + 1];
  }
  return n;
}

std::size_t MlpSpec::layer_offset(std::size_t l) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < l; ++i) {
    off += layer_widths[i + 1] * layer_widths[i] + layer_widths[i + 1];
  }
  return off;
}

void MlpSpec::validate() const {
  if (layer_widths.size() < 2) {
    throw std::invalid_argument("MlpSpec: need at least input and output widths");
  }
  for (std::size_t w : layer_widths) {
    if (w == 0) throw std::invalid_argument("MlpSpec: zero layer width");
  }
}

std::vector<double> mlp_forward(const MlpSpec& spec, std::span<const double> params,
                                std::span<const double> x, MlpTape* tape) {
  spec.validate();
  if (x.size() != spec.input_width()) {
    throw std::invalid_argument("mlp_forward: input length " + std::to_string(x.size()) +
                                " != input width " + std::to_string(spec.input_width()));
  }
  if (params.size() != spec.param_count()) {
    throw std::invalid_argument("mlp_forward: parameter vector length " +
                                std::to_string(params.size()) + " != expected " +
                                std::to_string(spec.param_count()));
  }

  if (tape) {
    tape->spec = spec;
    tape->params.assign(params.begin(), params.end());
    tape->input.assign(x.begin(), x.end());
    tape->pre.clear();
    tape->post.clear();
    tape->consumed = false;
  }

  std::vector<double> cur(x.begin(), x.end());
  const std::size_t layers = spec.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = spec.layer_widths[l];
    const std::size_t out = spec.layer_widths[l + 1];
    const std::size_t off = spec.layer_offset(l);
    const double* w = params.data() + off;
    const double* b = w + out * in;

    std::vector<double> pre(out);
    for (std::size_t r = 0; r < out; ++r) {
      double acc = b[r];
      const double* row = w + r * in;
      for (std::size_t c = 0; c < in; ++c) acc += row[c] * cur[c];
      pre[r] = acc;
    }

    const bool hidden = (l + 1 < layers);
    std::vector<double> post(out);
    for (std::size_t r = 0; r < out; ++r) {
      post[r] = hidden ? activate(spec.activation, pre[r]) : pre[r];
    }

    if (tape) {
      tape->pre.push_back(pre);
      tape->post.push_back(post);
    }
    cur = std::move(post);
  }
  return cur;
}

void mlp_backward_accumulate(MlpTape& tape, std::span<const double> upstream,
                             std::span<double> param_grad_acc,
                             std::vector<double>* input_grad) {
  if (tape.consumed) {
    throw std::logic_error("mlp_backward: tape already consumed");
  }
  const MlpSpec& spec = tape.spec;
  if (upstream.size() != spec.output_width()) {
    throw std::invalid_argument("mlp_backward: upstream length mismatch");
  }
  if (param_grad_acc.size() != spec.param_count()) {
    throw std::invalid_argument("mlp_backward: gradient buffer size mismatch");
  }
  tape.consumed = true;

  const std::size_t layers = spec.num_layers();
  std::vector<double> delta(upstream.begin(), upstream.end());

  for (std::size_t li = layers; li-- > 0;) {
    const std::size_t in = spec.layer_widths[li];
    const std::size_t out = spec.layer_widths[li + 1];
    const std::size_t off = spec.layer_offset(li);
    const double* w = tape.params.data() + off;
    const bool hidden = (li + 1 < layers);

    if (hidden) {
      for (std::size_t r = 0; r < out; ++r) {
        delta[r] *= activate_deriv(spec.activation, tape.pre[li][r], tape.post[li][r]);
      }
    }

    const std::vector<double>& below =
        (li == 0) ? tape.input : tape.post[li - 1];
    double* wg = param_grad_acc.data() + off;
    double* bg = wg + out * in;
    for (std::size_t r = 0; r < out; ++r) {
      double* row = wg + r * in;
      for (std::size_t c = 0; c < in; ++c) row[c] += delta[r] * below[c];
      bg[r] += delta[r];
    }

    std::vector<double> next(in, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      const double* row = w + r * in;
      for (std::size_t c = 0; c < in; ++c) next[c] += row[c] * delta[r];
    }
    delta = std::move(next);
  }

  if (input_grad) *input_grad = std::move(delta);
}

MlpGradients mlp_backward(MlpTape& tape, std::span<const double> upstream) {
  MlpGradients g;
  g.param_grad.assign(tape.spec.param_count(), 0.0);
  mlp_backward_accumulate(tape, upstream, g.param_grad, &g.input_grad);
  return g;
}

std::vector<double> mlp_init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<double> params(spec.param_count(), 0.0);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.layer_widths[l];
    const std::size_t out = spec.layer_widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    double* w = params.data() + spec.layer_offset(l);
    for (std::size_t i = 0; i < out * in; ++i) w[i] = rng.uniform(-bound, bound);
    // biases stay 0
  }
  return params;
}

double grad_check(const DifferentiableScalarFn& f, std::span<const double> point,
                  double eps, std::span<const std::size_t> coords) {
  if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");

  std::vector<double> analytic;
  const double f0 = f(point, &analytic);
  if (!std::isfinite(f0)) throw std::runtime_error("grad_check: non-finite function value");
  if (analytic.size() != point.size()) {
    throw std::invalid_argument("grad_check: gradient length mismatch");
  }

  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(point.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    coords = all;
  }

  std::vector<double> p(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i : coords) {
    const double saved = p[i];
    p[i] = saved + eps;
    const double fp = f(p, nullptr);
    p[i] = saved - eps;
    const double fm = f(p, nullptr);
    p[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("grad_check: non-finite function value near point");
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace vqgb
