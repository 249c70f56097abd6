#include <doctest.h>
#include <stdexcept>

#include <cmath>

#include "vqgb/model.hpp"

using namespace vqgb;

namespace {

ModelParams tiny_model(std::size_t dim, std::size_t dz, std::size_t K, std::uint64_t seed) {
  Rng rng(seed);
  MlpSpec enc{{dim, 6, dz}, Activation::kTanh};
  MlpSpec dec{{dz, 6, dim}, Activation::kTanh};
  return init_model(enc, dec, K, rng);
}

std::vector<std::vector<double>> gumbel_noise(std::size_t rows, std::size_t K,
                                              std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> noise(rows, std::vector<double>(K));
  for (auto& row : noise) {
    for (double& g : row) g = rng.gumbel();
  }
  return noise;
}

}  // namespace

TEST_CASE("flat parameter round trip") {
  ModelParams p = tiny_model(3, 2, 4, 5);
  const auto flat = p.to_flat();
  CHECK(flat.size() == p.flat_size());
  ModelParams q = p;
  std::vector<double> other(flat.size(), 0.125);
  q.from_flat(other);
  q.from_flat(flat);
  CHECK(q.to_flat() == flat);
}

TEST_CASE("l0 is zero when the decoder reproduces the input exactly") {
  // K=1, identity-free construction: decoder constant at the data point.
  Rng rng(3);
  MlpSpec enc{{2, 2}, Activation::kIdentity};
  MlpSpec dec{{2, 2}, Activation::kIdentity};
  ModelParams p = init_model(enc, dec, 1, rng);
  // zero decoder weights, bias = x
  std::fill(p.decoder_params.begin(), p.decoder_params.end(), 0.0);
  p.decoder_params[4] = 0.4;
  p.decoder_params[5] = 0.6;
  const std::vector<double> x{0.4, 0.6};
  CHECK(reconstruction_loss_l0(p, x, PosteriorMode::kDeterministic) ==
        doctest::Approx(0.0));
}

TEST_CASE("K=1 reconstruction loss is the squared distance to the constant output") {
  Rng rng(8);
  MlpSpec enc{{2, 3, 1}, Activation::kTanh};
  MlpSpec dec{{1, 2}, Activation::kIdentity};
  ModelParams p = init_model(enc, dec, 1, rng);
  const std::vector<double> x{0.9, 0.1};
  const auto c = decode(p, p.codebook.entries[0]);
  const double want = squared_distance(x, c);
  CHECK(reconstruction_loss_l0(p, x, PosteriorMode::kDeterministic) ==
        doctest::Approx(want).epsilon(1e-12));
  CHECK(reconstruction_loss_l0(p, x, PosteriorMode::kStochastic) ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("uniform two-code posterior averages the two decoded losses") {
  Rng rng(12);
  MlpSpec enc{{1, 1}, Activation::kIdentity};
  MlpSpec dec{{1, 1}, Activation::kIdentity};
  ModelParams p = init_model(enc, dec, 2, rng);
  p.beta_q = 0.0;  // uniform posterior
  const std::vector<double> x{0.5};
  const auto y0 = decode(p, p.codebook.entries[0]);
  const auto y1 = decode(p, p.codebook.entries[1]);
  const double want = 0.5 * squared_distance(x, y0) + 0.5 * squared_distance(x, y1);
  CHECK(reconstruction_loss_l0(p, x, PosteriorMode::kStochastic) ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("deterministic l0 equals the large-beta stochastic limit") {
  ModelParams p = tiny_model(2, 2, 5, 33);
  p.beta_q = 1e9;
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> x{rng.uniform(), rng.uniform()};
    const double det = reconstruction_loss_l0(p, x, PosteriorMode::kDeterministic);
    const double sto = reconstruction_loss_l0(p, x, PosteriorMode::kStochastic);
    CHECK(det == doctest::Approx(sto).epsilon(1e-9));
  }
}

TEST_CASE("entropy evaluations") {
  CHECK(entropy(std::vector<double>{1.0, 0.0, 0.0}) == 0.0);
  CHECK(entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(entropy(std::vector<double>{0.7, 0.2, 0.1}) == doctest::Approx(0.80182).epsilon(1e-4));

  CategoricalPosterior post{{1.0, 0.0}, {0.0, 1.0}};
  CHECK(entropy_of_posteriors(post) == 0.0);
  CategoricalPosterior uni{{0.5, 0.5}, {0.5, 0.5}};
  CHECK(entropy_of_posteriors(uni) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cdvib regularizer values and edge cases") {
  const PriorVector pi{0.5, 0.5};
  CategoricalPosterior post{{0.5, 0.5}, {0.5, 0.5}};
  CHECK(cdvib_regularizer(post, pi) == doctest::Approx(0.0));

  CategoricalPosterior skew{{0.75, 0.25}};
  CHECK(cdvib_regularizer(skew, pi) == doctest::Approx(0.13081).epsilon(1e-4));

  // uniform prior identity: KL = log K - mean entropy
  CategoricalPosterior mixed{{0.7, 0.2, 0.1}, {0.5, 0.25, 0.25}};
  const PriorVector u3{1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(cdvib_regularizer(mixed, u3) ==
        doctest::Approx(std::log(3.0) - entropy_of_posteriors(mixed)).epsilon(1e-12));

  const PriorVector bad{1.0, 0.0};
  CHECK_THROWS_AS(cdvib_regularizer(post, bad), std::invalid_argument);
}

TEST_CASE("cdvib is nonnegative and zero only at the prior") {
  Rng rng(6);
  const PriorVector pi{0.3, 0.45, 0.25};
  for (int trial = 0; trial < 200; ++trial) {
    IndexDistribution row(3);
    double sum = 0.0;
    for (double& v : row) {
      v = rng.uniform() + 1e-6;
      sum += v;
    }
    for (double& v : row) v /= sum;
    const double kl = cdvib_regularizer({row}, pi);
    CHECK(kl >= 0.0);
    double dist = 0.0;
    for (std::size_t k = 0; k < 3; ++k) dist += std::abs(row[k] - pi[k]);
    if (dist > 1e-3) CHECK(kl > 0.0);
  }
}

TEST_CASE("mixed regularizer endpoints") {
  CategoricalPosterior post{{0.7, 0.3}, {0.2, 0.8}};
  const PriorVector pi{0.6, 0.4};
  CHECK(mixed_regularizer(post, pi, 0.0) ==
        doctest::Approx(-entropy_of_posteriors(post)).epsilon(1e-12));
  CHECK(mixed_regularizer(post, pi, 1.0) ==
        doctest::Approx(cdvib_regularizer(post, pi)).epsilon(1e-12));
  const double mid = mixed_regularizer(post, pi, 0.5);
  CHECK(mid == doctest::Approx(0.5 * (-entropy_of_posteriors(post)) +
                               0.5 * cdvib_regularizer(post, pi))
                   .epsilon(1e-12));
}

TEST_CASE("sqvae loss on a perfect one-hot autoencoder is zero") {
  // Single code at z* with decoder constant x*, sigma^2 = sigma_psi^2 = 1.
  Rng rng(2);
  MlpSpec enc{{2, 1}, Activation::kIdentity};
  MlpSpec dec{{1, 2}, Activation::kIdentity};
  ModelParams p = init_model(enc, dec, 1, rng);
  std::fill(p.encoder_params.begin(), p.encoder_params.end(), 0.0);
  p.codebook.entries[0] = {0.0};
  std::fill(p.decoder_params.begin(), p.decoder_params.end(), 0.0);
  p.decoder_params[2] = 0.3;  // biases follow the 2x1 weight block
  p.decoder_params[3] = 0.7;
  // encoder output 0 = the code; quantization residual 0; K=1 posterior one-hot
  const std::vector<std::vector<double>> batch{{0.3, 0.7}};
  const auto noise = gumbel_noise(1, 1, 10);
  const auto lg = sqvae_loss_with_noise(p, batch, 0.5, noise);
  CHECK(lg.loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("uniform posterior contributes -log K through the entropy term") {
  // Encoder constant at the midpoint of two symmetric codes.
  Rng rng(14);
  MlpSpec enc{{1, 1}, Activation::kIdentity};
  MlpSpec dec{{1, 1}, Activation::kIdentity};
  ModelParams p = init_model(enc, dec, 2, rng);
  std::fill(p.encoder_params.begin(), p.encoder_params.end(), 0.0);
  p.decoder_params[0] = 0.0;  // output reduces to the bias
  p.codebook.entries[0] = {-1.0};
  p.codebook.entries[1] = {1.0};

  const std::vector<std::vector<double>> batch{{0.0}};
  const auto noise = gumbel_noise(1, 2, 3);
  const auto lg = sqvae_loss_with_noise(p, batch, 1.0, noise);

  // With zero decoder weights the reconstruction/quantization parts are fixed;
  // recompute them and isolate the entropy contribution.
  const double sigma2 = 1.0, beta = 0.5;
  const auto s = gumbel_softmax_from_noise(std::vector<double>{-beta, -beta}, noise[0], 1.0);
  const double zq = s[0] * -1.0 + s[1] * 1.0;
  const double xhat = p.decoder_params[1];  // bias only
  (void)zq;
  const double rec = (0.0 - xhat) * (0.0 - xhat) / (2 * sigma2);
  const double quant = beta * (0.5 * 1.0 + 0.5 * 1.0);
  const double expected = rec + quant - std::log(2.0);
  CHECK(lg.loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("full sqvae loss gradient passes the finite-difference check") {
  ModelParams p = tiny_model(3, 2, 4, 99);
  Rng data_rng(55);
  std::vector<std::vector<double>> batch;
  for (int i = 0; i < 8; ++i) {
    batch.push_back({data_rng.uniform(), data_rng.uniform(), data_rng.uniform()});
  }
  const auto noise = gumbel_noise(batch.size(), 4, 77);
  const double tau = 0.7;

  DifferentiableScalarFn f = [&](std::span<const double> flat, std::vector<double>* grad) {
    ModelParams q = p;
    q.from_flat(flat);
    const auto lg = sqvae_loss_with_noise(q, batch, tau, noise);
    if (grad) *grad = lg.grad;
    return lg.loss;
  };

  const auto point = p.to_flat();
  // all coordinates, including both log-variances
  CHECK(grad_check(f, point, 1e-5) <= 1e-4);
}

TEST_CASE("sqvae loss with the prior mix keeps exact gradients") {
  ModelParams p = tiny_model(2, 2, 3, 101);
  Rng data_rng(44);
  std::vector<std::vector<double>> batch;
  for (int i = 0; i < 4; ++i) batch.push_back({data_rng.uniform(), data_rng.uniform()});
  const auto noise = gumbel_noise(batch.size(), 3, 13);
  const PriorVector prior{0.5, 0.3, 0.2};

  DifferentiableScalarFn f = [&](std::span<const double> flat, std::vector<double>* grad) {
    ModelParams q = p;
    q.from_flat(flat);
    const auto lg = sqvae_loss_with_noise(q, batch, 0.9, noise, &prior, 0.5);
    if (grad) *grad = lg.grad;
    return lg.loss;
  };
  CHECK(grad_check(f, p.to_flat(), 1e-5) <= 1e-4);
}

TEST_CASE("sqvae loss decreases along its negative gradient") {
  ModelParams p = tiny_model(2, 2, 4, 7);
  Rng data_rng(21);
  std::vector<std::vector<double>> batch;
  for (int i = 0; i < 6; ++i) batch.push_back({data_rng.uniform(), data_rng.uniform()});
  const auto noise = gumbel_noise(batch.size(), 4, 5);

  const auto flat = p.to_flat();
  const auto lg = sqvae_loss_with_noise(p, batch, 0.8, noise);

  bool improved = false;
  double step = 1e-2;
  for (int tries = 0; tries < 30 && !improved; ++tries, step *= 0.5) {
    std::vector<double> moved = flat;
    for (std::size_t i = 0; i < moved.size(); ++i) moved[i] -= step * lg.grad[i];
    ModelParams q = p;
    q.from_flat(moved);
    const auto lg2 = sqvae_loss_with_noise(q, batch, 0.8, noise);
    improved = lg2.loss < lg.loss;
  }
  CHECK(improved);
}

TEST_CASE("vq loss straight-through decoder gradients match finite differences") {
  ModelParams p = tiny_model(2, 2, 3, 17);
  Rng data_rng(31);
  std::vector<std::vector<double>> batch;
  for (int i = 0; i < 5; ++i) batch.push_back({data_rng.uniform(), data_rng.uniform()});

  const auto blocks = p.blocks();
  const auto dec_block = blocks[1];
  std::vector<std::size_t> coords(dec_block.length);
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = dec_block.offset + i;

  DifferentiableScalarFn f = [&](std::span<const double> flat, std::vector<double>* grad) {
    ModelParams q = p;
    q.from_flat(flat);
    const auto lg = vq_loss(q, batch);
    if (grad) *grad = lg.grad;
    return lg.loss;
  };
  // theta only: the quantizer is bypassed on this path, so the analytic
  // gradient is exact there
  CHECK(grad_check(f, p.to_flat(), 1e-5, coords) <= 1e-4);
}

TEST_CASE("non-finite sqvae loss names the offending term") {
  ModelParams p = tiny_model(1, 1, 2, 23);
  p.log_sigma2 = -800.0;  // sigma^2 underflows to 0
  const std::vector<std::vector<double>> batch{{0.5}};
  const auto noise = gumbel_noise(1, 2, 1);
  CHECK_THROWS_WITH_AS(sqvae_loss_with_noise(p, batch, 1.0, noise),
                       doctest::Contains("reconstruction"), std::runtime_error);
}
