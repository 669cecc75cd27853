#include <doctest.h>

#include "stylecond/discriminator.hpp"
#include "stylecond/errors.hpp"
#include "test_support.hpp"

using namespace stylecond;
using stylecond::testing::random_tensor;

namespace {

Discriminator tiny_critic(bool conditional, std::uint64_t seed, bool concat = false) {
  Rng rng(seed);
  DiscriminatorConfig c = testing::tiny_discriminator_config(testing::tiny_generator_config(conditional));
  c.concat_condition = concat;
  return Discriminator(c, rng);
}

/// Central-difference estimate of ||d sum D / dx_n||^2 averaged over the batch.
double fd_r1(const std::function<torch::Tensor(const torch::Tensor&)>& critic, const torch::Tensor& real,
             double gamma, double h = 1e-6) {
  torch::NoGradGuard guard;
  auto x = real.clone();
  auto flat = x.view({-1});
  double total = 0;
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i] = orig + h;
    const double up = critic(x).sum().item<double>();
    flat[i] = orig - h;
    const double down = critic(x).sum().item<double>();
    flat[i] = orig;
    const double g = (up - down) / (2 * h);
    total += g * g;
  }
  return 0.5 * gamma * total / static_cast<double>(real.size(0));
}

}  // namespace

TEST_CASE("minibatch stddev shapes and group fallback") {
  Rng rng(1);
  auto x = random_tensor(rng, {8, 4, 4, 3});
  auto y = minibatch_stddev(x, 4);
  CHECK(y.sizes() == torch::IntArrayRef({8, 5, 4, 3}));
  CHECK(torch::equal(y.slice(1, 0, 4), x));
  auto odd = minibatch_stddev(random_tensor(rng, {6, 4, 4, 3}), 4);
  CHECK(odd.sizes() == torch::IntArrayRef({6, 5, 4, 3}));
  auto same = minibatch_stddev(torch::ones({4, 2, 4, 3}), 4);
  CHECK(same.slice(1, 2, 3).max().item<float>() < 1e-3f);
}

TEST_CASE("unconditional score determinism, finiteness and zero head") {
  torch::NoGradGuard guard;
  auto d = tiny_critic(false, 2);
  Rng rng(3);
  auto img = random_tensor(rng, {4, 3, 4, 3});
  auto a = d->forward(img);
  CHECK(a.sizes() == torch::IntArrayRef({4}));
  CHECK(torch::equal(a, d->forward(img)));
  CHECK(torch::isfinite(d->forward(random_tensor(rng, {4, 3, 4, 3}) * 100)).all().item<bool>());
  d->head_layer()->weight.zero_();
  d->head_layer()->bias.zero_();
  CHECK(torch::equal(d->forward(random_tensor(rng, {4, 3, 4, 3})), torch::zeros({4})));
  CHECK_THROWS_AS(d->forward(random_tensor(rng, {4, 3, 8, 6})), ValidationError);
}

TEST_CASE("projection score combination") {
  torch::NoGradGuard guard;
  auto d = tiny_critic(true, 4);
  Rng rng(5);
  auto img = random_tensor(rng, {2, 3, 4, 3});
  auto c1 = random_tensor(rng, {2, 34, 4, 3});
  auto c2 = random_tensor(rng, {2, 34, 4, 3});
  auto l1 = d->forward(img, c1);
  CHECK(torch::equal(l1, d->forward(img, c1)));
  CHECK_FALSE(torch::equal(l1, d->forward(img, c2)));
  auto phi = d->features(img);
  auto psi = d->condition_embedding(c1);
  auto manual = d->head(phi) + (phi * d->projection()->forward(psi)).sum(1) / std::sqrt(16.0);
  CHECK(torch::allclose(l1, manual, 1e-5, 1e-6));

  d->projection()->weight.zero_();
  auto base = d->head(d->features(img));
  CHECK(torch::equal(d->forward(img, c1), base));
  CHECK(torch::equal(d->forward(img, c2), base));
  CHECK_THROWS_AS(d->forward(img), ValidationError);
  CHECK_THROWS_AS(d->forward(img, random_tensor(rng, {2, 34, 8, 6})), ValidationError);
}

TEST_CASE("concat-at-input critic") {
  torch::NoGradGuard guard;
  auto d = tiny_critic(true, 6, true);
  Rng rng(7);
  auto img = random_tensor(rng, {2, 3, 4, 3});
  auto a = d->forward(img, random_tensor(rng, {2, 34, 4, 3}));
  CHECK(a.sizes() == torch::IntArrayRef({2}));
  CHECK(torch::isfinite(a).all().item<bool>());
  CHECK_THROWS_AS(d->condition_embedding(random_tensor(rng, {2, 34, 4, 3})), ValidationError);
}

TEST_CASE("R1 on a linear critic") {
  auto critic = [](const torch::Tensor& x) { return 2.0 * x.flatten(1).sum(1); };
  auto real = torch::zeros({3, 1});
  CHECK(r1_penalty(critic, real, 10.0).item<double>() == doctest::Approx(20.0));
  CHECK(r1_penalty(critic, real, 0.0).item<double>() == 0.0);
  CHECK_THROWS_AS(r1_penalty(critic, real, -1.0), ValidationError);
}

TEST_CASE("R1 is zero at gamma 0, linear in gamma and non-negative") {
  auto d = tiny_critic(false, 8);
  Rng rng(9);
  auto real = random_tensor(rng, {4, 3, 4, 3});
  CHECK(r1_penalty(d, real, std::nullopt, 0.0).item<double>() == 0.0);
  const double p = r1_penalty(d, real, std::nullopt, 5.0).item<double>();
  const double p2 = r1_penalty(d, real, std::nullopt, 10.0).item<double>();
  CHECK(p >= 0.0);
  CHECK(p2 == 2.0 * p);
}

TEST_CASE("R1 matches finite differences on a tiny critic") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto d = tiny_critic(true, 100 + seed);
    d->to(torch::kDouble);
    Rng rng(seed);
    auto real = random_tensor(rng, {4, 3, 4, 3}, torch::kDouble);
    auto cond = random_tensor(rng, {4, 34, 4, 3}, torch::kDouble);
    auto critic = [&](const torch::Tensor& x) { return d->forward(x, cond); };
    const double analytic = r1_penalty(critic, real, 10.0).item<double>();
    const double numeric = fd_r1(critic, real, 10.0);
    CHECK(std::abs(analytic - numeric) / numeric < 1e-3);
  }
}

TEST_CASE("R1 gradient with respect to critic weights") {
  auto d = tiny_critic(false, 11);
  d->to(torch::kDouble);
  Rng rng(12);
  auto real = random_tensor(rng, {4, 3, 4, 3}, torch::kDouble);
  auto f = [&] { return r1_penalty(d, real, std::nullopt, 10.0); };
  for (auto& p : d->named_parameters()) {
    CAPTURE(p.key());
    CHECK(testing::fd_gradient_error(f, p.value(), 12) < 1e-3);
  }
}

TEST_CASE("critic gradients match finite differences") {
  auto d = tiny_critic(true, 13);
  d->to(torch::kDouble);
  Rng rng(14);
  auto img = random_tensor(rng, {4, 3, 4, 3}, torch::kDouble);
  auto cond = random_tensor(rng, {4, 34, 4, 3}, torch::kDouble);
  auto r = random_tensor(rng, {4}, torch::kDouble);
  auto f = [&] { return (d->forward(img, cond) * r).sum(); };
  for (auto& p : d->named_parameters()) {
    CAPTURE(p.key());
    CHECK(testing::fd_gradient_error(f, p.value()) < 1e-3);
  }
}

TEST_CASE("discriminator config json round trip") {
  DiscriminatorConfig c;
  c.conditional = true;
  c.concat_condition = true;
  c.embed_widths = {8, 16};
  CHECK(discriminator_config_from_json(discriminator_config_to_json(c)) == c);
}
