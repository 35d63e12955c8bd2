// Copyright 2026 The compodiff authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "compodiff/prior.hpp"
#include "compodiff/rng.hpp"

using namespace compodiff;

namespace {

PriorConfig tiny_prior(int n = 2, int latent_len = 8) {
  PriorConfig c;
  c.n_latents = n;
  c.latent_len = latent_len;
  c.base_channels = 4;
  c.emb_dim = 8;
  c.pe_frequencies = 4;
  c.groups = 2;
  c.seed = 91;
  return c;
}

}  // namespace

TEST_CASE("make_mask endpoints and empirical rate") {
  Rng rng(1);
  Mask all = make_mask(4, 1.0, rng);
  for (auto b : all.bits) CHECK(b == 1);
  Mask none = make_mask(4, 0.0, rng);
  for (auto b : none.bits) CHECK(b == 0);

  // law of large numbers at p = 0.8 (the trained configuration)
  const int draws = 10000;
  int on = 0;
  for (int i = 0; i < draws; ++i) {
    Mask m = make_mask(1, 0.8, rng);
    on += m.bits[0];
  }
  const double rate = static_cast<double>(on) / draws;
  CHECK(std::abs(rate - 0.8) < 0.02);

  CHECK_THROWS_AS(make_mask(2, 1.5, rng), std::invalid_argument);
}

TEST_CASE("masked_blend endpoint identities are bitwise") {
  Rng rng(3);
  Tensor z = Tensor::randn({3, 8}, rng);
  Tensor z0 = Tensor::randn({3, 8}, rng);

  // m = 0: output is z untouched
  Tensor out0 = masked_blend(z, z0, 0.37, Mask::zeros(3));
  for (std::int64_t i = 0; i < z.size(); ++i) REQUIRE(out0.at(i) == z.at(i));

  // m = 1, alpha = 1: blend endpoint equals z
  Tensor out1 = masked_blend(z, z0, 1.0, Mask::ones(3));
  for (std::int64_t i = 0; i < z.size(); ++i) REQUIRE(out1.at(i) == z.at(i));

  // m = 1, any alpha: exactly the two-term blend
  const double alpha = 0.41;
  Tensor outb = masked_blend(z, z0, alpha, Mask::ones(3));
  for (std::int64_t i = 0; i < z.size(); ++i)
    REQUIRE(outb.at(i) == (1.0 - alpha) * z0.at(i) + alpha * z.at(i));

  CHECK_THROWS_AS(masked_blend(z, Tensor::zeros({3, 9}), 0.5, Mask::ones(3)),
                  std::invalid_argument);
  CHECK_THROWS_AS(masked_blend(z, z0, 0.5, Mask::ones(2)), std::invalid_argument);
}

TEST_CASE("masked_blend hand-computed mixed case") {
  // two latents of length 2, alpha = 0.25, only the first latent masked
  Tensor z({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor z0({2, 2}, {-4.0, 8.0, 0.5, 0.5});
  Mask m{{1, 0}};
  Tensor out = masked_blend(z, z0, 0.25, m);
  CHECK_THAT(out.at(0), Catch::Matchers::WithinAbs(0.75 * -4.0 + 0.25 * 1.0, 1e-15));  // -2.75
  CHECK_THAT(out.at(1), Catch::Matchers::WithinAbs(0.75 * 8.0 + 0.25 * 2.0, 1e-15));   // 6.5
  CHECK(out.at(2) == 3.0);
  CHECK(out.at(3) == 4.0);
}

TEST_CASE("masked_blend is differentiable in both tensors") {
  Rng rng(7);
  Mask m{{1, 0, 1}};
  Tensor w = Tensor::randn({3, 4}, rng);
  Tensor zc = Tensor::randn({3, 4}, rng);
  Tensor z0c = Tensor::randn({3, 4}, rng);
  auto f_z = [&](const Tensor& z) { return sum(mul(masked_blend(z, z0c, 0.3, m), w)); };
  auto f_z0 = [&](const Tensor& z0) { return sum(mul(masked_blend(zc, z0, 0.3, m), w)); };
  for (int t = 0; t < 5; ++t) {
    CHECK(grad_check(f_z, Tensor::randn({3, 4}, rng), 1e-5) < 1e-4);
    CHECK(grad_check(f_z0, Tensor::randn({3, 4}, rng), 1e-5) < 1e-4);
  }
}

TEST_CASE("prior_loss oracles and replay") {
  Rng rng(11);
  Tensor z = Tensor::randn({2, 8}, rng);

  FunctionalDenoiser perfect([&](const Tensor&, double, const Tensor*) { return z; });
  Rng r1(21);
  CHECK(prior_loss_core(perfect, z, r1, 0.8).item() == 0.0);

  FunctionalDenoiser zero(
      [](const Tensor& za, double, const Tensor*) { return Tensor::zeros(za.shape()); });
  Rng r2(21);
  double e = 0.0;
  for (std::int64_t i = 0; i < z.size(); ++i) e += z.at(i) * z.at(i);
  CHECK_THAT(prior_loss_core(zero, z, r2, 0.8).item(), Catch::Matchers::WithinAbs(e, 1e-12));

  // replay against the written-out recipe: alpha, z0, mask, blend, predict
  PriorModel model(tiny_prior());
  Rng ra(33);
  const double loss = prior_loss(model, z, ra, 0.8).item();
  Rng rb(33);
  const double alpha = rb.uniform();
  Tensor z0 = Tensor::randn(z.shape(), rb);
  Mask m = make_mask(2, 0.8, rb);
  Tensor za = masked_blend(z, z0, alpha, m);
  Tensor pred = model.forward(za, alpha, m);
  double expect = 0.0;
  for (std::int64_t i = 0; i < z.size(); ++i) {
    const double d = pred.at(i) - z.at(i);
    expect += d * d;
  }
  CHECK_THAT(loss, Catch::Matchers::WithinAbs(expect, 1e-12));
}

TEST_CASE("prior network conditions on the mask") {
  PriorModel model(tiny_prior());
  Rng rng(13);
  Tensor za = Tensor::randn({2, 8}, rng);
  NoGradGuard ng;
  Tensor with_mask = model.forward(za, 0.5, Mask{{1, 0}});
  Tensor other_mask = model.forward(za, 0.5, Mask{{1, 1}});
  double diff = 0.0;
  for (std::int64_t i = 0; i < with_mask.size(); ++i)
    diff += std::abs(with_mask.at(i) - other_mask.at(i));
  CHECK(diff > 0.0);
}

TEST_CASE("train_prior learns a coupled toy distribution and is deterministic") {
  // latents whose second row is a deterministic function of the first
  Rng data_rng(17);
  std::vector<Tensor> stacks;
  for (int i = 0; i < 8; ++i) {
    std::vector<double> v(16);
    for (int k = 0; k < 8; ++k) {
      const double a = data_rng.uniform(-1.0, 1.0);
      v[static_cast<std::size_t>(k)] = a;
      v[static_cast<std::size_t>(8 + k)] = 0.5 * a;
    }
    stacks.push_back(Tensor({2, 8}, std::move(v)));
  }

  PriorModel model(tiny_prior());
  TrainConfig cfg;
  cfg.epochs = 25;  // 8 samples, batch 1 -> 200 steps
  cfg.batch = 1;
  cfg.lr = 3e-3;
  cfg.seed = 19;
  auto trace = train_prior(model, stacks, cfg);
  REQUIRE(trace.size() == 25);
  CHECK(trace.back() <= 0.5 * trace.front());

  PriorModel m1(tiny_prior()), m2(tiny_prior());
  TrainConfig short_cfg;
  short_cfg.epochs = 2;
  short_cfg.batch = 2;
  short_cfg.seed = 23;
  train_prior(m1, stacks, short_cfg);
  train_prior(m2, stacks, short_cfg);
  auto p1 = m1.params();
  auto p2 = m2.params();
  for (std::size_t i = 0; i < p1.size(); ++i)
    for (std::int64_t k = 0; k < p1[i].second.size(); ++k)
      REQUIRE(p1[i].second.at(k) == p2[i].second.at(k));
}

TEST_CASE("train_prior aborts on non-finite loss") {
  PriorModel model(tiny_prior());
  std::vector<Tensor> bad = {Tensor::full({2, 8}, std::nan(""))};
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 1;
  CHECK_THROWS_WITH(train_prior(model, bad, cfg), Catch::Matchers::ContainsSubstring("diverged"));
}

TEST_CASE("generate with an all-zero mask returns the known stack bitwise") {
  PriorModel model(tiny_prior());
  Rng rng(29);
  LatentStack known = {Tensor::randn({1, 8}, rng), Tensor::randn({1, 8}, rng)};
  LatentStack out = generate(model, std::make_pair(known, Mask::zeros(2)), 6, 31);
  REQUIRE(out.size() == 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::int64_t k = 0; k < 8; ++k) REQUIRE(out[i].at(k) == known[i].at(k));
}

TEST_CASE("generate clamps kept latents bit-exactly and is deterministic") {
  PriorModel model(tiny_prior());
  Rng rng(37);
  LatentStack known = {Tensor::randn({1, 8}, rng), Tensor::randn({1, 8}, rng)};
  Mask m{{0, 1}};  // keep latent 0, generate latent 1
  LatentStack a = generate(model, std::make_pair(known, m), 8, 55);
  LatentStack b = generate(model, std::make_pair(known, m), 8, 55);
  for (std::int64_t k = 0; k < 8; ++k) {
    REQUIRE(a[0].at(k) == known[0].at(k));  // kept row exact
    REQUIRE(a[1].at(k) == b[1].at(k));      // deterministic generation
  }
  // generated row must not be the initial noise untouched
  Rng noise(55);
  Tensor x0 = Tensor::randn({2, 8}, noise);
  double diff = 0.0;
  for (std::int64_t k = 0; k < 8; ++k) diff += std::abs(a[1].at(k) - x0.at(1, k));
  CHECK(diff > 1e-6);

  CHECK_THROWS_AS(generate(model, std::make_pair(known, m), 0, 55), std::invalid_argument);
}

TEST_CASE("unconditional generate needs no known stack") {
  PriorModel model(tiny_prior());
  LatentStack out = generate(model, std::nullopt, 6, 77);
  REQUIRE(out.size() == 2);
  for (const Tensor& t : out) {
    REQUIRE(t.shape() == Shape{1, 8});
    for (std::int64_t k = 0; k < t.size(); ++k) REQUIRE(std::isfinite(t.at(k)));
  }
}

TEST_CASE("generate clamping holds at every intermediate step") {
  // a denoiser that returns garbage in the kept rows; clamping must erase it
  PriorConfig cfg = tiny_prior();
  FunctionalDenoiser wild([](const Tensor& za, double, const Tensor*) {
    return add_scalar(scale(za, -3.0), 17.0);
  });
  Rng rng(41);
  LatentStack known = {Tensor::randn({1, 8}, rng), Tensor::randn({1, 8}, rng)};
  Mask m{{0, 1}};
  LatentStack out = generate_core(wild, 2, 8, std::make_pair(known, m), 16, 3);
  for (std::int64_t k = 0; k < 8; ++k) REQUIRE(out[0].at(k) == known[0].at(k));
}
