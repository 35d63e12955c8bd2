// Copyright 2026 The compodiff authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "compodiff/compose.hpp"
#include "compodiff/metrics.hpp"
#include "compodiff/rng.hpp"

using namespace compodiff;

namespace {

DecompositionConfig tiny_config(int n_latents = 2, CompositionOperator op = CompositionOperator::kMean) {
  DecompositionConfig c;
  c.channels = 2;
  c.length = 16;
  c.n_latents = n_latents;
  c.latent_len = 8;
  c.enc_base = 4;
  c.unet_base = 4;
  c.emb_dim = 8;
  c.pe_frequencies = 4;
  c.groups = 2;
  c.op = op;
  c.seed = 77;
  return c;
}

std::vector<Tensor> toy_dataset(int n, Rng& rng) {
  // sinusoid plus a click at a random position, 2 channels of 16 samples
  std::vector<Tensor> out;
  for (int i = 0; i < n; ++i) {
    std::vector<double> v(32, 0.0);
    const double f = rng.uniform(1.0, 3.0);
    for (int t = 0; t < 16; ++t) v[static_cast<std::size_t>(t)] = std::sin(6.2831853 * f * t / 16.0);
    const int click = static_cast<int>(rng.uniform_int(0, 15));
    v[static_cast<std::size_t>(16 + click)] = 1.0;
    out.push_back(Tensor({2, 16}, std::move(v)));
  }
  return out;
}

}  // namespace

TEST_CASE("encode shape contract and determinism") {
  DecompositionConfig cfg;
  cfg.seed = 123;
  DecompositionModel model(cfg);  // default desk scale: 4x128, N=2, latent 64
  Rng rng(5);
  Tensor x = Tensor::randn({4, 128}, rng);
  LatentStack z = encode(model, x);
  REQUIRE(z.size() == 2);
  CHECK(z[0].shape() == Shape{1, 64});
  CHECK(z[1].shape() == Shape{1, 64});

  LatentStack z2 = encode(model, x);
  for (std::size_t i = 0; i < z.size(); ++i)
    for (std::int64_t k = 0; k < z[i].size(); ++k) REQUIRE(z[i].at(k) == z2[i].at(k));

  CHECK_THROWS_AS(encode(model, Tensor::zeros({4, 64})), std::invalid_argument);
}

TEST_CASE("encode golden values for a pinned seed") {
  DecompositionModel model(tiny_config());
  Rng rng(2718);
  Tensor x = Tensor::randn({2, 16}, rng);
  LatentStack z = encode(model, x);
  // frozen from the first verified run (model seed 77, input seed 2718)
  const std::vector<double> golden0 = {
      -0.11397050667304073, -0.042968826420441308, -0.10173230329659999,
      0.15197353280447007,  0.19123508674209672,   -0.10586264944479268,
      0.033047893103220108, -0.18822656724901565};
  const std::vector<double> golden1 = {
      0.081754932317800899,   0.017658425294560087, 0.15982508187544969,
      -0.0021735034246722212, -0.13402557914962551, -0.043842537918955898,
      0.15591653816539686,    0.01680088603271631};
  REQUIRE(z[0].size() == static_cast<std::int64_t>(golden0.size()));
  for (std::size_t i = 0; i < golden0.size(); ++i) {
    CHECK_THAT(z[0].at(static_cast<std::int64_t>(i)),
               Catch::Matchers::WithinAbs(golden0[i], 1e-9));
    CHECK_THAT(z[1].at(static_cast<std::int64_t>(i)),
               Catch::Matchers::WithinAbs(golden1[i], 1e-9));
  }
}

TEST_CASE("compose elementwise operators") {
  Tensor a({1, 2}, {1.0, 5.0});
  Tensor b({1, 2}, {3.0, 2.0});

  Tensor m = compose(CompositionOperator::kMean, {a, a});
  CHECK(m.at(0) == 1.0);
  CHECK(m.at(1) == 5.0);

  Tensor s = compose(CompositionOperator::kSum, {a, scale(a, -1.0)});
  CHECK(s.at(0) == 0.0);
  CHECK(s.at(1) == 0.0);

  Tensor mx = compose(CompositionOperator::kMax, {a, b});
  CHECK(mx.at(0) == 3.0);
  CHECK(mx.at(1) == 5.0);

  Tensor mn = compose(CompositionOperator::kMin, {a, b});
  CHECK(mn.at(0) == 1.0);
  CHECK(mn.at(1) == 2.0);

  CHECK_THROWS_AS(compose(CompositionOperator::kSum, {}), std::invalid_argument);
  CHECK_THROWS_AS(compose(CompositionOperator::kSum, {a, Tensor::zeros({1, 3})}),
                  std::invalid_argument);
}

TEST_CASE("compose is exactly permutation-invariant") {
  Rng rng(31);
  std::vector<Tensor> parts;
  for (int i = 0; i < 3; ++i) parts.push_back(Tensor::randn({2, 5}, rng));
  std::vector<std::vector<std::size_t>> perms = {{0, 1, 2}, {1, 0, 2}, {2, 1, 0},
                                                 {1, 2, 0}, {2, 0, 1}, {0, 2, 1}};
  for (auto op : {CompositionOperator::kSum, CompositionOperator::kMean,
                  CompositionOperator::kMin, CompositionOperator::kMax}) {
    Tensor ref = compose(op, parts);
    for (const auto& p : perms) {
      Tensor shuffled = compose(op, {parts[p[0]], parts[p[1]], parts[p[2]]});
      for (std::int64_t k = 0; k < ref.size(); ++k) REQUIRE(shuffled.at(k) == ref.at(k));
    }
  }
}

TEST_CASE("compose gradients for all four operators") {
  Rng rng(37);
  Tensor other1 = Tensor::randn({2, 4}, rng);
  Tensor other2 = Tensor::randn({2, 4}, rng);
  Tensor w = Tensor::randn({2, 4}, rng);
  for (auto op : {CompositionOperator::kSum, CompositionOperator::kMean,
                  CompositionOperator::kMin, CompositionOperator::kMax}) {
    auto fn = [&, op](const Tensor& x) { return sum(mul(compose(op, {x, other1, other2}), w)); };
    for (int trial = 0; trial < 5; ++trial) {
      Tensor point = Tensor::randn({2, 4}, rng);
      REQUIRE(grad_check(fn, point, 1e-5) < 1e-4);
    }
  }
}

TEST_CASE("oracle denoiser that always returns x gives zero decomposition loss") {
  Rng rng(41);
  Tensor x = Tensor::randn({2, 16}, rng);
  FunctionalDenoiser oracle([&](const Tensor&, double, const Tensor*) { return x; });
  LatentStack z = {Tensor::randn({1, 8}, rng), Tensor::randn({1, 8}, rng)};
  Rng lr(9);
  Tensor loss = decomposition_loss_parts(oracle, CompositionOperator::kMean, z, x, lr);
  CHECK(loss.item() == 0.0);
}

TEST_CASE("DiffAE reduction: N=1 with sum or mean equals conditional IADB loss bitwise") {
  for (auto op : {CompositionOperator::kMean, CompositionOperator::kSum}) {
    DecompositionModel model(tiny_config(1, op));
    Rng data_rng(4);
    Tensor x = Tensor::randn({2, 16}, data_rng);
    LatentStack z = encode(model, x);

    Rng ra(606), rb(606);
    const double via_decomp = decomposition_loss(model, x, ra).item();
    const double via_iadb = iadb_loss(*model.denoiser, x, &z[0], rb).item();
    REQUIRE(via_decomp == via_iadb);
  }
}

TEST_CASE("decomposition_loss replay oracle for N=2") {
  DecompositionModel model(tiny_config(2));
  Rng data_rng(12);
  Tensor x = Tensor::randn({2, 16}, data_rng);

  Rng ra(88);
  const double loss = decomposition_loss(model, x, ra).item();

  Rng rb(88);
  LatentStack z = encode(model, x);
  const double alpha = rb.uniform();
  Tensor x0 = Tensor::randn(x.shape(), rb);
  Tensor xa = lerp(x0, x, alpha);
  Tensor p0 = model.denoiser->forward(xa, alpha, &z[0]);
  Tensor p1 = model.denoiser->forward(xa, alpha, &z[1]);
  double expect = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double c = 0.5 * (p0.at(i) + p1.at(i));
    const double d = c - x.at(i);
    expect += d * d;
  }
  CHECK_THAT(loss, Catch::Matchers::WithinAbs(expect, 1e-12));
}

TEST_CASE("parameter sharing: one denoiser parameter set serves every latent") {
  DecompositionModel model(tiny_config(3));
  NamedParams p1, p2;
  model.denoiser->params("den", p1);
  model.denoiser->params("den", p2);
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) REQUIRE(p1[i].second.same_storage(p2[i].second));

  // same latent, same blend: branch outputs are identical tensors valuewise
  Rng rng(3);
  Tensor xa = Tensor::randn({2, 16}, rng);
  Tensor z = Tensor::randn({1, 8}, rng);
  Tensor o1 = model.denoiser->forward(xa, 0.3, &z);
  Tensor o2 = model.denoiser->forward(xa, 0.3, &z);
  for (std::int64_t i = 0; i < o1.size(); ++i) REQUIRE(o1.at(i) == o2.at(i));
}

TEST_CASE("gradient flows into every encoder and denoiser parameter") {
  DecompositionModel model(tiny_config(2));
  Rng rng(17);
  Tensor x = Tensor::randn({2, 16}, rng);
  Rng lr(29);
  Tensor loss = decomposition_loss(model, x, lr);
  loss.backward();
  std::size_t nonzero = 0, total = 0;
  for (const auto& [name, t] : model.params()) {
    for (std::int64_t i = 0; i < t.size(); ++i) {
      ++total;
      if (t.has_grad() && std::abs(t.grad()[static_cast<std::size_t>(i)]) > 0.0) ++nonzero;
    }
  }
  CHECK(static_cast<double>(nonzero) >= 0.99 * static_cast<double>(total));
}

TEST_CASE("train_decomposition bookkeeping, progress and determinism") {
  Rng data_rng(55);
  auto data1 = toy_dataset(1, data_rng);

  DecompositionModel single(tiny_config());
  TrainConfig one;
  one.epochs = 1;
  one.batch = 1;
  one.seed = 2;
  auto trace1 = train_decomposition(single, data1, one);
  REQUIRE(trace1.size() == 1);

  // 200 steps on a toy dataset must at least halve the loss
  Rng data_rng2(56);
  auto data = toy_dataset(8, data_rng2);
  DecompositionModel model(tiny_config());
  TrainConfig cfg;
  cfg.epochs = 25;  // 8 samples, batch 1 -> 200 steps
  cfg.batch = 1;
  cfg.lr = 3e-3;
  cfg.seed = 5;
  auto trace = train_decomposition(model, data, cfg);
  REQUIRE(trace.size() == 25);
  CHECK(trace.back() <= 0.5 * trace.front());

  // identical seeds give identical parameters
  DecompositionModel m1(tiny_config());
  DecompositionModel m2(tiny_config());
  TrainConfig short_cfg;
  short_cfg.epochs = 2;
  short_cfg.batch = 4;
  short_cfg.seed = 9;
  train_decomposition(m1, data, short_cfg);
  train_decomposition(m2, data, short_cfg);
  auto p1 = m1.params();
  auto p2 = m2.params();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i)
    for (std::int64_t k = 0; k < p1[i].second.size(); ++k)
      REQUIRE(p1[i].second.at(k) == p2[i].second.at(k));

  CHECK_THROWS_AS(train_decomposition(model, {}, cfg), std::invalid_argument);
}

TEST_CASE("training aborts with a diagnostic when the loss turns non-finite") {
  DecompositionModel model(tiny_config());
  std::vector<Tensor> bad = {Tensor::full({2, 16}, std::nan(""))};
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 1;
  CHECK_THROWS_WITH(train_decomposition(model, bad, cfg),
                    Catch::Matchers::ContainsSubstring("diverged"));
}

TEST_CASE("decode_component with one step is the prediction at alpha zero") {
  DecompositionModel model(tiny_config());
  Rng rng(61);
  Tensor z = Tensor::randn({1, 8}, rng);
  Tensor x0 = Tensor::randn({2, 16}, rng);
  Tensor one_step = decode_component(model, z, x0, 1);
  NoGradGuard ng;
  Tensor direct = model.denoiser->forward(x0, 0.0, &z);
  for (std::int64_t i = 0; i < one_step.size(); ++i) REQUIRE(one_step.at(i) == direct.at(i));
}

TEST_CASE("separate draws one shared base sample and is deterministic") {
  DecompositionModel model(tiny_config(2));
  Rng rng(71);
  Tensor x = Tensor::randn({2, 16}, rng);

  auto est = separate(model, x, 4, 999);
  REQUIRE(est.size() == 2);

  // manual recomputation with the documented draw order
  NoGradGuard ng;
  LatentStack z = encode(model, x);
  Rng seed_rng(999);
  Tensor x0 = Tensor::randn(x.shape(), seed_rng);
  for (std::size_t i = 0; i < z.size(); ++i) {
    Tensor manual = decode_component(model, z[i], x0, 4);
    for (std::int64_t k = 0; k < manual.size(); ++k) REQUIRE(est[i].at(k) == manual.at(k));
  }

  auto est2 = separate(model, x, 4, 999);
  for (std::size_t i = 0; i < est.size(); ++i)
    for (std::int64_t k = 0; k < est[i].size(); ++k) REQUIRE(est[i].at(k) == est2[i].at(k));
}

TEST_CASE("separate with N=1 equals reconstruct") {
  for (auto op : {CompositionOperator::kMean, CompositionOperator::kSum}) {
    DecompositionModel model(tiny_config(1, op));
    Rng rng(81);
    Tensor x = Tensor::randn({2, 16}, rng);
    auto est = separate(model, x, 3, 5);
    REQUIRE(est.size() == 1);
    Tensor rec = reconstruct(model, x, 3, 5);
    for (std::int64_t k = 0; k < rec.size(); ++k) REQUIRE(est[0].at(k) == rec.at(k));
  }
}

TEST_CASE("reconstruct composes the separated estimates") {
  DecompositionModel model(tiny_config(2));
  Rng rng(91);
  Tensor x = Tensor::randn({2, 16}, rng);
  Tensor rec = reconstruct(model, x, 4, 31);
  auto est = separate(model, x, 4, 31);
  Tensor expect = compose(model.cfg.op, est);
  for (std::int64_t k = 0; k < rec.size(); ++k) REQUIRE(rec.at(k) == expect.at(k));
  CHECK(std::isfinite(mse(x, rec)));
}
