#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "geogan/fd_check.hpp"
#include "geogan/gan.hpp"
#include "geogan/synth.hpp"

using namespace geogan;
namespace fs = std::filesystem;

namespace {

GanConfig small_config() {
  GanConfig cfg;
  cfg.image_size = 32;
  cfg.base_width = 8;
  cfg.depth = 3;
  cfg.batch_size = 2;
  cfg.epochs = 2;
  cfg.seed = 11;
  return cfg;
}

std::vector<CityStack> small_dataset(int n, std::uint64_t base_seed, int size) {
  std::vector<CityStack> tiles;
  for (int i = 0; i < n; ++i) {
    SynthParams p;
    p.seed = base_seed + static_cast<std::uint64_t>(i);
    p.size = size;
    p.growth_steps = 300;
    p.water_mode = i % 2 == 0 ? WaterMode::Coast : WaterMode::River;
    tiles.push_back(normalize_layers(generate_city(p)));
  }
  return tiles;
}

}  // namespace

TEST_CASE("config invariants") {
  GanConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  GanConfig bad = cfg;
  bad.dropout_p = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.image_size = 48;  // not divisible by 2^depth... 48/8=6, divisible; use 44
  bad.image_size = 44;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.depth = 1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.alpha = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  GanConfig rt = GanConfig::from_json(cfg.to_json());
  CHECK(rt.to_json() == cfg.to_json());
}

TEST_CASE("generator: shape contract, eval determinism, dropout noise") {
  GanConfig cfg;
  cfg.image_size = 64;
  cfg.base_width = 8;
  cfg.depth = 4;
  ParamMap gp = init_generator_params(cfg, 3);

  Tensor<float> input({cfg.in_channels(), 64, 64});
  CounterRng rng(4);
  for (auto& v : input.vec()) v = static_cast<float>(rng.next_double());

  auto run = [&](NoiseSpec noise) {
    Tape<float> tape;
    BoundParams<float> bp = bind_params(tape, gp, false);
    Var<float> in = tape.constant(input);
    return generator_forward(tape, bp, cfg, in, noise).value();
  };

  Tensor<float> eval1 = run(NoiseSpec{});
  CHECK(eval1.shape() == std::vector<int>{1, 64, 64});
  for (float v : eval1.vec()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  Tensor<float> eval2 = run(NoiseSpec{});
  CHECK(eval1 == eval2);  // dropout disabled: identical passes

  Tensor<float> n1 = run(NoiseSpec{true, 5});
  Tensor<float> n2 = run(NoiseSpec{true, 6});
  CHECK(!(n1 == n2));  // noise present via dropout
  CHECK(run(NoiseSpec{true, 5}) == n1);  // same key reproduces
}

TEST_CASE("discriminator: logit grid, determinism, feature dimension") {
  GanConfig cfg;
  cfg.image_size = 64;
  cfg.base_width = 8;
  cfg.depth = 4;
  ParamMap dp = init_discriminator_params(cfg, 9);
  Tensor<float> input({cfg.disc_in_channels(), 64, 64});
  CounterRng rng(8);
  for (auto& v : input.vec()) v = static_cast<float>(rng.next_double());

  Tape<float> tape;
  BoundParams<float> bp = bind_params(tape, dp, false);
  DiscOutput<float> out = discriminator_forward(tape, bp, cfg, tape.constant(input));
  CHECK(out.logits.value().shape() == std::vector<int>{1, 8, 8});
  CHECK(out.features.value().dim(0) == cfg.feature_dim());

  Tape<float> tape2;
  BoundParams<float> bp2 = bind_params(tape2, dp, false);
  DiscOutput<float> out2 =
      discriminator_forward(tape2, bp2, cfg, tape2.constant(input));
  CHECK(out.logits.value() == out2.logits.value());
}

TEST_CASE("constraint_penalty: worked examples and properties") {
  SUBCASE("saturated case") {
    Layer fake({2, 2}, 1.0f), water({2, 2}, 1.0f);
    ConstraintResult r = constraint_penalty(fake, water, 100.0);
    CHECK(r.loss == doctest::Approx(100.0));
    CHECK(r.hard_overlap == doctest::Approx(1.0));
  }
  SUBCASE("no water, no penalty") {
    Layer fake({2, 2}, 1.0f), water({2, 2}, 0.0f);
    ConstraintResult r = constraint_penalty(fake, water, 100.0);
    CHECK(r.loss == 0.0);
    CHECK(r.hard_overlap == 0.0);
  }
  SUBCASE("0.5 on the single water pixel of a 4-pixel map") {
    Layer fake({2, 2}, 0.0f), water({2, 2}, 0.0f);
    fake[0] = 0.5f;
    water[0] = 1.0f;
    ConstraintResult r = constraint_penalty(fake, water, 100.0);
    CHECK(r.loss == doctest::Approx(12.5));
    CHECK(r.hard_overlap == 0.0);  // 0.5 is not above the binarization tau
  }
  SUBCASE("monotone in water mask") {
    CounterRng rng(3);
    Layer fake({8, 8});
    for (auto& v : fake.vec()) v = static_cast<float>(rng.next_double());
    Layer water({8, 8}, 0.0f);
    double prev = 0.0;
    for (int i = 0; i < 64; i += 3) {
      water[i] = 1.0f;
      double cur = constraint_penalty(fake, water, 100.0).loss;
      CHECK(cur >= prev - 1e-12);
      prev = cur;
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(
        constraint_penalty(Layer({2, 2}, 0.f), Layer({2, 3}, 0.f), 1.0),
        ValidationError);
  }
}

TEST_CASE("constraint gradient: exactly alpha * water / N, and FD agrees") {
  const int n = 16;
  CounterRng rng(7);
  Tensor<double> fake({1, 4, 4});
  for (auto& v : fake.vec()) v = rng.next_double();
  Tensor<double> water({1, 4, 4}, 0.0);
  water[1] = water[7] = water[9] = 1.0;
  const double alpha = 100.0;

  Tape<double> tape;
  Var<double> f = tape.leaf(fake, true);
  Var<double> loss = constraint_loss(f, water, alpha);
  tape.backward(loss);
  for (int i = 0; i < n; ++i)
    CHECK(f.node()->grad[i] == doctest::Approx(alpha * water[i] / n).epsilon(1e-12));

  auto build = [&](Tape<double>& t, const std::vector<Var<double>>& v) {
    return constraint_loss(v[0], water, alpha);
  };
  FdReport rep = finite_diff_check(build, {fake});
  CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("composite pieces: L1 zero at identity, BCE at zero logits, degenerate weights") {
  Tape<float> tape;
  Tensor<float> x({1, 4, 4});
  CounterRng rng(2);
  for (auto& v : x.vec()) v = static_cast<float>(rng.next_double());
  Var<float> a = tape.constant(x);
  Var<float> b = tape.constant(x);
  CHECK(l1_mean(a, b).value()[0] == 0.0f);

  Var<float> logits = tape.constant(Tensor<float>({1, 3, 3}, 0.0f));
  CHECK(bce_with_logits_mean(logits, 1.0).value()[0] ==
        doctest::Approx(std::log(2.0)));
  CHECK(bce_with_logits_mean(logits, 0.0).value()[0] ==
        doctest::Approx(std::log(2.0)));

  // lambda = alpha = 0 reduces the G objective to the pure cGAN term.
  Var<float> l_gan = bce_with_logits_mean(logits, 1.0);
  Var<float> l_l1 = l1_mean(a, b);
  Var<float> total = add(l_gan, scale(l_l1, 0.0));
  Var<float> constr = constraint_loss(a, Tensor<float>({1, 4, 4}, 1.0f), 0.0);
  total = add(total, constr);
  CHECK(total.value()[0] == l_gan.value()[0]);
}

TEST_CASE("training: overfit smoke, determinism, alpha-0 equivalence") {
  std::vector<CityStack> tiles = small_dataset(10, 3000, 32);

  SUBCASE("L1 strictly decreases per epoch with lambda large, alpha 0") {
    GanConfig cfg = small_config();
    cfg.lambda_l1 = 1000.0;
    cfg.alpha = 0.0;
    cfg.epochs = 5;
    std::vector<LossReport> log;
    train(tiles, cfg, {}, &log);
    const int steps_per_epoch = (10 + cfg.batch_size - 1) / cfg.batch_size;
    REQUIRE(log.size() == static_cast<std::size_t>(steps_per_epoch * 5));
    std::vector<double> epoch_l1(5, 0.0);
    for (std::size_t i = 0; i < log.size(); ++i)
      epoch_l1[i / static_cast<std::size_t>(steps_per_epoch)] += log[i].l_l1;
    for (int e = 1; e < 5; ++e) CHECK(epoch_l1[static_cast<std::size_t>(e)] <
                                      epoch_l1[static_cast<std::size_t>(e - 1)]);
  }
  SUBCASE("same seed twice gives identical loss streams") {
    GanConfig cfg = small_config();
    std::vector<LossReport> log1, log2;
    train(tiles, cfg, {}, &log1);
    train(tiles, cfg, {}, &log2);
    REQUIRE(log1.size() == log2.size());
    for (std::size_t i = 0; i < log1.size(); ++i) {
      CHECK(log1[i].l_cgan_d == log2[i].l_cgan_d);
      CHECK(log1[i].l_cgan_g == log2[i].l_cgan_g);
      CHECK(log1[i].l_l1 == log2[i].l_l1);
      CHECK(log1[i].l_constr == log2[i].l_constr);
    }
  }
  SUBCASE("threads=2 reproduces threads=1 exactly") {
    GanConfig cfg = small_config();
    cfg.epochs = 1;
    std::vector<LossReport> log1, log2;
    TrainOptions o1, o2;
    o1.threads = 1;
    o2.threads = 2;
    train(tiles, cfg, o1, &log1);
    train(tiles, cfg, o2, &log2);
    REQUIRE(log1.size() == log2.size());
    for (std::size_t i = 0; i < log1.size(); ++i)
      CHECK(log1[i].l_cgan_g == log2[i].l_cgan_g);
  }
  SUBCASE("alpha=0 equals a build without the constraint module") {
    GanConfig cfg = small_config();
    cfg.alpha = 0.0;
    cfg.epochs = 1;
    std::vector<LossReport> with_node, without_node;
    TrainOptions keep, drop;
    drop.disable_constraint_module = true;
    train(tiles, cfg, keep, &with_node);
    train(tiles, cfg, drop, &without_node);
    REQUIRE(with_node.size() == without_node.size());
    for (std::size_t i = 0; i < with_node.size(); ++i) {
      CHECK(with_node[i].l_cgan_d == without_node[i].l_cgan_d);
      CHECK(with_node[i].l_cgan_g == without_node[i].l_cgan_g);
      CHECK(with_node[i].l_l1 == without_node[i].l_l1);
    }
  }
  SUBCASE("empty dataset rejected") {
    CHECK_THROWS_AS(train({}, small_config(), {}, nullptr), ValidationError);
  }
  SUBCASE("raw (unnormalized) tiles rejected") {
    SynthParams p;
    p.seed = 1;
    p.size = 32;
    std::vector<CityStack> raw = {generate_city(p)};
    CHECK_THROWS_AS(train(raw, small_config(), {}, nullptr), StateError);
  }
}

TEST_CASE("trained model: generation contracts, checkpoint round trip, features") {
  std::vector<CityStack> tiles = small_dataset(12, 4000, 32);
  std::vector<CityStack> held = small_dataset(3, 9000, 32);
  GanConfig cfg = small_config();
  cfg.lambda_l1 = 200.0;
  cfg.epochs = 8;
  Checkpoint ck = train(tiles, cfg, {}, nullptr);

  SUBCASE("deterministic mode is reproducible; seeds vary samples") {
    Layer a = generate_map(ck, held[0]);
    Layer b = generate_map(ck, held[0]);
    CHECK(a == b);
    std::vector<Layer> samples = generate_samples(ck, held[0], 77, 5);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      for (float v : samples[i].vec()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
      for (std::size_t j = i + 1; j < samples.size(); ++j)
        CHECK(!(samples[i] == samples[j]));
    }
  }
  SUBCASE("beats the all-zeros predictor on held-out cities") {
    double gen_err = 0.0, zero_err = 0.0;
    for (const auto& city : held) {
      Layer fake = generate_map(ck, city);
      const Layer& real = city.layer(kLayerBld);
      for (std::int64_t i = 0; i < real.numel(); ++i) {
        gen_err += std::abs(fake[i] - real[i]);
        zero_err += std::abs(real[i]);
      }
    }
    CHECK(gen_err < zero_err);
  }
  SUBCASE("checkpoint round trip preserves outputs bit-exactly") {
    fs::path p = fs::temp_directory_path() / "geogan_gan_test.ckpt";
    save_checkpoint(ck, p.string());
    Checkpoint re = load_checkpoint(p.string());
    CHECK(re.config.to_json() == ck.config.to_json());
    CHECK(re.epoch == ck.epoch);
    CHECK(generate_map(re, held[1]) == generate_map(ck, held[1]));
    CHECK(re.adam_g.at("g.enc0.w").step == ck.adam_g.at("g.enc0.w").step);
  }
  SUBCASE("mode mismatch is rejected") {
    CityStack no_factors = held[0];
    no_factors.layers.erase(kLayerPop);
    CHECK_THROWS_AS(generate_map(ck, no_factors), ValidationError);
  }
  SUBCASE("phi: deterministic, documented length, copies are closer") {
    std::vector<float> f1 = extract_features(ck, held[0]);
    std::vector<float> f2 = extract_features(ck, held[0]);
    CHECK(f1 == f2);
    CHECK(f1.size() == static_cast<std::size_t>(cfg.feature_dim()));
    std::vector<float> g = extract_features(ck, held[2]);
    double same = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < f1.size(); ++i) {
      same += (f1[i] - f2[i]) * (f1[i] - f2[i]);
      diff += (f1[i] - g[i]) * (f1[i] - g[i]);
    }
    CHECK(same < diff);
  }
}
