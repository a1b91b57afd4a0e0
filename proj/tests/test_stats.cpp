#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "geogan/rng.hpp"
#include "geogan/stats.hpp"
#include "support/oracles.hpp"

using namespace geogan;

TEST_CASE("label_patches: adjacency definitions") {
  Layer m({3, 3}, 0.0f);
  m.at(0, 0) = 1.0f;
  m.at(1, 1) = 1.0f;
  CHECK(label_patches(m, 0.5, 4).num_patches() == 2);
  CHECK(label_patches(m, 0.5, 8).num_patches() == 1);

  Layer full({4, 5}, 1.0f);
  PatchLabeling lab = label_patches(full, 0.5, 4);
  CHECK(lab.num_patches() == 1);
  CHECK(lab.size_by_label[0] == 20);

  CHECK_THROWS_AS(label_patches(full, 0.5, 6), ValidationError);
}

TEST_CASE("label_patches equals flood-fill oracle on 1000 random grids") {
  CounterRng rng(8);
  for (int t = 0; t < 1000; ++t) {
    Layer m({16, 16});
    for (int i = 0; i < 256; ++i)
      m[i] = rng.next_double() < 0.45 ? 1.0f : 0.0f;
    for (int conn : {4, 8}) {
      PatchLabeling lab = label_patches(m, 0.5, conn);
      Tensor<std::int32_t> ref = oracle::flood_fill_label(m, 0.5, conn);
      REQUIRE(lab.labels == ref);
    }
  }
}

TEST_CASE("built_area_fraction: endpoints and linearity") {
  Layer z({4, 4}, 0.0f), o({4, 4}, 1.0f);
  CHECK(built_area_fraction(z) == 0.0);
  CHECK(built_area_fraction(o) == 1.0);
  Layer half({4, 4}, 0.0f);
  for (int i = 0; i < 8; ++i) half[i] = 1.0f;
  CHECK(built_area_fraction(half) == doctest::Approx(0.5));

  CounterRng rng(9);
  Layer m({8, 8});
  for (auto& v : m.vec()) v = static_cast<float>(rng.next_double());
  double a1 = built_area_fraction(m);
  Layer scaled = m;
  for (auto& v : scaled.vec()) v *= 0.5f;
  CHECK(built_area_fraction(scaled) == doctest::Approx(0.5 * a1).epsilon(1e-5));

  CHECK_THROWS_AS(built_area_fraction(Layer({0, 0})), ValidationError);
}

TEST_CASE("patch_size_distribution: binning rule and top-k") {
  SUBCASE("single patch of size 1") {
    Layer m({4, 4}, 0.0f);
    m.at(1, 1) = 1.0f;
    PatchHistogram h = patch_size_distribution(label_patches(m));
    REQUIRE(h.counts.size() == 1);
    CHECK(h.bin_lo[0] == 1);
    CHECK(h.counts[0] == 1);
  }
  SUBCASE("sizes {1,1,2,4} -> [1,2):2 [2,4):1 [4,8):1") {
    // construct patches of exactly those sizes, separated
    Layer m({8, 8}, 0.0f);
    m.at(0, 0) = 1.0f;
    m.at(0, 7) = 1.0f;
    m.at(3, 0) = m.at(3, 1) = 1.0f;
    m.at(6, 4) = m.at(6, 5) = m.at(7, 4) = m.at(7, 5) = 1.0f;
    PatchHistogram h = patch_size_distribution(label_patches(m));
    REQUIRE(h.counts.size() == 3);
    CHECK(h.counts[0] == 2);
    CHECK(h.counts[1] == 1);
    CHECK(h.counts[2] == 1);
  }
  SUBCASE("k larger than patch count returns all masks") {
    Layer m({4, 4}, 0.0f);
    m.at(0, 0) = 1.0f;
    m.at(3, 3) = 1.0f;
    PatchLabeling lab = label_patches(m);
    CHECK(top_patch_masks(lab, 20).size() == 2);
  }
  SUBCASE("no patches -> empty histogram, not an error") {
    Layer m({4, 4}, 0.0f);
    PatchHistogram h = patch_size_distribution(label_patches(m));
    CHECK(h.counts.empty());
  }
}

TEST_CASE("fractal_dimension fixtures") {
  SUBCASE("filled square is plane-filling: f = 2") {
    Layer full({256, 256}, 1.0f);
    FractalResult r = fractal_dimension(full);
    CHECK(std::abs(r.f - 2.0) <= 0.02);
  }
  SUBCASE("horizontal line: f = 1") {
    Layer line({256, 256}, 0.0f);
    for (int c = 0; c < 256; ++c) line.at(128, c) = 1.0f;
    FractalResult r = fractal_dimension(line);
    CHECK(std::abs(r.f - 1.0) <= 0.05);
  }
  SUBCASE("sierpinski 512: f within 0.08 of log3/log2") {
    Layer s = oracle::sierpinski(512);
    FractalResult r = fractal_dimension(s);
    CHECK(std::abs(r.f - std::log(3.0) / std::log(2.0)) <= 0.08);
  }
  SUBCASE("toroidal translation moves f by < 0.05") {
    Layer s = oracle::sierpinski(256);
    FractalResult base = fractal_dimension(s);
    Layer shifted({256, 256}, 0.0f);
    for (int r = 0; r < 256; ++r)
      for (int c = 0; c < 256; ++c)
        if (s.at(r, c) > 0.5f)
          shifted.at((r + 37) % 256, (c + 91) % 256) = 1.0f;
    FractalResult moved = fractal_dimension(shifted);
    CHECK(std::abs(base.f - moved.f) < 0.05);
  }
  SUBCASE("monotonicity: adding pixels never lowers any box count") {
    CounterRng rng(12);
    Layer m({64, 64}, 0.0f);
    for (auto& v : m.vec()) v = rng.next_double() < 0.1 ? 1.0f : 0.0f;
    FractalResult before = fractal_dimension(m);
    Layer more = m;
    for (auto& v : more.vec())
      if (v == 0.0f && rng.next_double() < 0.1) v = 1.0f;
    FractalResult after = fractal_dimension(more);
    REQUIRE(after.scale_points.size() >= before.scale_points.size());
    // compare matching scales (same log box size)
    for (const auto& [ls, ln] : before.scale_points) {
      for (const auto& [ls2, ln2] : after.scale_points)
        if (ls2 == ls) CHECK(ln2 >= ln - 1e-12);
    }
  }
  SUBCASE("degenerate map: fewer than 3 usable scales") {
    Layer empty({64, 64}, 0.0f);
    CHECK_THROWS_AS(fractal_dimension(empty), ValidationError);
  }
}

TEST_CASE("pearson_r2: exact cases, independence, affine invariance") {
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) {
    x.push_back(i * 0.3 - 2.0);
    y.push_back(2.0 * (i * 0.3 - 2.0) + 3.0);
  }
  CHECK(pearson_r2(x, y) == doctest::Approx(1.0));
  CHECK(pearson_r2(x, x) == doctest::Approx(1.0));

  CounterRng rng(77);
  std::vector<double> u(1000), v(1000);
  for (int i = 0; i < 1000; ++i) {
    u[static_cast<std::size_t>(i)] = rng.next_double();
    v[static_cast<std::size_t>(i)] = rng.next_double();
  }
  CHECK(pearson_r2(u, v) < 0.05);  // independent draws

  std::vector<double> v2 = v;
  for (auto& e : v2) e = 5.0 * e + 11.0;
  CHECK(pearson_r2(u, v2) == doctest::Approx(pearson_r2(u, v)).epsilon(1e-9));

  std::vector<double> constv(10, 3.0), lin(10);
  for (int i = 0; i < 10; ++i) lin[static_cast<std::size_t>(i)] = i;
  CHECK_THROWS_AS(pearson_r2(lin, constv), NumericError);
  CHECK_THROWS_AS(pearson_r2(std::vector<double>{1, 2}, std::vector<double>{1, 2}),
                  ValidationError);
}

TEST_CASE("compare_stats: identity, degenerate, pairing") {
  std::vector<StatsRecord> real, gen;
  CounterRng rng(5);
  for (int i = 0; i < 6; ++i) {
    StatsRecord r;
    r.city_id = "c" + std::to_string(i);
    r.source = "real";
    r.a = 0.1 + 0.1 * i;
    r.f = 1.0 + 0.05 * i + 0.01 * rng.next_double();
    real.push_back(r);
    StatsRecord g = r;
    g.source = "generated";
    gen.push_back(g);
  }
  StatsComparison cmp = compare_stats(real, gen);
  CHECK(cmp.r2_a == doctest::Approx(1.0));
  CHECK(cmp.r2_f == doctest::Approx(1.0));
  CHECK(cmp.pairs.size() == 6);

  SUBCASE("constant generated axis raises zero-variance error") {
    for (auto& g : gen) {
      g.a = 0.5;
      g.f = 1.5;
    }
    CHECK_THROWS_AS(compare_stats(real, gen), NumericError);
  }
  SUBCASE("unpaired cities dropped; under 3 pairs is an error") {
    std::vector<StatsRecord> few(gen.begin(), gen.begin() + 2);
    CHECK_THROWS_AS(compare_stats(real, few), ValidationError);
  }
}
