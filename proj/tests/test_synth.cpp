#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "geogan/stats.hpp"
#include "geogan/synth.hpp"

using namespace geogan;
namespace fs = std::filesystem;

namespace {
fs::path tmp_dir(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / "geogan_synth_test" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}
}  // namespace

TEST_CASE("generate_city: determinism and basic contracts") {
  SynthParams p;
  p.seed = 42;
  p.size = 64;
  CityStack a = generate_city(p);
  CityStack b = generate_city(p);
  CHECK(a == b);  // bit-exact for identical params

  p.seed = 43;
  CityStack c = generate_city(p);
  CHECK(!(a == c));

  a.validate();
  CHECK(a.width == 64);
  CHECK(a.has(kLayerBoundary));
}

TEST_CASE("generate_city: nucleation-only and degenerate params") {
  SynthParams p;
  p.seed = 7;
  p.size = 32;
  p.n_seeds = 3;
  p.growth_steps = 0;
  p.water_mode = WaterMode::None;
  CityStack s = generate_city(p);
  int nonzero = 0;
  for (float v : s.layer(kLayerBld).vec())
    if (v != 0.0f) ++nonzero;
  CHECK(nonzero == 3);  // exactly the nuclei

  for (float v : s.layer(kLayerWater).vec()) CHECK(v == 0.0f);

  SynthParams bad = p;
  bad.n_seeds = 0;
  bad.growth_steps = 10;
  CHECK_THROWS_AS(generate_city(bad), ValidationError);
  bad.growth_steps = 0;
  CHECK_NOTHROW(generate_city(bad));  // zero nuclei, zero growth: empty city

  SynthParams small = p;
  small.size = 8;
  CHECK_THROWS_AS(generate_city(small), ValidationError);
}

TEST_CASE("generated cities: built stays off water, stats are learnable") {
  int heavy_tail_ok = 0;
  double mean_r = 0.0;
  const int n_cities = 100;
  for (int i = 0; i < n_cities; ++i) {
    SynthParams p;
    p.seed = 1000 + static_cast<std::uint64_t>(i);
    p.size = 64;
    p.water_mode = static_cast<WaterMode>(i % 4);
    CityStack s = generate_city(p);

    const Layer& bld = s.layer(kLayerBld);
    const Layer& water = s.layer(kLayerWater);
    for (std::int64_t j = 0; j < bld.numel(); ++j)
      CHECK(bld[j] * water[j] == 0.0f);  // constraint-consistent ground truth

    PatchLabeling lab = label_patches(bld, 0.5, 4);
    if (lab.num_patches() >= 1) {
      auto sizes = lab.sizes_desc();
      std::int64_t median = sizes[sizes.size() / 2];
      if (sizes.front() >= 5 * median) ++heavy_tail_ok;
    }

    // Pearson r between pop and bld
    const Layer& pop = s.layer(kLayerPop);
    double mp = 0, mb = 0;
    for (std::int64_t j = 0; j < bld.numel(); ++j) {
      mp += pop[j];
      mb += bld[j];
    }
    mp /= static_cast<double>(bld.numel());
    mb /= static_cast<double>(bld.numel());
    double spb = 0, spp = 0, sbb = 0;
    for (std::int64_t j = 0; j < bld.numel(); ++j) {
      double dp = pop[j] - mp, db = bld[j] - mb;
      spb += dp * db;
      spp += dp * dp;
      sbb += db * db;
    }
    mean_r += spb / std::sqrt(spp * sbb);
  }
  mean_r /= n_cities;
  CHECK(mean_r > 0.3);                      // regression task is learnable
  CHECK(heavy_tail_ok >= n_cities * 3 / 4);  // heavy-tailed patch sizes
}

TEST_CASE("generate_dataset: split rule, determinism, manifest") {
  SynthParams proto;
  proto.size = 32;
  proto.growth_steps = 200;

  SUBCASE("n=10 gives 9 train / 1 test by the hash-rank rule") {
    fs::path dir = tmp_dir("n10");
    DatasetLayout lay = generate_dataset(10, 500, proto, dir.string());
    int train = 0, test = 0;
    for (const auto& e : lay.entries)
      (e.split == "train" ? train : test) += 1;
    CHECK(train == 9);
    CHECK(test == 1);
    CHECK(fs::exists(lay.manifest_path));
    auto entries = read_manifest(lay.manifest_path);
    REQUIRE(entries.size() == 10);
    for (const auto& e : entries)
      CHECK(fs::exists(manifest_tile_path(lay.manifest_path, e)));
  }
  SUBCASE("n=1 assigned by the same rule (train)") {
    fs::path dir = tmp_dir("n1");
    DatasetLayout lay = generate_dataset(1, 500, proto, dir.string());
    REQUIRE(lay.entries.size() == 1);
    CHECK(lay.entries[0].split == "train");
  }
  SUBCASE("rerun is byte-identical") {
    fs::path d1 = tmp_dir("rr1"), d2 = tmp_dir("rr2");
    generate_dataset(6, 900, proto, d1.string());
    generate_dataset(6, 900, proto, d2.string());
    for (const auto& f : fs::directory_iterator(d1 / "tiles")) {
      std::ifstream a(f.path(), std::ios::binary);
      std::ifstream b(d2 / "tiles" / f.path().filename(), std::ios::binary);
      std::string sa((std::istreambuf_iterator<char>(a)),
                     std::istreambuf_iterator<char>());
      std::string sb((std::istreambuf_iterator<char>(b)),
                     std::istreambuf_iterator<char>());
      CHECK(sa == sb);
    }
  }
  SUBCASE("n=0 rejected") {
    CHECK_THROWS_AS(generate_dataset(0, 1, proto, tmp_dir("n0").string()),
                    ValidationError);
  }
}
