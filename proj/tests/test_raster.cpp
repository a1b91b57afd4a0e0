#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "geogan/raster.hpp"
#include "geogan/rng.hpp"

using namespace geogan;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  fs::path p = fs::temp_directory_path() / "geogan_raster_test";
  fs::create_directories(p);
  return p;
}

CityStack random_stack(CounterRng& rng, int size) {
  CityStack s;
  s.width = size;
  s.height = size;
  s.km_per_px = 0.5 + rng.next_double() * 3.0;
  s.city_id = "t-" + std::to_string(rng.next_u64() % 100000);
  Layer pop({size, size}), lum({size, size}), bld({size, size}),
      water({size, size}), boundary({size, size});
  for (std::int64_t i = 0; i < pop.numel(); ++i) {
    pop[i] = static_cast<float>(rng.next_double() * 4000.0);
    lum[i] = static_cast<float>(rng.next_double() * 180.0);
    bld[i] = static_cast<float>(rng.next_double());
    water[i] = rng.next_double() < 0.2 ? 1.0f : 0.0f;
    boundary[i] = rng.next_double() < 0.5 ? 1.0f : 0.0f;
  }
  // built never overlaps water in well-formed inputs
  for (std::int64_t i = 0; i < bld.numel(); ++i)
    if (water[i] == 1.0f) bld[i] = 0.0f;
  s.layers[kLayerPop] = pop;
  s.layers[kLayerLum] = lum;
  s.layers[kLayerBld] = bld;
  s.layers[kLayerWater] = water;
  s.layers[kLayerBoundary] = boundary;
  s.validate();
  return s;
}

// Minimal reader for the PNGs this project writes (filter 0, 8-bit RGB).
struct PngPixels {
  int w = 0, h = 0;
  std::vector<std::uint8_t> rgb;
  std::array<std::uint8_t, 3> at(int r, int c) const {
    std::size_t o = (static_cast<std::size_t>(r) * w + c) * 3;
    return {rgb[o], rgb[o + 1], rgb[o + 2]};
  }
};

PngPixels read_png(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  auto be32 = [&](std::size_t o) {
    return (bytes[o] << 24) | (bytes[o + 1] << 16) | (bytes[o + 2] << 8) |
           bytes[o + 3];
  };
  PngPixels out;
  std::vector<std::uint8_t> idat;
  std::size_t p = 8;
  while (p + 8 <= bytes.size()) {
    std::uint32_t len = be32(p);
    std::string type(reinterpret_cast<const char*>(&bytes[p + 4]), 4);
    if (type == "IHDR") {
      out.w = static_cast<int>(be32(p + 8));
      out.h = static_cast<int>(be32(p + 12));
    } else if (type == "IDAT") {
      idat.insert(idat.end(), bytes.begin() + p + 8, bytes.begin() + p + 8 + len);
    }
    p += 12 + len;
  }
  uLongf raw_len = static_cast<uLongf>(out.h) * (1 + 3 * out.w);
  std::vector<std::uint8_t> raw(raw_len);
  REQUIRE(uncompress(raw.data(), &raw_len, idat.data(),
                     static_cast<uLong>(idat.size())) == Z_OK);
  out.rgb.resize(static_cast<std::size_t>(out.w) * out.h * 3);
  for (int r = 0; r < out.h; ++r) {
    REQUIRE(raw[static_cast<std::size_t>(r) * (1 + 3 * out.w)] == 0);
    std::memcpy(&out.rgb[static_cast<std::size_t>(r) * out.w * 3],
                &raw[static_cast<std::size_t>(r) * (1 + 3 * out.w) + 1],
                static_cast<std::size_t>(3) * out.w);
  }
  return out;
}

}  // namespace

TEST_CASE("tile round trip is exact (property over random stacks)") {
  CounterRng rng(2024);
  for (int i = 0; i < 25; ++i) {
    int size = 16 + static_cast<int>(rng.next_below(4)) * 8;
    CityStack s = random_stack(rng, size);
    fs::path p = tmp_dir() / ("rt" + std::to_string(i) + ".tile");
    save_tile(s, p.string());
    CityStack r = load_tile(p.string());
    CHECK(r == s);
  }
}

TEST_CASE("tile format arithmetic: header bytes + 5 planes") {
  CounterRng rng(5);
  CityStack s = random_stack(rng, 64);
  fs::path p = tmp_dir() / "size.tile";
  save_tile(s, p.string());
  std::ifstream is(p.string(), std::ios::binary);
  char magic[4];
  is.read(magic, 4);
  CHECK(std::memcmp(magic, "CSTK", 4) == 0);
  std::uint32_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 4);
  is.seekg(0, std::ios::end);
  CHECK(static_cast<std::uint64_t>(is.tellg()) == 8 + len + 5ull * 64 * 64 * 4);
}

TEST_CASE("tile load rejects bad inputs") {
  CounterRng rng(6);
  CityStack s = random_stack(rng, 16);
  fs::path good = tmp_dir() / "good.tile";
  save_tile(s, good.string());

  SUBCASE("non-binary water is a validation error") {
    CityStack bad = s;
    bad.layers[kLayerWater][3] = 0.5f;
    fs::path p = tmp_dir() / "badwater.tile";
    write_raw_tile(bad.to_raw(), p.string());  // bypass save-side validation
    CHECK_THROWS_AS(load_tile(p.string()), ValidationError);
  }
  SUBCASE("unsupported version is a format error") {
    RawTile raw = s.to_raw();
    raw.version = 99;
    fs::path p = tmp_dir() / "badver.tile";
    write_raw_tile(raw, p.string());
    CHECK_THROWS_AS(load_tile(p.string()), FormatError);
  }
  SUBCASE("truncated payload is a format error") {
    std::ifstream is(good.string(), std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                            std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() - 100);
    fs::path p = tmp_dir() / "trunc.tile";
    std::ofstream os(p.string(), std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    os.close();
    CHECK_THROWS_AS(load_tile(p.string()), FormatError);
  }
  SUBCASE("corrupt JSON header is a format error") {
    std::ifstream is(good.string(), std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                            std::istreambuf_iterator<char>());
    bytes[10] = '{';  // break the JSON text
    fs::path p = tmp_dir() / "badjson.tile";
    std::ofstream os(p.string(), std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    os.close();
    CHECK_THROWS_AS(load_tile(p.string()), FormatError);
  }
  SUBCASE("unknown layer id is rejected for city stacks") {
    RawTile raw = s.to_raw();
    raw.layers[0].id = "mystery";
    fs::path p = tmp_dir() / "unknown.tile";
    write_raw_tile(raw, p.string());
    CHECK_THROWS_AS(load_tile(p.string()), ValidationError);
  }
  SUBCASE("missing file is an io error") {
    CHECK_THROWS_AS(load_tile((tmp_dir() / "nope.tile").string()), IoError);
  }
  SUBCASE("empty layer map cannot be saved") {
    CityStack empty;
    empty.width = empty.height = 16;
    empty.km_per_px = 1.0;
    CHECK_THROWS_AS(save_tile(empty, (tmp_dir() / "e.tile").string()),
                    ValidationError);
  }
  SUBCASE("overwrite replaces content") {
    CityStack s2 = random_stack(rng, 16);
    save_tile(s2, good.string());
    CHECK(load_tile(good.string()) == s2);
  }
}

TEST_CASE("normalize_layers: endpoints, derived midpoint, re-entry guard") {
  CityStack s;
  s.width = s.height = 16;
  s.km_per_px = 1.0;
  s.city_id = "n";
  Layer pop({16, 16}), lum({16, 16});
  pop.fill(0.0f);
  lum.fill(0.0f);
  pop[0] = 5000.0f;  // cap/2 with cap 10000
  lum[1] = 180.0f;
  s.layers[kLayerPop] = pop;
  s.layers[kLayerLum] = lum;

  NormalizeOptions opts;
  opts.pop_cap = 10000.0;
  CityStack n = normalize_layers(s, opts);
  CHECK(n.layer(kLayerLum)[0] == 0.0f);  // log1p(0) == 0
  CHECK(n.layer(kLayerLum)[1] == doctest::Approx(1.0));
  // log(5001)/log(10001) evaluated at high precision
  CHECK(n.layer(kLayerPop)[0] == doctest::Approx(0.92475417).epsilon(1e-6));
  CHECK(n.is_normalized(kLayerPop));
  CHECK(n.is_normalized(kLayerLum));
  CHECK_THROWS_AS(normalize_layers(n, opts), StateError);
}

TEST_CASE("apply_water_mask pointwise contract") {
  Layer layer({2, 2}, std::vector<float>{1.f, 2.f, 3.f, 4.f});
  Layer none({2, 2}, 0.0f);
  Layer all({2, 2}, 1.0f);
  CHECK(apply_water_mask(layer, none) == layer);
  Layer zeroed = apply_water_mask(layer, all);
  for (int i = 0; i < 4; ++i) CHECK(zeroed[i] == 0.0f);

  Layer one({2, 2}, 0.0f);
  one.at(1, 0) = 1.0f;
  Layer masked = apply_water_mask(layer, one);
  CHECK(masked.at(1, 0) == 0.0f);
  CHECK(masked.at(0, 0) == 1.0f);
  CHECK(masked.at(0, 1) == 2.0f);
  CHECK(masked.at(1, 1) == 4.0f);

  Layer bad({3, 2}, 0.0f);
  CHECK_THROWS_AS(apply_water_mask(layer, bad), ValidationError);

  // property: output <= input, exactly 0 under water
  CounterRng rng(31);
  for (int t = 0; t < 20; ++t) {
    Layer l({8, 8}), w({8, 8});
    for (int i = 0; i < 64; ++i) {
      l[i] = static_cast<float>(rng.next_double());
      w[i] = rng.next_double() < 0.3 ? 1.0f : 0.0f;
    }
    Layer m = apply_water_mask(l, w);
    for (int i = 0; i < 64; ++i) {
      CHECK(m[i] <= l[i]);
      if (w[i] == 1.0f) CHECK(m[i] == 0.0f);
    }
  }
}

TEST_CASE("resample: identity, constants, binary max rule, window preserved") {
  CounterRng rng(77);
  CityStack s = random_stack(rng, 32);

  CityStack same = resample(s, 32);
  CHECK(same == s);

  CityStack down = resample(s, 16);
  CHECK(down.width == 16);
  CHECK(down.km_per_px * down.width == doctest::Approx(s.km_per_px * s.width));

  // constant continuous layer stays constant
  CityStack c = s;
  c.layers[kLayerBld].fill(0.25f);
  CityStack cd = resample(c, 16);
  for (float v : cd.layer(kLayerBld).vec()) CHECK(v == doctest::Approx(0.25f));

  // binary max rule: single set pixel covers its quadrant
  CityStack tiny;
  tiny.width = tiny.height = 16;
  tiny.km_per_px = 2.0;
  tiny.city_id = "q";
  Layer water({16, 16}, 0.0f);
  water.at(3, 12) = 1.0f;  // quadrant (0,1) after 2x downsample to 8
  tiny.layers[kLayerWater] = water;
  tiny.layers[kLayerBld] = Layer({16, 16}, 0.0f);
  CityStack td = resample(tiny, 8);
  CHECK(td.layer(kLayerWater).at(1, 6) == 1.0f);
  double total = 0;
  for (float v : td.layer(kLayerWater).vec()) total += v;
  CHECK(total == 1.0);

  CHECK_THROWS_AS(resample(s, 4), ValidationError);   // below minimum
  CHECK_THROWS_AS(resample(s, 64), ValidationError);  // upsample disabled
  ResampleOptions up;
  up.allow_upsample = true;
  CHECK(resample(s, 64, up).width == 64);
}

TEST_CASE("png export: channel mapping, water white, rounding") {
  CityStack s;
  s.width = s.height = 8;
  s.km_per_px = 1.0;
  s.city_id = "png";
  Layer pop({8, 8}, 0.0f), bld({8, 8}, 1.0f), water({8, 8}, 0.0f);
  pop.at(0, 0) = 0.5f;
  water.at(7, 7) = 1.0f;
  s.layers[kLayerPop] = pop;
  s.layers[kLayerBld] = bld;
  s.layers[kLayerWater] = water;
  s.normalized[kLayerPop] = true;  // treat as unit scale for export

  fs::path p = tmp_dir() / "x.png";
  export_png(s, p.string());
  PngPixels img = read_png(p.string());
  REQUIRE(img.w == 8);
  auto blue = img.at(3, 3);
  CHECK(blue[0] == 0);
  CHECK(blue[1] == 0);
  CHECK(blue[2] == 255);
  auto mixed = img.at(0, 0);
  CHECK(mixed[1] == 128);  // 0.5 -> round half up -> 128
  auto white = img.at(7, 7);
  CHECK(white[0] == 255);
  CHECK(white[1] == 255);
  CHECK(white[2] == 255);

  ChannelMap bad;
  bad.green = std::string("nope");
  CHECK_THROWS_AS(export_png(s, p.string(), bad), ValidationError);
}
