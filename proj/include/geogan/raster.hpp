#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geogan/tensor.hpp"

namespace geogan {

// Canonical city layer ids. Tile files may carry other ids (e.g. gradient
// exports use g_pop/g_lum/roi); CityStack accepts only the city set.
inline constexpr const char* kLayerPop = "pop";
inline constexpr const char* kLayerLum = "lum";
inline constexpr const char* kLayerBld = "bld";
inline constexpr const char* kLayerWater = "water";
inline constexpr const char* kLayerBoundary = "boundary";

inline constexpr double kLumRawCap = 180.0;     // raw luminosity scale top
inline constexpr double kDefaultPopCap = 50000.0;  // persons/px for log scaling

// One named raster plane.
struct TileLayer {
  std::string id;
  Layer grid;  // shape {H,W}
};

// Tile file contents without city-schema validation. Layer order is the
// declared file order and is preserved on write.
struct RawTile {
  int version = 1;
  int width = 0;
  int height = 0;
  double km_per_px = 0.0;
  std::string city_id;
  std::vector<TileLayer> layers;
  std::map<std::string, bool> normalized;
  std::map<std::string, double> norm_params;

  const Layer* find(const std::string& id) const;
};

// File format: "CSTK" magic, u32-LE byte length of the JSON header text
// (newline included), one line of JSON, then the planes as raw little-endian
// f32, row-major, in declared order.
RawTile read_raw_tile(const std::string& path);
void write_raw_tile(const RawTile& tile, const std::string& path);

// Aligned multi-layer city tile. Immutable by convention after construction;
// all operations below return new values.
struct CityStack {
  int width = 0;
  int height = 0;
  double km_per_px = 0.0;
  std::string city_id;
  std::map<std::string, Layer> layers;
  std::map<std::string, bool> normalized;  // per layer; absent == false
  double pop_cap = kDefaultPopCap;

  bool has(const std::string& id) const { return layers.count(id) != 0; }
  const Layer& layer(const std::string& id) const;
  bool is_normalized(const std::string& id) const;
  double window_km() const { return km_per_px * width; }

  // Throws ValidationError when any invariant fails: matching layer shapes,
  // binary masks, layer value ranges, positive finite km_per_px.
  void validate() const;

  static CityStack from_raw(const RawTile& raw);
  RawTile to_raw() const;

  bool operator==(const CityStack& o) const;
};

CityStack load_tile(const std::string& path);
void save_tile(const CityStack& stack, const std::string& path);

struct NormalizeOptions {
  double pop_cap = kDefaultPopCap;
};

// Log-rescales pop and lum into [0,1]: v' = log(1+v)/log(1+cap), clipped.
// bld stays as-is; masks untouched. Re-normalizing is a StateError.
CityStack normalize_layers(const CityStack& stack, const NormalizeOptions& opts = {});

// layer * (1 - water): zero wherever water is set.
Layer apply_water_mask(const Layer& layer, const Layer& water);

struct ResampleOptions {
  bool allow_upsample = false;
};

// Resamples every layer to size x size: area-weighted averaging for
// continuous layers, max-pooling for binary ones. km_per_px is rescaled so
// the physical window width is preserved.
CityStack resample(const CityStack& stack, int size, const ResampleOptions& opts = {});

struct ChannelMap {
  std::optional<std::string> red;
  std::optional<std::string> green = std::string(kLayerPop);
  std::optional<std::string> blue = std::string(kLayerBld);
  bool water_white = true;
  bool shade_outside_boundary = false;  // dims pixels with boundary == 0
};

// 8-bit RGB PNG. Mapped layers are linearly scaled [0,1] -> [0,255]
// (round half up); water pixels render white.
void export_png(const CityStack& stack, const std::string& path,
                const ChannelMap& map = {});

}  // namespace geogan
