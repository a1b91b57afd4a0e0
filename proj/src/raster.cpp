#include "geogan/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "geogan/png_io.hpp"
#include "json.hpp"

namespace geogan {

using nlohmann::json;

namespace {

constexpr char kTileMagic[4] = {'C', 'S', 'T', 'K'};
constexpr int kTileVersion = 1;

const std::array<const char*, 5> kCityLayerOrder = {
    kLayerPop, kLayerLum, kLayerBld, kLayerWater, kLayerBoundary};

bool is_city_layer(const std::string& id) {
  return std::find(kCityLayerOrder.begin(), kCityLayerOrder.end(), id) !=
         kCityLayerOrder.end();
}

bool is_binary_layer_id(const std::string& id) {
  return id == kLayerWater || id == kLayerBoundary;
}

bool grid_is_binary(const Layer& g) {
  for (float v : g.vec())
    if (v != 0.0f && v != 1.0f) return false;
  return true;
}

void write_f32_le(std::ofstream& os, const float* p, std::size_t n) {
  static_assert(sizeof(float) == 4);
  // Little-endian hosts only; format is defined little-endian.
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 4));
}

}  // namespace

const Layer* RawTile::find(const std::string& id) const {
  for (const auto& l : layers)
    if (l.id == id) return &l.grid;
  return nullptr;
}

void write_raw_tile(const RawTile& tile, const std::string& path) {
  if (tile.layers.empty())
    throw ValidationError("tile: refusing to write empty layer map");
  if (tile.width <= 0 || tile.height <= 0)
    throw ValidationError("tile: non-positive dimensions");
  for (const auto& l : tile.layers) {
    if (l.grid.ndim() != 2 || l.grid.dim(0) != tile.height || l.grid.dim(1) != tile.width)
      throw ValidationError("tile: layer '" + l.id + "' shape mismatch");
  }

  json header;
  header["version"] = tile.version;
  header["width"] = tile.width;
  header["height"] = tile.height;
  header["km_per_px"] = tile.km_per_px;
  header["city_id"] = tile.city_id;
  json layers = json::array();
  for (const auto& l : tile.layers) layers.push_back({{"id", l.id}, {"dtype", "f32"}});
  header["layers"] = layers;
  header["normalized"] = tile.normalized;
  if (!tile.norm_params.empty()) header["norm_params"] = tile.norm_params;

  std::string text = header.dump();
  text.push_back('\n');

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("tile: cannot open for write: " + path);
  os.write(kTileMagic, 4);
  std::uint32_t len = static_cast<std::uint32_t>(text.size());
  char len_le[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                    static_cast<char>((len >> 16) & 0xff),
                    static_cast<char>((len >> 24) & 0xff)};
  os.write(len_le, 4);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& l : tile.layers)
    write_f32_le(os, l.grid.data(), static_cast<std::size_t>(l.grid.numel()));
  if (!os) throw IoError("tile: write failed: " + path);
}

RawTile read_raw_tile(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("tile: cannot open: " + path);

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kTileMagic, 4) != 0)
    throw FormatError("tile: bad magic in " + path);

  char len_le[4];
  is.read(len_le, 4);
  if (!is) throw FormatError("tile: truncated header length in " + path);
  std::uint32_t len = static_cast<std::uint8_t>(len_le[0]) |
                      (static_cast<std::uint8_t>(len_le[1]) << 8) |
                      (static_cast<std::uint8_t>(len_le[2]) << 16) |
                      (static_cast<std::uint8_t>(len_le[3]) << 24);
  if (len == 0 || len > (1u << 20))
    throw FormatError("tile: implausible header length in " + path);

  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw FormatError("tile: truncated header in " + path);

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("tile: corrupt JSON header in " + path + ": " + e.what());
  }

  RawTile tile;
  try {
    tile.version = header.at("version").get<int>();
    if (tile.version != kTileVersion)
      throw FormatError("tile: unsupported format version " +
                        std::to_string(tile.version) + " in " + path);
    tile.width = header.at("width").get<int>();
    tile.height = header.at("height").get<int>();
    tile.km_per_px = header.at("km_per_px").get<double>();
    tile.city_id = header.at("city_id").get<std::string>();
    if (header.contains("normalized"))
      tile.normalized = header["normalized"].get<std::map<std::string, bool>>();
    if (header.contains("norm_params"))
      tile.norm_params = header["norm_params"].get<std::map<std::string, double>>();
    for (const auto& l : header.at("layers")) {
      std::string id = l.at("id").get<std::string>();
      std::string dtype = l.at("dtype").get<std::string>();
      if (dtype != "f32")
        throw FormatError("tile: unsupported dtype '" + dtype + "' in " + path);
      tile.layers.push_back({id, Layer()});
    }
  } catch (const json::exception& e) {
    throw FormatError("tile: malformed header in " + path + ": " + e.what());
  }
  if (tile.width <= 0 || tile.height <= 0)
    throw FormatError("tile: non-positive dimensions in " + path);
  if (tile.layers.empty()) throw FormatError("tile: no layers declared in " + path);

  std::size_t plane = static_cast<std::size_t>(tile.width) * tile.height;
  for (auto& l : tile.layers) {
    l.grid.reset({tile.height, tile.width});
    is.read(reinterpret_cast<char*>(l.grid.data()),
            static_cast<std::streamsize>(plane * 4));
    if (static_cast<std::size_t>(is.gcount()) != plane * 4)
      throw FormatError("tile: truncated payload for layer '" + l.id + "' in " + path);
  }
  // Trailing bytes indicate a writer/reader disagreement.
  char extra;
  if (is.read(&extra, 1))
    throw FormatError("tile: trailing bytes after declared layers in " + path);
  return tile;
}

const Layer& CityStack::layer(const std::string& id) const {
  auto it = layers.find(id);
  if (it == layers.end())
    throw ValidationError("stack: missing layer '" + id + "'");
  return it->second;
}

bool CityStack::is_normalized(const std::string& id) const {
  auto it = normalized.find(id);
  return it != normalized.end() && it->second;
}

void CityStack::validate() const {
  if (layers.empty()) throw ValidationError("stack: empty layer map");
  if (!(km_per_px > 0.0) || !std::isfinite(km_per_px))
    throw ValidationError("stack: km_per_px must be positive and finite");
  if (width <= 0 || height <= 0)
    throw ValidationError("stack: non-positive dimensions");
  for (const auto& [id, grid] : layers) {
    if (!is_city_layer(id))
      throw ValidationError("stack: unknown layer id '" + id + "'");
    if (grid.ndim() != 2 || grid.dim(0) != height || grid.dim(1) != width)
      throw ValidationError("stack: layer '" + id + "' shape mismatch");
    if (!grid.all_finite())
      throw ValidationError("stack: layer '" + id + "' has non-finite values");
    if (is_binary_layer_id(id) && !grid_is_binary(grid))
      throw ValidationError("stack: layer '" + id + "' must be binary");
  }
  if (has(kLayerBld)) {
    for (float v : layer(kLayerBld).vec())
      if (v < 0.0f || v > 1.0f)
        throw ValidationError("stack: bld values outside [0,1]");
  }
  if (has(kLayerPop)) {
    double cap = is_normalized(kLayerPop) ? 1.0 : std::numeric_limits<double>::infinity();
    for (float v : layer(kLayerPop).vec())
      if (v < 0.0f || v > cap)
        throw ValidationError("stack: pop values out of range");
  }
  if (has(kLayerLum)) {
    double cap = is_normalized(kLayerLum) ? 1.0 : kLumRawCap;
    for (float v : layer(kLayerLum).vec())
      if (v < 0.0f || v > cap)
        throw ValidationError("stack: lum values out of range");
  }
}

CityStack CityStack::from_raw(const RawTile& raw) {
  CityStack s;
  s.width = raw.width;
  s.height = raw.height;
  s.km_per_px = raw.km_per_px;
  s.city_id = raw.city_id;
  s.normalized = raw.normalized;
  for (const auto& l : raw.layers) {
    if (!is_city_layer(l.id))
      throw ValidationError("stack: unknown layer id '" + l.id + "'");
    if (s.layers.count(l.id))
      throw ValidationError("stack: duplicate layer id '" + l.id + "'");
    s.layers.emplace(l.id, l.grid);
  }
  auto it = raw.norm_params.find("pop_cap");
  if (it != raw.norm_params.end()) s.pop_cap = it->second;
  s.validate();
  return s;
}

RawTile CityStack::to_raw() const {
  RawTile raw;
  raw.version = kTileVersion;
  raw.width = width;
  raw.height = height;
  raw.km_per_px = km_per_px;
  raw.city_id = city_id;
  raw.normalized = normalized;
  if (is_normalized(kLayerPop)) {
    raw.norm_params["pop_cap"] = pop_cap;
    raw.norm_params["lum_cap"] = kLumRawCap;
  }
  for (const char* id : kCityLayerOrder) {
    auto it = layers.find(id);
    if (it != layers.end()) raw.layers.push_back({it->first, it->second});
  }
  return raw;
}

bool CityStack::operator==(const CityStack& o) const {
  return width == o.width && height == o.height && km_per_px == o.km_per_px &&
         city_id == o.city_id && layers == o.layers && normalized == o.normalized;
}

CityStack load_tile(const std::string& path) {
  return CityStack::from_raw(read_raw_tile(path));
}

void save_tile(const CityStack& stack, const std::string& path) {
  stack.validate();
  write_raw_tile(stack.to_raw(), path);
}

CityStack normalize_layers(const CityStack& stack, const NormalizeOptions& opts) {
  if (!(opts.pop_cap > 0.0))
    throw ValidationError("normalize: pop_cap must be positive");
  CityStack out = stack;
  out.pop_cap = opts.pop_cap;

  auto log_scale = [](Layer& g, double cap) {
    const double denom = std::log1p(cap);
    for (float& v : g.vec()) {
      double y = std::log1p(static_cast<double>(v)) / denom;
      v = static_cast<float>(std::clamp(y, 0.0, 1.0));
    }
  };

  for (const char* id : {kLayerPop, kLayerLum}) {
    if (!out.has(id)) continue;
    if (out.is_normalized(id))
      throw StateError(std::string("normalize: layer '") + id +
                       "' is already normalized");
    log_scale(out.layers.at(id), id == std::string(kLayerPop) ? opts.pop_cap
                                                              : kLumRawCap);
    out.normalized[id] = true;
  }
  if (out.has(kLayerBld)) out.normalized[kLayerBld] = true;  // already unit scale
  out.validate();
  return out;
}

Layer apply_water_mask(const Layer& layer, const Layer& water) {
  if (!layer.same_shape(water))
    throw ValidationError("water mask: shape mismatch");
  Layer out = layer;
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] *= (1.0f - water[i]);
  return out;
}

namespace {

// Area-overlap resampling of one row-major plane. Each output cell averages
// the source cells it covers, weighted by overlap area.
Layer resample_area(const Layer& src, int out_h, int out_w) {
  int in_h = src.dim(0), in_w = src.dim(1);
  Layer out({out_h, out_w});
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (int r = 0; r < out_h; ++r) {
    double y0 = r * sy, y1 = (r + 1) * sy;
    int ry0 = static_cast<int>(std::floor(y0));
    int ry1 = std::min(in_h, static_cast<int>(std::ceil(y1)));
    for (int c = 0; c < out_w; ++c) {
      double x0 = c * sx, x1 = (c + 1) * sx;
      int cx0 = static_cast<int>(std::floor(x0));
      int cx1 = std::min(in_w, static_cast<int>(std::ceil(x1)));
      double acc = 0.0, wsum = 0.0;
      for (int i = ry0; i < ry1; ++i) {
        double wy = std::min<double>(i + 1, y1) - std::max<double>(i, y0);
        if (wy <= 0) continue;
        for (int j = cx0; j < cx1; ++j) {
          double wx = std::min<double>(j + 1, x1) - std::max<double>(j, x0);
          if (wx <= 0) continue;
          acc += wy * wx * src.at(i, j);
          wsum += wy * wx;
        }
      }
      out.at(r, c) = static_cast<float>(wsum > 0 ? acc / wsum : 0.0);
    }
  }
  return out;
}

// Max over covered source cells; keeps "any water present" semantics.
Layer resample_max(const Layer& src, int out_h, int out_w) {
  int in_h = src.dim(0), in_w = src.dim(1);
  Layer out({out_h, out_w});
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (int r = 0; r < out_h; ++r) {
    int ry0 = static_cast<int>(std::floor(r * sy));
    int ry1 = std::min(in_h, static_cast<int>(std::ceil((r + 1) * sy)));
    ry1 = std::max(ry1, ry0 + 1);
    for (int c = 0; c < out_w; ++c) {
      int cx0 = static_cast<int>(std::floor(c * sx));
      int cx1 = std::min(in_w, static_cast<int>(std::ceil((c + 1) * sx)));
      cx1 = std::max(cx1, cx0 + 1);
      float m = 0.0f;
      for (int i = ry0; i < ry1; ++i)
        for (int j = cx0; j < cx1; ++j) m = std::max(m, src.at(i, j));
      out.at(r, c) = m;
    }
  }
  return out;
}

}  // namespace

CityStack resample(const CityStack& stack, int size, const ResampleOptions& opts) {
  if (size < 8) throw ValidationError("resample: size must be >= 8");
  if (!opts.allow_upsample && (size > stack.width || size > stack.height))
    throw ValidationError("resample: upsampling disabled");
  stack.validate();

  CityStack out = stack;
  out.width = size;
  out.height = size;
  out.km_per_px = stack.km_per_px * static_cast<double>(stack.width) / size;
  for (auto& [id, grid] : out.layers) {
    grid = is_binary_layer_id(id) ? resample_max(stack.layers.at(id), size, size)
                                  : resample_area(stack.layers.at(id), size, size);
  }
  out.validate();
  return out;
}

void export_png(const CityStack& stack, const std::string& path,
                const ChannelMap& map) {
  auto check = [&](const std::optional<std::string>& id) {
    if (id && !stack.has(*id))
      throw ValidationError("png export: unknown layer '" + *id + "'");
  };
  check(map.red);
  check(map.green);
  check(map.blue);

  const Layer* water = stack.has(kLayerWater) ? &stack.layer(kLayerWater) : nullptr;
  const Layer* boundary =
      map.shade_outside_boundary && stack.has(kLayerBoundary)
          ? &stack.layer(kLayerBoundary)
          : nullptr;

  auto byte_of = [&](const std::optional<std::string>& id, std::int64_t i) {
    if (!id) return std::uint8_t(0);
    double v = std::clamp(static_cast<double>(stack.layer(*id)[i]), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
  };

  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(stack.width) *
                                stack.height * 3);
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(stack.width) * stack.height;
       ++i) {
    std::uint8_t r = byte_of(map.red, i);
    std::uint8_t g = byte_of(map.green, i);
    std::uint8_t b = byte_of(map.blue, i);
    if (boundary && (*boundary)[i] == 0.0f) {
      r = static_cast<std::uint8_t>(r / 2 + 48);
      g = static_cast<std::uint8_t>(g / 2 + 48);
      b = static_cast<std::uint8_t>(b / 2 + 48);
    }
    if (map.water_white && water && (*water)[i] == 1.0f) r = g = b = 255;
    rgb[static_cast<std::size_t>(i) * 3 + 0] = r;
    rgb[static_cast<std::size_t>(i) * 3 + 1] = g;
    rgb[static_cast<std::size_t>(i) * 3 + 2] = b;
  }
  write_png_rgb8(path, stack.width, stack.height, rgb);
}

}  // namespace geogan
