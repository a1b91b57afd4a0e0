#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geogan/raster.hpp"

namespace geogan {

enum class WaterMode { None, River, Coast, Blobs };

WaterMode water_mode_from_string(const std::string& s);
std::string to_string(WaterMode m);

struct SynthParams {
  std::uint64_t seed = 0;
  int size = 64;
  int n_seeds = 5;           // growth nuclei
  int growth_steps = 900;    // accretion iterations
  WaterMode water_mode = WaterMode::Coast;
  double noise_scale = 0.15;
  double pop_coupling = 0.85;  // how strongly pop follows built density
  double lum_coupling = 0.85;
  double tau_px = 4.0;       // attachment decay length, exp(-d/tau)
  double km_per_px = 1.5625;  // 100 km window at 64 px
};

// Deterministic procedural city: built form by nucleation-and-growth with
// distance-decaying attachment, pop as a blur of built form (spilling over
// water), lum as a saturating response of pop. Raw (un-normalized) units.
CityStack generate_city(const SynthParams& params);

struct ManifestEntry {
  std::string city_id;
  std::uint64_t seed = 0;
  std::string split;  // "train" | "test"
  std::string path;   // relative to the manifest directory
};

struct DatasetLayout {
  std::string dir;
  std::string manifest_path;  // dir + "/manifest.jsonl"
  std::vector<ManifestEntry> entries;
};

// Writes n tiles (seeds base_seed..base_seed+n-1) plus a JSON-lines manifest.
// Split assignment is exact 90/10 by hash order of city_id: the floor(n/10)
// ids with the largest hashes become the test split.
DatasetLayout generate_dataset(int n, std::uint64_t base_seed,
                               const SynthParams& proto, const std::string& out_dir);

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path);

// Absolute tile path for an entry (entries store manifest-relative paths).
std::string manifest_tile_path(const std::string& manifest_path,
                               const ManifestEntry& entry);

}  // namespace geogan
