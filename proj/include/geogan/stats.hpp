#pragma once

#include <string>
#include <vector>

#include "geogan/raster.hpp"

namespace geogan {

// Connected components of {map > tau}. Labels are assigned in row-major
// discovery order, so patch ids and rankings are deterministic.
struct PatchLabeling {
  Tensor<std::int32_t> labels;  // {H,W}; 0 = background, 1..K = patches
  std::vector<std::int64_t> size_by_label;  // size of label l at [l-1]
  std::vector<int> ranked_labels;  // labels by size desc; ties: lower label first
  int connectivity = 4;

  int num_patches() const { return static_cast<int>(size_by_label.size()); }
  std::vector<std::int64_t> sizes_desc() const;
  std::int64_t foreground_px() const;
};

PatchLabeling label_patches(const Layer& map, double tau = 0.5,
                            int connectivity = 4);

// Binary mask of one labeled patch.
Layer patch_mask(const PatchLabeling& lab, int label);

// Mean of raw values: the density convention a = (1/W^2) sum x.
double built_area_fraction(const Layer& map);

struct PatchHistogram {
  std::vector<std::int64_t> bin_lo;  // base-2 bins [2^k, 2^(k+1))
  std::vector<std::int64_t> counts;
};

PatchHistogram patch_size_distribution(const PatchLabeling& lab);

// Masks of the k largest patches, rank order.
std::vector<Layer> top_patch_masks(const PatchLabeling& lab, int k = 20);

struct FractalResult {
  double f = 0.0;
  bool clamped = false;  // raw slope fell outside [0,2]
  // (log box size, log box count) per retained scale, natural log.
  std::vector<std::pair<double, double>> scale_points;
};

// Box counting over box sizes side/2, side/4, ..., 2 (padded to a square
// power of two). Coarsest scales with fewer than 4 occupied boxes are
// dropped (at most two). f is the least-squares slope of log N vs log(1/s).
FractalResult fractal_dimension(const Layer& map, double tau = 0.5,
                                int min_px_per_box = 1);

double pearson_r2(const std::vector<double>& x, const std::vector<double>& y);

struct StatsRecord {
  std::string city_id;
  std::string source;  // "real" | "generated"
  double a = 0.0;
  double f = 0.0;
  int n_patches = 0;
  std::int64_t largest_patch_px = 0;
  PatchHistogram histogram;
};

StatsRecord compute_stats_record(const Layer& built, const std::string& city_id,
                                 const std::string& source, double tau = 0.5);

struct StatsComparison {
  double r2_a = 0.0;
  double r2_f = 0.0;
  // paired rows: city_id, real a, gen a, real f, gen f
  struct Pair {
    std::string city_id;
    double a_real, a_gen, f_real, f_gen;
  };
  std::vector<Pair> pairs;
};

// Pairs records by city_id (unpaired ids dropped with a warning; fewer than
// 3 pairs is an error) and reports Pearson R^2 for a and f.
StatsComparison compare_stats(const std::vector<StatsRecord>& real,
                              const std::vector<StatsRecord>& generated);

void write_stats_csv(const std::vector<StatsRecord>& records,
                     const std::string& path);
void write_histogram_json(const std::vector<StatsRecord>& records,
                          const std::string& path);
void write_comparison_csv(const StatsComparison& cmp, const std::string& path);

}  // namespace geogan
