#pragma once

#include <string>
#include <vector>

#include "geogan/gan.hpp"
#include "geogan/kdtree.hpp"
#include "geogan/stats.hpp"

namespace geogan {

enum class RoiMode { UrbanCore, SecondaryTop3, Custom };

RoiMode roi_mode_from_string(const std::string& s);
std::string to_string(RoiMode m);

struct RegionOfInterest {
  Layer mask;  // binary {H,W}
  RoiMode mode = RoiMode::Custom;
  std::vector<int> patch_labels;  // source patches, when patch-derived
  double centroid_row = 0.0;
  double centroid_col = 0.0;

  std::int64_t area() const;
};

RegionOfInterest roi_from_mask(Layer mask, RoiMode mode = RoiMode::Custom);

// urban_core: largest patch of {built > tau}. secondary_top3: union of the
// patches ranked 2..4 by size (ties: earlier row-major first pixel).
RegionOfInterest region_select(const Layer& built, RoiMode mode, double tau = 0.5,
                               int connectivity = 4);

// Per-factor gradients of the mean generated built density over the ROI,
// computed at 64-bit through the generator in deterministic (no-noise) mode.
struct GradientField {
  Layer g_pop;
  Layer g_lum;
  Layer g_water;  // diagnostic only; water is a constraint, not a factor
  Layer roi;
  std::string city_id;
  std::string checkpoint_id;
  std::string reduction = "mean_over_roi";
  double km_per_px = 1.0;
};

GradientField input_gradient(const Checkpoint& ckpt, const CityStack& stack,
                             const RegionOfInterest& roi,
                             const std::string& checkpoint_id = "");

void save_gradient_tile(const GradientField& field, const std::string& path);

// Share of total |g| mass outside the ROI; 0/0 is defined as 0.
double spillover_fraction(const Layer& g, const Layer& roi_mask);

struct DecayProfile {
  double bin_km = 7.0;
  int rays = 50;
  std::vector<double> bin_lo_km;
  std::vector<double> bin_hi_km;
  std::vector<double> mean_abs;   // across-ray mean of per-ray bin means
  std::vector<bool> present;      // false: no ray sample landed in the bin
};

struct RayProfileOptions {
  int rays = 50;
  double bin_km = 7.0;
  double max_km = 0.0;        // <= 0: distance to the farthest tile corner
  double step_px = 0.5;
  std::uint64_t seed = 0;
};

// |g| sampled along m random rays from the ROI centroid (bilinear
// interpolation), averaged per distance bin per ray, then across rays.
DecayProfile ray_profile(const Layer& g, const RegionOfInterest& roi,
                         double km_per_px, const RayProfileOptions& opts = {});

struct ProfileAggregateRow {
  std::string group;
  int bin = 0;
  double bin_lo_km = 0.0, bin_hi_km = 0.0;
  int count = 0;
  double q0 = 0, q1 = 0, q2 = 0, q3 = 0, q4 = 0;  // min..max of log10 share
  double mean_log = 0.0;
};

struct ProfileAggregate {
  std::vector<ProfileAggregateRow> rows;
  struct GroupSummary {
    std::string group;
    // fraction of bins past the 2nd whose median is non-increasing
    double monotone_fraction = 0.0;
    // distance at which the median normalized contribution drops below 1%
    double d1pct_km = -1.0;  // -1: never within profile range
  };
  std::vector<GroupSummary> summaries;
};

// Pools per-city profiles by group label. Each profile is normalized to bin
// shares |g|_b / sum_b |g|_b and log10-scaled before pooling.
ProfileAggregate aggregate_profiles(
    const std::vector<std::pair<std::string, DecayProfile>>& labeled);

void write_profile_csv(const DecayProfile& p, const std::string& path);
void write_aggregate_csv(const ProfileAggregate& agg, const std::string& path);

// phi-space city similarity.
class SimilarityIndex {
 public:
  SimilarityIndex(const std::vector<std::vector<float>>& phis,
                  std::vector<std::string> ids);

  struct Neighbor {
    std::string id;
    double dist = 0.0;
  };

  // Exact Euclidean k-NN; ties broken by id.
  std::vector<Neighbor> query(const std::vector<float>& phi, int k) const;

  int size() const { return static_cast<int>(ids_.size()); }
  int dim() const { return tree_.dim(); }

 private:
  std::vector<std::string> ids_;
  KdTree tree_;
};

}  // namespace geogan
