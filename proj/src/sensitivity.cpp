#include "geogan/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "geogan/rng.hpp"

namespace geogan {

RoiMode roi_mode_from_string(const std::string& s) {
  if (s == "core" || s == "urban_core") return RoiMode::UrbanCore;
  if (s == "secondary_top3") return RoiMode::SecondaryTop3;
  if (s == "custom") return RoiMode::Custom;
  throw ValidationError("roi: unknown mode '" + s + "'");
}

std::string to_string(RoiMode m) {
  switch (m) {
    case RoiMode::UrbanCore: return "urban_core";
    case RoiMode::SecondaryTop3: return "secondary_top3";
    case RoiMode::Custom: return "custom";
  }
  return "custom";
}

std::int64_t RegionOfInterest::area() const {
  std::int64_t n = 0;
  for (float v : mask.vec())
    if (v != 0.0f) ++n;
  return n;
}

namespace {

void compute_centroid(RegionOfInterest& roi) {
  const int h = roi.mask.dim(0), w = roi.mask.dim(1);
  double sr = 0, sc = 0, n = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (roi.mask.at(r, c) != 0.0f) {
        sr += r;
        sc += c;
        n += 1;
      }
  if (n == 0) throw ValidationError("roi: empty mask");
  roi.centroid_row = sr / n;
  roi.centroid_col = sc / n;
}

}  // namespace

RegionOfInterest roi_from_mask(Layer mask, RoiMode mode) {
  if (mask.ndim() != 2) throw ValidationError("roi: mask must be 2-D");
  for (float v : mask.vec())
    if (v != 0.0f && v != 1.0f)
      throw ValidationError("roi: mask must be binary");
  RegionOfInterest roi;
  roi.mask = std::move(mask);
  roi.mode = mode;
  compute_centroid(roi);
  return roi;
}

RegionOfInterest region_select(const Layer& built, RoiMode mode, double tau,
                               int connectivity) {
  PatchLabeling lab = label_patches(built, tau, connectivity);
  const int k = lab.num_patches();
  RegionOfInterest roi;
  roi.mode = mode;
  if (mode == RoiMode::UrbanCore) {
    if (k < 1) throw ValidationError("roi: insufficient patches (need 1)");
    int label = lab.ranked_labels[0];
    roi.mask = patch_mask(lab, label);
    roi.patch_labels = {label};
  } else if (mode == RoiMode::SecondaryTop3) {
    if (k < 4)
      throw ValidationError("roi: insufficient patches (need 4 for secondary_top3)");
    roi.mask = Layer(built.shape());
    for (int rank = 1; rank <= 3; ++rank) {
      int label = lab.ranked_labels[static_cast<std::size_t>(rank)];
      roi.patch_labels.push_back(label);
      for (std::int64_t i = 0; i < built.numel(); ++i)
        if (lab.labels[i] == label) roi.mask[i] = 1.0f;
    }
  } else {
    throw ValidationError("roi: custom mode needs an explicit mask");
  }
  compute_centroid(roi);
  return roi;
}

GradientField input_gradient(const Checkpoint& ckpt, const CityStack& stack,
                             const RegionOfInterest& roi,
                             const std::string& checkpoint_id) {
  const GanConfig& cfg = ckpt.config;
  if (cfg.input_mode != InputMode::Factors)
    throw ValidationError(
        "input_gradient: checkpoint is water_only; factor gradients undefined");
  if (stack.width != cfg.image_size || stack.height != cfg.image_size)
    throw ValidationError("input_gradient: tile size does not match checkpoint");
  if (roi.mask.dim(0) != stack.height || roi.mask.dim(1) != stack.width)
    throw ValidationError("input_gradient: roi shape mismatch");
  if (roi.area() == 0) throw ValidationError("input_gradient: empty roi");

  Tape<double> tape;
  BoundParams<double> bg = bind_params<double>(tape, ckpt.gen, false);
  Tensor<double> cond =
      conditioning_tensor(stack, InputMode::Factors).cast<double>();
  Var<double> input = tape.leaf(std::move(cond), true);
  Var<double> fake = generator_forward(tape, bg, cfg, input, NoiseSpec{});

  Tensor<double> roi_chw({1, stack.height, stack.width});
  for (std::int64_t i = 0; i < roi.mask.numel(); ++i)
    roi_chw[i] = static_cast<double>(roi.mask[i]);
  Var<double> loss = masked_mean(fake, roi_chw);
  tape.backward(loss);

  const Tensor<double>& g = input.node()->grad;
  if (g.numel() != input.value().numel())
    throw NumericError("input_gradient: gradient did not materialize");

  GradientField field;
  field.city_id = stack.city_id;
  field.checkpoint_id = checkpoint_id;
  field.km_per_px = stack.km_per_px;
  field.roi = roi.mask;
  const std::int64_t plane = static_cast<std::int64_t>(stack.height) * stack.width;
  auto take = [&](int ch) {
    Layer out({stack.height, stack.width});
    for (std::int64_t i = 0; i < plane; ++i) {
      double v = g[ch * plane + i];
      if (!std::isfinite(v))
        throw NumericError("input_gradient: non-finite gradient");
      out[i] = static_cast<float>(v);
    }
    return out;
  };
  field.g_pop = take(0);
  field.g_lum = take(1);
  field.g_water = take(2);
  return field;
}

void save_gradient_tile(const GradientField& field, const std::string& path) {
  RawTile tile;
  tile.width = field.g_pop.dim(1);
  tile.height = field.g_pop.dim(0);
  tile.km_per_px = field.km_per_px;
  tile.city_id = field.city_id;
  tile.layers.push_back({"g_pop", field.g_pop});
  tile.layers.push_back({"g_lum", field.g_lum});
  tile.layers.push_back({"roi", field.roi});
  write_raw_tile(tile, path);
}

double spillover_fraction(const Layer& g, const Layer& roi_mask) {
  if (!g.same_shape(roi_mask))
    throw ValidationError("spillover: shape mismatch");
  double inside = 0.0, total = 0.0;
  for (std::int64_t i = 0; i < g.numel(); ++i) {
    double a = std::abs(static_cast<double>(g[i]));
    total += a;
    if (roi_mask[i] != 0.0f) inside += a;
  }
  if (total == 0.0) {
    log_warn("spillover: zero gradient mass, reporting 0");
    return 0.0;
  }
  return (total - inside) / total;
}

DecayProfile ray_profile(const Layer& g, const RegionOfInterest& roi,
                         double km_per_px, const RayProfileOptions& opts) {
  if (opts.rays < 1) throw ValidationError("ray_profile: rays must be >= 1");
  if (!(opts.bin_km > 0.0)) throw ValidationError("ray_profile: bin_km must be > 0");
  if (!(opts.step_px > 0.0)) throw ValidationError("ray_profile: step must be > 0");
  if (!(km_per_px > 0.0)) throw ValidationError("ray_profile: km_per_px must be > 0");
  const int h = g.dim(0), w = g.dim(1);
  if (roi.mask.dim(0) != h || roi.mask.dim(1) != w)
    throw ValidationError("ray_profile: roi shape mismatch");

  // |g| grid for bilinear interpolation.
  Layer mag(g.shape());
  for (std::int64_t i = 0; i < g.numel(); ++i) mag[i] = std::abs(g[i]);

  const double cy = roi.centroid_row, cx = roi.centroid_col;
  double max_km = opts.max_km;
  if (max_km <= 0.0) {
    double far = 0.0;
    for (int ry : {0, h - 1})
      for (int cxr : {0, w - 1}) {
        double d = std::hypot(ry - cy, cxr - cx);
        far = std::max(far, d);
      }
    max_km = far * km_per_px;
  }
  const int n_bins = std::max(1, static_cast<int>(std::ceil(max_km / opts.bin_km)));

  auto bilinear = [&](double r, double c) -> double {
    int r0 = static_cast<int>(std::floor(r));
    int c0 = static_cast<int>(std::floor(c));
    double fr = r - r0, fc = c - c0;
    auto at = [&](int rr, int cc) -> double {
      rr = std::clamp(rr, 0, h - 1);
      cc = std::clamp(cc, 0, w - 1);
      return mag.at(rr, cc);
    };
    return (1 - fr) * ((1 - fc) * at(r0, c0) + fc * at(r0, c0 + 1)) +
           fr * ((1 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1));
  };

  std::vector<double> bin_sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<int> bin_rays(static_cast<std::size_t>(n_bins), 0);
  CounterRng rng{CounterRng::mix(opts.seed)};
  for (int ray = 0; ray < opts.rays; ++ray) {
    double theta = rng.next_double() * 6.283185307179586;
    double dr = std::sin(theta), dc = std::cos(theta);
    std::vector<double> ray_sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<int> ray_cnt(static_cast<std::size_t>(n_bins), 0);
    for (double t = 0.0;; t += opts.step_px) {
      double r = cy + t * dr, c = cx + t * dc;
      if (r < 0.0 || r > h - 1 || c < 0.0 || c > w - 1) break;  // off the tile
      double d_km = t * km_per_px;
      if (d_km >= max_km) break;
      int bin = static_cast<int>(d_km / opts.bin_km);
      ray_sum[static_cast<std::size_t>(bin)] += bilinear(r, c);
      ++ray_cnt[static_cast<std::size_t>(bin)];
    }
    for (int b = 0; b < n_bins; ++b)
      if (ray_cnt[static_cast<std::size_t>(b)] > 0) {
        bin_sum[static_cast<std::size_t>(b)] +=
            ray_sum[static_cast<std::size_t>(b)] / ray_cnt[static_cast<std::size_t>(b)];
        ++bin_rays[static_cast<std::size_t>(b)];
      }
  }

  DecayProfile p;
  p.bin_km = opts.bin_km;
  p.rays = opts.rays;
  for (int b = 0; b < n_bins; ++b) {
    p.bin_lo_km.push_back(b * opts.bin_km);
    p.bin_hi_km.push_back((b + 1) * opts.bin_km);
    bool present = bin_rays[static_cast<std::size_t>(b)] > 0;
    p.present.push_back(present);
    p.mean_abs.push_back(present ? bin_sum[static_cast<std::size_t>(b)] /
                                       bin_rays[static_cast<std::size_t>(b)]
                                 : 0.0);
  }
  return p;
}

namespace {

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  double h = q * (static_cast<double>(sorted.size()) - 1.0);
  std::size_t lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

ProfileAggregate aggregate_profiles(
    const std::vector<std::pair<std::string, DecayProfile>>& labeled) {
  // group -> bin -> log10 normalized magnitudes across cities
  std::map<std::string, std::map<int, std::vector<double>>> pools;
  std::map<std::string, const DecayProfile*> exemplar;

  for (const auto& [group, prof] : labeled) {
    double total = 0.0;
    for (std::size_t b = 0; b < prof.mean_abs.size(); ++b)
      if (prof.present[b]) total += prof.mean_abs[b];
    if (total <= 0.0) {
      log_warn("aggregate_profiles: profile with zero mass dropped (group ",
               group, ")");
      continue;
    }
    exemplar.emplace(group, &prof);
    for (std::size_t b = 0; b < prof.mean_abs.size(); ++b) {
      if (!prof.present[b]) continue;
      double share = prof.mean_abs[b] / total;
      double logged = share > 0.0 ? std::log10(share) : -12.0;  // floor for 0
      pools[group][static_cast<int>(b)].push_back(logged);
    }
  }

  ProfileAggregate agg;
  for (auto& [group, bins] : pools) {
    std::vector<double> medians;
    for (auto& [bin, values] : bins) {
      std::sort(values.begin(), values.end());
      ProfileAggregateRow row;
      row.group = group;
      row.bin = bin;
      const DecayProfile* ex = exemplar.at(group);
      row.bin_lo_km = ex->bin_km * bin;
      row.bin_hi_km = ex->bin_km * (bin + 1);
      row.count = static_cast<int>(values.size());
      row.q0 = values.front();
      row.q1 = quantile(values, 0.25);
      row.q2 = quantile(values, 0.5);
      row.q3 = quantile(values, 0.75);
      row.q4 = values.back();
      row.mean_log = std::accumulate(values.begin(), values.end(), 0.0) /
                     static_cast<double>(values.size());
      agg.rows.push_back(row);
      medians.push_back(row.q2);
    }

    ProfileAggregate::GroupSummary summary;
    summary.group = group;
    int monotone = 0, considered = 0;
    for (std::size_t b = 2; b < medians.size(); ++b) {
      ++considered;
      if (medians[b] <= medians[b - 1]) ++monotone;
    }
    summary.monotone_fraction =
        considered > 0 ? static_cast<double>(monotone) / considered : 1.0;
    const DecayProfile* ex = exemplar.at(group);
    for (std::size_t b = 0; b < medians.size(); ++b) {
      if (medians[b] < -2.0) {  // below a 1% contribution
        summary.d1pct_km = ex->bin_km * (static_cast<double>(b) + 0.5);
        break;
      }
    }
    agg.summaries.push_back(summary);
  }
  return agg;
}

void write_profile_csv(const DecayProfile& p, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("profile: cannot write " + path);
  os << "bin_lo_km,bin_hi_km,present,mean_abs_gradient\n";
  char buf[128];
  for (std::size_t b = 0; b < p.mean_abs.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%.4f,%.4f,%d,%.10g\n", p.bin_lo_km[b],
                  p.bin_hi_km[b], p.present[b] ? 1 : 0, p.mean_abs[b]);
    os << buf;
  }
}

void write_aggregate_csv(const ProfileAggregate& agg, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("aggregate: cannot write " + path);
  os << "group,bin_lo_km,bin_hi_km,n,q0,q1,q2,q3,q4,mean_log\n";
  char buf[256];
  for (const auto& r : agg.rows) {
    std::snprintf(buf, sizeof buf,
                  "%s,%.4f,%.4f,%d,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n",
                  r.group.c_str(), r.bin_lo_km, r.bin_hi_km, r.count, r.q0, r.q1,
                  r.q2, r.q3, r.q4, r.mean_log);
    os << buf;
  }
}

namespace {

// Entries sorted by id so the tree's index tie-break is an id tie-break.
std::vector<int> id_order(const std::vector<std::string>& ids) {
  std::vector<int> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return ids[static_cast<std::size_t>(a)] < ids[static_cast<std::size_t>(b)];
  });
  return order;
}

}  // namespace

SimilarityIndex::SimilarityIndex(const std::vector<std::vector<float>>& phis,
                                 std::vector<std::string> ids)
    : ids_([&] {
        if (phis.empty()) throw ValidationError("similarity: empty index");
        if (phis.size() != ids.size())
          throw ValidationError("similarity: ids/vectors length mismatch");
        std::vector<std::string> sorted;
        sorted.reserve(ids.size());
        for (int i : id_order(ids)) sorted.push_back(ids[static_cast<std::size_t>(i)]);
        return sorted;
      }()),
      tree_([&] {
        const std::size_t dim = phis.front().size();
        std::vector<float> flat;
        flat.reserve(phis.size() * dim);
        for (int i : id_order(ids)) {
          const auto& p = phis[static_cast<std::size_t>(i)];
          if (p.size() != dim)
            throw ValidationError("similarity: dimension mismatch");
          flat.insert(flat.end(), p.begin(), p.end());
        }
        return KdTree(std::move(flat), static_cast<int>(dim));
      }()) {}

std::vector<SimilarityIndex::Neighbor> SimilarityIndex::query(
    const std::vector<float>& phi, int k) const {
  if (k < 1 || k > size())
    throw ValidationError("similarity: k out of range");
  std::vector<KdTree::Hit> hits = tree_.knn(phi, k);
  std::vector<Neighbor> out;
  out.reserve(hits.size());
  for (const auto& h : hits)
    out.push_back({ids_[static_cast<std::size_t>(h.index)], h.dist});
  // deterministic order on equal distances: by id
  std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.dist != b.dist ? a.dist < b.dist : a.id < b.id;
  });
  return out;
}

}  // namespace geogan
