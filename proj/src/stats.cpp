#include "geogan/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace geogan {

std::vector<std::int64_t> PatchLabeling::sizes_desc() const {
  std::vector<std::int64_t> out;
  out.reserve(ranked_labels.size());
  for (int l : ranked_labels)
    out.push_back(size_by_label[static_cast<std::size_t>(l - 1)]);
  return out;
}

std::int64_t PatchLabeling::foreground_px() const {
  return std::accumulate(size_by_label.begin(), size_by_label.end(),
                         std::int64_t{0});
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  int add() {
    parent.push_back(static_cast<int>(parent.size()));
    return parent.back();
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

}  // namespace

PatchLabeling label_patches(const Layer& map, double tau, int connectivity) {
  if (connectivity != 4 && connectivity != 8)
    throw ValidationError("label_patches: connectivity must be 4 or 8");
  if (map.ndim() != 2) throw ValidationError("label_patches: expected 2-D map");
  const int h = map.dim(0), w = map.dim(1);

  // Two-pass union-find labeling; provisional ids in row-major order.
  Tensor<std::int32_t> prov({h, w}, -1);
  UnionFind uf;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!(map.at(r, c) > tau)) continue;
      int id = uf.add();
      prov.at(r, c) = id;
      if (c > 0 && prov.at(r, c - 1) >= 0) uf.unite(id, prov.at(r, c - 1));
      if (r > 0 && prov.at(r - 1, c) >= 0) uf.unite(id, prov.at(r - 1, c));
      if (connectivity == 8 && r > 0) {
        if (c > 0 && prov.at(r - 1, c - 1) >= 0) uf.unite(id, prov.at(r - 1, c - 1));
        if (c + 1 < w && prov.at(r - 1, c + 1) >= 0)
          uf.unite(id, prov.at(r - 1, c + 1));
      }
    }

  PatchLabeling out;
  out.connectivity = connectivity;
  out.labels.reset({h, w});
  std::vector<int> root_to_label(uf.parent.size(), 0);
  int next_label = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      int p = prov.at(r, c);
      if (p < 0) continue;
      int root = uf.find(p);
      int& lbl = root_to_label[static_cast<std::size_t>(root)];
      if (lbl == 0) {
        lbl = ++next_label;  // discovery order: first pixel row-major
        out.size_by_label.push_back(0);
      }
      out.labels.at(r, c) = lbl;
      ++out.size_by_label[static_cast<std::size_t>(lbl - 1)];
    }

  out.ranked_labels.resize(static_cast<std::size_t>(next_label));
  std::iota(out.ranked_labels.begin(), out.ranked_labels.end(), 1);
  std::stable_sort(out.ranked_labels.begin(), out.ranked_labels.end(),
                   [&](int a, int b) {
                     return out.size_by_label[static_cast<std::size_t>(a - 1)] >
                            out.size_by_label[static_cast<std::size_t>(b - 1)];
                   });
  return out;
}

Layer patch_mask(const PatchLabeling& lab, int label) {
  if (label < 1 || label > lab.num_patches())
    throw ValidationError("patch_mask: label out of range");
  Layer m(lab.labels.shape());
  for (std::int64_t i = 0; i < m.numel(); ++i)
    m[i] = lab.labels[i] == label ? 1.0f : 0.0f;
  return m;
}

double built_area_fraction(const Layer& map) {
  if (map.numel() == 0) throw ValidationError("built_area_fraction: empty map");
  double acc = 0.0;
  for (float v : map.vec()) {
    if (v < 0.0f || v > 1.0f)
      throw ValidationError("built_area_fraction: values must be in [0,1]");
    acc += v;
  }
  return acc / static_cast<double>(map.numel());
}

PatchHistogram patch_size_distribution(const PatchLabeling& lab) {
  PatchHistogram h;
  if (lab.num_patches() == 0) return h;  // empty histogram, not an error
  std::int64_t largest =
      *std::max_element(lab.size_by_label.begin(), lab.size_by_label.end());
  int top_bin = 0;
  while ((std::int64_t{1} << (top_bin + 1)) <= largest) ++top_bin;
  h.bin_lo.resize(static_cast<std::size_t>(top_bin) + 1);
  h.counts.assign(static_cast<std::size_t>(top_bin) + 1, 0);
  for (std::size_t k = 0; k < h.bin_lo.size(); ++k)
    h.bin_lo[k] = std::int64_t{1} << k;
  for (std::int64_t s : lab.size_by_label) {
    int bin = 0;
    while ((std::int64_t{1} << (bin + 1)) <= s) ++bin;
    ++h.counts[static_cast<std::size_t>(bin)];
  }
  return h;
}

std::vector<Layer> top_patch_masks(const PatchLabeling& lab, int k) {
  std::vector<Layer> masks;
  int n = std::min<int>(k, lab.num_patches());
  masks.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    masks.push_back(patch_mask(lab, lab.ranked_labels[static_cast<std::size_t>(i)]));
  return masks;
}

FractalResult fractal_dimension(const Layer& map, double tau, int min_px_per_box) {
  if (map.ndim() != 2) throw ValidationError("fractal: expected 2-D map");
  if (min_px_per_box < 1) throw ValidationError("fractal: occupancy threshold < 1");
  const int h = map.dim(0), w = map.dim(1);

  int side = 1;
  while (side < std::max(h, w)) side <<= 1;
  if (side < 4) throw ValidationError("fractal: map too small");

  // Pad with background to a square power of two.
  std::vector<std::uint8_t> fg(static_cast<std::size_t>(side) * side, 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (map.at(r, c) > tau) fg[static_cast<std::size_t>(r) * side + c] = 1;

  struct Scale {
    int s;
    std::int64_t count;
  };
  std::vector<Scale> scales;
  for (int s = side / 2; s >= 2; s /= 2) {
    int nb = side / s;
    std::int64_t occupied = 0;
    for (int by = 0; by < nb; ++by)
      for (int bx = 0; bx < nb; ++bx) {
        int hits = 0;
        for (int r = by * s; r < (by + 1) * s && hits < min_px_per_box; ++r)
          for (int c = bx * s; c < (bx + 1) * s; ++c)
            if (fg[static_cast<std::size_t>(r) * side + c]) {
              if (++hits >= min_px_per_box) break;
            }
        if (hits >= min_px_per_box) ++occupied;
      }
    if (occupied > 0) scales.push_back({s, occupied});
  }

  // Coarsest scales with N < 4 are boundary-dominated; drop at most two.
  int dropped = 0;
  while (dropped < 2 && !scales.empty() && scales.front().count < 4) {
    scales.erase(scales.begin());
    ++dropped;
  }
  if (scales.size() < 3)
    throw ValidationError("fractal: fewer than 3 usable scales");

  FractalResult res;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(scales.size());
  for (const Scale& sc : scales) {
    double x = -std::log(static_cast<double>(sc.s));  // log(1/s)
    double y = std::log(static_cast<double>(sc.count));
    res.scale_points.emplace_back(std::log(static_cast<double>(sc.s)), y);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  res.f = slope;
  if (slope < 0.0 || slope > 2.0) {
    res.clamped = true;
    res.f = std::clamp(slope, 0.0, 2.0);
  }
  return res;
}

double pearson_r2(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw ValidationError("pearson_r2: length mismatch");
  if (x.size() < 3) throw ValidationError("pearson_r2: need at least 3 points");
  const double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0)
    throw NumericError("pearson_r2: zero variance");
  double r = sxy / std::sqrt(sxx * syy);
  return r * r;
}

StatsRecord compute_stats_record(const Layer& built, const std::string& city_id,
                                 const std::string& source, double tau) {
  StatsRecord rec;
  rec.city_id = city_id;
  rec.source = source;
  rec.a = built_area_fraction(built);
  PatchLabeling lab = label_patches(built, tau, 4);
  rec.n_patches = lab.num_patches();
  if (rec.n_patches > 0) {
    rec.largest_patch_px = lab.size_by_label[static_cast<std::size_t>(
        lab.ranked_labels.front() - 1)];
    rec.histogram = patch_size_distribution(lab);
  }
  try {
    rec.f = fractal_dimension(built, tau).f;
  } catch (const ValidationError&) {
    rec.f = 0.0;  // degenerate map (few or no occupied scales)
  }
  return rec;
}

StatsComparison compare_stats(const std::vector<StatsRecord>& real,
                              const std::vector<StatsRecord>& generated) {
  StatsComparison cmp;
  for (const auto& r : real) {
    const StatsRecord* g = nullptr;
    for (const auto& cand : generated)
      if (cand.city_id == r.city_id) {
        g = &cand;
        break;
      }
    if (!g) {
      log_warn("compare_stats: no generated record for ", r.city_id, ", dropped");
      continue;
    }
    cmp.pairs.push_back({r.city_id, r.a, g->a, r.f, g->f});
  }
  if (cmp.pairs.size() < 3)
    throw ValidationError("compare_stats: fewer than 3 paired cities");
  std::vector<double> ar, ag, fr, fg;
  for (const auto& p : cmp.pairs) {
    ar.push_back(p.a_real);
    ag.push_back(p.a_gen);
    fr.push_back(p.f_real);
    fg.push_back(p.f_gen);
  }
  cmp.r2_a = pearson_r2(ar, ag);
  cmp.r2_f = pearson_r2(fr, fg);
  return cmp;
}

void write_stats_csv(const std::vector<StatsRecord>& records,
                     const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("stats: cannot write " + path);
  os << "city_id,source,a,f,n_patches,largest_patch_px\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.8g,%.8g,%d,%lld\n", r.city_id.c_str(),
                  r.source.c_str(), r.a, r.f, r.n_patches,
                  static_cast<long long>(r.largest_patch_px));
    os << buf;
  }
}

void write_histogram_json(const std::vector<StatsRecord>& records,
                          const std::string& path) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json rec;
    rec["city_id"] = r.city_id;
    rec["source"] = r.source;
    rec["bin_lo"] = r.histogram.bin_lo;
    rec["counts"] = r.histogram.counts;
    out.push_back(rec);
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("stats: cannot write " + path);
  os << out.dump(2) << "\n";
}

void write_comparison_csv(const StatsComparison& cmp, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("stats: cannot write " + path);
  os << "city_id,a_real,a_gen,f_real,f_gen\n";
  char buf[160];
  for (const auto& p : cmp.pairs) {
    std::snprintf(buf, sizeof buf, "%s,%.8g,%.8g,%.8g,%.8g\n", p.city_id.c_str(),
                  p.a_real, p.a_gen, p.f_real, p.f_gen);
    os << buf;
  }
}

}  // namespace geogan
