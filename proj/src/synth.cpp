#include "geogan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "geogan/rng.hpp"
#include "json.hpp"

namespace geogan {

namespace fs = std::filesystem;
using nlohmann::json;

WaterMode water_mode_from_string(const std::string& s) {
  if (s == "none") return WaterMode::None;
  if (s == "river") return WaterMode::River;
  if (s == "coast") return WaterMode::Coast;
  if (s == "blobs") return WaterMode::Blobs;
  throw ValidationError("synth: unknown water mode '" + s + "'");
}

std::string to_string(WaterMode m) {
  switch (m) {
    case WaterMode::None: return "none";
    case WaterMode::River: return "river";
    case WaterMode::Coast: return "coast";
    case WaterMode::Blobs: return "blobs";
  }
  return "none";
}

namespace {

// Low-frequency sinusoid mixture in [0,1]; smooth, cheap, deterministic.
Layer smooth_noise(int size, CounterRng rng, int waves = 6) {
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> ws(static_cast<std::size_t>(waves));
  for (int k = 0; k < waves; ++k) {
    ws[k].fx = 1.0 + rng.next_double() * 3.0;
    ws[k].fy = 1.0 + rng.next_double() * 3.0;
    if (rng.next_u64() & 1) ws[k].fx = -ws[k].fx;
    ws[k].phase = rng.next_double() * 6.283185307179586;
    ws[k].amp = 1.0 / (1.0 + k);
  }
  Layer out({size, size});
  double norm = 0.0;
  for (const auto& w : ws) norm += w.amp;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      double v = 0.0;
      for (const auto& w : ws)
        v += w.amp * std::sin(6.283185307179586 *
                                  (w.fx * c + w.fy * r) / size +
                              w.phase);
      out.at(r, c) = static_cast<float>(0.5 + 0.5 * v / norm);
    }
  return out;
}

Layer make_water(int size, WaterMode mode, CounterRng rng) {
  Layer water({size, size});
  switch (mode) {
    case WaterMode::None:
      break;
    case WaterMode::Coast: {
      // Half-plane past a noisy shoreline, random orientation.
      double theta = rng.next_double() * 6.283185307179586;
      double nx = std::cos(theta), ny = std::sin(theta);
      double offset = (0.15 + 0.25 * rng.next_double()) * size;
      Layer wiggle = smooth_noise(size, rng.stream("shore"));
      for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
          double d = nx * (c - size / 2.0) + ny * (r - size / 2.0);
          double w = (wiggle.at(r, c) - 0.5) * 0.25 * size;
          if (d + w > size / 2.0 - offset) water.at(r, c) = 1.0f;
        }
      break;
    }
    case WaterMode::River: {
      // Meandering band crossing the tile left to right.
      double y = size * (0.25 + 0.5 * rng.next_double());
      double half_w = size * (0.03 + 0.04 * rng.next_double());
      double drift = 0.0;
      for (int c = 0; c < size; ++c) {
        drift += (rng.next_double() - 0.5) * 1.2;
        drift = std::clamp(drift, -2.5, 2.5);
        y = std::clamp(y + drift, half_w, size - 1.0 - half_w);
        int lo = std::max(0, static_cast<int>(std::floor(y - half_w)));
        int hi = std::min(size - 1, static_cast<int>(std::ceil(y + half_w)));
        for (int r = lo; r <= hi; ++r) water.at(r, c) = 1.0f;
      }
      break;
    }
    case WaterMode::Blobs: {
      int k = 2 + static_cast<int>(rng.next_below(3));
      for (int b = 0; b < k; ++b) {
        double cy = rng.next_double() * size;
        double cx = rng.next_double() * size;
        double rad = size * (0.06 + 0.10 * rng.next_double());
        int lo_r = std::max(0, static_cast<int>(cy - rad) - 1);
        int hi_r = std::min(size - 1, static_cast<int>(cy + rad) + 1);
        for (int r = lo_r; r <= hi_r; ++r)
          for (int c = 0; c < size; ++c) {
            double dr = r - cy, dc = c - cx;
            if (dr * dr + dc * dc <= rad * rad) water.at(r, c) = 1.0f;
          }
      }
      break;
    }
  }
  return water;
}

// Nucleation-and-growth accretion. A cell's attachment weight decays as
// exp(-d/tau) with d the Euclidean distance to the nearest built cell.
Layer grow_built(const SynthParams& p, const Layer& water, CounterRng rng) {
  const int size = p.size;
  const int n = size * size;
  Layer built({size, size});

  std::vector<double> d2(static_cast<std::size_t>(n),
                         std::numeric_limits<double>::infinity());
  std::vector<double> weight(static_cast<std::size_t>(n), 0.0);

  auto is_land = [&](int idx) { return water[idx] == 0.0f; };

  auto mark_built = [&](int idx) {
    built[idx] = 1.0f;
    weight[static_cast<std::size_t>(idx)] = 0.0;
    int br = idx / size, bc = idx % size;
    for (int r = 0; r < size; ++r) {
      double dy = r - br;
      for (int c = 0; c < size; ++c) {
        int j = r * size + c;
        if (built[j] == 1.0f || !is_land(j)) continue;
        double dx = c - bc;
        double nd2 = dx * dx + dy * dy;
        if (nd2 < d2[static_cast<std::size_t>(j)]) {
          d2[static_cast<std::size_t>(j)] = nd2;
          weight[static_cast<std::size_t>(j)] =
              std::exp(-std::sqrt(nd2) / p.tau_px);
        }
      }
    }
  };

  // Nuclei: first near the tile center, the rest uniform over land.
  CounterRng nuc = rng.stream("nuclei");
  int placed = 0;
  int guard = 0;
  while (placed < p.n_seeds && guard < 100000) {
    ++guard;
    int r, c;
    if (placed == 0) {
      r = size / 2 + static_cast<int>(nuc.next_below(size / 4)) - size / 8;
      c = size / 2 + static_cast<int>(nuc.next_below(size / 4)) - size / 8;
    } else {
      r = static_cast<int>(nuc.next_below(static_cast<std::uint64_t>(size)));
      c = static_cast<int>(nuc.next_below(static_cast<std::uint64_t>(size)));
    }
    int idx = r * size + c;
    if (!is_land(idx) || built[idx] == 1.0f) continue;
    mark_built(idx);
    ++placed;
  }
  if (placed < p.n_seeds)
    throw ValidationError("synth: could not place growth nuclei on land");

  CounterRng growth = rng.stream("growth");
  std::vector<double> prefix(static_cast<std::size_t>(n));
  for (int step = 0; step < p.growth_steps; ++step) {
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      total += weight[static_cast<std::size_t>(j)];
      prefix[static_cast<std::size_t>(j)] = total;
    }
    if (total <= 0.0) break;  // tile saturated
    double u = growth.next_double() * total;
    auto it = std::upper_bound(prefix.begin(), prefix.end(), u);
    int idx = static_cast<int>(it - prefix.begin());
    if (idx >= n) idx = n - 1;
    mark_built(idx);
  }
  return built;
}

Layer box_blur(const Layer& src, int radius) {
  int h = src.dim(0), w = src.dim(1);
  Layer tmp({h, w}), out({h, w});
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      int cnt = 0;
      for (int k = -radius; k <= radius; ++k) {
        int cc = c + k;
        if (cc < 0 || cc >= w) continue;
        acc += src.at(r, cc);
        ++cnt;
      }
      tmp.at(r, c) = static_cast<float>(acc / cnt);
    }
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      int cnt = 0;
      for (int k = -radius; k <= radius; ++k) {
        int rr = r + k;
        if (rr < 0 || rr >= h) continue;
        acc += tmp.at(rr, c);
        ++cnt;
      }
      out.at(r, c) = static_cast<float>(acc / cnt);
    }
  return out;
}

}  // namespace

CityStack generate_city(const SynthParams& p) {
  if (p.size < 16) throw ValidationError("synth: size must be >= 16");
  if (p.n_seeds < 0 || p.growth_steps < 0)
    throw ValidationError("synth: negative counts");
  if (p.n_seeds == 0 && p.growth_steps > 0)
    throw ValidationError("synth: growth requested with zero nuclei");
  if (p.noise_scale < 0.0)
    throw ValidationError("synth: noise_scale must be >= 0");
  if (p.pop_coupling < 0.0 || p.pop_coupling > 1.0 || p.lum_coupling < 0.0 ||
      p.lum_coupling > 1.0)
    throw ValidationError("synth: couplings must be in [0,1]");

  CounterRng root = CounterRng(CounterRng::mix(p.seed)).stream("city-v1");

  Layer water = make_water(p.size, p.water_mode, root.stream("water"));
  Layer built = p.n_seeds > 0 ? grow_built(p, water, root.stream("built"))
                              : Layer({p.size, p.size});

  // Population tracks a blur of the built form. The blur is deliberately not
  // water-masked: density leaks across shorelines, so an unconstrained model
  // sees an incentive to build over water.
  Layer blur = box_blur(built, 2);
  float blur_max = 1e-6f;
  for (float v : blur.vec()) blur_max = std::max(blur_max, v);

  Layer noise_pop = smooth_noise(p.size, root.stream("noise-pop"));
  Layer noise_lum = smooth_noise(p.size, root.stream("noise-lum"));
  CounterRng rough = root.stream("rough");

  const double pop_peak = 20000.0;
  Layer pop({p.size, p.size}), lum({p.size, p.size});
  for (std::int64_t i = 0; i < pop.numel(); ++i) {
    double base = blur[i] / blur_max;
    double unit = p.pop_coupling * base + (1.0 - p.pop_coupling) * noise_pop[i];
    unit *= 1.0 + p.noise_scale * (rough.next_double() - 0.5);
    unit = std::clamp(unit, 0.0, 1.0);
    pop[i] = static_cast<float>(pop_peak * unit * unit);

    double drive = p.lum_coupling * unit + (1.0 - p.lum_coupling) * noise_lum[i];
    double sat = (1.0 - std::exp(-3.0 * drive)) / (1.0 - std::exp(-3.0));
    sat *= 1.0 + 0.5 * p.noise_scale * (rough.next_double() - 0.5);
    lum[i] = static_cast<float>(kLumRawCap * std::clamp(sat, 0.0, 1.0));
  }

  // Administrative boundary: ellipse around the built centroid.
  Layer boundary({p.size, p.size});
  double sum = 0.0, cy = 0.0, cx = 0.0;
  for (int r = 0; r < p.size; ++r)
    for (int c = 0; c < p.size; ++c)
      if (built.at(r, c) > 0.0f) {
        sum += 1.0;
        cy += r;
        cx += c;
      }
  if (sum > 0.0) {
    cy /= sum;
    cx /= sum;
    double var = 0.0;
    for (int r = 0; r < p.size; ++r)
      for (int c = 0; c < p.size; ++c)
        if (built.at(r, c) > 0.0f)
          var += (r - cy) * (r - cy) + (c - cx) * (c - cx);
    double rad = std::clamp(2.2 * std::sqrt(var / sum) + 3.0, 6.0, p.size * 0.5);
    for (int r = 0; r < p.size; ++r)
      for (int c = 0; c < p.size; ++c) {
        double dr = r - cy, dc = c - cx;
        if (dr * dr + dc * dc <= rad * rad) boundary.at(r, c) = 1.0f;
      }
  }

  CityStack s;
  s.width = p.size;
  s.height = p.size;
  s.km_per_px = p.km_per_px;
  char idbuf[32];
  std::snprintf(idbuf, sizeof idbuf, "synth-%012llu",
                static_cast<unsigned long long>(p.seed));
  s.city_id = idbuf;
  s.layers[kLayerPop] = std::move(pop);
  s.layers[kLayerLum] = std::move(lum);
  s.layers[kLayerBld] = std::move(built);
  s.layers[kLayerWater] = std::move(water);
  s.layers[kLayerBoundary] = std::move(boundary);
  s.validate();
  return s;
}

DatasetLayout generate_dataset(int n, std::uint64_t base_seed,
                               const SynthParams& proto,
                               const std::string& out_dir) {
  if (n < 1) throw ValidationError("synth: dataset size must be >= 1");

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "tiles", ec);
  if (ec) throw IoError("synth: cannot create output dir: " + out_dir);

  DatasetLayout layout;
  layout.dir = out_dir;
  layout.manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();

  struct Rank {
    std::uint64_t hash;
    std::string id;
    int index;
  };
  std::vector<Rank> ranks;
  ranks.reserve(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    std::uint64_t seed = base_seed + static_cast<std::uint64_t>(i);
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "synth-%012llu",
                  static_cast<unsigned long long>(seed));
    ManifestEntry e;
    e.city_id = idbuf;
    e.seed = seed;
    e.path = std::string("tiles/") + idbuf + ".tile";
    layout.entries.push_back(std::move(e));
    ranks.push_back({CounterRng::hash(idbuf), idbuf, i});
  }

  // Exact 90/10 split, ordered by id hash; ties broken by id.
  std::sort(ranks.begin(), ranks.end(), [](const Rank& a, const Rank& b) {
    return a.hash != b.hash ? a.hash < b.hash : a.id < b.id;
  });
  int n_test = n / 10;
  for (int r = 0; r < n; ++r)
    layout.entries[static_cast<std::size_t>(ranks[static_cast<std::size_t>(r)].index)]
        .split = (r >= n - n_test) ? "test" : "train";

  for (const auto& e : layout.entries) {
    SynthParams p = proto;
    p.seed = e.seed;
    CityStack stack = generate_city(p);
    save_tile(stack, (fs::path(out_dir) / e.path).string());
  }

  std::ofstream os(layout.manifest_path, std::ios::trunc);
  if (!os) throw IoError("synth: cannot write manifest: " + layout.manifest_path);
  for (const auto& e : layout.entries) {
    json rec = {{"city_id", e.city_id},
                {"seed", e.seed},
                {"split", e.split},
                {"path", e.path}};
    os << rec.dump() << "\n";
  }
  if (!os) throw IoError("synth: manifest write failed");
  return layout;
}

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw IoError("manifest: cannot open: " + manifest_path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json rec = json::parse(line);
      ManifestEntry e;
      e.city_id = rec.at("city_id").get<std::string>();
      e.seed = rec.at("seed").get<std::uint64_t>();
      e.split = rec.at("split").get<std::string>();
      e.path = rec.at("path").get<std::string>();
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw FormatError("manifest: bad record at line " + std::to_string(line_no) +
                        ": " + ex.what());
    }
  }
  return entries;
}

std::string manifest_tile_path(const std::string& manifest_path,
                               const ManifestEntry& entry) {
  return (fs::path(manifest_path).parent_path() / entry.path).string();
}

}  // namespace geogan
