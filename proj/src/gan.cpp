#include "geogan/gan.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <thread>

#include "geogan/archive.hpp"
#include "geogan/rng.hpp"

namespace geogan {

namespace fs = std::filesystem;
using nlohmann::json;

InputMode input_mode_from_string(const std::string& s) {
  if (s == "factors") return InputMode::Factors;
  if (s == "water_only") return InputMode::WaterOnly;
  throw ValidationError("gan: unknown input mode '" + s + "'");
}

std::string to_string(InputMode m) {
  return m == InputMode::Factors ? "factors" : "water_only";
}

void GanConfig::validate() const {
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw ValidationError("config: dropout p must be in [0,1)");
  if (alpha < 0.0) throw ValidationError("config: alpha must be >= 0");
  if (lambda_l1 < 0.0) throw ValidationError("config: lambda must be >= 0");
  if (depth < 2) throw ValidationError("config: depth must be >= 2");
  if (image_size < 16) throw ValidationError("config: image size must be >= 16");
  if (image_size % (1 << depth) != 0)
    throw ValidationError("config: image size must be divisible by 2^depth");
  if ((image_size >> depth) < 2)
    throw ValidationError("config: bottleneck smaller than 2 px; reduce depth");
  if (base_width < 2) throw ValidationError("config: base width must be >= 2");
  if (batch_size < 1) throw ValidationError("config: batch size must be >= 1");
  if (epochs < 1) throw ValidationError("config: epochs must be >= 1");
  if (!(lr > 0.0)) throw ValidationError("config: lr must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ValidationError("config: betas must be in [0,1)");
}

json GanConfig::to_json() const {
  return json{{"image_size", image_size},
              {"base_width", base_width},
              {"depth", depth},
              {"dropout_p", dropout_p},
              {"lambda_l1", lambda_l1},
              {"alpha", alpha},
              {"lr", lr},
              {"beta1", beta1},
              {"beta2", beta2},
              {"batch_size", batch_size},
              {"epochs", epochs},
              {"checkpoint_every", checkpoint_every},
              {"seed", seed},
              {"input_mode", to_string(input_mode)},
              {"pop_cap", pop_cap}};
}

GanConfig GanConfig::from_json(const json& j) {
  GanConfig c;
  c.image_size = j.at("image_size").get<int>();
  c.base_width = j.at("base_width").get<int>();
  c.depth = j.at("depth").get<int>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.lambda_l1 = j.at("lambda_l1").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.lr = j.at("lr").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.checkpoint_every = j.value("checkpoint_every", 10);
  c.seed = j.at("seed").get<std::uint64_t>();
  c.input_mode = input_mode_from_string(j.at("input_mode").get<std::string>());
  c.pop_cap = j.value("pop_cap", kDefaultPopCap);
  return c;
}

namespace {

// Channel width of encoder level i (cap at 8x base, pix2pix-style).
int enc_width(const GanConfig& cfg, int i) {
  return cfg.base_width * std::min(1 << i, 8);
}

int dec_width(const GanConfig& cfg, int j) {
  return j == cfg.depth - 1 ? 1 : enc_width(cfg, cfg.depth - 2 - j);
}

int dec_in_width(const GanConfig& cfg, int j) {
  if (j == 0) return enc_width(cfg, cfg.depth - 1);
  return dec_width(cfg, j - 1) + enc_width(cfg, cfg.depth - 1 - j);
}

Tensor<float> normal_init(std::vector<int> shape, double stddev, double mean,
                          CounterRng rng) {
  Tensor<float> t(std::move(shape));
  for (auto& v : t.vec())
    v = static_cast<float>(mean + stddev * rng.next_normal());
  return t;
}

}  // namespace

ParamMap init_generator_params(const GanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  CounterRng root{CounterRng::mix(seed)};
  ParamMap p;
  for (int i = 0; i < cfg.depth; ++i) {
    int in_ch = i == 0 ? cfg.in_channels() : enc_width(cfg, i - 1);
    int out_ch = enc_width(cfg, i);
    std::string base = "g.enc" + std::to_string(i);
    p[base + ".w"] = normal_init({out_ch, in_ch, 4, 4}, 0.02, 0.0,
                                 root.stream(base + ".w"));
    if (i == 0) {
      p[base + ".b"] = Tensor<float>({out_ch});
    } else {
      p[base + ".gamma"] =
          normal_init({out_ch}, 0.02, 1.0, root.stream(base + ".gamma"));
      p[base + ".beta"] = Tensor<float>({out_ch});
    }
  }
  for (int j = 0; j < cfg.depth; ++j) {
    int in_ch = dec_in_width(cfg, j);
    int out_ch = dec_width(cfg, j);
    std::string base = "g.dec" + std::to_string(j);
    p[base + ".w"] = normal_init({in_ch, out_ch, 4, 4}, 0.02, 0.0,
                                 root.stream(base + ".w"));
    if (j == cfg.depth - 1) {
      // Start near the corpus mean density rather than 0.5: shortens the
      // early collapse into the all-zeros basin (logit of ~0.25).
      p[base + ".b"] = Tensor<float>({out_ch}, -1.1f);
    } else {
      p[base + ".gamma"] =
          normal_init({out_ch}, 0.02, 1.0, root.stream(base + ".gamma"));
      p[base + ".beta"] = Tensor<float>({out_ch});
    }
  }
  return p;
}

ParamMap init_discriminator_params(const GanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  CounterRng root{CounterRng::mix(seed)};
  ParamMap p;
  const int w = cfg.base_width;
  p["d.b0.w"] = normal_init({w, cfg.disc_in_channels(), 4, 4}, 0.02, 0.0,
                            root.stream("d.b0.w"));
  p["d.b0.b"] = Tensor<float>({w});
  p["d.b1.w"] = normal_init({2 * w, w, 4, 4}, 0.02, 0.0, root.stream("d.b1.w"));
  p["d.b1.gamma"] = normal_init({2 * w}, 0.02, 1.0, root.stream("d.b1.gamma"));
  p["d.b1.beta"] = Tensor<float>({2 * w});
  p["d.b2.w"] =
      normal_init({4 * w, 2 * w, 4, 4}, 0.02, 0.0, root.stream("d.b2.w"));
  p["d.b2.gamma"] = normal_init({4 * w}, 0.02, 1.0, root.stream("d.b2.gamma"));
  p["d.b2.beta"] = Tensor<float>({4 * w});
  p["d.head.w"] =
      normal_init({1, 4 * w, 3, 3}, 0.02, 0.0, root.stream("d.head.w"));
  p["d.head.b"] = Tensor<float>({1});
  return p;
}

template <typename T>
Var<T> generator_forward(Tape<T>& tape, const BoundParams<T>& params,
                         const GanConfig& cfg, Var<T> input,
                         const NoiseSpec& noise) {
  const auto& s = input.shape();
  if (s.size() != 3 || s[0] != cfg.in_channels() || s[1] != cfg.image_size ||
      s[2] != cfg.image_size)
    throw ValidationError("generator: input shape mismatch, got " +
                          Tensor<T>::shape_str(s));
  (void)tape;

  std::vector<Var<T>> enc;
  Var<T> h = input;
  for (int i = 0; i < cfg.depth; ++i) {
    std::string base = "g.enc" + std::to_string(i);
    if (i == 0) {
      Var<T> b = params.at(base + ".b");
      h = conv2d(h, params.at(base + ".w"), &b, 2, 1);
    } else {
      h = conv2d(h, params.at(base + ".w"), static_cast<const Var<T>*>(nullptr), 2, 1);
      h = instance_norm(h, params.at(base + ".gamma"), params.at(base + ".beta"));
    }
    h = leaky_relu(h, 0.2);
    enc.push_back(h);
  }

  Var<T> d = enc.back();
  for (int j = 0; j < cfg.depth; ++j) {
    std::string base = "g.dec" + std::to_string(j);
    Var<T> x_in = j == 0 ? d : concat_ch(d, enc[static_cast<std::size_t>(cfg.depth - 1 - j)]);
    if (j == cfg.depth - 1) {
      Var<T> b = params.at(base + ".b");
      d = tconv2d(x_in, params.at(base + ".w"), &b, 2, 1);
      d = sigmoid(d);
    } else {
      d = tconv2d(x_in, params.at(base + ".w"), static_cast<const Var<T>*>(nullptr), 2, 1);
      d = instance_norm(d, params.at(base + ".gamma"), params.at(base + ".beta"));
      d = dropout(d, cfg.dropout_p,
                  CounterRng::mix(noise.key ^ (0x9e3779b97f4a7c15ULL *
                                               static_cast<std::uint64_t>(j + 1))),
                  noise.enabled);
      d = relu(d);
    }
  }
  return d;
}

template <typename T>
DiscOutput<T> discriminator_forward(Tape<T>& tape, const BoundParams<T>& params,
                                    const GanConfig& cfg, Var<T> input) {
  const auto& s = input.shape();
  if (s.size() != 3 || s[0] != cfg.disc_in_channels() || s[1] != cfg.image_size ||
      s[2] != cfg.image_size)
    throw ValidationError("discriminator: input shape mismatch, got " +
                          Tensor<T>::shape_str(s));
  (void)tape;
  Var<T> b0 = params.at("d.b0.b");
  Var<T> h = leaky_relu(conv2d(input, params.at("d.b0.w"), &b0, 2, 1), 0.2);
  h = conv2d(h, params.at("d.b1.w"), static_cast<const Var<T>*>(nullptr), 2, 1);
  h = leaky_relu(instance_norm(h, params.at("d.b1.gamma"), params.at("d.b1.beta")), 0.2);
  h = conv2d(h, params.at("d.b2.w"), static_cast<const Var<T>*>(nullptr), 2, 1);
  h = leaky_relu(instance_norm(h, params.at("d.b2.gamma"), params.at("d.b2.beta")), 0.2);
  DiscOutput<T> out;
  out.features = h;
  Var<T> hb = params.at("d.head.b");
  out.logits = conv2d(h, params.at("d.head.w"), &hb, 1, 1);
  return out;
}

template Var<float> generator_forward<float>(Tape<float>&, const BoundParams<float>&,
                                             const GanConfig&, Var<float>,
                                             const NoiseSpec&);
template Var<double> generator_forward<double>(Tape<double>&,
                                               const BoundParams<double>&,
                                               const GanConfig&, Var<double>,
                                               const NoiseSpec&);
template DiscOutput<float> discriminator_forward<float>(Tape<float>&,
                                                        const BoundParams<float>&,
                                                        const GanConfig&, Var<float>);
template DiscOutput<double> discriminator_forward<double>(
    Tape<double>&, const BoundParams<double>&, const GanConfig&, Var<double>);

Tensor<float> conditioning_tensor(const CityStack& stack, InputMode mode) {
  const int h = stack.height, w = stack.width;
  const Layer& water = stack.layer(kLayerWater);
  if (mode == InputMode::WaterOnly) {
    Tensor<float> t({1, h, w});
    std::copy(water.data(), water.data() + water.numel(), t.data());
    return t;
  }
  const Layer& pop = stack.layer(kLayerPop);
  const Layer& lum = stack.layer(kLayerLum);
  Tensor<float> t({3, h, w});
  std::copy(pop.data(), pop.data() + pop.numel(), t.data());
  std::copy(lum.data(), lum.data() + lum.numel(), t.data() + pop.numel());
  std::copy(water.data(), water.data() + water.numel(),
            t.data() + 2 * pop.numel());
  return t;
}

Tensor<float> built_tensor(const CityStack& stack) {
  const Layer& bld = stack.layer(kLayerBld);
  Tensor<float> t({1, stack.height, stack.width});
  std::copy(bld.data(), bld.data() + bld.numel(), t.data());
  return t;
}

ConstraintResult constraint_penalty(const Layer& fake, const Layer& water,
                                    double alpha) {
  if (alpha < 0.0) throw ValidationError("constraint: alpha must be >= 0");
  if (!fake.same_shape(water))
    throw ValidationError("constraint: shape mismatch");
  ConstraintResult r;
  double acc = 0.0;
  std::int64_t hard = 0;
  for (std::int64_t i = 0; i < fake.numel(); ++i) {
    acc += static_cast<double>(fake[i]) * static_cast<double>(water[i]);
    if (fake[i] > kHardOverlapTau && water[i] == 1.0f) ++hard;
  }
  r.loss = alpha * acc / static_cast<double>(fake.numel());
  r.hard_overlap = static_cast<double>(hard) / static_cast<double>(fake.numel());
  return r;
}

namespace {

struct Sample {
  Tensor<float> cond;
  Tensor<float> target;  // {1,H,W}
  Tensor<float> water;   // {1,H,W}
};

Sample make_sample(const CityStack& stack, const GanConfig& cfg) {
  if (stack.width != cfg.image_size || stack.height != cfg.image_size)
    throw ValidationError("train: tile size does not match config for " +
                          stack.city_id);
  if (cfg.input_mode == InputMode::Factors) {
    if (!stack.is_normalized(kLayerPop) || !stack.is_normalized(kLayerLum))
      throw StateError("train: tiles must be normalized (tile " + stack.city_id +
                       ")");
  }
  Sample s;
  s.cond = conditioning_tensor(stack, cfg.input_mode);
  s.target = built_tensor(stack);
  const Layer& w = stack.layer(kLayerWater);
  s.water = Tensor<float>({1, stack.height, stack.width});
  std::copy(w.data(), w.data() + w.numel(), s.water.data());
  return s;
}

void parallel_samples(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  int workers = std::min(threads, n);
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += workers) fn(i);
    });
  for (auto& th : pool) th.join();
}

using GradMap = std::map<std::string, Tensor<float>>;

// Mean of per-sample grads, reduced in sample order for determinism.
GradMap reduce_grads(const std::vector<GradMap>& per_sample) {
  GradMap total;
  const float inv = 1.0f / static_cast<float>(per_sample.size());
  for (const auto& g : per_sample)
    for (const auto& [name, t] : g) {
      auto it = total.find(name);
      if (it == total.end()) {
        Tensor<float> acc(t.shape());
        for (std::int64_t i = 0; i < t.numel(); ++i) acc[i] = t[i] * inv;
        total.emplace(name, std::move(acc));
      } else {
        for (std::int64_t i = 0; i < t.numel(); ++i) it->second[i] += t[i] * inv;
      }
    }
  return total;
}

template <typename T>
GradMap collect_grads(const BoundParams<T>& bound) {
  GradMap g;
  for (const auto& [name, var] : bound.vars) {
    Node<T>* n = var.node();
    if (n->has_grad())
      g.emplace(name, n->grad);
    else
      g.emplace(name, Tensor<float>(n->value.shape()));
  }
  return g;
}

std::uint64_t derive_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                         std::uint64_t c, std::uint64_t d) {
  std::uint64_t k = CounterRng::mix(seed);
  k = CounterRng::mix(k ^ a);
  k = CounterRng::mix(k ^ b);
  k = CounterRng::mix(k ^ c);
  k = CounterRng::mix(k ^ d);
  return k;
}

}  // namespace

Checkpoint train(const std::vector<CityStack>& tiles, const GanConfig& cfg,
                 const TrainOptions& opts, std::vector<LossReport>* log) {
  cfg.validate();
  if (tiles.empty()) throw ValidationError("train: empty dataset");

  std::vector<Sample> data;
  data.reserve(tiles.size());
  for (const auto& t : tiles) data.push_back(make_sample(t, cfg));

  Checkpoint ck;
  ck.config = cfg;
  ck.gen = init_generator_params(cfg, CounterRng::mix(cfg.seed ^ 0x67656eULL));
  ck.disc = init_discriminator_params(cfg, CounterRng::mix(cfg.seed ^ 0x646973ULL));
  AdamConfig adam_gen{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};
  // The discriminator is deliberately handicapped (slower lr, smoothed real
  // label): at desk scale an unconstrained D saturates within a few epochs
  // and its loss gradient drowns the reconstruction signal.
  AdamConfig adam_disc{cfg.lr * 0.25, cfg.beta1, cfg.beta2, 1e-8};
  constexpr double kRealLabel = 0.9;

  std::ofstream csv;
  if (!opts.log_csv_path.empty()) {
    csv.open(opts.log_csv_path, std::ios::trunc);
    if (!csv) throw IoError("train: cannot write log " + opts.log_csv_path);
    csv << "step,epoch,L_cGAN_D,L_cGAN_G,L_L1,L_constr,overlap_rate,wall_ms\n";
  }

  const int n = static_cast<int>(data.size());
  CounterRng shuffle_root = CounterRng(CounterRng::mix(cfg.seed)).stream("shuffle");
  std::int64_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    CounterRng sh = shuffle_root.stream(static_cast<std::uint64_t>(epoch));
    for (int i = n - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[sh.next_below(static_cast<std::uint64_t>(i + 1))]);

    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bsz = std::min(cfg.batch_size, n - start);
      const auto t0 = std::chrono::steady_clock::now();
      ++step;

      // ---- discriminator step (generator path frozen) ----
      std::vector<GradMap> d_grads(static_cast<std::size_t>(bsz));
      std::vector<double> d_losses(static_cast<std::size_t>(bsz));
      parallel_samples(bsz, opts.threads, [&](int k) {
        const Sample& s = data[static_cast<std::size_t>(
            order[static_cast<std::size_t>(start + k)])];
        Tape<float> tape;
        BoundParams<float> bg = bind_params(tape, ck.gen, false);
        BoundParams<float> bd = bind_params(tape, ck.disc, true);
        Var<float> cond = tape.constant(s.cond);
        NoiseSpec noise{cfg.dropout_p > 0.0,
                        derive_key(cfg.seed, 0xD5, static_cast<std::uint64_t>(step),
                                   static_cast<std::uint64_t>(k), 0)};
        Var<float> fake = generator_forward(tape, bg, cfg, cond, noise);
        Var<float> real_logits =
            discriminator_forward(tape, bd, cfg, concat_ch(cond, tape.constant(s.target)))
                .logits;
        Var<float> fake_logits =
            discriminator_forward(tape, bd, cfg, concat_ch(cond, fake)).logits;
        Var<float> loss = scale(add(bce_with_logits_mean(real_logits, kRealLabel),
                                    bce_with_logits_mean(fake_logits, 0.0)),
                                0.5);
        tape.backward(loss);
        d_losses[static_cast<std::size_t>(k)] = loss.value()[0];
        d_grads[static_cast<std::size_t>(k)] = collect_grads(bd);
      });
      GradMap d_total = reduce_grads(d_grads);
      for (auto& [name, grad] : d_total)
        adam_step(ck.disc.at(name), grad, ck.adam_d[name], adam_disc);

      // ---- generator step ----
      std::vector<GradMap> g_grads(static_cast<std::size_t>(bsz));
      struct GStats {
        double l_g = 0, l_l1 = 0, l_c = 0, overlap = 0;
      };
      std::vector<GStats> g_stats(static_cast<std::size_t>(bsz));
      parallel_samples(bsz, opts.threads, [&](int k) {
        const Sample& s = data[static_cast<std::size_t>(
            order[static_cast<std::size_t>(start + k)])];
        Tape<float> tape;
        BoundParams<float> bg = bind_params(tape, ck.gen, true);
        BoundParams<float> bd = bind_params(tape, ck.disc, false);
        Var<float> cond = tape.constant(s.cond);
        NoiseSpec noise{cfg.dropout_p > 0.0,
                        derive_key(cfg.seed, 0x47, static_cast<std::uint64_t>(step),
                                   static_cast<std::uint64_t>(k), 1)};
        Var<float> fake = generator_forward(tape, bg, cfg, cond, noise);
        Var<float> fake_logits =
            discriminator_forward(tape, bd, cfg, concat_ch(cond, fake)).logits;
        Var<float> l_gan = bce_with_logits_mean(fake_logits, 1.0);
        Var<float> l_l1 = l1_mean(fake, tape.constant(s.target));
        Var<float> total = add(l_gan, scale(l_l1, cfg.lambda_l1));
        double l_c_val = 0.0;
        if (!opts.disable_constraint_module) {
          Var<float> l_c = constraint_loss(fake, s.water, cfg.alpha);
          l_c_val = l_c.value()[0];
          total = add(total, l_c);
        }
        tape.backward(total);

        GStats& st = g_stats[static_cast<std::size_t>(k)];
        st.l_g = l_gan.value()[0];
        st.l_l1 = l_l1.value()[0];
        st.l_c = l_c_val;
        const Tensor<float>& fv = fake.value();
        std::int64_t hard = 0;
        for (std::int64_t i = 0; i < fv.numel(); ++i)
          if (fv[i] > kHardOverlapTau && s.water[i] == 1.0f) ++hard;
        st.overlap = static_cast<double>(hard) / static_cast<double>(fv.numel());
        g_grads[static_cast<std::size_t>(k)] = collect_grads(bg);
      });
      GradMap g_total = reduce_grads(g_grads);
      for (auto& [name, grad] : g_total)
        adam_step(ck.gen.at(name), grad, ck.adam_g[name], adam_gen);

      LossReport rep;
      for (int k = 0; k < bsz; ++k) {
        rep.l_cgan_d += d_losses[static_cast<std::size_t>(k)] / bsz;
        rep.l_cgan_g += g_stats[static_cast<std::size_t>(k)].l_g / bsz;
        rep.l_l1 += g_stats[static_cast<std::size_t>(k)].l_l1 / bsz;
        rep.l_constr += g_stats[static_cast<std::size_t>(k)].l_c / bsz;
        rep.overlap_rate += g_stats[static_cast<std::size_t>(k)].overlap / bsz;
      }
      if (!std::isfinite(rep.l_cgan_d) || !std::isfinite(rep.l_cgan_g) ||
          !std::isfinite(rep.l_l1) || !std::isfinite(rep.l_constr))
        throw NumericError("train: non-finite loss at step " + std::to_string(step));
      if (log) log->push_back(rep);

      if (csv.is_open()) {
        long long wall_ms = 0;
        if (timing_enabled())
          wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
        char buf[224];
        std::snprintf(buf, sizeof buf, "%lld,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%lld\n",
                      static_cast<long long>(step), epoch, rep.l_cgan_d,
                      rep.l_cgan_g, rep.l_l1, rep.l_constr, rep.overlap_rate,
                      wall_ms);
        csv << buf;
      }
    }

    ck.epoch = epoch;
    if (!opts.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
        epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs) {
      char name[64];
      std::snprintf(name, sizeof name, "ckpt_epoch%04d.ckpt", epoch);
      save_checkpoint(ck, (fs::path(opts.checkpoint_dir) / name).string());
    }
    log_info("epoch ", epoch, "/", cfg.epochs, " done");
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  TensorArchive ar;
  ar.meta["kind"] = "geogan-checkpoint";
  ar.meta["config"] = ckpt.config.to_json();
  ar.meta["epoch"] = ckpt.epoch;
  json steps_g = json::object(), steps_d = json::object();
  for (const auto& [name, st] : ckpt.adam_g) steps_g[name] = st.step;
  for (const auto& [name, st] : ckpt.adam_d) steps_d[name] = st.step;
  ar.meta["adam_steps_g"] = steps_g;
  ar.meta["adam_steps_d"] = steps_d;

  for (const auto& [name, t] : ckpt.gen) ar.add("gen/" + name, t);
  for (const auto& [name, t] : ckpt.disc) ar.add("disc/" + name, t);
  for (const auto& [name, st] : ckpt.adam_g) {
    ar.add("adam_g/" + name + ".m", st.m);
    ar.add("adam_g/" + name + ".v", st.v);
  }
  for (const auto& [name, st] : ckpt.adam_d) {
    ar.add("adam_d/" + name + ".m", st.m);
    ar.add("adam_d/" + name + ".v", st.v);
  }
  write_archive(ar, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  TensorArchive ar = read_archive(path);
  if (ar.meta.value("kind", "") != "geogan-checkpoint")
    throw FormatError("checkpoint: not a geogan checkpoint: " + path);
  Checkpoint ck;
  ck.config = GanConfig::from_json(ar.meta.at("config"));
  ck.epoch = ar.meta.value("epoch", 0);
  for (const auto& [name, t] : ar.tensors) {
    if (name.rfind("gen/", 0) == 0) ck.gen[name.substr(4)] = t;
    else if (name.rfind("disc/", 0) == 0) ck.disc[name.substr(5)] = t;
  }
  auto load_adam = [&](const char* prefix, const json& steps,
                       std::map<std::string, AdamState<float>>& out) {
    for (auto it = steps.begin(); it != steps.end(); ++it) {
      AdamState<float> st;
      st.step = it.value().get<std::int64_t>();
      st.m = ar.at(std::string(prefix) + it.key() + ".m");
      st.v = ar.at(std::string(prefix) + it.key() + ".v");
      out[it.key()] = std::move(st);
    }
  };
  if (ar.meta.contains("adam_steps_g"))
    load_adam("adam_g/", ar.meta["adam_steps_g"], ck.adam_g);
  if (ar.meta.contains("adam_steps_d"))
    load_adam("adam_d/", ar.meta["adam_steps_d"], ck.adam_d);
  return ck;
}

Layer generate_map(const Checkpoint& ckpt, const CityStack& stack,
                   std::optional<std::uint64_t> sample_seed) {
  const GanConfig& cfg = ckpt.config;
  if (stack.width != cfg.image_size || stack.height != cfg.image_size)
    throw ValidationError("generate: tile size does not match checkpoint");
  if (cfg.input_mode == InputMode::Factors &&
      (!stack.has(kLayerPop) || !stack.has(kLayerLum)))
    throw ValidationError(
        "generate: factors checkpoint requires pop and lum layers");
  if (cfg.input_mode == InputMode::Factors &&
      (!stack.is_normalized(kLayerPop) || !stack.is_normalized(kLayerLum)))
    throw StateError("generate: stack must be normalized");

  Tape<float> tape;
  BoundParams<float> bg = bind_params(tape, ckpt.gen, false);
  Var<float> cond = tape.constant(conditioning_tensor(stack, cfg.input_mode));
  NoiseSpec noise;
  if (sample_seed) {
    noise.enabled = cfg.dropout_p > 0.0;
    noise.key = CounterRng::mix(*sample_seed);
  }
  Var<float> fake = generator_forward(tape, bg, cfg, cond, noise);
  Layer out({cfg.image_size, cfg.image_size});
  std::copy(fake.value().data(), fake.value().data() + fake.value().numel(),
            out.data());
  return out;
}

std::vector<Layer> generate_samples(const Checkpoint& ckpt, const CityStack& stack,
                                    std::uint64_t seed, int n_samples) {
  if (n_samples < 1) throw ValidationError("generate: n_samples must be >= 1");
  std::vector<Layer> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i)
    out.push_back(generate_map(
        ckpt, stack, CounterRng::mix(seed + static_cast<std::uint64_t>(i))));
  return out;
}

std::vector<float> extract_features(const Checkpoint& ckpt, const CityStack& stack) {
  const GanConfig& cfg = ckpt.config;
  if (stack.width != cfg.image_size || stack.height != cfg.image_size)
    throw ValidationError("features: tile size does not match checkpoint");
  Tape<float> tape;
  BoundParams<float> bd = bind_params(tape, ckpt.disc, false);
  Var<float> cond = tape.constant(conditioning_tensor(stack, cfg.input_mode));
  Var<float> pair = concat_ch(cond, tape.constant(built_tensor(stack)));
  DiscOutput<float> d = discriminator_forward(tape, bd, cfg, pair);
  const Tensor<float>& f = d.features.value();
  const int ch = f.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(f.dim(1)) * f.dim(2);
  std::vector<float> phi(static_cast<std::size_t>(ch));
  for (int c = 0; c < ch; ++c) {
    double acc = 0.0;
    const float* p = f.data() + c * plane;
    for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
    phi[static_cast<std::size_t>(c)] = static_cast<float>(acc / plane);
  }
  return phi;
}

}  // namespace geogan
