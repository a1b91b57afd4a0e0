#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geogan/adam.hpp"
#include "geogan/ops.hpp"
#include "geogan/raster.hpp"
#include "json.hpp"

namespace geogan {

enum class InputMode { Factors, WaterOnly };

InputMode input_mode_from_string(const std::string& s);
std::string to_string(InputMode m);

struct GanConfig {
  int image_size = 64;
  int base_width = 32;   // channel width of the first encoder level
  int depth = 4;         // encoder levels; bottleneck at size / 2^depth
  double dropout_p = 0.2;   // decoder dropout; the model's noise source
  double lambda_l1 = 100.0;
  double alpha = 100.0;     // water-constraint weight
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 4;
  int epochs = 30;
  int checkpoint_every = 10;
  std::uint64_t seed = 1;
  InputMode input_mode = InputMode::Factors;
  double pop_cap = kDefaultPopCap;

  int in_channels() const { return input_mode == InputMode::Factors ? 3 : 1; }
  // Discriminator sees the conditioning channels plus the built map.
  int disc_in_channels() const { return in_channels() + 1; }
  // Bottleneck feature dimension exposed as phi.
  int feature_dim() const { return base_width * 4; }
  int patch_grid() const { return image_size / 8; }  // 3 stride-2 blocks

  void validate() const;
  nlohmann::json to_json() const;
  static GanConfig from_json(const nlohmann::json& j);
};

using ParamMap = std::map<std::string, Tensor<float>>;

ParamMap init_generator_params(const GanConfig& cfg, std::uint64_t seed);
ParamMap init_discriminator_params(const GanConfig& cfg, std::uint64_t seed);

// Leaves for one forward/backward pass, bound onto a tape.
template <typename T>
struct BoundParams {
  std::map<std::string, Var<T>> vars;

  Var<T> at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end())
      throw StateError("model: missing parameter '" + name + "'");
    return it->second;
  }
};

template <typename T, typename P>
BoundParams<T> bind_params(Tape<T>& tape, const std::map<std::string, Tensor<P>>& params,
                           bool requires_grad) {
  BoundParams<T> bp;
  for (const auto& [name, t] : params) {
    if constexpr (std::is_same_v<T, P>)
      bp.vars.emplace(name, tape.leaf(t, requires_grad));
    else
      bp.vars.emplace(name, tape.leaf(t.template cast<T>(), requires_grad));
  }
  return bp;
}

// Dropout control for one generator pass. Disabled => deterministic output.
struct NoiseSpec {
  bool enabled = false;
  std::uint64_t key = 0;
};

// U-Net generator: input {in_channels,S,S} -> built map {1,S,S} in [0,1].
template <typename T>
Var<T> generator_forward(Tape<T>& tape, const BoundParams<T>& params,
                         const GanConfig& cfg, Var<T> input,
                         const NoiseSpec& noise);

template <typename T>
struct DiscOutput {
  Var<T> logits;    // {1, S/8, S/8} patch grid
  Var<T> features;  // {4*base_width, S/8, S/8} bottleneck map
};

// Patch discriminator over concat(conditioning, built-or-fake).
template <typename T>
DiscOutput<T> discriminator_forward(Tape<T>& tape, const BoundParams<T>& params,
                                    const GanConfig& cfg, Var<T> input);

// Conditioning tensor from a stack: {pop,lum,water} or {water} channels.
Tensor<float> conditioning_tensor(const CityStack& stack, InputMode mode);
Tensor<float> built_tensor(const CityStack& stack);  // {1,H,W}

struct ConstraintResult {
  double loss = 0.0;          // alpha * mean(fake .* water)
  double hard_overlap = 0.0;  // fraction of pixels with fake > tau_bin and water
};

inline constexpr double kHardOverlapTau = 0.5;

ConstraintResult constraint_penalty(const Layer& fake, const Layer& water,
                                    double alpha);

// Differentiable constraint term on the tape.
template <typename T>
Var<T> constraint_loss(Var<T> fake, const Tensor<T>& water, double alpha) {
  if (alpha < 0.0) throw ValidationError("constraint: alpha must be >= 0");
  if (fake.value().numel() != water.numel())
    throw ValidationError("constraint: shape mismatch");
  Var<T> w = fake.tape()->constant(water);
  return scale(mean_all(mul(fake, w)), alpha);
}

struct LossReport {
  double l_cgan_d = 0.0;
  double l_cgan_g = 0.0;
  double l_l1 = 0.0;
  double l_constr = 0.0;
  double overlap_rate = 0.0;
};

struct Checkpoint {
  GanConfig config;
  ParamMap gen;
  ParamMap disc;
  std::map<std::string, AdamState<float>> adam_g;
  std::map<std::string, AdamState<float>> adam_d;
  int epoch = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct TrainOptions {
  std::string log_csv_path;     // empty: no CSV
  std::string checkpoint_dir;   // empty: no periodic checkpoints
  int threads = 1;
  // Test hook: drop the constraint node from the G objective entirely, for
  // checking that alpha=0 is equivalent to removing the module.
  bool disable_constraint_module = false;
};

// Alternating D/G steps over the tile list with the composite objective.
// Deterministic for a fixed seed (any thread count: per-sample gradients are
// reduced in sample order). Appends one LossReport per step to `log` if set.
Checkpoint train(const std::vector<CityStack>& tiles, const GanConfig& cfg,
                 const TrainOptions& opts = {},
                 std::vector<LossReport>* log = nullptr);

// One generated map. `sample_seed` set => dropout noise with that seed;
// unset => deterministic eval pass.
Layer generate_map(const Checkpoint& ckpt, const CityStack& stack,
                   std::optional<std::uint64_t> sample_seed = std::nullopt);

std::vector<Layer> generate_samples(const Checkpoint& ckpt, const CityStack& stack,
                                    std::uint64_t seed, int n_samples);

// Pooled discriminator bottleneck features phi for a city.
std::vector<float> extract_features(const Checkpoint& ckpt, const CityStack& stack);

}  // namespace geogan
