#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "stylecond/dataset.hpp"
#include "stylecond/discriminator.hpp"

namespace stylecond {

struct ProgressiveConfig {
  bool enabled = false;
  int steps_per_level = 1000;
  double fade_fraction = 0.5;

  friend bool operator==(const ProgressiveConfig&, const ProgressiveConfig&) = default;
};

struct TrainConfig {
  int batch_size = 8;
  double lr_g = 2e-3, lr_d = 2e-3;
  double beta1 = 0.0, beta2 = 0.99;
  double adam_eps = 1e-8;
  double r1_gamma = 10.0;
  double mixing_prob = 0.9;
  double ema_decay = 0.999;
  int total_steps = 5000;
  ProgressiveConfig progressive;
  std::uint64_t seed = 1;
  int log_every = 50;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j);

// ---------------------------------------------------------------------------
// Losses and regularizers
// ---------------------------------------------------------------------------

/// mean softplus(-real) + mean softplus(fake). Throws NumericError on
/// non-finite logits.
torch::Tensor d_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);
/// mean softplus(-fake).
torch::Tensor g_loss(const torch::Tensor& fake_logits);

struct MixedStyles {
  std::vector<torch::Tensor> styles;  // one [N, style_dim] per layer
  std::vector<int> crossover;         // per sample; total_layers + 1 means no mixing
};

/// Per sample: with probability mixing_prob draws a crossover layer k uniform
/// in [2, total_layers]; layers < k get w1, layers >= k get w2. Otherwise w1
/// is broadcast.
MixedStyles mixing_regularization(Rng& rng, const torch::Tensor& w1, const torch::Tensor& w2, double mixing_prob,
                                  int total_layers);

struct ScheduleState {
  int level = 1;
  double alpha = 1.0;
  friend bool operator==(const ScheduleState&, const ScheduleState&) = default;
};

/// Level advances every steps_per_level steps (pinned at num_levels); alpha
/// ramps 0 -> 1 over the first fade_fraction of each level after the first.
ScheduleState progressive_schedule(std::int64_t step, const ProgressiveConfig& config, int num_levels);

/// ema <- ema + (1 - decay) * (src - ema), parameter by parameter.
void ema_update(torch::nn::Module& ema, const torch::nn::Module& src, double decay);

/// Copies every parameter of `src` into `dst` (same architecture).
void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src);

/// Adam with bias correction over a fixed parameter list; moments are plain
/// tensors so they serialize with the checkpoint.
class Adam {
 public:
  Adam(std::vector<torch::Tensor> params, double lr, double beta1, double beta2, double eps);

  void zero_grad();
  void step();

  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  std::vector<torch::Tensor>& exp_avg() { return m_; }
  std::vector<torch::Tensor>& exp_avg_sq() { return v_; }

 private:
  std::vector<torch::Tensor> params_, m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training state
// ---------------------------------------------------------------------------

struct TrainState {
  SynthesisConfig g_config;
  DiscriminatorConfig d_config;
  TrainConfig train;
  Generator g{nullptr};
  Generator g_ema{nullptr};
  Discriminator d{nullptr};
  std::unique_ptr<Adam> opt_g, opt_d;
  std::int64_t step = 0;
  Rng rng;
  ScheduleState schedule;

  bool conditional() const { return g_config.conditional; }
  /// Checksum over G, G-EMA and D parameters.
  std::uint64_t checksum() const;
};

/// Fresh state: networks initialized from streams derived from train.seed.
TrainState make_train_state(const SynthesisConfig& g_config, const DiscriminatorConfig& d_config,
                            const TrainConfig& train);

struct Batch {
  torch::Tensor images;                   // [N, 3, H, W]
  std::optional<torch::Tensor> condition; // [N, 34, H, W]
};

Batch make_batch(const std::vector<const DatasetEntry*>& entries, bool conditional);

/// Dataset indices of batch `step`: a seeded permutation per epoch, fixed
/// before the run so batches depend only on (seed, step).
std::vector<int> batch_indices(std::uint64_t seed, std::int64_t step, int batch_size, int dataset_size);

struct StepMetrics {
  std::int64_t step = 0;
  double d_loss = 0, g_loss = 0, r1 = 0;
  int level = 1;
  double alpha = 1.0;
};

/// One critic update (d_loss + R1) and one generator update (g_loss with
/// mixing regularization), then the EMA update. Throws NumericError naming the
/// step and loss component on non-finite values.
StepMetrics train_step(TrainState& state, const Batch& batch);

struct RunOptions {
  std::int64_t steps = 0;                    // 0 means train.total_steps - state.step
  std::ostream* metrics = nullptr;           // JSON lines
  std::function<void(const TrainState&)> on_checkpoint;
  int checkpoint_every = 0;
};

/// Runs steps over `data`, logging every train.log_every steps and on the last.
void run_training(TrainState& state, const Dataset& data, const RunOptions& options);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'S', 'C', 'G', 'A', 'N', '0', '0', '1'};

/// Single file: magic "SCGAN001", u64 header length, JSON header (configs,
/// step, schedule, RNG state, tensor table), then little-endian float32
/// tensors in table order.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace stylecond
