#include "stylecond/training.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>

#include "stylecond/errors.hpp"

namespace stylecond {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size", "must be positive");
  if (lr_g < 0 || lr_d < 0) throw ValidationError("lr", "must be non-negative");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ValidationError("betas", "must be in [0, 1)");
  if (!(adam_eps > 0)) throw ValidationError("adam_eps", "must be positive");
  if (r1_gamma < 0) throw ValidationError("r1_gamma", "must be non-negative");
  if (mixing_prob < 0 || mixing_prob > 1) throw ValidationError("mixing_prob", "must be in [0, 1]");
  if (ema_decay < 0 || ema_decay > 1) throw ValidationError("ema_decay", "must be in [0, 1]");
  if (total_steps < 0) throw ValidationError("total_steps", "must be non-negative");
  if (progressive.steps_per_level < 1) throw ValidationError("progressive.steps_per_level", "must be positive");
  if (!(progressive.fade_fraction > 0 && progressive.fade_fraction < 1)) {
    throw ValidationError("progressive.fade_fraction", "must be in (0, 1)");
  }
  if (log_every < 1) throw ValidationError("log_every", "must be positive");
}

json train_config_to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"lr_g", c.lr_g},
          {"lr_d", c.lr_d},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"r1_gamma", c.r1_gamma},
          {"mixing_prob", c.mixing_prob},
          {"ema_decay", c.ema_decay},
          {"total_steps", c.total_steps},
          {"progressive",
           {{"enabled", c.progressive.enabled},
            {"steps_per_level", c.progressive.steps_per_level},
            {"fade_fraction", c.progressive.fade_fraction}}},
          {"seed", c.seed},
          {"log_every", c.log_every}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_g = j.value("lr_g", c.lr_g);
    c.lr_d = j.value("lr_d", c.lr_d);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.r1_gamma = j.value("r1_gamma", c.r1_gamma);
    c.mixing_prob = j.value("mixing_prob", c.mixing_prob);
    c.ema_decay = j.value("ema_decay", c.ema_decay);
    c.total_steps = j.value("total_steps", c.total_steps);
    if (j.contains("progressive")) {
      const json& p = j.at("progressive");
      c.progressive.enabled = p.value("enabled", c.progressive.enabled);
      c.progressive.steps_per_level = p.value("steps_per_level", c.progressive.steps_per_level);
      c.progressive.fade_fraction = p.value("fade_fraction", c.progressive.fade_fraction);
    }
    c.seed = j.value("seed", c.seed);
    c.log_every = j.value("log_every", c.log_every);
  } catch (const json::exception& e) {
    throw ValidationError("train", e.what());
  }
  c.validate();
  return c;
}

namespace {

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) throw NumericError(std::string(what) + ": non-finite logits");
}

}  // namespace

torch::Tensor d_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
  require_finite(real_logits, "d_loss");
  require_finite(fake_logits, "d_loss");
  return torch::softplus(-real_logits).mean() + torch::softplus(fake_logits).mean();
}

torch::Tensor g_loss(const torch::Tensor& fake_logits) {
  require_finite(fake_logits, "g_loss");
  return torch::softplus(-fake_logits).mean();
}

MixedStyles mixing_regularization(Rng& rng, const torch::Tensor& w1, const torch::Tensor& w2, double mixing_prob,
                                  int total_layers) {
  const int64_t n = w1.size(0);
  MixedStyles out;
  out.crossover.resize(n);
  for (int64_t i = 0; i < n; ++i) {
    out.crossover[i] = rng.bernoulli(mixing_prob) ? static_cast<int>(rng.uniform_int(2, total_layers)) : total_layers + 1;
  }
  auto k = torch::tensor(std::vector<int64_t>(out.crossover.begin(), out.crossover.end())).view({n, 1});
  for (int layer = 1; layer <= total_layers; ++layer) {
    out.styles.push_back(torch::where(k <= layer, w2, w1));
  }
  return out;
}

ScheduleState progressive_schedule(std::int64_t step, const ProgressiveConfig& config, int num_levels) {
  const std::int64_t spl = config.steps_per_level;
  const int level = static_cast<int>(std::min<std::int64_t>(num_levels, 1 + step / spl));
  if (level == 1) return {1, 1.0};
  const double into = static_cast<double>(step - static_cast<std::int64_t>(level - 1) * spl);
  return {level, std::min(1.0, into / (config.fade_fraction * spl))};
}

void ema_update(torch::nn::Module& ema, const torch::nn::Module& src, double decay) {
  torch::NoGradGuard guard;
  auto dst = ema.parameters();
  auto from = src.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].lerp_(from[i], 1.0 - decay);
}

void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src) {
  torch::NoGradGuard guard;
  auto d = dst.parameters();
  auto s = src.parameters();
  if (d.size() != s.size()) throw ValidationError("module", "parameter count differs");
  for (std::size_t i = 0; i < d.size(); ++i) d[i].copy_(s[i]);
}

Adam::Adam(std::vector<torch::Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(torch::zeros_like(p));
    v_.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
}

void Adam::step() {
  torch::NoGradGuard guard;
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.grad().defined()) continue;
    const auto& g = p.grad();
    m_[i].mul_(beta1_).add_(g, 1.0 - beta1_);
    v_[i].mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
    auto denom = (v_[i] / c2).sqrt_().add_(eps_);
    p.addcdiv_(m_[i], denom, -lr_ / c1);
  }
}

std::uint64_t TrainState::checksum() const {
  std::uint64_t h = parameter_checksum(*g);
  h = splitmix64(h ^ parameter_checksum(*g_ema));
  return splitmix64(h ^ parameter_checksum(*d));
}

TrainState make_train_state(const SynthesisConfig& g_config, const DiscriminatorConfig& d_config,
                            const TrainConfig& train) {
  g_config.validate();
  d_config.validate();
  train.validate();
  if (d_config.num_levels != g_config.num_levels) throw ValidationError("discriminator.num_levels", "must match generator");
  if (d_config.conditional != g_config.conditional) throw ValidationError("discriminator.conditional", "must match generator");
  torch::set_num_threads(1);
  TrainState s;
  s.g_config = g_config;
  s.d_config = d_config;
  s.train = train;
  Rng g_init = Rng::derive(train.seed, 1);
  Rng ema_init = Rng::derive(train.seed, 1);
  Rng d_init = Rng::derive(train.seed, 2);
  s.g = Generator(g_config, g_init);
  s.g_ema = Generator(g_config, ema_init);
  s.d = Discriminator(d_config, d_init);
  for (auto& p : s.g_ema->parameters()) p.requires_grad_(false);
  s.opt_g = std::make_unique<Adam>(s.g->parameters(), train.lr_g, train.beta1, train.beta2, train.adam_eps);
  s.opt_d = std::make_unique<Adam>(s.d->parameters(), train.lr_d, train.beta1, train.beta2, train.adam_eps);
  s.rng = Rng::derive(train.seed, 3);
  s.schedule = train.progressive.enabled ? progressive_schedule(0, train.progressive, g_config.num_levels)
                                         : ScheduleState{g_config.num_levels, 1.0};
  return s;
}

Batch make_batch(const std::vector<const DatasetEntry*>& entries, bool conditional) {
  std::vector<torch::Tensor> images, conds;
  for (const DatasetEntry* e : entries) {
    images.push_back(to_tensor(e->model_image));
    if (conditional) {
      conds.push_back(condition_tensor(e->outfit, e->pose, e->model_image.height, e->model_image.width));
    }
  }
  Batch b;
  b.images = torch::stack(images);
  if (conditional) b.condition = torch::stack(conds);
  return b;
}

std::vector<int> batch_indices(std::uint64_t seed, std::int64_t step, int batch_size, int dataset_size) {
  if (dataset_size < 1) throw ValidationError("dataset", "is empty");
  std::vector<int> out;
  std::int64_t cached_epoch = -1;
  std::vector<int> perm;
  for (int i = 0; i < batch_size; ++i) {
    const std::int64_t s = step * batch_size + i;
    const std::int64_t epoch = s / dataset_size;
    if (epoch != cached_epoch) {
      perm.resize(dataset_size);
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng = Rng::derive(seed ^ 0x9e3779b97f4a7c15ULL, static_cast<std::uint64_t>(epoch));
      for (int k = dataset_size - 1; k > 0; --k) std::swap(perm[k], perm[rng.uniform_int(0, k)]);
      cached_epoch = epoch;
    }
    out.push_back(perm[s % dataset_size]);
  }
  return out;
}

namespace {

void set_requires_grad(torch::nn::Module& m, bool on) {
  for (auto& p : m.parameters()) p.requires_grad_(on);
}

torch::Tensor to_level(torch::Tensor x, int level) {
  const int64_t h = 4 << (level - 1);
  while (x.size(2) > h) x = downsample2x(x);
  return x;
}

[[noreturn]] void non_finite(std::int64_t step, const char* component) {
  throw NumericError("step " + std::to_string(step) + ": non-finite " + component);
}

}  // namespace

StepMetrics train_step(TrainState& s, const Batch& batch) {
  const int n = static_cast<int>(batch.images.size(0));
  if (n != s.train.batch_size) throw ValidationError("batch", "size does not match batch_size");
  if (s.conditional() && !batch.condition) throw ValidationError("batch.condition", "conditional training needs conditions");
  s.schedule = s.train.progressive.enabled ? progressive_schedule(s.step, s.train.progressive, s.g_config.num_levels)
                                           : ScheduleState{s.g_config.num_levels, 1.0};
  const int level = s.schedule.level;
  const double alpha = s.schedule.alpha;
  const int layers = s.g_config.total_layers();
  const auto dtype = s.g->dtype();

  std::optional<torch::Tensor> g_cond, d_cond;
  if (s.conditional()) {
    g_cond = batch.condition->to(dtype);
    d_cond = to_level(*g_cond, level);
  }
  auto real = to_level(batch.images.to(dtype), level);

  auto fake_styles = [&](bool grad) {
    auto z1 = sample_latents(s.rng, n, s.g_config.latent_dim).to(dtype);
    auto z2 = sample_latents(s.rng, n, s.g_config.latent_dim).to(dtype);
    std::optional<torch::NoGradGuard> guard;
    if (!grad) guard.emplace();
    if (s.conditional()) {
      auto e = s.g->embed(*g_cond);
      auto w1 = s.g->map(make_style_input(z1, e, true, s.g_config.latent_dim));
      auto w2 = s.g->map(make_style_input(z2, e, true, s.g_config.latent_dim));
      return mixing_regularization(s.rng, w1, w2, s.train.mixing_prob, layers).styles;
    }
    return mixing_regularization(s.rng, s.g->map(z1), s.g->map(z2), s.train.mixing_prob, layers).styles;
  };

  StepMetrics m;
  m.level = level;
  m.alpha = alpha;

  // Critic update.
  torch::Tensor fake;
  {
    auto styles = fake_styles(false);
    torch::NoGradGuard guard;
    fake = s.g->synthesize(styles, level, alpha, &s.rng, true);
  }
  s.opt_d->zero_grad();
  auto real_x = real.detach().requires_grad_(true);
  auto real_logits = s.d->forward(real_x, d_cond, level, alpha);
  auto fake_logits = s.d->forward(fake, d_cond, level, alpha);
  torch::Tensor ld, r1;
  try {
    ld = d_loss(real_logits, fake_logits);
    r1 = r1_from_logits(real_logits, real_x, s.train.r1_gamma);
  } catch (const NumericError&) {
    non_finite(s.step, "d_loss/r1 (critic logits or input gradient)");
  }
  (ld + r1).backward();
  s.opt_d->step();
  m.d_loss = ld.item<double>();
  m.r1 = r1.item<double>();
  if (!std::isfinite(m.d_loss)) non_finite(s.step, "d_loss");
  if (!std::isfinite(m.r1)) non_finite(s.step, "r1");

  // Generator update.
  set_requires_grad(*s.d, false);
  s.opt_g->zero_grad();
  torch::Tensor lg;
  try {
    auto styles = fake_styles(true);
    auto gen = s.g->synthesize(styles, level, alpha, &s.rng, true);
    lg = g_loss(s.d->forward(gen, d_cond, level, alpha));
  } catch (const NumericError& e) {
    set_requires_grad(*s.d, true);
    throw NumericError("step " + std::to_string(s.step) + ": g_loss: " + e.what());
  }
  lg.backward();
  set_requires_grad(*s.d, true);
  s.opt_g->step();
  m.g_loss = lg.item<double>();
  if (!std::isfinite(m.g_loss)) non_finite(s.step, "g_loss");

  ema_update(*s.g_ema, *s.g, s.train.ema_decay);
  ++s.step;
  m.step = s.step;
  return m;
}

void run_training(TrainState& state, const Dataset& data, const RunOptions& options) {
  const std::int64_t steps = options.steps > 0 ? options.steps : state.train.total_steps - state.step;
  const auto t0 = std::chrono::steady_clock::now();
  const int size = static_cast<int>(data.entries.size());
  for (std::int64_t i = 0; i < steps; ++i) {
    std::vector<const DatasetEntry*> entries;
    for (int idx : batch_indices(state.train.seed, state.step, state.train.batch_size, size)) {
      entries.push_back(&data.entries[idx]);
    }
    const StepMetrics m = train_step(state, make_batch(entries, state.conditional()));
    if (options.metrics && (m.step % state.train.log_every == 0 || i + 1 == steps)) {
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      *options.metrics << json{{"step", m.step},   {"d_loss", m.d_loss}, {"g_loss", m.g_loss}, {"r1", m.r1},
                               {"level", m.level}, {"alpha", m.alpha},   {"wallclock", wall}}
                              .dump()
                       << '\n'
                       << std::flush;
    }
    if (options.on_checkpoint && options.checkpoint_every > 0 && m.step % options.checkpoint_every == 0) {
      options.on_checkpoint(state);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

struct NamedTensor {
  std::string name;
  torch::Tensor tensor;
};

std::vector<NamedTensor> checkpoint_tensors(const TrainState& s) {
  std::vector<NamedTensor> out;
  auto add_module = [&](const std::string& prefix, const torch::nn::Module& m) {
    for (const auto& p : m.named_parameters()) out.push_back({prefix + "." + p.key(), p.value()});
  };
  add_module("g", *s.g);
  add_module("g_ema", *s.g_ema);
  add_module("d", *s.d);
  auto add_adam = [&](const std::string& prefix, Adam& opt, const torch::nn::Module& m) {
    const auto named = m.named_parameters();
    for (std::size_t i = 0; i < named.size(); ++i) {
      out.push_back({prefix + ".exp_avg." + named[i].key(), opt.exp_avg()[i]});
      out.push_back({prefix + ".exp_avg_sq." + named[i].key(), opt.exp_avg_sq()[i]});
    }
  };
  add_adam("opt_g", *s.opt_g, *s.g);
  add_adam("opt_d", *s.opt_d, *s.d);
  return out;
}

}  // namespace

void save_checkpoint(const TrainState& s, const std::filesystem::path& path) {
  const auto tensors = checkpoint_tensors(s);
  json table = json::array();
  for (const auto& t : tensors) table.push_back({{"name", t.name}, {"shape", t.tensor.sizes().vec()}});
  json header = {{"format_version", 1},
                 {"synthesis", config_to_json(s.g_config)},
                 {"discriminator", discriminator_config_to_json(s.d_config)},
                 {"train", train_config_to_json(s.train)},
                 {"conditional", s.conditional()},
                 {"step", s.step},
                 {"opt_g_steps", s.opt_g->steps()},
                 {"opt_d_steps", s.opt_d->steps()},
                 {"level", s.schedule.level},
                 {"alpha", s.schedule.alpha},
                 {"rng_state", s.rng.state()},
                 {"tensors", table}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : tensors) {
    auto c = t.tensor.detach().to(torch::kFloat).contiguous();
    out.write(static_cast<const char*>(c.data_ptr()), static_cast<std::streamsize>(c.numel() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open checkpoint");
  const std::string ctx = path.string() + ": ";
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw FormatError(ctx + "magic: expected SCGAN001, got '" + std::string(magic, in.gcount()) + "'");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 30)) throw FormatError(ctx + "header length: truncated or implausible");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError(ctx + "header: truncated");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(ctx + "header: invalid JSON (" + e.what() + ")");
  }
  if (header.value("format_version", 0) != 1) throw FormatError(ctx + "format_version: unsupported");

  TrainState s;
  try {
    s = make_train_state(config_from_json(header.at("synthesis")),
                         discriminator_config_from_json(header.at("discriminator")),
                         train_config_from_json(header.at("train")));
    s.step = header.at("step").get<std::int64_t>();
    s.opt_g->set_steps(header.at("opt_g_steps").get<std::int64_t>());
    s.opt_d->set_steps(header.at("opt_d_steps").get<std::int64_t>());
    s.schedule = {header.at("level").get<int>(), header.at("alpha").get<double>()};
    s.rng.set_state(header.at("rng_state").get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError(ctx + "header: " + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(ctx + "header." + e.what());
  }

  auto tensors = checkpoint_tensors(s);
  const json& table = header.at("tensors");
  if (!table.is_array() || table.size() != tensors.size()) {
    throw FormatError(ctx + "tensors: expected " + std::to_string(tensors.size()) + " entries");
  }
  torch::NoGradGuard guard;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& t = tensors[i];
    const std::string name = table[i].value("name", "");
    if (name != t.name) throw FormatError(ctx + "tensors[" + std::to_string(i) + "]: expected " + t.name + ", got " + name);
    const auto shape = table[i].value("shape", std::vector<int64_t>{});
    if (shape != t.tensor.sizes().vec()) throw FormatError(ctx + name + ": shape mismatch");
    auto buf = torch::empty(t.tensor.sizes(), torch::kFloat);
    in.read(static_cast<char*>(buf.data_ptr()), static_cast<std::streamsize>(buf.numel() * sizeof(float)));
    if (!in) throw FormatError(ctx + name + ": truncated tensor data");
    t.tensor.copy_(buf);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(ctx + "trailing bytes after tensor data");
  return s;
}

}  // namespace stylecond
