#include "stylecond/inference.hpp"

#include "stylecond/errors.hpp"
#include "stylecond/evaluation.hpp"

namespace stylecond {

namespace {

ImageTensor render(Model& m, const torch::Tensor& w, Rng& rng) {
  auto img = m.g->synthesize(broadcast_style(w, m.config.total_layers()), 0, 1.0, &rng, true).clamp(0.0, 1.0);
  return from_tensor(img[0]);
}

torch::Tensor style_for(Model& m, std::uint64_t seed, int index, Rng& rng) {
  auto z = sample_latents(rng, 1, m.config.latent_dim).to(m.g->dtype());
  std::optional<torch::Tensor> cond;
  if (m.conditional()) {
    const auto [outfit, pose] = sample_condition(m, seed, index);
    cond = condition_tensor(outfit, pose, m.config.height(), m.config.width()).unsqueeze(0).to(m.g->dtype());
  }
  return m.g->style(z, cond);
}

}  // namespace

std::shared_ptr<Model> model_from_state(const TrainState& state, const std::filesystem::path& path) {
  auto m = std::make_shared<Model>();
  m->path = path;
  m->config = state.g_config;
  m->step = state.step;
  m->g = state.g_ema;
  return m;
}

std::shared_ptr<Model> load_model(const std::filesystem::path& checkpoint) {
  return model_from_state(load_checkpoint(checkpoint), checkpoint);
}

std::pair<OutfitSpec, PoseSpec> sample_condition(const Model& model, std::uint64_t seed, int index) {
  DatasetConfig c;
  c.seed = seed;
  c.model_height = model.config.height();
  c.model_width = model.config.width();
  return sample_pair(c, index);
}

std::vector<ImageTensor> sample_images(Model& model, std::uint64_t seed, int n) {
  if (n < 1) throw ValidationError("n", "must be positive");
  torch::NoGradGuard guard;
  std::vector<ImageTensor> out;
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
    out.push_back(render(model, style_for(model, seed, i, rng), rng));
  }
  return out;
}

torch::Tensor sample_style(Model& model, std::uint64_t seed) {
  torch::NoGradGuard guard;
  Rng rng = Rng::derive(seed, 0);
  return style_for(model, seed, 0, rng);
}

MixResult mix_images(Model& model, std::uint64_t seed_source, std::uint64_t seed_target,
                     const LayerStyleAssignment& assignment) {
  if (assignment.total_layers() != model.config.total_layers()) {
    throw ValidationError("assignment", "expected " + std::to_string(model.config.total_layers()) + " layers");
  }
  torch::NoGradGuard guard;
  Rng rs = Rng::derive(seed_source, 0), rt = Rng::derive(seed_target, 0);
  auto ws = style_for(model, seed_source, 0, rs);
  auto wt = style_for(model, seed_target, 0, rt);
  MixResult r;
  r.assignment = assignment;
  Rng noise_s = rs, noise_t = rt, noise_m = rt;
  r.source = render(model, ws, noise_s);
  r.target = render(model, wt, noise_t);
  auto img = model.g->synthesize(style_mix(ws, wt, assignment), 0, 1.0, &noise_m, true).clamp(0.0, 1.0);
  r.mixed = from_tensor(img[0]);
  return r;
}

ImageTensor generate_image(Model& model, const OutfitSpec& outfit, const PoseSpec& pose, std::uint64_t seed) {
  if (!model.conditional()) throw ModeError("the loaded checkpoint is unconditional; generation needs a conditional model");
  validate(outfit);
  validate(pose);
  return generate_conditional(model.g, outfit, pose, seed);
}

json evaluation_report(Model& model, const Dataset& data, const EvalOptions& options) {
  const int size = static_cast<int>(data.entries.size());
  if (size < 4) throw ValidationError("data", "need at least 4 entries");
  if (data.config.model_height != model.config.height() || data.config.model_width != model.config.width()) {
    throw ValidationError("data", "dataset resolution does not match the checkpoint");
  }
  const int n = std::min(options.n_fid, size / 2);
  const auto extractor = random_feature_extractor();
  const auto real = dataset_images(data, 0, n);
  const auto held_out = dataset_images(data, size - n, n);
  std::vector<const DatasetEntry*> conditions;
  for (int i = size - n; i < size; ++i) conditions.push_back(&data.entries[i]);
  const auto generated = generate_images(model.g, n, options.seed, conditions);
  json report = {{"checkpoint", model.path.string()},
                 {"step", model.step},
                 {"conditional", model.conditional()},
                 {"n_fid", n},
                 {"fid", fid(real, generated, extractor)},
                 {"noise_floor_fid", fid(real, held_out, extractor)},
                 {"pose_error_px", nullptr},
                 {"color_errors", nullptr},
                 {"body_type_table", nullptr}};
  if (model.conditional()) {
    DatasetConfig sampling = data.config;
    const FidelityReport f =
        evaluate_conditional_fidelity(generator_source(model.g, options.seed), options.n_fidelity, options.seed, sampling);
    report["pose_error_px"] = f.mean_pose_error_px;
    report["color_errors"] = f.color_error;
    report["fidelity"] = fidelity_to_json(f);
    report["random_pose_baseline_px"] = random_pose_baseline(options.n_fidelity, options.seed, sampling);
    Rng rng(options.seed);
    const OutfitSpec outfit = sample_outfit(rng, 1.0);
    report["body_type_table"] = body_type_to_json(body_type_consistency(
        generator_source(model.g, options.seed), outfit, options.body_trials, options.seed, model.config.height(),
        model.config.width()));
  }
  return report;
}

json assignment_to_json(const LayerStyleAssignment& a) {
  json src = json::array(), tgt = json::array();
  for (int i = 0; i < a.total_layers(); ++i) {
    (a.layers[i] == StyleSource::Source ? src : tgt).push_back(i + 1);
  }
  return {{"total_layers", a.total_layers()}, {"source", src}, {"target", tgt}};
}

}  // namespace stylecond
