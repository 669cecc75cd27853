#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "stylecond/evaluation.hpp"
#include "stylecond/generator.hpp"
#include "stylecond/training.hpp"

namespace stylecond {

/// The EMA generator of a checkpoint, ready for sampling.
struct Model {
  std::filesystem::path path;
  SynthesisConfig config;
  std::int64_t step = 0;
  Generator g{nullptr};

  bool conditional() const { return config.conditional; }
};

std::shared_ptr<Model> load_model(const std::filesystem::path& checkpoint);
std::shared_ptr<Model> model_from_state(const TrainState& state, const std::filesystem::path& path = {});

/// Condition paired with sample `index` of `seed` in conditional models: the
/// (outfit, pose) the dataset sampler draws for that index.
std::pair<OutfitSpec, PoseSpec> sample_condition(const Model& model, std::uint64_t seed, int index);

/// n images; image i uses the latent stream derived from (seed, i), so a
/// sample does not depend on n.
std::vector<ImageTensor> sample_images(Model& model, std::uint64_t seed, int n);

/// Style vector of sample 0 of `seed`.
torch::Tensor sample_style(Model& model, std::uint64_t seed);

struct MixResult {
  ImageTensor source, target, mixed;
  LayerStyleAssignment assignment;
};

MixResult mix_images(Model& model, std::uint64_t seed_source, std::uint64_t seed_target,
                     const LayerStyleAssignment& assignment);

/// Throws ModeError on an unconditional model.
ImageTensor generate_image(Model& model, const OutfitSpec& outfit, const PoseSpec& pose, std::uint64_t seed);

struct EvalOptions {
  int n_fid = 1000;        // images per FID set (capped at half the dataset)
  int n_fidelity = 200;    // conditional fidelity samples
  int body_trials = 50;
  std::uint64_t seed = 1234;
};

/// {fid, noise_floor_fid, pose_error_px, color_errors[6], body_type_table,
/// ...}. Real images are the first half of `data`; the noise floor compares
/// the two halves; conditional models draw their conditions from the second
/// half. Fidelity fields are null for unconditional models.
json evaluation_report(Model& model, const Dataset& data, const EvalOptions& options = {});

/// {"total_layers":L,"source":[...],"target":[...]} with 1-based layer indices.
json assignment_to_json(const LayerStyleAssignment& a);

}  // namespace stylecond
