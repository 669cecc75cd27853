#include <fstream>
#include <iostream>
#include <regex>

#include "stylecond/errors.hpp"
#include "stylecond/inference.hpp"
#include "stylecond/png_io.hpp"
#include "stylecond/presets.hpp"
#include "stylecond/service.hpp"

// After Eigen: <resolv.h> defines a `_res` macro.
#include <CLI11.hpp>
#include <httplib.h>

using namespace stylecond;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kInvalid = 3, kRuntime = 4 };

json read_json_file(const std::string& path, const std::string& field) {
  std::ifstream in(path);
  if (!in) throw ValidationError(field, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(field, path + " is not valid JSON: " + e.what());
  }
}

std::pair<int, int> parse_resolution(const std::string& s) {
  static const std::regex re(R"((\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw ValidationError("res", "expected HxW, e.g. 64x48");
  const int h = std::stoi(m[1]), w = std::stoi(m[2]);
  for (int level = 1; level <= 9; ++level) {
    if (h == (4 << (level - 1)) && w == (3 << (level - 1))) return {h, w};
  }
  throw ValidationError("res", "must be (4, 3) * 2^k with k in [0, 8]");
}

int levels_for(int h) {
  for (int level = 1; level <= 9; ++level) {
    if (h == (4 << (level - 1))) return level;
  }
  throw ValidationError("resolution", "unsupported height " + std::to_string(h));
}

std::shared_ptr<Model> require_model(const std::string& ckpt) {
  if (ckpt.empty()) throw ValidationError("ckpt", "no checkpoint given (use --ckpt or STYLECOND_CKPT)");
  return load_model(ckpt);
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional style-based outfit generator"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Render the synthetic outfit dataset");
  DatasetConfig data_cfg;
  std::string res = "64x48", synth_out;
  synth->add_option("--n", data_cfg.n, "Number of entries")->check(CLI::PositiveNumber);
  synth->add_option("--seed", data_cfg.seed, "Dataset seed");
  synth->add_option("--res", res, "Model image resolution HxW");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a model on a dataset directory");
  std::string config_path, data_dir, train_out, resume;
  bool conditional = false;
  std::int64_t steps = 0;
  int checkpoint_every = 0;
  train->add_option("--config", config_path, "JSON with optional synthesis, discriminator and train sections");
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_flag("--conditional", conditional, "Train the conditional model");
  train->add_option("--steps", steps, "Override train.total_steps");
  train->add_option("--checkpoint-every", checkpoint_every, "Also write checkpoint_<step>.ckpt every N steps");
  train->add_option("--resume", resume, "Continue from a checkpoint");

  // sample
  auto* sample = app.add_subcommand("sample", "Sample a PNG grid");
  std::string ckpt, out;
  std::uint64_t seed = 0;
  int n = 1;
  sample->add_option("--ckpt", ckpt, "Checkpoint")->envname("STYLECOND_CKPT");
  sample->add_option("--seed", seed, "Sampling seed");
  sample->add_option("--n", n, "Number of images")->check(CLI::PositiveNumber);
  sample->add_option("--out", out, "Output PNG")->required();

  // mix
  auto* mix = app.add_subcommand("mix", "Style-mix two samples into a (source, target, mixed) triptych");
  std::uint64_t seed_a = 0, seed_b = 1;
  std::string preset = "color_transfer";
  mix->add_option("--ckpt", ckpt, "Checkpoint")->envname("STYLECOND_CKPT");
  mix->add_option("--seed-a", seed_a, "Source seed");
  mix->add_option("--seed-b", seed_b, "Target seed");
  mix->add_option("--preset", preset, "color_transfer or pose_transfer");
  mix->add_option("--out", out, "Output PNG")->required();

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a model image for an outfit and pose");
  std::string outfit_path, pose_arg;
  gen->add_option("--ckpt", ckpt, "Checkpoint")->envname("STYLECOND_CKPT");
  gen->add_option("--outfit", outfit_path, "OutfitSpec JSON file")->required();
  gen->add_option("--pose", pose_arg, "PoseSpec JSON file or preset name")->required();
  gen->add_option("--seed", seed, "Latent seed");
  gen->add_option("--out", out, "Output PNG")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "FID and conditional fidelity report");
  EvalOptions eval_opts;
  eval->add_option("--ckpt", ckpt, "Checkpoint")->envname("STYLECOND_CKPT");
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--out", out, "Report JSON")->required();
  eval->add_option("--n-fid", eval_opts.n_fid, "Images per FID set")->check(CLI::PositiveNumber);
  eval->add_option("--n-fidelity", eval_opts.n_fidelity, "Fidelity samples")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_opts.seed, "Evaluation seed");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP inference service");
  int port = 8080;
  std::string host = "127.0.0.1", static_dir;
  serve->add_option("--ckpt", ckpt, "Checkpoint")->envname("STYLECOND_CKPT");
  serve->add_option("--port", port, "Port");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--static-dir", static_dir, "Directory served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) {
      std::tie(data_cfg.model_height, data_cfg.model_width) = parse_resolution(res);
      build_dataset(data_cfg, synth_out);
      std::cout << "wrote " << data_cfg.n << " entries to " << synth_out << '\n';
    } else if (*train) {
      const Dataset data = load_dataset(data_dir);
      TrainState state;
      if (!resume.empty()) {
        state = load_checkpoint(resume);
      } else {
        json cfg = config_path.empty() ? json::object() : read_json_file(config_path, "config");
        SynthesisConfig g = cfg.contains("synthesis") ? config_from_json(cfg["synthesis"]) : SynthesisConfig{};
        g.num_levels = levels_for(data.config.model_height);
        if (conditional) g.conditional = true;
        g.validate();
        DiscriminatorConfig d = discriminator_config_for(g);
        if (cfg.contains("discriminator")) {
          json dj = discriminator_config_to_json(d);
          dj.update(cfg["discriminator"]);
          d = discriminator_config_from_json(dj);
          d.num_levels = g.num_levels;
          d.conditional = g.conditional;
        }
        const TrainConfig t = cfg.contains("train") ? train_config_from_json(cfg["train"]) : TrainConfig{};
        state = make_train_state(g, d, t);
      }
      if (data.config.model_height != state.g_config.height() || data.config.model_width != state.g_config.width()) {
        throw ValidationError("data", "dataset resolution does not match the model");
      }
      std::filesystem::create_directories(train_out);
      std::ofstream metrics(std::filesystem::path(train_out) / "metrics.jsonl", std::ios::app);
      RunOptions opts;
      opts.steps = steps > 0 ? steps - state.step : 0;
      if (steps > 0 && opts.steps <= 0) throw ValidationError("steps", "checkpoint is already past --steps");
      opts.metrics = &metrics;
      opts.checkpoint_every = checkpoint_every;
      opts.on_checkpoint = [&](const TrainState& s) {
        save_checkpoint(s, std::filesystem::path(train_out) / ("checkpoint_" + std::to_string(s.step) + ".ckpt"));
      };
      run_training(state, data, opts);
      const auto final_path = std::filesystem::path(train_out) / "checkpoint.ckpt";
      save_checkpoint(state, final_path);
      std::cout << "step " << state.step << ", checkpoint " << final_path.string() << '\n';
    } else if (*sample) {
      auto model = require_model(ckpt);
      write_png(tile_images(sample_images(*model, seed, n), std::min(n, 8)), out);
    } else if (*mix) {
      auto model = require_model(ckpt);
      const auto assignment = preset_assignment(parse_preset(preset), model->config.total_layers());
      const MixResult r = mix_images(*model, seed_a, seed_b, assignment);
      write_png(tile_images({r.source, r.target, r.mixed}, 3), out);
      std::cout << assignment_to_json(assignment).dump() << '\n';
    } else if (*gen) {
      const json outfit_json = read_json_file(outfit_path, "outfit");
      const OutfitSpec outfit = [&] {
        try {
          return outfit_from_json(outfit_json);
        } catch (const ValidationError& e) {
          throw e.nested("outfit");
        }
      }();
      PoseSpec pose;
      if (auto p = find_pose_preset(pose_arg)) {
        pose = *p;
      } else {
        const json pose_json = read_json_file(pose_arg, "pose");
        try {
          pose = pose_from_json(pose_json);
        } catch (const ValidationError& e) {
          throw e.nested("pose");
        }
      }
      auto model = require_model(ckpt);
      write_png(generate_image(*model, outfit, pose, seed), out);
    } else if (*eval) {
      auto model = require_model(ckpt);
      const json report = evaluation_report(*model, load_dataset(data_dir), eval_opts);
      write_json(report, out);
      std::cout << report.dump() << '\n';
    } else if (*serve) {
      Service service(ckpt.empty() ? nullptr : load_model(ckpt));
      httplib::Server server;
      mount_routes(server, service, static_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(static_dir));
      std::cerr << "listening on " << host << ":" << port << '\n';
      if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const ModeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
