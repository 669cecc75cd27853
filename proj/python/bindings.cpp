#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>

#include "stylecond/dataset.hpp"
#include "stylecond/errors.hpp"
#include "stylecond/evaluation.hpp"
#include "stylecond/inference.hpp"
#include "stylecond/json_io.hpp"
#include "stylecond/png_io.hpp"
#include "stylecond/presets.hpp"
#include "stylecond/service.hpp"
#include "stylecond/training.hpp"

namespace py = pybind11;
using namespace py::literals;
using namespace stylecond;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

json to_json(const py::handle& obj) {
  const std::string text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return json::parse(text);
}

py::object from_json(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

FloatArray to_array(const ImageTensor& img) {
  FloatArray a({img.channels, img.height, img.width});
  std::copy(img.data.begin(), img.data.end(), a.mutable_data());
  return a;
}

ImageTensor from_array(const FloatArray& a) {
  if (a.ndim() != 3) throw ValidationError("image", "expected a (channels, height, width) array");
  ImageTensor img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

PoseSpec pose_arg(const py::object& pose) {
  if (py::isinstance<py::str>(pose)) {
    const auto name = pose.cast<std::string>();
    if (auto p = find_pose_preset(name)) return *p;
    throw ValidationError("pose", "unknown preset '" + name + "'");
  }
  return pose_from_json(to_json(pose));
}

DatasetConfig dataset_config(std::uint64_t seed, int n, int height, int width) {
  DatasetConfig c;
  c.seed = seed;
  c.n = n;
  c.model_height = height;
  c.model_width = width;
  return c;
}

py::dict response_dict(const Response& r) {
  py::dict headers;
  for (const auto& [k, v] : r.headers) headers[py::str(k)] = v;
  return py::dict("status"_a = r.status, "content_type"_a = r.content_type, "body"_a = py::bytes(r.body),
                  "headers"_a = headers);
}

}  // namespace

PYBIND11_MODULE(_stylecond, m) {
  m.doc() = "Conditional style-based outfit generator";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ModeError>(m, "ModeError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);

  m.def(
      "render_reference",
      [](const py::object& outfit, const py::object& pose, int height, int width) {
        return to_array(render_reference(outfit_from_json(to_json(outfit)), pose_arg(pose), height, width));
      },
      "outfit"_a, "pose"_a, "height"_a = 64, "width"_a = 48,
      "Oracle render of an outfit on a pose as a (3, height, width) float array in [0, 1].");

  m.def(
      "measure_pose",
      [](const FloatArray& image) {
        const PoseMeasurement r = measure_pose(from_array(image));
        py::list peaks, confidence, detected;
        for (int j = 0; j < kNumJoints; ++j) {
          peaks.append(py::make_tuple(r.peak[j].x, r.peak[j].y));
          confidence.append(r.confidence[j]);
          detected.append(r.detected[j]);
        }
        return py::dict("pose"_a = from_json(pose_to_json(r.pose)), "peaks"_a = peaks, "confidence"_a = confidence,
                        "detected"_a = detected);
      },
      "image"_a, "Locates the 16 joint markers in a rendered image.");

  m.def(
      "make_entry",
      [](std::uint64_t seed, int index, int height, int width) {
        const DatasetEntry e = make_entry(dataset_config(seed, index + 1, height, width), index);
        py::list articles;
        for (const auto& a : e.article_images) articles.append(to_array(a));
        return py::dict("outfit"_a = from_json(outfit_to_json(e.outfit)), "pose"_a = from_json(pose_to_json(e.pose)),
                        "image"_a = to_array(e.model_image), "articles"_a = articles);
      },
      "seed"_a, "index"_a, "height"_a = 64, "width"_a = 48, "Dataset entry `index` of the dataset seeded by `seed`.");

  m.def(
      "write_dataset",
      [](const std::string& dir, int n, std::uint64_t seed, int height, int width) {
        py::gil_scoped_release release;
        build_dataset(dataset_config(seed, n, height, width), dir);
      },
      "dir"_a, "n"_a, "seed"_a = 1, "height"_a = 64, "width"_a = 48);

  m.def(
      "frechet_distance",
      [](const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
         const Eigen::MatrixXd& cov2) {
        FeatureStats a{mu1, cov1, 2}, b{mu2, cov2, 2};
        return frechet_distance(a, b);
      },
      "mu1"_a, "cov1"_a, "mu2"_a, "cov2"_a);

  m.def(
      "random_pose_baseline", [](int n, std::uint64_t seed) { return random_pose_baseline(n, seed); }, "n"_a = 500,
      "seed"_a = 3, "Mean joint distance in pixels between independently sampled poses at 64x48.");

  m.def(
      "encode_png", [](const FloatArray& image) {
        const auto bytes = encode_png(from_array(image));
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      "image"_a);
  m.def(
      "decode_png", [](const py::bytes& data) {
        const std::string s = data;
        return to_array(decode_png({s.begin(), s.end()}));
      },
      "data"_a);

  m.def("pose_presets", [] {
    py::dict out;
    for (const auto& [name, pose] : pose_presets()) out[py::str(name)] = from_json(pose_to_json(pose));
    return out;
  });
  m.def("catalog", [] { return from_json(catalog_json()); });

  m.def(
      "new_checkpoint",
      [](const std::string& path, const py::object& synthesis, const py::object& discriminator,
         const py::object& train) {
        const SynthesisConfig g = config_from_json(synthesis.is_none() ? json::object() : to_json(synthesis));
        g.validate();
        DiscriminatorConfig d = discriminator_config_for(g);
        if (!discriminator.is_none()) {
          json dj = discriminator_config_to_json(d);
          dj.update(to_json(discriminator));
          d = discriminator_config_from_json(dj);
          d.num_levels = g.num_levels;
          d.conditional = g.conditional;
        }
        const TrainConfig t = train_config_from_json(train.is_none() ? json::object() : to_json(train));
        py::gil_scoped_release release;
        save_checkpoint(make_train_state(g, d, t), path);
      },
      "path"_a, "synthesis"_a = py::none(), "discriminator"_a = py::none(), "train"_a = py::none(),
      "Writes an untrained checkpoint for the given configuration sections.");

  m.def(
      "train",
      [](const std::string& checkpoint, const std::string& data_dir, std::int64_t steps, const std::string& out) {
        py::gil_scoped_release release;
        TrainState state = load_checkpoint(checkpoint);
        const Dataset data = load_dataset(data_dir);
        RunOptions opts;
        opts.steps = steps;
        run_training(state, data, opts);
        save_checkpoint(state, out);
        return state.step;
      },
      "checkpoint"_a, "data_dir"_a, "steps"_a, "out"_a,
      "Continues training from a checkpoint for `steps` steps and writes the result to `out`.");

  py::class_<Model, std::shared_ptr<Model>>(m, "Model")
      .def(py::init([](const std::string& path) { return load_model(path); }), "checkpoint"_a)
      .def_property_readonly("conditional", &Model::conditional)
      .def_property_readonly("step", [](const Model& self) { return self.step; })
      .def_property_readonly("total_layers", [](const Model& self) { return self.config.total_layers(); })
      .def_property_readonly("resolution",
                             [](const Model& self) { return py::make_tuple(self.config.height(), self.config.width()); })
      .def(
          "sample",
          [](Model& self, std::uint64_t seed, int n) {
            std::vector<ImageTensor> images;
            {
              py::gil_scoped_release release;
              images = sample_images(self, seed, n);
            }
            py::list out;
            for (const auto& img : images) out.append(to_array(img));
            return out;
          },
          "seed"_a = 0, "n"_a = 1)
      .def(
          "generate",
          [](Model& self, const py::object& outfit, const py::object& pose, std::uint64_t seed) {
            const OutfitSpec o = outfit_from_json(to_json(outfit));
            const PoseSpec p = pose_arg(pose);
            ImageTensor img;
            {
              py::gil_scoped_release release;
              img = generate_image(self, o, p, seed);
            }
            return to_array(img);
          },
          "outfit"_a, "pose"_a, "seed"_a = 0)
      .def(
          "mix",
          [](Model& self, std::uint64_t seed_source, std::uint64_t seed_target, const std::string& preset) {
            const auto assignment = preset_assignment(parse_preset(preset), self.config.total_layers());
            MixResult r;
            {
              py::gil_scoped_release release;
              r = mix_images(self, seed_source, seed_target, assignment);
            }
            return py::dict("source"_a = to_array(r.source), "target"_a = to_array(r.target),
                            "mixed"_a = to_array(r.mixed), "assignment"_a = from_json(assignment_to_json(assignment)));
          },
          "seed_source"_a, "seed_target"_a, "preset"_a = "color_transfer");

  py::class_<Service>(m, "Service")
      .def(py::init([](const std::optional<std::string>& checkpoint) {
             auto s = std::make_unique<Service>();
             if (checkpoint) s->load(*checkpoint);
             return s;
           }),
           "checkpoint"_a = py::none())
      .def("health", [](Service& s) { return response_dict(s.health()); })
      .def("catalog", [](Service& s) { return response_dict(s.catalog()); })
      .def("poses", [](Service& s) { return response_dict(s.poses()); })
      .def(
          "generate",
          [](Service& s, const std::string& body) {
            Response r;
            {
              py::gil_scoped_release release;
              r = s.generate(body);
            }
            return response_dict(r);
          },
          "body"_a)
      .def(
          "mix",
          [](Service& s, const std::string& body) {
            Response r;
            {
              py::gil_scoped_release release;
              r = s.mix(body);
            }
            return response_dict(r);
          },
          "body"_a);
}
