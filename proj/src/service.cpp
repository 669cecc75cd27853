#include "stylecond/service.hpp"

#include <httplib.h>

#include <mutex>

#include "stylecond/errors.hpp"
#include "stylecond/png_io.hpp"
#include "stylecond/presets.hpp"

namespace stylecond {

namespace {

const json& member(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ValidationError(key, "missing field");
  return *it;
}

std::uint64_t seed_at(const json& j, const char* key) {
  const json& v = member(j, key);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw ValidationError(key, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::optional<std::string> checkpoint_at(const json& j) {
  const auto it = j.find("checkpoint");
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ValidationError("checkpoint", "expected a string");
  return it->get<std::string>();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError(key, "unknown field");
  }
}

std::vector<LayerRange> ranges_at(const json& j, const char* key) {
  const json& v = member(j, key);
  if (!v.is_array()) throw ValidationError(key, "expected [[lo,hi],...]");
  std::vector<LayerRange> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string f = std::string(key) + "[" + std::to_string(i) + "]";
    const json& r = v[i];
    if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() || !r[1].is_number_integer()) {
      throw ValidationError(f, "expected [lo,hi]");
    }
    out.push_back({r[0].get<int>(), r[1].get<int>()});
  }
  return out;
}

json ranges_to_json(const std::vector<LayerRange>& rs) {
  json out = json::array();
  for (const auto& r : rs) out.push_back({r.lo, r.hi});
  return out;
}

Response json_response(int status, const json& body) {
  Response r;
  r.status = status;
  r.body = body.dump();
  return r;
}

Response error_response(int status, const std::string& message, const std::string& field = "") {
  json body = {{"error", message}};
  if (!field.empty()) body["field"] = field;
  return json_response(status, body);
}

Response png_response(const ImageTensor& img) {
  Response r;
  r.content_type = "image/png";
  const auto bytes = encode_png(img);
  r.body.assign(bytes.begin(), bytes.end());
  return r;
}

void check_checkpoint(const std::optional<std::string>& requested, const Model& m) {
  if (requested && std::filesystem::path(*requested) != m.path) {
    throw ValidationError("checkpoint", "this server has " + m.path.string() + " loaded");
  }
}

template <typename F>
Response guarded(F&& f) {
  try {
    return f();
  } catch (const ValidationError& e) {
    return error_response(400, e.what(), e.field());
  } catch (const json::exception& e) {
    return error_response(400, std::string("invalid JSON: ") + e.what());
  } catch (const ModeError& e) {
    return error_response(409, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

}  // namespace

GenerateRequest parse_generate_request(const json& j) {
  if (!j.is_object()) throw ValidationError("request", "expected a JSON object");
  check_keys(j, {"outfit", "pose", "seed", "checkpoint"});
  GenerateRequest r;
  try {
    r.outfit = outfit_from_json(member(j, "outfit"));
  } catch (const ValidationError& e) {
    throw e.nested("outfit");
  }
  const json& pose = member(j, "pose");
  if (pose.is_string()) {
    const auto preset = find_pose_preset(pose.get<std::string>());
    if (!preset) throw ValidationError("pose", "unknown preset '" + pose.get<std::string>() + "'");
    r.pose = *preset;
  } else {
    try {
      r.pose = pose_from_json(pose);
    } catch (const ValidationError& e) {
      throw e.nested("pose");
    }
  }
  r.seed = seed_at(j, "seed");
  r.checkpoint = checkpoint_at(j);
  return r;
}

json generate_request_to_json(const GenerateRequest& r) {
  json j = {{"outfit", outfit_to_json(r.outfit)}, {"pose", pose_to_json(r.pose)}, {"seed", r.seed}};
  if (r.checkpoint) j["checkpoint"] = *r.checkpoint;
  return j;
}

MixRequest parse_mix_request(const json& j) {
  if (!j.is_object()) throw ValidationError("request", "expected a JSON object");
  check_keys(j, {"seed_source", "seed_target", "preset", "source_ranges", "target_ranges", "checkpoint"});
  MixRequest r;
  r.seed_source = seed_at(j, "seed_source");
  r.seed_target = seed_at(j, "seed_target");
  const bool has_preset = j.contains("preset");
  const bool has_ranges = j.contains("source_ranges") || j.contains("target_ranges");
  if (has_preset == has_ranges) {
    throw ValidationError("preset", "give either a preset or source_ranges and target_ranges");
  }
  if (has_preset) {
    const json& p = j.at("preset");
    if (!p.is_string()) throw ValidationError("preset", "expected a string");
    r.preset = parse_preset(p.get<std::string>());
  } else {
    r.source_ranges = ranges_at(j, "source_ranges");
    r.target_ranges = ranges_at(j, "target_ranges");
  }
  r.checkpoint = checkpoint_at(j);
  return r;
}

json mix_request_to_json(const MixRequest& r) {
  json j = {{"seed_source", r.seed_source}, {"seed_target", r.seed_target}};
  if (r.preset) {
    j["preset"] = std::string(preset_name(*r.preset));
  } else {
    j["source_ranges"] = ranges_to_json(r.source_ranges);
    j["target_ranges"] = ranges_to_json(r.target_ranges);
  }
  if (r.checkpoint) j["checkpoint"] = *r.checkpoint;
  return j;
}

LayerStyleAssignment resolve_assignment(const MixRequest& r, int total_layers) {
  if (r.preset) return preset_assignment(*r.preset, total_layers);
  return assignment_from_ranges(r.source_ranges, r.target_ranges, total_layers);
}

Service::Service(std::shared_ptr<Model> model) : model_(std::move(model)) {}

void Service::load(const std::filesystem::path& checkpoint) {
  auto m = load_model(checkpoint);
  std::unique_lock lock(mutex_);
  model_ = std::move(m);
}

void Service::set_model(std::shared_ptr<Model> model) {
  std::unique_lock lock(mutex_);
  model_ = std::move(model);
}

Response Service::health() {
  std::shared_lock lock(mutex_);
  if (!model_) return json_response(503, {{"status", "unavailable"}, {"error", "no checkpoint loaded"}});
  return json_response(200, {{"status", "ok"},
                             {"checkpoint", model_->path.string()},
                             {"resolution", {model_->config.height(), model_->config.width()}},
                             {"conditional", model_->conditional()},
                             {"total_layers", model_->config.total_layers()},
                             {"step", model_->step}});
}

Response Service::catalog() { return json_response(200, catalog_json()); }

Response Service::poses() { return json_response(200, poses_json()); }

Response Service::generate(const std::string& body) {
  return guarded([&] {
    const GenerateRequest req = parse_generate_request(json::parse(body));
    std::shared_lock lock(mutex_);
    if (!model_) return error_response(503, "no checkpoint loaded");
    check_checkpoint(req.checkpoint, *model_);
    Response r = png_response(generate_image(*model_, req.outfit, req.pose, req.seed));
    r.headers.emplace_back("X-Seed", std::to_string(req.seed));
    return r;
  });
}

Response Service::mix(const std::string& body) {
  return guarded([&] {
    const MixRequest req = parse_mix_request(json::parse(body));
    std::shared_lock lock(mutex_);
    if (!model_) return error_response(503, "no checkpoint loaded");
    check_checkpoint(req.checkpoint, *model_);
    const auto assignment = resolve_assignment(req, model_->config.total_layers());
    const MixResult m = mix_images(*model_, req.seed_source, req.seed_target, assignment);
    Response r = png_response(tile_images({m.source, m.target, m.mixed}, 3));
    r.headers.emplace_back("X-Assignment", assignment_to_json(assignment).dump());
    return r;
  });
}

void mount_routes(httplib::Server& server, Service& service, const std::optional<std::filesystem::path>& static_dir) {
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    res.set_content(r.body, r.content_type);
  };
  server.Get("/health", [&service, send](const httplib::Request&, httplib::Response& res) { send(res, service.health()); });
  server.Get("/catalog", [&service, send](const httplib::Request&, httplib::Response& res) { send(res, service.catalog()); });
  server.Get("/poses", [&service, send](const httplib::Request&, httplib::Response& res) { send(res, service.poses()); });
  server.Post("/generate", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.generate(req.body));
  });
  server.Post("/mix", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.mix(req.body));
  });
  if (static_dir) server.set_mount_point("/", static_dir->string());
}

}  // namespace stylecond
