#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "stylecond/inference.hpp"

namespace httplib {
class Server;
}

namespace stylecond {

struct GenerateRequest {
  OutfitSpec outfit;
  PoseSpec pose;
  std::uint64_t seed = 0;
  std::optional<std::string> checkpoint;
};

struct MixRequest {
  std::uint64_t seed_source = 0, seed_target = 0;
  std::optional<MixPreset> preset;
  std::vector<LayerRange> source_ranges, target_ranges;  // canonical 18-layer indexing
  std::optional<std::string> checkpoint;
};

/// {"outfit":OutfitSpec,"pose":PoseSpec | preset name,"seed":n[,"checkpoint":path]}
GenerateRequest parse_generate_request(const json& j);
json generate_request_to_json(const GenerateRequest& r);

/// {"seed_source":n,"seed_target":n,"preset":name} or with
/// "source_ranges"/"target_ranges": [[lo,hi],...] instead of "preset".
MixRequest parse_mix_request(const json& j);
json mix_request_to_json(const MixRequest& r);

/// Resolves a request to a per-layer partition for `total_layers` layers.
LayerStyleAssignment resolve_assignment(const MixRequest& r, int total_layers);

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
};

/// Request handlers over one loaded checkpoint. Handlers take a shared lock;
/// loading takes an exclusive one.
class Service {
 public:
  explicit Service(std::shared_ptr<Model> model = nullptr);

  void load(const std::filesystem::path& checkpoint);
  void set_model(std::shared_ptr<Model> model);

  Response health();
  Response catalog();
  Response poses();
  Response generate(const std::string& body);
  Response mix(const std::string& body);

 private:
  std::shared_mutex mutex_;
  std::shared_ptr<Model> model_;
};

/// Routes GET /health, /catalog, /poses and POST /generate, /mix, plus static
/// files from `static_dir` when given.
void mount_routes(httplib::Server& server, Service& service,
                  const std::optional<std::filesystem::path>& static_dir = std::nullopt);

}  // namespace stylecond
