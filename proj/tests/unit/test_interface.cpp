#include <doctest.h>

#include <thread>

#include "stylecond/dataset.hpp"
#include "stylecond/errors.hpp"
#include "stylecond/inference.hpp"
#include "stylecond/json_io.hpp"
#include "stylecond/png_io.hpp"
#include "stylecond/presets.hpp"
#include "stylecond/service.hpp"
#include "test_support.hpp"

// After Eigen: <resolv.h> defines a `_res` macro.
#include <httplib.h>

using namespace stylecond;
using namespace stylecond::testing;

namespace {

std::shared_ptr<Model> tiny_model(bool conditional, int num_levels) {
  SynthesisConfig g = tiny_generator_config(conditional);
  g.num_levels = num_levels;
  TrainConfig t;
  t.batch_size = 2;
  return model_from_state(make_train_state(g, tiny_discriminator_config(g), t), "tiny.ckpt");
}

json sample_outfit_json() {
  DatasetConfig cfg;
  cfg.occupancy_prob = 1.0;
  return outfit_to_json(sample_pair(cfg, 0).first);
}

json generate_body(std::uint64_t seed) {
  return {{"outfit", sample_outfit_json()}, {"pose", "standing"}, {"seed", seed}};
}

std::string header(const Response& r, const std::string& name) {
  for (const auto& [k, v] : r.headers) {
    if (k == name) return v;
  }
  return "";
}

}  // namespace

TEST_CASE("png encode and decode round trip 8-bit values") {
  Rng rng(5);
  ImageTensor img(3, 8, 6);
  for (auto& v : img.data) v = static_cast<float>(std::floor(rng.uniform() * 256) / 255.0);
  const auto bytes = encode_png(img);
  CHECK(bytes.size() > 8);
  CHECK(bytes[1] == 'P');
  const ImageTensor back = decode_png(bytes);
  REQUIRE(back.same_shape(img));
  double err = 0;
  for (std::size_t i = 0; i < img.data.size(); ++i) err = std::max(err, double(std::abs(back.data[i] - img.data[i])));
  CHECK(err < 1e-5);
  CHECK(encode_png(img) == bytes);
}

TEST_CASE("decode_png rejects garbage") {
  CHECK_THROWS_AS(decode_png({1, 2, 3, 4}), FormatError);
}

TEST_CASE("tile_images lays out a grid with gaps") {
  const ImageTensor a(3, 4, 3, 0.f), b(3, 4, 3, 0.f), c(3, 4, 3, 0.f);
  const ImageTensor t = tile_images({a, b, c}, 2, 2);
  CHECK(t.height == 4 * 2 + 2);
  CHECK(t.width == 3 * 2 + 2);
  CHECK(t.at(0, 0, 3) == doctest::Approx(1.0));
  CHECK(t.at(0, 0, 0) == doctest::Approx(0.0));
}

TEST_CASE("pose presets are valid and sorted") {
  const auto& presets = pose_presets();
  REQUIRE(presets.size() >= 4);
  for (std::size_t i = 0; i < presets.size(); ++i) {
    CHECK_NOTHROW(validate(presets[i].second));
    if (i > 0) CHECK(presets[i - 1].first < presets[i].first);
  }
  CHECK(find_pose_preset("standing").has_value());
  CHECK_FALSE(find_pose_preset("handstand").has_value());
  const json j = poses_json();
  CHECK(j["presets"].size() == presets.size());
  CHECK(pose_from_json(j["presets"][0]["pose"]) == presets[0].second);
}

TEST_CASE("catalog lists every slot with its shape and texture ids") {
  const json c = catalog_json();
  REQUIRE(c["categories"].size() == kNumSlots);
  for (int s = 0; s < kNumSlots; ++s) {
    CHECK(c["categories"][s]["category"] == std::string(kCategoryNames[s]));
    CHECK(c["categories"][s]["shape_ids"].size() == std::size_t(kShapeCounts[s]));
    CHECK(c["categories"][s]["texture_ids"].size() == std::size_t(kNumTextures));
  }
  CHECK(c["colors"].size() == color_catalog().size());
}

TEST_CASE("generate request round trips and names bad fields") {
  const GenerateRequest r = parse_generate_request(generate_body(7));
  CHECK(r.seed == 7);
  CHECK(r.pose == *find_pose_preset("standing"));
  CHECK(parse_generate_request(generate_request_to_json(r)).outfit == r.outfit);

  json bad = generate_body(7);
  bad["outfit"]["slots"].push_back(nullptr);
  try {
    parse_generate_request(bad);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.field()).rfind("outfit.slots", 0) == 0);
  }
  json extra = generate_body(1);
  extra["sneaky"] = 1;
  CHECK_THROWS_AS(parse_generate_request(extra), ValidationError);
  json neg = generate_body(1);
  neg["seed"] = -3;
  CHECK_THROWS_AS(parse_generate_request(neg), ValidationError);
  json unknown_pose = generate_body(1);
  unknown_pose["pose"] = "handstand";
  CHECK_THROWS_AS(parse_generate_request(unknown_pose), ValidationError);
}

TEST_CASE("mix request resolves presets and explicit ranges") {
  const MixRequest p = parse_mix_request({{"seed_source", 1}, {"seed_target", 2}, {"preset", "pose_transfer"}});
  CHECK(parse_mix_request(mix_request_to_json(p)).preset == p.preset);
  const auto a = resolve_assignment(p, 10);
  CHECK(a == preset_assignment(MixPreset::PoseTransfer, 10));

  const MixRequest r = parse_mix_request(
      {{"seed_source", 1}, {"seed_target", 2}, {"source_ranges", {{13, 18}}}, {"target_ranges", {{1, 12}}}});
  CHECK(resolve_assignment(r, 18) == preset_assignment(MixPreset::ColorTransfer, 18));
  CHECK_THROWS_AS(parse_mix_request({{"seed_source", 1}, {"seed_target", 2}}), ValidationError);
  CHECK_THROWS_AS(resolve_assignment(parse_mix_request({{"seed_source", 1},
                                                        {"seed_target", 2},
                                                        {"source_ranges", {{1, 3}}},
                                                        {"target_ranges", {{5, 18}}}}),
                                     18),
                  ValidationError);
}

TEST_CASE("service without a model answers 503 except for static data") {
  Service s;
  CHECK(s.health().status == 503);
  CHECK(s.catalog().status == 200);
  CHECK(s.poses().status == 200);
  CHECK(s.generate(generate_body(1).dump()).status == 503);
}

TEST_CASE("service generate is deterministic and validates input") {
  Service s(tiny_model(true, 2));
  const Response h = s.health();
  CHECK(h.status == 200);
  CHECK(json::parse(h.body)["total_layers"] == 4);

  const Response a = s.generate(generate_body(11).dump());
  const Response b = s.generate(generate_body(11).dump());
  const Response c = s.generate(generate_body(12).dump());
  REQUIRE(a.status == 200);
  CHECK(a.content_type == "image/png");
  CHECK(a.body == b.body);
  CHECK(a.body != c.body);
  CHECK(header(a, "X-Seed") == "11");
  const ImageTensor img = decode_png({a.body.begin(), a.body.end()});
  CHECK(img.height == 8);
  CHECK(img.width == 6);

  json bad = generate_body(1);
  bad["outfit"]["slots"].push_back(nullptr);
  const Response e = s.generate(bad.dump());
  CHECK(e.status == 400);
  CHECK(json::parse(e.body)["field"].get<std::string>().rfind("outfit.slots", 0) == 0);
  CHECK(s.generate("{not json").status == 400);

  json other = generate_body(1);
  other["checkpoint"] = "elsewhere.ckpt";
  CHECK(s.generate(other.dump()).status == 400);
  other["checkpoint"] = "tiny.ckpt";
  CHECK(s.generate(other.dump()).status == 200);
}

TEST_CASE("service generate on an unconditional model is a 409") {
  Service s(tiny_model(false, 1));
  CHECK(s.generate(generate_body(1).dump()).status == 409);
}

TEST_CASE("service mix reports the remapped assignment on a 10-layer model") {
  Service s(tiny_model(false, 5));
  const Response r = s.mix(json{{"seed_source", 1}, {"seed_target", 2}, {"preset", "pose_transfer"}}.dump());
  REQUIRE(r.status == 200);
  const json a = json::parse(header(r, "X-Assignment"));
  CHECK(a["total_layers"] == 10);
  CHECK(a["source"] == json::array({1, 2}));
  CHECK(a["target"] == json::array({3, 4, 5, 6, 7, 8, 9, 10}));

  const Response c = s.mix(json{{"seed_source", 1}, {"seed_target", 2}, {"preset", "color_transfer"}}.dump());
  REQUIRE(c.status == 200);
  CHECK(json::parse(header(c, "X-Assignment"))["source"] == json::array({8, 9, 10}));
  const ImageTensor img = decode_png({c.body.begin(), c.body.end()});
  CHECK(img.height == 64);
  CHECK(img.width == 3 * 48 + 2 * 2);
}

TEST_CASE("mixing with equal seeds reproduces the plain sample") {
  auto m = tiny_model(false, 2);
  const MixResult r = mix_images(*m, 3, 3, preset_assignment(MixPreset::ColorTransfer, 4));
  CHECK(r.mixed == r.source);
  CHECK(r.mixed == r.target);
}

TEST_CASE("samples do not depend on the batch size") {
  auto m = tiny_model(false, 2);
  const auto three = sample_images(*m, 9, 3);
  const auto one = sample_images(*m, 9, 1);
  CHECK(three[0] == one[0]);
  CHECK_FALSE(three[0] == three[1]);
}

TEST_CASE("http server serves the routes") {
  Service s(tiny_model(true, 2));
  httplib::Server server;
  mount_routes(server, s);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  auto poses = client.Get("/poses");
  REQUIRE(poses);
  CHECK(json::parse(poses->body)["presets"].size() == pose_presets().size());

  auto a = client.Post("/generate", generate_body(4).dump(), "application/json");
  auto b = client.Post("/generate", generate_body(4).dump(), "application/json");
  REQUIRE(a);
  REQUIRE(b);
  CHECK(a->status == 200);
  CHECK(a->get_header_value("Content-Type") == "image/png");
  CHECK(a->body == b->body);

  json bad = generate_body(4);
  bad["outfit"]["slots"].push_back(nullptr);
  auto e = client.Post("/generate", bad.dump(), "application/json");
  REQUIRE(e);
  CHECK(e->status == 400);

  server.stop();
  t.join();
}
