#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "stylecond/dataset.hpp"
#include "stylecond/errors.hpp"
#include "stylecond/json_io.hpp"
#include "stylecond/synth_data.hpp"

using namespace stylecond;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("stylecond_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

OutfitSpec single_top(Rgb color, int texture = 0) {
  OutfitSpec o;
  o.slots[0] = ArticleSpec{Category::Top, color, 0, texture};
  return o;
}

PoseSpec pose_for(std::uint64_t seed, double scale = 1.0, double build = 1.0) {
  Rng rng(seed);
  return sample_pose(rng, scale, build);
}

}  // namespace

TEST_CASE("sample_outfit occupancy extremes and determinism") {
  Rng a(7);
  const OutfitSpec full = sample_outfit(a, 1.0);
  for (int i = 0; i < kNumSlots; ++i) {
    REQUIRE(full.slots[i].has_value());
    CHECK(static_cast<int>(full.slots[i]->category) == i);
  }
  Rng b(7);
  const OutfitSpec empty = sample_outfit(b, 0.0);
  for (const auto& s : empty.slots) CHECK_FALSE(s.has_value());

  Rng c(42), d(42);
  CHECK(sample_outfit(c, 0.8) == sample_outfit(d, 0.8));
  Rng e(1);
  CHECK_THROWS_AS(sample_outfit(e, 1.5), ValidationError);
}

TEST_CASE("sample_pose determinism, containment and body scale") {
  CHECK(pose_for(1) == pose_for(1));

  const PoseSpec tall = pose_for(1, 1.2, 1.0);
  const PoseSpec small = pose_for(1, 0.8, 1.0);
  const double d_tall = pixel_distance(tall.keypoints[kThorax], tall.keypoints[kPelvis], 64, 48);
  const double d_small = pixel_distance(small.keypoints[kThorax], small.keypoints[kPelvis], 64, 48);
  CHECK(d_tall > d_small);

  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed);
    const double s = rng.uniform(0.8, 1.2), bw = rng.uniform(0.8, 1.2);
    const PoseSpec p = sample_pose(rng, s, bw);
    for (const auto& kp : p.keypoints) {
      CHECK(kp.x >= 0.05);
      CHECK(kp.x <= 0.95);
      CHECK(kp.y >= 0.05);
      CHECK(kp.y <= 0.95);
    }
    CHECK_NOTHROW(validate(p));
  }

  Rng rng(3);
  CHECK_THROWS_AS(sample_pose(rng, 2.0, 1.0), ValidationError);
  PoseLimits impossible;
  impossible.box_lo = 0.45;
  impossible.box_hi = 0.55;
  impossible.max_retries = 5;
  CHECK_THROWS_AS(sample_pose(rng, 1.0, 1.0, impossible), std::runtime_error);
}

TEST_CASE("render_article_image gray fill, modal color and determinism") {
  const ImageTensor gray = render_article_image(std::nullopt, 24, 18);
  CHECK(gray.channels == 3);
  CHECK(gray.height == 24);
  CHECK(gray.width == 18);
  for (float v : gray.data) CHECK(v == 0.5f);
  for (int h : {8, 16, 64}) {
    const ImageTensor g = render_article_image(std::nullopt, h, h * 3 / 4);
    CHECK(std::all_of(g.data.begin(), g.data.end(), [](float v) { return v == 0.5f; }));
  }

  const ArticleSpec red{Category::Top, {1, 0, 0}, 0, 0};
  const ImageTensor img = render_article_image(red, 24, 18);
  std::map<std::array<float, 3>, int> hist;
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 18; ++x) {
      const std::array<float, 3> c = {img.at(0, y, x), img.at(1, y, x), img.at(2, y, x)};
      if (c != std::array<float, 3>{1, 1, 1}) ++hist[c];
    }
  }
  REQUIRE_FALSE(hist.empty());
  const auto modal = std::max_element(hist.begin(), hist.end(),
                                      [](auto& a, auto& b) { return a.second < b.second; });
  CHECK(modal->first == std::array<float, 3>{1, 0, 0});
  CHECK(render_article_image(red, 24, 18) == img);

  CHECK_THROWS_AS(render_article_image(red, 24, 24), ValidationError);
  CHECK_THROWS_AS(render_article_image(red, 3, 2), ValidationError);
}

TEST_CASE("render_reference: empty outfit, determinism, garment locality") {
  const PoseSpec pose = pose_for(11);
  const ImageTensor body = render_reference(OutfitSpec{}, pose, 64, 48);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 48; ++x) {
      const Rgb px{body.at(0, y, x), body.at(1, y, x), body.at(2, y, x)};
      for (const Rgb& c : color_catalog()) {
        CHECK_FALSE(px == Rgb{static_cast<float>(c.r), static_cast<float>(c.g), static_cast<float>(c.b)});
      }
    }
  }

  Rng rng(5);
  const OutfitSpec outfit = sample_outfit(rng, 0.8);
  CHECK(render_reference(outfit, pose, 64, 48) == render_reference(outfit, pose, 64, 48));

  const ImageTensor red = render_reference(single_top({1, 0, 0}), pose, 64, 48);
  const ImageTensor blue = render_reference(single_top({0, 0, 1}), pose, 64, 48);
  const RegionMask torso = garment_region(single_top({1, 0, 0}), pose, Category::Top, 64, 48);
  int inside_diff = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 48; ++x) {
      const bool differs = red.at(0, y, x) != blue.at(0, y, x) || red.at(2, y, x) != blue.at(2, y, x);
      const bool in_region = torso[static_cast<std::size_t>(y) * 48 + x] != 0;
      CHECK(differs == in_region);
      inside_diff += differs;
    }
  }
  CHECK(inside_diff > 0);
}

TEST_CASE("garment locality holds for every slot over random outfits") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    OutfitSpec outfit = sample_outfit(rng, 1.0);
    const PoseSpec pose = sample_pose(rng, rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2));
    const int slot = static_cast<int>(rng.uniform_int(0, kNumSlots - 1));
    const ImageTensor before = render_reference(outfit, pose, 64, 48);
    const RegionMask region = garment_region(outfit, pose, static_cast<Category>(slot), 64, 48);
    outfit.slots[slot]->base_color = {0.5, 0.25, 0.75};
    const ImageTensor after = render_reference(outfit, pose, 64, 48);
    for (std::size_t i = 0; i < region.size(); ++i) {
      const bool changed = before.data[i] != after.data[i] ||
                           before.data[i + region.size()] != after.data[i + region.size()] ||
                           before.data[i + 2 * region.size()] != after.data[i + 2 * region.size()];
      if (changed) CHECK(region[i] == 1);
    }
  }
}

TEST_CASE("measure_pose recovers rendered keypoints") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const OutfitSpec outfit = sample_outfit(rng, 0.7);
    const PoseSpec pose = sample_pose(rng, rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2));
    const PoseMeasurement m = measure_pose(render_reference(outfit, pose, 64, 48));
    for (int j = 0; j < kNumJoints; ++j) {
      REQUIRE(m.detected[j]);
      CHECK(pixel_distance(m.pose.keypoints[j], pose.keypoints[j], 64, 48) <= 1.0);
    }
  }
}

TEST_CASE("measure_pose flags every joint on a constant image") {
  const PoseMeasurement m = measure_pose(ImageTensor(3, 64, 48, 0.5f));
  CHECK(m.detected_count() == 0);
  for (double c : m.confidence) CHECK(c < kMarkerDetectionThreshold);
}

TEST_CASE("measure_pose on a 2x downsampled 128x96 render") {
  // A marker box-filtered with block-mates whose colour appears nowhere in
  // its neighbourhood cannot be decoded, so a small miss rate is tolerated.
  int within = 0, total = 0;
  for (std::uint64_t seed = 100; seed < 300; ++seed) {
    Rng rng(seed);
    const OutfitSpec outfit = sample_outfit(rng, 0.7);
    const PoseSpec pose = sample_pose(rng, rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2));
    const ImageTensor small = downsample2x(render_reference(outfit, pose, 128, 96));
    const PoseMeasurement m = measure_pose(small);
    for (int j = 0; j < kNumJoints; ++j) {
      ++total;
      if (m.detected[j] && pixel_distance(m.pose.keypoints[j], pose.keypoints[j], 64, 48) <= 2.0) ++within;
    }
  }
  CHECK(static_cast<double>(within) / total >= 0.98);
}

TEST_CASE("measure_dominant_color") {
  const PoseSpec pose = pose_for(4);
  const OutfitSpec red_top = single_top({1, 0, 0});
  const ImageTensor img = render_reference(red_top, pose, 64, 48);
  const Rgb c = measure_dominant_color(img, garment_region(red_top, pose, Category::Top, 64, 48));
  CHECK(color_distance(c, {1, 0, 0}) <= 1.0 / 7);

  const ImageTensor body = render_reference(OutfitSpec{}, pose, 64, 48);
  const Rgb skin = measure_dominant_color(body, body_region(pose, BodyPart::Torso, 64, 48));
  CHECK(color_distance(skin, kSkinTone) < 1e-6);

  const ImageTensor gray(3, 64, 48, 0.5f);
  const Rgb g = measure_dominant_color(gray, body_region(pose, BodyPart::Legs, 64, 48));
  CHECK(g == Rgb{0.5, 0.5, 0.5});

  CHECK_THROWS_AS(measure_dominant_color(gray, RegionMask(64 * 48, 0)), ValidationError);
}

TEST_CASE("outfit and pose JSON round-trip and validation") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const OutfitSpec o = sample_outfit(rng, 0.6);
    const PoseSpec p = sample_pose(rng, rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2));
    CHECK(outfit_from_json(json::parse(outfit_to_json(o).dump())) == o);
    CHECK(pose_from_json(json::parse(pose_to_json(p).dump())) == p);
  }
  json seven = outfit_to_json(OutfitSpec{});
  seven["slots"].push_back(nullptr);
  try {
    outfit_from_json(seven);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "slots");
  }
  json wrong_cat = outfit_to_json(single_top({1, 0, 0}));
  wrong_cat["slots"][0]["category"] = "Bottom";
  CHECK_THROWS_AS(outfit_from_json(wrong_cat), ValidationError);
  json bad_kp = pose_to_json(pose_for(2));
  bad_kp["keypoints"][3][0] = 1.5;
  try {
    pose_from_json(bad_kp);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "keypoints[3]");
  }
}

TEST_CASE("build_dataset is self-consistent and reproducible") {
  DatasetConfig cfg;
  cfg.n = 10;
  cfg.seed = 3;
  const auto a = temp_dir("ds_a"), b = temp_dir("ds_b");
  build_dataset(cfg, a);
  build_dataset(cfg, b);
  const Dataset ds = load_dataset(a);
  REQUIRE(ds.entries.size() == 10);
  for (const auto& e : ds.entries) {
    CHECK(e.model_image == render_reference(e.outfit, e.pose, 64, 48));
    for (int i = 0; i < kNumSlots; ++i) {
      CHECK(e.article_images[i] == render_article_image(e.outfit.slots[i], 24, 18));
    }
  }
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  for (int i = 0; i < 10; ++i) CHECK(slurp(a / entry_filename(i)) == slurp(b / entry_filename(i)));

  auto bytes = encode_entry(ds.entries[0], 0);
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_entry(bytes, 0), FormatError);
  CHECK_THROWS_AS(decode_entry(encode_entry(ds.entries[0], 0), 1), FormatError);
  auto truncated = encode_entry(ds.entries[0], 0);
  truncated.resize(truncated.size() - 5);
  CHECK_THROWS_AS(decode_entry(truncated, 0), FormatError);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST_CASE("slot occupancy over 2000 entries matches occupancy_prob") {
  DatasetConfig cfg;
  cfg.n = 2000;
  cfg.seed = 1;
  const auto dir = temp_dir("ds_occ");
  build_dataset(cfg, dir);
  const Dataset ds = load_dataset(dir);
  long present = 0;
  for (const auto& e : ds.entries) {
    for (const auto& s : e.outfit.slots) present += s.has_value();
  }
  const double rate = static_cast<double>(present) / (2000.0 * kNumSlots);
  CHECK(std::abs(rate - cfg.occupancy_prob) <= 0.03);
  std::filesystem::remove_all(dir);
}
