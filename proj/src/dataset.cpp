#include "stylecond/dataset.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <tuple>

#include "stylecond/errors.hpp"
#include "stylecond/json_io.hpp"

namespace stylecond {

namespace {

constexpr char kMagic[8] = {'O', 'F', 'I', 'T', 'D', 'S', '0', '1'};
constexpr int kSchemaVersion = 1;
constexpr std::uint32_t kTensorCount = 1 + kNumSlots;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(context_ + ": truncated while reading " + what + " at offset " +
                        std::to_string(pos_));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string raw(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  const std::string& context() const { return context_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string context_;
  std::size_t pos_ = 0;
};

void put_tensor(std::vector<std::uint8_t>& out, const ImageTensor& t) {
  put_u32(out, static_cast<std::uint32_t>(t.channels));
  put_u32(out, static_cast<std::uint32_t>(t.height));
  put_u32(out, static_cast<std::uint32_t>(t.width));
  for (float f : t.data) put_f32(out, f);
}

ImageTensor get_tensor(Reader& in) {
  const auto c = in.u32("tensor channels");
  const auto h = in.u32("tensor height");
  const auto w = in.u32("tensor width");
  if (c > 64 || h > 8192 || w > 8192) throw FormatError(in.context() + ": implausible tensor shape");
  ImageTensor t(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
  for (float& f : t.data) f = in.f32("tensor data");
  return t;
}

json manifest_json(const DatasetConfig& c) {
  json slots = json::array(), joints = json::array();
  for (auto n : kCategoryNames) slots.push_back(std::string(n));
  for (auto n : kJointNames) joints.push_back(std::string(n));
  return {{"schema_version", kSchemaVersion},
          {"n", c.n},
          {"seed", c.seed},
          {"model_resolution", {c.model_height, c.model_width}},
          {"article_resolution", {c.article_height, c.article_width}},
          {"occupancy_prob", c.occupancy_prob},
          {"scale_range", {c.min_scale, c.max_scale}},
          {"slot_order", slots},
          {"joint_names", joints},
          {"record", {{"magic", "OFITDS01"}, {"tensor_count", kTensorCount}, {"byte_order", "little"}}}};
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError(p.string() + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& p, const void* data, std::size_t size) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(p.string() + ": cannot open for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw std::runtime_error(p.string() + ": write failed");
}

}  // namespace

std::string entry_filename(int index) {
  std::ostringstream os;
  os << "entry_" << std::setw(6) << std::setfill('0') << index << ".bin";
  return os.str();
}

std::pair<OutfitSpec, PoseSpec> sample_pair(const DatasetConfig& config, int index) {
  Rng rng = Rng::derive(config.seed, static_cast<std::uint64_t>(index));
  OutfitSpec outfit = sample_outfit(rng, config.occupancy_prob);
  const double scale = rng.uniform(config.min_scale, config.max_scale);
  const double build = rng.uniform(config.min_scale, config.max_scale);
  PoseLimits limits;
  limits.min_scale = config.min_scale;
  limits.max_scale = config.max_scale;
  PoseSpec pose = sample_pose(rng, scale, build, limits);
  return {outfit, pose};
}

DatasetEntry make_entry(const DatasetConfig& config, int index) {
  DatasetEntry e;
  std::tie(e.outfit, e.pose) = sample_pair(config, index);
  e.model_image = render_reference(e.outfit, e.pose, config.model_height, config.model_width);
  for (int i = 0; i < kNumSlots; ++i) {
    e.article_images[i] = render_article_image(e.outfit.slots[i], config.article_height, config.article_width);
  }
  return e;
}

std::vector<std::uint8_t> encode_entry(const DatasetEntry& entry, std::uint32_t index) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u32(out, index);
  put_u32(out, kTensorCount);
  put_tensor(out, entry.model_image);
  for (const auto& a : entry.article_images) put_tensor(out, a);
  const std::string meta = json{{"outfit", outfit_to_json(entry.outfit)}, {"pose", pose_to_json(entry.pose)}}.dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  return out;
}

DatasetEntry decode_entry(const std::vector<std::uint8_t>& bytes, std::uint32_t expected_index,
                          const std::string& context) {
  Reader in(bytes, context);
  const std::string magic = in.raw(8, "magic");
  if (magic != std::string(kMagic, 8)) throw FormatError(context + ": bad magic '" + magic + "'");
  const auto index = in.u32("entry index");
  if (index != expected_index) {
    throw FormatError(context + ": entry index " + std::to_string(index) + ", expected " +
                      std::to_string(expected_index));
  }
  const auto count = in.u32("tensor count");
  if (count != kTensorCount) throw FormatError(context + ": tensor count " + std::to_string(count));
  DatasetEntry e;
  e.model_image = get_tensor(in);
  for (auto& a : e.article_images) a = get_tensor(in);
  const auto len = in.u32("metadata length");
  const std::string meta = in.raw(len, "metadata");
  if (!in.done()) throw FormatError(context + ": trailing bytes after metadata");
  try {
    const json j = json::parse(meta);
    e.outfit = outfit_from_json(j.at("outfit"));
    e.pose = pose_from_json(j.at("pose"));
  } catch (const std::exception& ex) {
    throw FormatError(context + ": metadata: " + ex.what());
  }
  return e;
}

void build_dataset(const DatasetConfig& config, const std::filesystem::path& dir) {
  if (config.n < 1) throw ValidationError("n", "must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error(dir.string() + ": " + ec.message());
  const std::string manifest = manifest_json(config).dump(2) + "\n";
  write_file(dir / "manifest.json", manifest.data(), manifest.size());
  for (int i = 0; i < config.n; ++i) {
    const auto bytes = encode_entry(make_entry(config, i), static_cast<std::uint32_t>(i));
    write_file(dir / entry_filename(i), bytes.data(), bytes.size());
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const auto raw = read_file(manifest_path);
  Dataset ds;
  try {
    const json m = json::parse(raw.begin(), raw.end());
    if (m.at("schema_version").get<int>() != kSchemaVersion) {
      throw FormatError("unsupported schema_version " + m.at("schema_version").dump());
    }
    ds.config.n = m.at("n").get<int>();
    ds.config.seed = m.at("seed").get<std::uint64_t>();
    ds.config.model_height = m.at("model_resolution").at(0).get<int>();
    ds.config.model_width = m.at("model_resolution").at(1).get<int>();
    ds.config.article_height = m.at("article_resolution").at(0).get<int>();
    ds.config.article_width = m.at("article_resolution").at(1).get<int>();
    ds.config.occupancy_prob = m.at("occupancy_prob").get<double>();
    ds.config.min_scale = m.at("scale_range").at(0).get<double>();
    ds.config.max_scale = m.at("scale_range").at(1).get<double>();
  } catch (const FormatError& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  } catch (const std::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  ds.entries.reserve(static_cast<std::size_t>(ds.config.n));
  for (int i = 0; i < ds.config.n; ++i) {
    const auto path = dir / entry_filename(i);
    ds.entries.push_back(decode_entry(read_file(path), static_cast<std::uint32_t>(i), path.string()));
  }
  return ds;
}

}  // namespace stylecond
