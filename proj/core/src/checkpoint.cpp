#include "mdepth/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace mdepth {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated in manifest");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

struct Parsed {
  std::vector<ManifestEntry> entries;
  std::size_t payload_start = 0;
};

Parsed parse_header(std::string_view bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) || std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw CheckpointError("not a checkpoint: bad magic");
  }
  Reader r(bytes);
  r.take(sizeof(kCheckpointMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.get<std::uint32_t>();
  Parsed p;
  for (std::uint32_t i = 0; i < count; ++i) {
    ManifestEntry e;
    e.name = std::string(r.take(r.get<std::uint32_t>()));
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    e.dtype = r.get<std::uint32_t>();
    if (e.dtype != kDtypeF64) throw CheckpointError("tensor '" + e.name + "' has unsupported dtype code " + std::to_string(e.dtype));
    e.offset = r.get<std::uint64_t>();
    p.entries.push_back(std::move(e));
  }
  p.payload_start = r.pos();
  return p;
}

}  // namespace

std::string serialize_tensors(const std::vector<NamedParam>& tensors) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.tensor.rank()));
    for (auto d : t.tensor.shape()) put<std::uint64_t>(out, d);
    put<std::uint32_t>(out, kDtypeF64);
    put<std::uint64_t>(out, offset);
    offset += t.tensor.numel() * sizeof(double);
  }
  for (const auto& t : tensors) {
    out.append(reinterpret_cast<const char*>(t.tensor.data().data()), t.tensor.numel() * sizeof(double));
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(std::string_view bytes) { return parse_header(bytes).entries; }

std::vector<NamedParam> deserialize_tensors(std::string_view bytes) {
  const Parsed p = parse_header(bytes);
  const std::size_t payload = bytes.size() - p.payload_start;
  std::vector<NamedParam> out;
  for (const auto& e : p.entries) {
    const std::size_t n = shape_numel(e.shape);
    if (e.offset > payload || payload - e.offset < n * sizeof(double)) {
      throw CheckpointError("checkpoint payload truncated at tensor '" + e.name + "'");
    }
    std::vector<double> values(n);
    std::memcpy(values.data(), bytes.data() + p.payload_start + e.offset, n * sizeof(double));
    out.push_back({e.name, Tensor::from(e.shape, std::move(values))});
  }
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedParam>& tensors) {
  const std::string bytes = serialize_tensors(tensors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for checkpoint '" + path.string() + "'");
}

std::vector<NamedParam> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_tensors(ss.str());
}

namespace {

Tensor meta_values(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from({n}, std::move(v));
}

std::vector<double> blocks_as_doubles(const std::array<std::size_t, kNumStages>& a) {
  return std::vector<double>(a.begin(), a.end());
}

}  // namespace

std::vector<NamedParam> model_tensors(const DepthNet& depth, const PoseNet& pose) {
  const NetConfig& c = depth.config();
  std::vector<NamedParam> out{
      {"meta.base_channels", Tensor::scalar(static_cast<double>(c.base_channels))},
      {"meta.state_dim", Tensor::scalar(static_cast<double>(c.state_dim))},
      {"meta.patch_size", Tensor::scalar(static_cast<double>(c.patch_size))},
      {"meta.min_depth", Tensor::scalar(c.min_depth)},
      {"meta.max_depth", Tensor::scalar(c.max_depth)},
      {"meta.encoder_blocks", meta_values(blocks_as_doubles(c.encoder_blocks))},
      {"meta.decoder_blocks", meta_values(blocks_as_doubles(c.decoder_blocks))},
  };
  const ParamSet depth_params = depth.parameters(), pose_params = pose.parameters();
  for (const auto& p : depth_params.items()) out.push_back({"depth." + p.name, p.tensor});
  for (const auto& p : pose_params.items()) out.push_back({"pose." + p.name, p.tensor});
  return out;
}

void save_model(const std::filesystem::path& path, const DepthNet& depth, const PoseNet& pose) {
  write_checkpoint(path, model_tensors(depth, pose));
}

Model load_model(const std::filesystem::path& path) {
  std::map<std::string, Tensor> by_name;
  for (auto& t : read_checkpoint(path)) by_name.emplace(t.name, t.tensor);
  auto meta = [&](const std::string& key) -> const Tensor& {
    const auto it = by_name.find("meta." + key);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks meta." + key);
    return it->second;
  };
  auto count = [&](const std::string& key) {
    const double v = meta(key).item();
    if (!(v >= 1.0) || v != std::floor(v)) throw CheckpointError("checkpoint meta." + key + " is not a positive integer");
    return static_cast<std::size_t>(v);
  };
  NetConfig cfg;
  cfg.base_channels = count("base_channels");
  cfg.state_dim = count("state_dim");
  cfg.patch_size = count("patch_size");
  cfg.min_depth = meta("min_depth").item();
  cfg.max_depth = meta("max_depth").item();
  for (auto* key : {"encoder_blocks", "decoder_blocks"}) {
    const Tensor& t = meta(key);
    if (t.numel() != kNumStages) throw CheckpointError(std::string("checkpoint meta.") + key + " has the wrong length");
    auto& dst = std::string(key) == "encoder_blocks" ? cfg.encoder_blocks : cfg.decoder_blocks;
    for (std::size_t s = 0; s < kNumStages; ++s) dst[s] = static_cast<std::size_t>(t[s]);
  }

  Model m{cfg, DepthNet(cfg, 0), PoseNet(0)};
  auto fill = [&](const ParamSet& params, const std::string& prefix) {
    for (const auto& p : params.items()) {
      const auto it = by_name.find(prefix + p.name);
      if (it == by_name.end()) throw CheckpointError("checkpoint lacks tensor '" + prefix + p.name + "'");
      if (it->second.shape() != p.tensor.shape()) {
        throw CheckpointError("tensor '" + prefix + p.name + "' has shape " + shape_str(it->second.shape()) +
                              ", expected " + shape_str(p.tensor.shape()));
      }
      Tensor dst = p.tensor;
      std::copy(it->second.data().begin(), it->second.data().end(), dst.mutable_data().begin());
    }
  };
  fill(m.depth.parameters(), "depth.");
  fill(m.pose.parameters(), "pose.");
  return m;
}

}  // namespace mdepth
