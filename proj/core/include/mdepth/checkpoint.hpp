#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mdepth/network.hpp"
#include "mdepth/params.hpp"

namespace mdepth {

inline constexpr char kCheckpointMagic[8] = {'M', 'D', 'E', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kDtypeF64 = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestEntry {
  std::string name;
  Shape shape;
  std::uint32_t dtype = kDtypeF64;
  std::uint64_t offset = 0;  // bytes from the start of the payload
};

/// Layout: magic, u32 version, u32 entry count, then per entry u32 name
/// length, name bytes, u32 rank, u64 extents, u32 dtype, u64 offset; then the
/// payload. All integers and values little-endian.
std::string serialize_tensors(const std::vector<NamedParam>& tensors);
std::vector<NamedParam> deserialize_tensors(std::string_view bytes);
std::vector<ManifestEntry> read_manifest(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedParam>& tensors);
std::vector<NamedParam> read_checkpoint(const std::filesystem::path& path);

/// DepthNet and PoseNet weights plus the architecture settings needed to
/// rebuild them.
struct Model {
  NetConfig config;
  DepthNet depth;
  PoseNet pose;
};

std::vector<NamedParam> model_tensors(const DepthNet& depth, const PoseNet& pose);
void save_model(const std::filesystem::path& path, const DepthNet& depth, const PoseNet& pose);
Model load_model(const std::filesystem::path& path);

}  // namespace mdepth
