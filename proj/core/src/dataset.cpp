#include "mdepth/dataset.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

#include "mdepth/image_io.hpp"

namespace mdepth {

void FrameSequence::validate() const {
  if (frames.size() < 3) throw DataError("a sequence needs at least 3 frames, got " + std::to_string(frames.size()));
  for (const auto& f : frames) {
    if (f.shape() != Shape{camera.height, camera.width, 3}) {
      throw DataError("frame of shape " + shape_str(f.shape()) + " does not match the " + std::to_string(camera.width) +
                      "x" + std::to_string(camera.height) + " camera");
    }
  }
  if (!depths.empty() && depths.size() != frames.size()) throw DataError("depth count differs from frame count");
  for (const auto& d : depths) {
    if (d.shape() != Shape{camera.height, camera.width, 1}) throw DataError("depth map of shape " + shape_str(d.shape()) + " does not match the frames");
  }
  if (!camera_centers.empty() && camera_centers.size() != frames.size()) throw DataError("pose count differs from frame count");
}

PoseTransform relative_pose(const std::array<double, 3>& target_center, const std::array<double, 3>& source_center) {
  return PoseTransform::translation_only(target_center[0] - source_center[0], target_center[1] - source_center[1],
                                         target_center[2] - source_center[2]);
}

std::vector<FrameTriplet> make_triplets(const FrameSequence& seq) {
  seq.validate();
  std::vector<FrameTriplet> out;
  for (std::size_t t = 1; t + 1 < seq.frames.size(); ++t) {
    FrameTriplet tr;
    tr.frames = {seq.frames[t - 1], seq.frames[t], seq.frames[t + 1]};
    tr.camera = seq.camera;
    if (!seq.depths.empty()) tr.depth = seq.depths[t];
    if (!seq.camera_centers.empty()) {
      const auto& c = seq.camera_centers;
      tr.poses = std::array<PoseTransform, 2>{relative_pose(c[t], c[t - 1]), relative_pose(c[t], c[t + 1])};
    }
    out.push_back(std::move(tr));
  }
  return out;
}

namespace {

std::filesystem::path frame_path(const std::filesystem::path& dir, std::size_t i) {
  return dir / fmt::format("frame_{:03d}.ppm", i);
}
std::filesystem::path depth_path(const std::filesystem::path& dir, std::size_t i) {
  return dir / fmt::format("depth_{:03d}.pfm", i);
}

}  // namespace

FrameSequence load_sequence(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("dataset directory '" + dir.string() + "' does not exist");
  FrameSequence seq;
  std::ifstream intr(dir / "intrinsics.txt");
  if (!intr) throw DataError("missing intrinsics.txt in '" + dir.string() + "'");
  if (!(intr >> seq.camera.fx >> seq.camera.fy >> seq.camera.cx >> seq.camera.cy)) {
    throw DataError("intrinsics.txt must hold 'fx fy cx cy'");
  }
  try {
    for (std::size_t i = 0; std::filesystem::exists(frame_path(dir, i)); ++i) {
      seq.frames.push_back(read_ppm(frame_path(dir, i)));
      if (std::filesystem::exists(depth_path(dir, i))) seq.depths.push_back(read_pfm(depth_path(dir, i)));
    }
  } catch (const ImageIoError& e) {
    throw DataError(e.what());
  }
  if (seq.frames.empty()) throw DataError("no frame_NNN.ppm files in '" + dir.string() + "'");
  seq.camera.height = seq.frames[0].dim(0);
  seq.camera.width = seq.frames[0].dim(1);
  try {
    seq.camera.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  if (std::ifstream poses(dir / "poses.txt"); poses) {
    std::array<double, 3> c{};
    while (poses >> c[0] >> c[1] >> c[2]) seq.camera_centers.push_back(c);
  }
  seq.validate();
  return seq;
}

void save_sequence(const std::filesystem::path& dir, const FrameSequence& seq) {
  seq.validate();
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    write_ppm(frame_path(dir, i), seq.frames[i]);
    if (!seq.depths.empty()) write_pfm(depth_path(dir, i), seq.depths[i]);
  }
  std::ofstream intr(dir / "intrinsics.txt");
  intr << fmt::format("{} {} {} {}\n", seq.camera.fx, seq.camera.fy, seq.camera.cx, seq.camera.cy);
  if (!seq.camera_centers.empty()) {
    std::ofstream poses(dir / "poses.txt");
    for (const auto& c : seq.camera_centers) poses << fmt::format("{} {} {}\n", c[0], c[1], c[2]);
  }
  if (!intr) throw DataError("failed writing '" + dir.string() + "'");
}

}  // namespace mdepth
