#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "mdepth/losses.hpp"
#include "mdepth/network.hpp"

namespace mdepth {

/// Malformed or semantically invalid configuration. line() is 1-based, 0 when
/// the problem is not tied to a line (missing file, cross-field checks).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Flat `key = value` pairs grouped under `[section]` headers. `#` and `;`
/// start comments.
class IniFile {
 public:
  struct Value {
    std::string text;
    std::size_t line = 0;
  };

  static IniFile parse(std::istream& in);
  static IniFile load(const std::filesystem::path& path);

  std::optional<Value> get(const std::string& section, const std::string& key) const;
  const std::map<std::string, std::map<std::string, Value>>& sections() const { return sections_; }

 private:
  std::map<std::string, std::map<std::string, Value>> sections_;
};

struct TrainConfig {
  std::size_t batch_size = 2;
  double lr_initial = 1e-4;
  double lr_after = 1e-5;
  std::size_t lr_drop_epoch = 15;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  bool augment = true;

  /// Learning rate for a 0-based epoch index.
  double lr_at(std::size_t epoch) const { return epoch < lr_drop_epoch ? lr_initial : lr_after; }
  void validate() const;
};

struct DataConfig {
  bool synthetic = false;
  std::string dataset;  // directory in the make-synthetic layout; unused when synthetic
  std::size_t frames = 20;
  std::size_t width = 64;
  std::size_t height = 64;
  bool low_texture_patch = false;
};

struct RunConfig {
  TrainConfig train;
  LossConfig loss;
  NetConfig net = NetConfig::desk();
  DataConfig data;

  /// Overlays the recognized keys of [train], [loss], [net] and [data] on the
  /// defaults. Unknown sections or keys and unparsable values are errors.
  static RunConfig from_ini(const IniFile& ini);
  void validate() const;
};

}  // namespace mdepth
