#include "mdepth/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace mdepth {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const IniFile::Value& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v.text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.text.size() || v.text.empty()) throw ConfigError("expected a number, got '" + v.text + "'", v.line);
  return out;
}

std::uint64_t parse_uint(const IniFile::Value& v) {
  std::uint64_t out = 0;
  const auto* end = v.text.data() + v.text.size();
  const auto res = std::from_chars(v.text.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end || v.text.empty()) {
    throw ConfigError("expected a non-negative integer, got '" + v.text + "'", v.line);
  }
  return out;
}

bool parse_bool(const IniFile::Value& v) {
  if (v.text == "true" || v.text == "1" || v.text == "yes") return true;
  if (v.text == "false" || v.text == "0" || v.text == "no") return false;
  throw ConfigError("expected true or false, got '" + v.text + "'", v.line);
}

}  // namespace

IniFile IniFile::parse(std::istream& in) {
  IniFile ini;
  std::string section;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto comment = raw.find_first_of("#;");
    const std::string line = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ConfigError("malformed section header '" + line + "'", line_no);
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + line + "'", line_no);
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("empty key", line_no);
    if (section.empty()) throw ConfigError("key '" + key + "' appears before any [section]", line_no);
    auto& slot = ini.sections_[section];
    if (slot.count(key)) throw ConfigError("duplicate key '" + key + "' in [" + section + "]", line_no);
    slot[key] = Value{trim(line.substr(eq + 1)), line_no};
  }
  return ini;
}

IniFile IniFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'", 0);
  return parse(in);
}

std::optional<IniFile::Value> IniFile::get(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return std::nullopt;
  const auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive", 0);
  if (!(lr_initial > 0.0) || !(lr_after > 0.0)) throw ConfigError("learning rates must be positive", 0);
  if (!(lr_after < lr_initial)) throw ConfigError("train.lr_after must be smaller than train.lr_initial", 0);
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)", 0);
}

void RunConfig::validate() const {
  train.validate();
  try {
    loss.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), 0);
  }
  if (net.base_channels == 0 || net.state_dim == 0) throw ConfigError("net.base_channels and net.state_dim must be positive", 0);
  if (!(net.min_depth > 0.0) || !(net.max_depth > net.min_depth)) throw ConfigError("net depth range must satisfy 0 < min < max", 0);
  if (data.width % net.input_divisor() || data.height % net.input_divisor()) {
    throw ConfigError("data.width and data.height must be divisible by " + std::to_string(net.input_divisor()), 0);
  }
  if (data.synthetic && data.frames < 3) throw ConfigError("data.frames must be at least 3", 0);
}

RunConfig RunConfig::from_ini(const IniFile& ini) {
  RunConfig cfg;
  using Setter = std::function<void(const IniFile::Value&)>;
  const std::map<std::string, std::map<std::string, Setter>> table = {
      {"train",
       {{"batch_size", [&](const auto& v) { cfg.train.batch_size = parse_uint(v); }},
        {"lr_initial", [&](const auto& v) { cfg.train.lr_initial = parse_double(v); }},
        {"lr_after", [&](const auto& v) { cfg.train.lr_after = parse_double(v); }},
        {"lr_drop_epoch", [&](const auto& v) { cfg.train.lr_drop_epoch = parse_uint(v); }},
        {"beta1", [&](const auto& v) { cfg.train.beta1 = parse_double(v); }},
        {"beta2", [&](const auto& v) { cfg.train.beta2 = parse_double(v); }},
        {"epochs", [&](const auto& v) { cfg.train.epochs = parse_uint(v); }},
        {"seed", [&](const auto& v) { cfg.train.seed = parse_uint(v); }},
        {"augment", [&](const auto& v) { cfg.train.augment = parse_bool(v); }}}},
      {"loss",
       {{"alpha", [&](const auto& v) { cfg.loss.alpha = parse_double(v); }},
        {"smoothness_weight", [&](const auto& v) { cfg.loss.smoothness_weight = parse_double(v); }},
        {"ssim_window", [&](const auto& v) { cfg.loss.ssim_window = parse_uint(v); }},
        {"ssim_c1", [&](const auto& v) { cfg.loss.ssim_c1 = parse_double(v); }},
        {"ssim_c2", [&](const auto& v) { cfg.loss.ssim_c2 = parse_double(v); }}}},
      {"net",
       {{"base_channels", [&](const auto& v) { cfg.net.base_channels = parse_uint(v); }},
        {"state_dim", [&](const auto& v) { cfg.net.state_dim = parse_uint(v); }},
        {"min_depth", [&](const auto& v) { cfg.net.min_depth = parse_double(v); }},
        {"max_depth", [&](const auto& v) { cfg.net.max_depth = parse_double(v); }}}},
      {"data",
       {{"synthetic", [&](const auto& v) { cfg.data.synthetic = parse_bool(v); }},
        {"dataset", [&](const auto& v) { cfg.data.dataset = v.text; }},
        {"frames", [&](const auto& v) { cfg.data.frames = parse_uint(v); }},
        {"width", [&](const auto& v) { cfg.data.width = parse_uint(v); }},
        {"height", [&](const auto& v) { cfg.data.height = parse_uint(v); }},
        {"low_texture_patch", [&](const auto& v) { cfg.data.low_texture_patch = parse_bool(v); }}}},
  };
  for (const auto& [section, keys] : ini.sections()) {
    const auto known = table.find(section);
    for (const auto& [key, value] : keys) {
      if (known == table.end()) throw ConfigError("unknown section [" + section + "]", value.line);
      const auto setter = known->second.find(key);
      if (setter == known->second.end()) throw ConfigError("unknown key '" + key + "' in [" + section + "]", value.line);
      setter->second(value);
    }
  }
  return cfg;
}

}  // namespace mdepth
