#include "pt/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "pt/errors.hpp"

namespace pt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& value) {
  N out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    fail(ErrorKind::Config, "invalid value '" + value + "' for key '" + key + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  fail(ErrorKind::Config, "invalid boolean '" + value + "' for key '" + key + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  if (!(lr > 0)) fail(ErrorKind::Config, "lr must be > 0");
  if (batch_size < 1) fail(ErrorKind::Config, "batch_size must be >= 1");
  if (!(lr_decay > 0 && lr_decay <= 1)) fail(ErrorKind::Config, "lr_decay must lie in (0, 1]");
  if (decay_period < 1) fail(ErrorKind::Config, "decay_period must be >= 1");
  if (max_epochs < 1) fail(ErrorKind::Config, "max_epochs must be >= 1");
  if (patience < 0) fail(ErrorKind::Config, "patience must be >= 0");
  if (sampling && sampling->target_count < 1) fail(ErrorKind::Config, "points must be >= 1");
}

void TrainConfig::validate_paths() const {
  if (train_data.empty()) fail(ErrorKind::Config, "train_data is required");
  for (const auto* p : {&train_data, &val_data, &test_data})
    if (!p->empty() && !std::filesystem::exists(*p))
      fail(ErrorKind::Config, "dataset manifest not found: " + p->string());
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_kv() const {
  std::vector<std::pair<std::string, std::string>> kv = {
      {"lr", std::to_string(lr)},
      {"batch_size", std::to_string(batch_size)},
      {"lr_decay", std::to_string(lr_decay)},
      {"decay_period", std::to_string(decay_period)},
      {"max_epochs", std::to_string(max_epochs)},
      {"sampling", !sampling ? "none"
                   : sampling->method == SamplingMethod::FarthestPoint ? "fps"
                                                                       : "uniform"},
      {"points", std::to_string(sampling ? sampling->target_count : 0)},
      {"augment", augment ? "true" : "false"},
      {"seed", std::to_string(seed)},
      {"train_data", train_data.string()},
      {"val_data", val_data.string()},
      {"test_data", test_data.string()},
      {"checkpoint_dir", checkpoint_dir.string()},
      {"patience", std::to_string(patience)},
      {"stop_val_accuracy", std::to_string(stop_val_accuracy)},
  };
  for (auto& [k, v] : model.to_kv()) kv.emplace_back("model." + k, v);
  return kv;
}

TrainConfig parse_train_config(const std::string& text, const std::filesystem::path& base_dir) {
  TrainConfig cfg;
  std::optional<std::string> sampling_name;
  std::optional<std::size_t> points;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Config, "line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key.rfind("model.", 0) == 0) {
        if (!cfg.model.apply(key.substr(6), value))
          fail(ErrorKind::Config, "unknown model key '" + key + "'");
      } else if (key == "lr") cfg.lr = parse_number<double>(key, value);
      else if (key == "batch_size") cfg.batch_size = parse_number<std::size_t>(key, value);
      else if (key == "lr_decay") cfg.lr_decay = parse_number<double>(key, value);
      else if (key == "decay_period") cfg.decay_period = parse_number<int>(key, value);
      else if (key == "max_epochs") cfg.max_epochs = parse_number<int>(key, value);
      else if (key == "sampling") sampling_name = value;
      else if (key == "points") points = parse_number<std::size_t>(key, value);
      else if (key == "augment") cfg.augment = parse_bool(key, value);
      else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
      else if (key == "train_data") cfg.train_data = resolve(base_dir, value);
      else if (key == "val_data") cfg.val_data = resolve(base_dir, value);
      else if (key == "test_data") cfg.test_data = resolve(base_dir, value);
      else if (key == "checkpoint_dir") cfg.checkpoint_dir = resolve(base_dir, value);
      else if (key == "patience") cfg.patience = parse_number<int>(key, value);
      else if (key == "stop_val_accuracy") cfg.stop_val_accuracy = parse_number<double>(key, value);
      else fail(ErrorKind::Config, "unknown key '" + key + "'");
    } catch (const Error& e) {
      fail(ErrorKind::Config, "line " + std::to_string(lineno) + ": " + e.message());
    }
  }
  const std::string method = sampling_name.value_or(points ? "fps" : "none");
  if (method == "fps" || method == "uniform") {
    SamplingSpec s;
    s.method = method == "fps" ? SamplingMethod::FarthestPoint : SamplingMethod::UniformRandom;
    s.target_count = points.value_or(cfg.model.n0);
    s.seed = cfg.seed;
    cfg.sampling = s;
  } else if (method != "none") {
    fail(ErrorKind::Config, "sampling must be fps, uniform or none");
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), path.parent_path());
}

}  // namespace pt
