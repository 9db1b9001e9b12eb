#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pt/model.hpp"
#include "pt/pointcloud.hpp"

namespace pt {

/// Training run settings. Parsed from a line-oriented `key = value` file;
/// `#` starts a comment. Keys prefixed with `model.` are forwarded to
/// ModelConfig::apply. Relative paths resolve against the config file.
///
/// Keys: lr, batch_size, lr_decay, decay_period, max_epochs, sampling
/// (fps | uniform | none), points, augment, seed, train_data, val_data,
/// test_data, checkpoint_dir, patience, stop_val_accuracy.
struct TrainConfig {
  ModelConfig model;
  double lr = 0.001;
  std::size_t batch_size = 18;
  double lr_decay = 0.7;
  int decay_period = 20;
  int max_epochs = 100;
  std::optional<SamplingSpec> sampling;
  bool augment = true;
  std::uint64_t seed = 0;
  std::filesystem::path train_data;
  std::filesystem::path val_data;
  std::filesystem::path test_data;
  std::filesystem::path checkpoint_dir;
  /// Stop after this many epochs without validation improvement; 0 disables.
  int patience = 0;
  /// Stop as soon as validation accuracy reaches this value; > 1 disables.
  double stop_val_accuracy = 2.0;

  void validate() const;
  /// Also checks that every referenced dataset path exists.
  void validate_paths() const;
  std::vector<std::pair<std::string, std::string>> to_kv() const;
};

TrainConfig parse_train_config(const std::string& text,
                               const std::filesystem::path& base_dir = {});
TrainConfig load_train_config(const std::filesystem::path& path);

}  // namespace pt
