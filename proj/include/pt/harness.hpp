#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pt/config.hpp"
#include "pt/model.hpp"
#include "pt/pointcloud.hpp"

namespace pt {

struct EpochMetrics {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  std::optional<double> val_accuracy;
  double seconds = 0;
};

struct MetricsReport {
  std::vector<EpochMetrics> epochs;
  int best_epoch = -1;
  std::optional<double> best_val_accuracy;
  std::optional<double> test_accuracy;
  std::vector<std::pair<std::string, double>> corruption_accuracy;
  std::optional<double> map;
  std::optional<double> partial_query_map;
  double wall_seconds = 0;
  std::size_t parameter_count = 0;

  std::string to_text() const;
  /// Tab-separated `section\tkey\tvalue...` rows. Timings are left out so the
  /// output of a seeded run is diff-stable.
  std::string to_tsv() const;
};

struct TrainResult {
  ModelParams<float> params;  // best-validation parameters
  MetricsReport report;
  std::optional<std::filesystem::path> checkpoint;
};

/// Called after every epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochMetrics&)>;

/// Mini-batch Adam on total_loss with the step-decay schedule. Validation
/// selects the best epoch (ties keep the earlier one); without a validation
/// set the last epoch is kept. Deterministic for a fixed seed.
TrainResult train(const TrainConfig& config, const LabeledDataset& train_set,
                  const LabeledDataset* val_set = nullptr,
                  const LabeledDataset* test_set = nullptr, const EpochCallback& on_epoch = {});

/// Loads the datasets named in the config, trains, and writes
/// `best.ptck`, `metrics.txt` and `metrics.tsv` into checkpoint_dir.
TrainResult train_from_config(const TrainConfig& config, const EpochCallback& on_epoch = {});

struct EvalResult {
  double accuracy = 0;
  std::vector<double> per_class_accuracy;
  std::vector<std::size_t> per_class_count;
  std::vector<int> predictions;
  std::vector<float> logits;  // samples x classes, row-major
  std::size_t num_classes = 0;
};

/// Eval-mode classification over the dataset. Requires labels and a class
/// count matching the model.
EvalResult evaluate(const ModelConfig& config, const ModelParams<float>& params,
                    const LabeledDataset& dataset);

struct RetrievalIndex {
  std::size_t dim = 0;
  std::vector<float> features;  // rows unit-normalized
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return labels.size(); }
};

RetrievalIndex build_retrieval_index(const ModelConfig& config, const ModelParams<float>& params,
                                     const LabeledDataset& dataset);

/// Mean over relevant ranks r of (relevant items in the top r) / r. Zero
/// when nothing is relevant.
double average_precision(std::span<const bool> relevance);

struct RetrievalResult {
  double map = 0;
  std::vector<double> average_precisions;
  std::vector<std::vector<std::size_t>> rankings;  // index rows per query
};

/// Ranks index entries by descending cosine similarity (ties by index
/// order). An index entry whose id equals the query id is skipped when
/// `exclude_self` is set. Relevance means equal labels.
RetrievalResult retrieve_and_score(const RetrievalIndex& index, const RetrievalIndex& queries,
                                   bool exclude_self = true);

struct RobustnessEntry {
  std::string name;
  double accuracy = 0;
};

struct RobustnessResult {
  std::vector<RobustnessEntry> entries;
  /// Partial queries retrieved against the untouched set.
  double partial_query_map = 0;
  std::vector<std::string> warnings;
};

struct RobustnessOptions {
  /// Whether the evaluated checkpoint was trained with augmentation, if known.
  std::optional<bool> trained_with_augmentation;
  std::size_t protocol_points = 2048;
};

RobustnessResult run_robustness(const ModelConfig& config, const ModelParams<float>& params,
                                const LabeledDataset& dataset, std::uint64_t seed,
                                const RobustnessOptions& options = {});

/// Writes attention.tsv (pass, point, mean attention), groups.tsv (pass,
/// point, group) and aggregation.tsv (pass, group[, channel], weight).
std::vector<std::filesystem::path> export_trace(const ModelConfig& config,
                                                const ModelParams<float>& params,
                                                const PointCloud& pc,
                                                const std::filesystem::path& out_dir);

}  // namespace pt
