#include "pt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include "pt/checkpoint.hpp"
#include "pt/corruptions.hpp"
#include "pt/errors.hpp"
#include "pt/ops.hpp"
#include "pt/optim.hpp"

namespace pt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int argmax(const float* v, std::size_t n) {
  return static_cast<int>(std::max_element(v, v + n) - v);
}

void check_labels(const ModelConfig& config, const LabeledDataset& ds, const char* what) {
  if (ds.samples.empty()) fail(ErrorKind::Config, std::string(what) + " dataset is empty");
  if (ds.num_classes() != config.num_classes)
    fail(ErrorKind::Config, std::string(what) + " dataset has " + std::to_string(ds.num_classes()) +
                                " classes but the model expects " + std::to_string(config.num_classes));
  for (const auto& s : ds.samples)
    if (!s.label || *s.label < 0 || static_cast<std::size_t>(*s.label) >= config.num_classes)
      fail(ErrorKind::Label, std::string(what) + " sample '" + s.id + "' has a missing or invalid label");
}

// Runs f(i) for every sample, sharded across workers, rethrowing the first
// failure in sample order.
template <typename F>
void for_each_sample(std::size_t n, F&& f) {
  std::vector<std::string> errors(n);
  std::vector<char> failed(n, 0);
  std::vector<ErrorKind> kinds(n, ErrorKind::Contract);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto u = static_cast<std::size_t>(i);
    try {
      f(u);
    } catch (const Error& e) {
      failed[u] = 1;
      kinds[u] = e.kind();
      errors[u] = e.message();
    } catch (const std::exception& e) {
      failed[u] = 1;
      errors[u] = e.what();
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (failed[i]) fail(kinds[i], errors[i]);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << v;
  return os.str();
}

}  // namespace

// ---- metrics -----------------------------------------------------------------

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  os << "parameters: " << parameter_count << '\n';
  for (const auto& e : epochs) {
    os << "epoch " << std::setw(3) << e.epoch << "  lr " << fmt(e.lr) << "  loss " << fmt(e.train_loss)
       << "  train_acc " << fmt(e.train_accuracy);
    if (e.val_accuracy) os << "  val_acc " << fmt(*e.val_accuracy);
    os << "  " << std::setprecision(2) << std::fixed << e.seconds << "s\n";
  }
  if (best_epoch >= 0) os << "best epoch: " << best_epoch << '\n';
  if (best_val_accuracy) os << "best val accuracy: " << fmt(*best_val_accuracy) << '\n';
  if (test_accuracy) os << "test accuracy: " << fmt(*test_accuracy) << '\n';
  for (const auto& [name, acc] : corruption_accuracy) os << "corruption " << name << ": " << fmt(acc) << '\n';
  if (map) os << "MAP: " << fmt(*map) << '\n';
  if (partial_query_map) os << "partial-query MAP: " << fmt(*partial_query_map) << '\n';
  os << "wall time: " << std::setprecision(2) << std::fixed << wall_seconds << "s\n";
  return os.str();
}

std::string MetricsReport::to_tsv() const {
  std::ostringstream os;
  os << "summary\tparameters\t" << parameter_count << '\n';
  os << "summary\tbest_epoch\t" << best_epoch << '\n';
  if (best_val_accuracy) os << "summary\tbest_val_accuracy\t" << fmt(*best_val_accuracy) << '\n';
  if (test_accuracy) os << "summary\ttest_accuracy\t" << fmt(*test_accuracy) << '\n';
  if (map) os << "summary\tmap\t" << fmt(*map) << '\n';
  if (partial_query_map) os << "summary\tpartial_query_map\t" << fmt(*partial_query_map) << '\n';
  os << "epoch\tepoch\tlr\ttrain_loss\ttrain_accuracy\tval_accuracy\n";
  for (const auto& e : epochs)
    os << "epoch\t" << e.epoch << '\t' << fmt(e.lr) << '\t' << fmt(e.train_loss) << '\t'
       << fmt(e.train_accuracy) << '\t' << (e.val_accuracy ? fmt(*e.val_accuracy) : "-") << '\n';
  for (const auto& [name, acc] : corruption_accuracy) os << "corruption\t" << name << '\t' << fmt(acc) << '\n';
  return os.str();
}

// ---- training --------------------------------------------------------------------

TrainResult train(const TrainConfig& config, const LabeledDataset& train_set,
                  const LabeledDataset* val_set, const LabeledDataset* test_set,
                  const EpochCallback& on_epoch) {
  config.validate();
  const ModelConfig& mc = config.model;
  check_labels(mc, train_set, "train");
  if (val_set) check_labels(mc, *val_set, "validation");
  if (test_set) check_labels(mc, *test_set, "test");

  const auto t0 = Clock::now();
  TrainResult result{init_params<float>(mc, config.seed), {}, std::nullopt};
  MetricsReport& report = result.report;
  report.parameter_count = result.params.count();

  Adam<float> adam(result.params.tensors());
  std::optional<std::vector<std::uint8_t>> best_bytes;
  int since_best = 0;

  const std::size_t n = train_set.samples.size();
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto te = Clock::now();
    const double lr = step_decay_lr(config.lr, config.lr_decay, config.decay_period, epoch);
    const std::uint64_t epoch_seed = mix_seed(config.seed, static_cast<std::uint64_t>(epoch) + 1);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(epoch_seed);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const float inv_batch = 1.0f / static_cast<float>(stop - start);
      adam.zero_grad();
      for (std::size_t q = start; q < stop; ++q) {
        const PointCloud& src = train_set.samples[order[q]];
        const std::uint64_t sample_seed = mix_seed(epoch_seed, order[q]);
        const PointCloud pc = config.augment ? augment(src, mix_seed(sample_seed, 0xa5)) : src;
        Tape<float> tape;
        TapeScope<float> scope(tape);
        ForwardOptions opts;
        opts.training = true;
        opts.seed = sample_seed;
        auto fr = forward<float>(pc, result.params, mc, opts);
        const auto label = static_cast<std::size_t>(*src.label);
        auto loss = total_loss(fr.logits, label, fr.routing, mc);
        loss_sum += loss.item();
        if (argmax(fr.logits.data().data(), mc.num_classes) == static_cast<int>(label)) ++correct;
        tape.backward(ops::scale(loss, inv_batch));
      }
      adam.step(lr);
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.lr = lr;
    em.train_loss = loss_sum / static_cast<double>(n);
    em.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    bool improved = false;
    if (val_set) {
      em.val_accuracy = evaluate(mc, result.params, *val_set).accuracy;
      improved = !report.best_val_accuracy || *em.val_accuracy > *report.best_val_accuracy;
    } else {
      improved = true;
    }
    if (improved) {
      report.best_epoch = epoch;
      report.best_val_accuracy = em.val_accuracy;
      best_bytes = encode_checkpoint(mc, result.params);
      since_best = 0;
    } else {
      ++since_best;
    }
    em.seconds = seconds_since(te);
    report.epochs.push_back(em);

    if (on_epoch && !on_epoch(em)) break;
    if (config.patience > 0 && since_best >= config.patience) break;
    if (em.val_accuracy && *em.val_accuracy >= config.stop_val_accuracy) break;
  }

  if (best_bytes) result.params = decode_checkpoint(*best_bytes).params;
  if (!config.checkpoint_dir.empty()) {
    std::filesystem::create_directories(config.checkpoint_dir);
    const auto path = config.checkpoint_dir / "best.ptck";
    save_checkpoint(path, mc, result.params);
    result.checkpoint = path;
  }
  if (test_set) report.test_accuracy = evaluate(mc, result.params, *test_set).accuracy;
  report.wall_seconds = seconds_since(t0);
  return result;
}

TrainResult train_from_config(const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  config.validate_paths();
  auto load = [&](const std::filesystem::path& p, Split split) {
    LoadOptions opts;
    opts.sampling = config.sampling;
    opts.split = split;
    return load_dataset(p, opts);
  };
  const LabeledDataset train_set = load(config.train_data, Split::Train);
  std::optional<LabeledDataset> val_set, test_set;
  if (!config.val_data.empty()) val_set = load(config.val_data, Split::Val);
  if (!config.test_data.empty()) test_set = load(config.test_data, Split::Test);

  TrainResult result = train(config, train_set, val_set ? &*val_set : nullptr,
                             test_set ? &*test_set : nullptr, on_epoch);
  if (!config.checkpoint_dir.empty()) {
    auto write = [](const std::filesystem::path& p, const std::string& text) {
      std::ofstream out(p);
      out << text;
      if (!out) fail(ErrorKind::Io, "cannot write " + p.string());
    };
    write(config.checkpoint_dir / "metrics.txt", result.report.to_text());
    write(config.checkpoint_dir / "metrics.tsv", result.report.to_tsv());
  }
  return result;
}

// ---- evaluation ------------------------------------------------------------------

EvalResult evaluate(const ModelConfig& config, const ModelParams<float>& params,
                    const LabeledDataset& dataset) {
  check_labels(config, dataset, "evaluation");
  const std::size_t n = dataset.samples.size(), c = config.num_classes;
  EvalResult r;
  r.num_classes = c;
  r.logits.assign(n * c, 0.0f);
  r.predictions.assign(n, 0);
  for_each_sample(n, [&](std::size_t i) {
    auto fr = forward<float>(dataset.samples[i], params, config, ForwardOptions{});
    std::copy_n(fr.logits.data().data(), c, r.logits.begin() + static_cast<std::ptrdiff_t>(i * c));
    r.predictions[i] = argmax(&r.logits[i * c], c);
  });
  std::vector<std::size_t> hits(c, 0);
  r.per_class_count.assign(c, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = *dataset.samples[i].label;
    ++r.per_class_count[static_cast<std::size_t>(label)];
    if (r.predictions[i] == label) {
      ++correct;
      ++hits[static_cast<std::size_t>(label)];
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  r.per_class_accuracy.assign(c, 0.0);
  for (std::size_t k = 0; k < c; ++k)
    if (r.per_class_count[k])
      r.per_class_accuracy[k] = static_cast<double>(hits[k]) / static_cast<double>(r.per_class_count[k]);
  return r;
}

// ---- retrieval -------------------------------------------------------------------

RetrievalIndex build_retrieval_index(const ModelConfig& config, const ModelParams<float>& params,
                                     const LabeledDataset& dataset) {
  RetrievalIndex index;
  index.dim = config.head_dims.back();
  const std::size_t n = dataset.samples.size();
  index.features.assign(n * index.dim, 0.0f);
  index.labels.assign(n, -1);
  index.ids.resize(n);
  for_each_sample(n, [&](std::size_t i) {
    auto fr = forward<float>(dataset.samples[i], params, config, ForwardOptions{});
    const auto& f = fr.retrieval.data();
    double norm = 0;
    for (float v : f) norm += double(v) * v;
    norm = std::sqrt(norm);
    float* row = &index.features[i * index.dim];
    if (norm > 0) {
      for (std::size_t d = 0; d < index.dim; ++d) row[d] = static_cast<float>(f[d] / norm);
    } else {
      // A zero feature has no direction; use a fixed unit vector.
      row[0] = 1.0f;
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    index.labels[i] = dataset.samples[i].label.value_or(-1);
    index.ids[i] = dataset.samples[i].id;
  }
  return index;
}

double average_precision(std::span<const bool> relevance) {
  // Summed in extended precision so short rational cases such as 5/6 come
  // out as the correctly rounded double.
  long double sum = 0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < relevance.size(); ++r) {
    if (!relevance[r]) continue;
    ++hits;
    sum += static_cast<long double>(hits) / static_cast<long double>(r + 1);
  }
  return hits ? static_cast<double>(sum / static_cast<long double>(hits)) : 0.0;
}

RetrievalResult retrieve_and_score(const RetrievalIndex& index, const RetrievalIndex& queries,
                                   bool exclude_self) {
  if (index.size() == 0) fail(ErrorKind::Retrieval, "retrieval index is empty");
  if (queries.size() == 0) fail(ErrorKind::Retrieval, "no queries given");
  if (index.dim != queries.dim)
    fail(ErrorKind::Retrieval, "query dimension " + std::to_string(queries.dim) +
                                   " does not match index dimension " + std::to_string(index.dim));
  const std::size_t nq = queries.size(), ni = index.size(), d = index.dim;
  RetrievalResult r;
  r.average_precisions.assign(nq, 0.0);
  r.rankings.resize(nq);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t qi = 0; qi < static_cast<std::ptrdiff_t>(nq); ++qi) {
    const auto q = static_cast<std::size_t>(qi);
    const float* qf = &queries.features[q * d];
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(ni);
    for (std::size_t j = 0; j < ni; ++j) {
      if (exclude_self && index.ids[j] == queries.ids[q]) continue;
      const float* f = &index.features[j * d];
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += double(qf[k]) * f[k];
      scored.emplace_back(-s, j);
    }
    std::sort(scored.begin(), scored.end());
    auto rel = std::make_unique<bool[]>(scored.size());
    auto& ranking = r.rankings[q];
    ranking.reserve(scored.size());
    for (std::size_t t = 0; t < scored.size(); ++t) {
      ranking.push_back(scored[t].second);
      rel[t] = index.labels[scored[t].second] == queries.labels[q];
    }
    r.average_precisions[q] = average_precision(std::span<const bool>(rel.get(), scored.size()));
  }
  r.map = std::accumulate(r.average_precisions.begin(), r.average_precisions.end(), 0.0) /
          static_cast<double>(nq);
  return r;
}

// ---- robustness ----------------------------------------------------------------------

RobustnessResult run_robustness(const ModelConfig& config, const ModelParams<float>& params,
                                const LabeledDataset& dataset, std::uint64_t seed,
                                const RobustnessOptions& options) {
  RobustnessResult r;
  if (options.trained_with_augmentation.value_or(false))
    r.warnings.push_back("checkpoint was trained with augmentation; the protocol expects none");
  for (const auto& s : dataset.samples)
    if (s.size() != options.protocol_points) {
      r.warnings.push_back("clouds have " + std::to_string(s.size()) + " points; the protocol uses " +
                           std::to_string(options.protocol_points));
      break;
    }
  const auto suite = build_robustness_suite(dataset, seed);
  RetrievalIndex original_index;
  for (const auto& entry : suite) {
    r.entries.push_back({entry.name, evaluate(config, params, entry.data).accuracy});
    if (entry.name == "original") original_index = build_retrieval_index(config, params, entry.data);
    if (entry.name == "partial_query_75") {
      const auto queries = build_retrieval_index(config, params, entry.data);
      r.partial_query_map = retrieve_and_score(original_index, queries, true).map;
    }
  }
  return r;
}

// ---- trace export -----------------------------------------------------------------------

std::vector<std::filesystem::path> export_trace(const ModelConfig& config,
                                                const ModelParams<float>& params,
                                                const PointCloud& pc,
                                                const std::filesystem::path& out_dir) {
  auto fr = forward<float>(pc, params, config, ForwardOptions{});
  const ForwardTrace& tr = fr.trace;
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> paths = {out_dir / "attention.tsv", out_dir / "groups.tsv",
                                              out_dir / "aggregation.tsv"};
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) fail(ErrorKind::Io, "cannot write " + p.string());
    out << std::setprecision(9);
    return out;
  };
  {
    auto out = open(paths[0]);
    out << "pass\tpoint\tattention\n";
    for (std::size_t m = 0; m < tr.passes.size(); ++m)
      for (std::size_t i = 0; i < tr.passes[m].attention_mean.size(); ++i)
        out << m << '\t' << i << '\t' << tr.passes[m].attention_mean[i] << '\n';
    if (!out) fail(ErrorKind::Io, "write failed for " + paths[0].string());
  }
  {
    auto out = open(paths[1]);
    out << "pass\tpoint\tgroup\n";
    for (std::size_t m = 0; m < tr.passes.size(); ++m)
      for (std::size_t i = 0; i < tr.passes[m].assignments.size(); ++i)
        out << m << '\t' << i << '\t' << tr.passes[m].assignments[i] << '\n';
    if (!out) fail(ErrorKind::Io, "write failed for " + paths[1].string());
  }
  {
    auto out = open(paths[2]);
    const std::size_t mg = tr.passes.size() * tr.num_groups;
    const std::size_t per = mg ? tr.aggregation_weights.size() / mg : 0;
    out << (per > 1 ? "pass\tgroup\tchannel\tweight\n" : "pass\tgroup\tweight\n");
    for (std::size_t v = 0; v < mg; ++v)
      for (std::size_t c = 0; c < per; ++c) {
        out << v / tr.num_groups << '\t' << v % tr.num_groups << '\t';
        if (per > 1) out << c << '\t';
        out << tr.aggregation_weights[v * per + c] << '\n';
      }
    if (!out) fail(ErrorKind::Io, "write failed for " + paths[2].string());
  }
  return paths;
}

}  // namespace pt
