// Command-line front end for training, evaluation, retrieval, robustness
// runs, corruption export, trace export and synthetic data generation.

#include <omp.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>

#include "pt/checkpoint.hpp"
#include "pt/config.hpp"
#include "pt/corruptions.hpp"
#include "pt/errors.hpp"
#include "pt/harness.hpp"

namespace {

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  return s;
}

pt::LabeledDataset load(const std::string& manifest, std::size_t points, std::uint64_t seed) {
  pt::LoadOptions opts;
  if (points > 0) {
    pt::SamplingSpec s;
    s.target_count = points;
    s.seed = seed;
    opts.sampling = s;
  }
  return pt::load_dataset(manifest, opts);
}

void write_desk_config(const std::filesystem::path& dir, std::size_t points) {
  std::ofstream out(dir / "desk.cfg");
  out << "# Desk-scale run on the synthetic roof splits (" << points << " points per cloud).\n"
         "train_data = train/manifest.txt\n"
         "val_data = val/manifest.txt\n"
         "test_data = test/manifest.txt\n"
         "checkpoint_dir = run\n"
         "max_epochs = 50\n"
         "batch_size = 18\n"
         "lr = 0.001\n"
         "augment = true\n"
         "seed = 1\n"
         "stop_val_accuracy = 0.98\n"
         "model.embed_dim = 64\n"
         "model.hidden_dim = 64\n"
         "model.num_classes = 3\n";
  if (!out) pt::fail(pt::ErrorKind::Io, "cannot write " + (dir / "desk.cfg").string());
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("PT_NUM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }

  CLI::App app{"Point transformer harness"};
  app.require_subcommand(1);

  std::string config_path, ckpt, data, index_data, query_data, kind, out, cloud;
  std::uint64_t seed = 0;
  std::size_t per_class = 200, val_per_class = 50, test_per_class = 50, points = 0, synth_points = 256;
  double sigma = -1, fraction = -1, noise = 0.01;
  std::size_t count = 0;
  bool include_self = false;

  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", config_path, "Config file")->required();

  auto* eval = app.add_subcommand("eval", "Classification accuracy of a checkpoint");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--data", data, "Dataset manifest")->required();
  eval->add_option("--points", points, "FPS-sample clouds to this many points");
  eval->add_option("--logits", out, "Write per-sample logits to this TSV file");

  auto* retrieve = app.add_subcommand("retrieve", "Retrieval MAP with cosine similarity");
  retrieve->add_option("--ckpt", ckpt)->required();
  retrieve->add_option("--index-data", index_data)->required();
  retrieve->add_option("--query-data", query_data)->required();
  retrieve->add_option("--points", points);
  retrieve->add_flag("--include-self", include_self, "Keep a query's own entry in its ranking");

  auto* robust = app.add_subcommand("robust", "Accuracy over the corruption suite");
  robust->add_option("--ckpt", ckpt)->required();
  robust->add_option("--data", data)->required();
  robust->add_option("--seed", seed);
  robust->add_option("--points", points);

  auto* corrupt = app.add_subcommand("corrupt", "Write a corrupted copy of a dataset");
  corrupt->add_option("--data", data)->required();
  corrupt->add_option("--kind", kind, "Corruption kind, or 'suite' for all protocols")->required();
  corrupt->add_option("--out", out)->required();
  corrupt->add_option("--seed", seed);
  corrupt->add_option("--sigma", sigma);
  corrupt->add_option("--fraction", fraction);
  corrupt->add_option("--count", count);

  auto* trace = app.add_subcommand("trace", "Export attention, groups and aggregation weights");
  trace->add_option("--ckpt", ckpt)->required();
  trace->add_option("--cloud", cloud)->required();
  trace->add_option("--out", out)->required();

  auto* synth = app.add_subcommand("synth", "Generate synthetic roof splits");
  synth->add_option("--per-class", per_class, "Training roofs per class")->required();
  synth->add_option("--val-per-class", val_per_class);
  synth->add_option("--test-per-class", test_per_class);
  synth->add_option("--points", synth_points);
  synth->add_option("--noise", noise);
  synth->add_option("--seed", seed);
  synth->add_option("--out", out)->required();

  auto* params = app.add_subcommand("params", "Parameter count per module");
  params->add_option("--ckpt", ckpt, "Checkpoint (default: built-in full-size config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error\tusage_error\t" << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    std::cout << std::setprecision(6) << std::fixed;
    if (*train) {
      const auto cfg = pt::load_train_config(config_path);
      auto result = pt::train_from_config(cfg, [](const pt::EpochMetrics& e) {
        std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " train_acc " << e.train_accuracy;
        if (e.val_accuracy) std::cerr << " val_acc " << *e.val_accuracy;
        std::cerr << '\n';
        return true;
      });
      std::cout << result.report.to_text();
      if (result.checkpoint) std::cout << "checkpoint: " << result.checkpoint->string() << '\n';
    } else if (*eval) {
      const auto ck = pt::load_checkpoint(ckpt);
      const auto ds = load(data, points, seed);
      const auto r = pt::evaluate(ck.config, ck.params, ds);
      std::cout << "accuracy\t" << r.accuracy << '\n';
      for (std::size_t k = 0; k < r.num_classes; ++k)
        std::cout << "class\t" << ds.class_names[k] << '\t' << r.per_class_accuracy[k] << '\t'
                  << r.per_class_count[k] << '\n';
      if (!out.empty()) {
        std::ofstream f(out);
        f << std::setprecision(9);
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
          f << ds.samples[i].id << '\t' << *ds.samples[i].label;
          for (std::size_t k = 0; k < r.num_classes; ++k) f << '\t' << r.logits[i * r.num_classes + k];
          f << '\n';
        }
        if (!f) pt::fail(pt::ErrorKind::Io, "cannot write " + out);
      }
    } else if (*retrieve) {
      const auto ck = pt::load_checkpoint(ckpt);
      const auto index = pt::build_retrieval_index(ck.config, ck.params, load(index_data, points, seed));
      const auto queries = index_data == query_data
                               ? index
                               : pt::build_retrieval_index(ck.config, ck.params, load(query_data, points, seed));
      const auto r = pt::retrieve_and_score(index, queries, !include_self);
      std::cout << "map\t" << r.map << '\n';
    } else if (*robust) {
      const auto ck = pt::load_checkpoint(ckpt);
      const auto r = pt::run_robustness(ck.config, ck.params, load(data, points, seed), seed);
      for (const auto& w : r.warnings) std::cerr << "warning\t" << w << '\n';
      for (const auto& e : r.entries) std::cout << "accuracy\t" << e.name << '\t' << e.accuracy << '\n';
      std::cout << "partial_query_map\t" << r.partial_query_map << '\n';
    } else if (*corrupt) {
      const auto ds = load(data, 0, seed);
      if (kind == "suite") {
        std::cout << pt::write_suite(out, pt::build_robustness_suite(ds, seed)).string() << '\n';
      } else {
        auto spec = pt::CorruptionSpec::defaults(pt::parse_corruption_kind(kind), seed);
        if (sigma >= 0) spec.sigma = sigma;
        if (fraction >= 0) spec.fraction = fraction;
        if (count > 0) spec.target_count = count;
        const auto corrupted = pt::corrupt_dataset(ds, spec, kind);
        std::cout << pt::write_dataset(out, corrupted, pt::CloudEncoding::Binary).string() << '\n';
      }
    } else if (*trace) {
      const auto ck = pt::load_checkpoint(ckpt);
      const auto pc = pt::normalize_unit_sphere(pt::read_cloud(cloud));
      for (const auto& p : pt::export_trace(ck.config, ck.params, pc, out)) std::cout << p.string() << '\n';
    } else if (*synth) {
      const auto splits = pt::generate_synthetic_splits(per_class, val_per_class, test_per_class,
                                                        static_cast<float>(noise), seed, synth_points);
      const std::filesystem::path dir(out);
      pt::write_dataset(dir / "train", splits.train, pt::CloudEncoding::Binary);
      pt::write_dataset(dir / "val", splits.val, pt::CloudEncoding::Binary);
      pt::write_dataset(dir / "test", splits.test, pt::CloudEncoding::Binary);
      write_desk_config(dir, synth_points);
      std::cout << (dir / "desk.cfg").string() << '\n';
    } else if (*params) {
      pt::ModelConfig cfg;
      if (!ckpt.empty()) cfg = pt::load_checkpoint(ckpt).config;
      std::cout << pt::count_parameters(cfg).to_text();
    }
  } catch (const pt::Error& e) {
    std::cerr << "error\t" << pt::to_string(e.kind()) << '\t' << one_line(e.message()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error\tinternal_error\t" << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}
