// Command-line front end: dataset synthesis, training, CMC evaluation, and
// the gradient verification commands.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "reid/data_io.hpp"
#include "reid/evaluation.hpp"
#include "reid/gradcheck.hpp"
#include "reid/kvconfig.hpp"
#include "reid/trainer.hpp"

namespace fs = std::filesystem;
using namespace reid;

namespace {

NetConfig net_from_kv(KeyValueConfig& kv) {
  NetConfig c;
  c.input_channels = kv.get_size("net.input_channels", c.input_channels);
  c.input_height = kv.get_size("net.input_height", c.input_height);
  c.input_width = kv.get_size("net.input_width", c.input_width);
  c.conv1_channels = kv.get_size("net.conv1_channels", c.conv1_channels);
  c.conv1_kernel = kv.get_size("net.conv1_kernel", c.conv1_kernel);
  c.conv1_stride = kv.get_size("net.conv1_stride", c.conv1_stride);
  c.pool1_window = kv.get_size("net.pool1_window", c.pool1_window);
  c.pool1_stride = kv.get_size("net.pool1_stride", c.pool1_stride);
  c.conv2_channels = kv.get_size("net.conv2_channels", c.conv2_channels);
  c.conv2_kernel = kv.get_size("net.conv2_kernel", c.conv2_kernel);
  c.conv2_stride = kv.get_size("net.conv2_stride", c.conv2_stride);
  c.pool2_window = kv.get_size("net.pool2_window", c.pool2_window);
  c.pool2_stride = kv.get_size("net.pool2_stride", c.pool2_stride);
  c.feature_dim = kv.get_size("net.feature_dim", c.feature_dim);
  c.metric_dim = kv.get_size("net.metric_dim", c.metric_dim);
  c.joint_metric = kv.get_bool("net.joint_metric", c.joint_metric);
  c.l2_epsilon = kv.get_double("net.l2_epsilon", c.l2_epsilon);
  return c;
}

TrainConfig train_from_kv(KeyValueConfig& kv) {
  TrainConfig c;
  c.classes_per_batch =
      kv.get_size("train.classes_per_batch", c.classes_per_batch);
  c.triplets_per_batch =
      kv.get_size("train.triplets_per_batch", c.triplets_per_batch);
  c.learning_rate = kv.get_double("train.learning_rate", c.learning_rate);
  c.lr_decay_factor =
      kv.get_double("train.lr_decay_factor", c.lr_decay_factor);
  c.lr_decay_every = kv.get_size("train.lr_decay_every", c.lr_decay_every);
  c.weight_decay = kv.get_double("train.weight_decay", c.weight_decay);
  c.momentum = kv.get_double("train.momentum", c.momentum);
  c.max_iterations = kv.get_size("train.max_iterations", c.max_iterations);
  c.stop_violation_threshold = kv.get_size("train.stop_violation_threshold",
                                           c.stop_violation_threshold);
  c.stop_on_margin = kv.get_bool("train.stop_on_margin", c.stop_on_margin);
  c.stop_on_holdout = kv.get_bool("train.stop_on_holdout", c.stop_on_holdout);
  c.augment = kv.get_bool("train.augment", c.augment);
  c.crop_perturbation =
      kv.get_int("train.crop_perturbation", c.crop_perturbation);
  c.deterministic = kv.get_bool("train.deterministic", c.deterministic);
  c.threads = kv.get_size("train.threads", c.threads);
  c.seed = kv.get_u64("train.seed", c.seed);
  if (!(c.learning_rate > 0)) throw ParamError("learning rate must be > 0");
  if (c.weight_decay < 0) throw ParamError("weight decay must be >= 0");
  return c;
}

SynthConfig synth_from_kv(KeyValueConfig& kv) {
  SynthConfig c;
  c.num_identities = kv.get_size("synth.identities", c.num_identities);
  c.images_per_view = kv.get_size("synth.images_per_view", c.images_per_view);
  c.channels = kv.get_size("synth.channels", c.channels);
  c.height = kv.get_size("synth.height", c.height);
  c.width = kv.get_size("synth.width", c.width);
  c.brightness_shift =
      kv.get_double("synth.brightness_shift", c.brightness_shift);
  c.channel_gain = kv.get_double("synth.channel_gain", c.channel_gain);
  c.view_jitter = kv.get_int("synth.view_jitter", c.view_jitter);
  c.noise_std = kv.get_double("synth.noise_std", c.noise_std);
  c.seed = kv.get_u64("synth.seed", c.seed);
  return c;
}

KeyValueConfig load_kv(const std::string& config_path) {
  if (config_path.empty()) return KeyValueConfig();
  return KeyValueConfig::parse_file(config_path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory: " + dir);
}

int cmd_synth(const std::string& config_path, const std::string& out_dir,
              const std::uint64_t* seed) {
  KeyValueConfig kv = load_kv(config_path);
  SynthConfig cfg = synth_from_kv(kv);
  kv.finish();
  if (seed) cfg.seed = *seed;
  const Dataset ds = synth_generate(cfg);
  write_dataset(ds, out_dir);
  std::printf("records=%zu identities=%zu\n", ds.size(),
              ds.num_identities());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, const std::uint64_t* seed,
              const std::size_t* threads, const std::string& dump_batch_path) {
  KeyValueConfig kv = load_kv(config_path);
  const NetConfig net_cfg = net_from_kv(kv);
  TrainConfig tc = train_from_kv(kv);
  kv.finish();
  if (seed) tc.seed = *seed;
  if (threads) tc.threads = *threads;

  const Dataset dataset = load_dataset(data_path);
  ensure_dir(out_dir);

  Model model(net_cfg);
  init_params(model, Rng(tc.seed));

  if (!dump_batch_path.empty()) {
    Rng batch_rng = Rng(tc.seed).derive(stream::kBatch, 1);
    const TripletBatch first = generate_batch(
        dataset.labels, tc.classes_per_batch, tc.triplets_per_batch,
        batch_rng);
    std::ofstream out(dump_batch_path);
    if (!out) throw IoError("cannot write batch dump: " + dump_batch_path);
    dump_batch(first, out);
  }

  const std::string log_path = (fs::path(out_dir) / "train.log").string();
  std::ofstream log(log_path);
  if (!log) throw IoError("cannot write training log: " + log_path);
  const std::string ckpt_path =
      (fs::path(out_dir) / "checkpoint.bin").string();

  TrainState state;
  try {
    train_loop(model, dataset, tc, state, &log);
  } catch (const DivergenceError& e) {
    // Parameters still hold the last finite values; keep them.
    save_checkpoint(model, state.iteration, ckpt_path);
    std::cerr << "error: " << e.what() << " (last-good checkpoint kept)\n";
    return 2;
  }
  save_checkpoint(model, state.iteration, ckpt_path);
  std::printf("stop_reason=%s iterations=%zu order_violations=%zu loss=%.6g\n",
              state.stop_reason.c_str(), state.iteration,
              state.last_report.order_violations, state.last_report.loss);
  return 0;
}

int cmd_eval(const std::string& config_path,
             const std::string& checkpoint_path, const std::string& data_path,
             const std::string& out_dir, std::size_t splits,
             const std::uint64_t* seed, const std::size_t* threads,
             const std::string& dump_metric) {
  KeyValueConfig kv = load_kv(config_path);
  splits = kv.get_size("eval.splits", splits);
  std::uint64_t eval_seed = kv.get_u64("eval.seed", 0);
  std::size_t eval_threads = kv.get_size("eval.threads", 1);
  kv.finish();
  if (seed) eval_seed = *seed;
  if (threads) eval_threads = *threads;

  auto [model, meta] = load_checkpoint(checkpoint_path);
  const Dataset dataset = load_dataset(data_path);
  if (dataset.manifest.channels != model.config.input_channels ||
      dataset.manifest.height < model.config.input_height ||
      dataset.manifest.width < model.config.input_width)
    throw DatasetError("dataset images " +
                       std::to_string(dataset.manifest.channels) + "x" +
                       std::to_string(dataset.manifest.height) + "x" +
                       std::to_string(dataset.manifest.width) +
                       " do not cover the model input " +
                       Shape{model.config.input_channels,
                             model.config.input_height,
                             model.config.input_width}
                           .str());

  Rng rng = Rng(eval_seed).derive(stream::kEval);
  const CMCCurve curve =
      cmc_curve(model, dataset, splits, rng, eval_threads);

  ensure_dir(out_dir);
  const std::string csv_path = (fs::path(out_dir) / "cmc.csv").string();
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write CMC csv: " + csv_path);
  write_cmc_csv(curve, csv);

  const std::size_t g = curve.rates.size();
  auto rate_at = [&](std::size_t rank) {
    return curve.rates[std::min(rank, g) - 1];
  };
  std::printf("rank1=%.4f rank5=%.4f rank10=%.4f\n", rate_at(1), rate_at(5),
              rate_at(10));

  if (!dump_metric.empty()) {
    Tensor m;
    if (model.metric) {
      m = reconstruct_metric(*model.metric);
    } else {
      // Effective metric of the feature-only model.
      m = Tensor::zeros({model.config.feature_dim, model.config.feature_dim});
      for (std::size_t i = 0; i < model.config.feature_dim; ++i)
        m[i * model.config.feature_dim + i] = 1.0;
    }
    std::ofstream out(dump_metric);
    if (!out) throw IoError("cannot write metric dump: " + dump_metric);
    const std::size_t d = m.shape()[0];
    char cell[32];
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        std::snprintf(cell, sizeof cell, "%.17g", m[i * d + j]);
        out << cell << (j + 1 == d ? "\n" : " ");
      }
    }
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& corrupt) {
  const GradCheckReport report = run_gradcheck(seed, corrupt);
  for (const LayerCheck& l : report.layers)
    std::printf("layer=%-6s max_rel_err=%.3e\n", l.layer.c_str(),
                l.max_rel_err);
  if (!report.passed) {
    std::fprintf(stderr, "gradient check failed at layer %s\n",
                 report.failing_layer.c_str());
    return 2;
  }
  std::printf("gradcheck passed (tolerance %.0e)\n", report.tolerance);
  return 0;
}

int cmd_equiv(std::size_t images, std::size_t triplets, std::uint64_t seed) {
  const EquivalenceReport r = run_equivalence(images, triplets, seed);
  std::printf("triplets=%zu distinct_images=%zu\n", r.num_triplets,
              r.num_images);
  std::printf("per_triplet_propagations=%zu deduplicated_propagations=%zu\n",
              r.per_triplet_forwards, r.deduplicated_forwards);
  std::printf("max_abs_gradient_diff=%.3e\n", r.max_abs_diff);
  if (!r.passed(1e-9)) {
    std::fprintf(stderr, "gradient routes disagree or counts are wrong\n");
    return 2;
  }
  std::printf("equivalence check passed (tolerance 1e-09)\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"triplet-trained joint feature and metric network for person "
               "re-identification"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_path, checkpoint_path;
  std::string dump_metric, corrupt, dump_batch;
  std::uint64_t seed = 0;
  std::size_t threads = 1, splits = 10, images = 10, triplets = 50;

  CLI::App* synth =
      app.add_subcommand("synth", "generate a synthetic two-view dataset");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--config", config_path, "key=value config file");
  auto* synth_seed = synth->add_option("--seed", seed, "dataset seed");

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--data", data_path, "dataset manifest")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--config", config_path, "key=value config file");
  auto* train_seed = train->add_option("--seed", seed, "training seed");
  auto* train_threads =
      train->add_option("--threads", threads, "worker threads");
  train->add_option("--dump-batch", dump_batch,
                    "write the first triplet batch to this file");

  CLI::App* eval = app.add_subcommand("eval", "evaluate CMC retrieval rates");
  eval->add_option("--checkpoint", checkpoint_path, "trained checkpoint")
      ->required();
  eval->add_option("--data", data_path, "dataset manifest")->required();
  eval->add_option("--out", out_dir, "output directory")->required();
  eval->add_option("--config", config_path, "key=value config file");
  eval->add_option("--splits", splits, "gallery/probe splits to average");
  auto* eval_seed = eval->add_option("--seed", seed, "split seed");
  auto* eval_threads = eval->add_option("--threads", threads, "worker threads");
  eval->add_option("--dump-metric", dump_metric,
                   "write the reconstructed metric matrix to this file");

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of every backward pass");
  gradcheck->add_option("--seed", seed, "draw seed");
  gradcheck->add_option("--corrupt", corrupt,
                        "test hook: corrupt the named layer's gradient");

  CLI::App* equiv = app.add_subcommand(
      "equiv", "compare per-triplet and per-image gradient computation");
  equiv->add_option("--images", images, "distinct images");
  equiv->add_option("--triplets", triplets, "triplets over those images");
  equiv->add_option("--seed", seed, "draw seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::uint64_t* seed_arg = nullptr;
  const std::size_t* threads_arg = nullptr;

  try {
    if (synth->parsed()) {
      if (synth_seed->count()) seed_arg = &seed;
      return cmd_synth(config_path, out_dir, seed_arg);
    }
    if (train->parsed()) {
      if (train_seed->count()) seed_arg = &seed;
      if (train_threads->count()) threads_arg = &threads;
      return cmd_train(config_path, data_path, out_dir, seed_arg, threads_arg,
                       dump_batch);
    }
    if (eval->parsed()) {
      if (eval_seed->count()) seed_arg = &seed;
      if (eval_threads->count()) threads_arg = &threads;
      return cmd_eval(config_path, checkpoint_path, data_path, out_dir,
                      splits, seed_arg, threads_arg, dump_metric);
    }
    if (gradcheck->parsed()) return cmd_gradcheck(seed, corrupt);
    if (equiv->parsed()) return cmd_equiv(images, triplets, seed);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
