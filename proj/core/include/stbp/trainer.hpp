#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "stbp/checkpoint.hpp"
#include "stbp/config.hpp"
#include "stbp/data.hpp"
#include "stbp/diagnostics.hpp"

namespace stbp {

// Resolves a dataset spec: a toy kind name, "toy:<kind>:<n>:<seed>", or a
// manifest path (relative paths resolve against the config directory).
// `eval_split` selects the held-out toy split when the dataset string is a bare kind.
Dataset load_dataset(const RunConfig& config, const std::string& spec,
                     bool eval_split);

// Toy generation options implied by a config.
ToyOptions toy_options(const RunConfig& config);

// Batch encoding implied by a config (no augmentation).
BatchOptions batch_options(const RunConfig& config);

struct Experiment {
  ModelState state;
  Dataset train;
  Dataset eval;
};

// Builds datasets and a freshly initialized model (epoch 0).
Experiment prepare_experiment(const RunConfig& config);
// Builds datasets and restores the model from a checkpoint. The checkpoint's
// config snapshot must describe the same model as `config`.
Experiment resume_experiment(const RunConfig& config,
                             const std::filesystem::path& checkpoint);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double eval_acc = 0.0;
  double lr = 0.0;
  double mean_firing_rate = 0.0;
  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

// Batch index lists for one epoch: a seeded shuffle cut into batch_size
// chunks. A trailing single item joins the previous batch, since batch
// statistics need at least two samples.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n,
                                                    int batch_size,
                                                    std::uint64_t seed,
                                                    int epoch);

// One pass of mini-batch SGD over the training set; advances state.epoch.
EpochMetrics train_epoch(Experiment& exp);

struct EvalResult {
  double accuracy = 0.0;
  std::size_t count = 0;
  SpikeProfile firing;  // pooled over every evaluated sample
};

// Inference-mode accuracy and per-layer firing rates.
EvalResult evaluate(Network& net, const Dataset& data,
                    const BatchOptions& opts, int batch_size);

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

struct TrainOptions {
  std::filesystem::path out_dir;
  std::function<void(const EpochMetrics&)> on_epoch;
};

// Trains for config.epochs, resuming from config.resume when set. Writes
// metrics.csv plus epoch_<k>.stbn and last.stbn under out_dir. Returns the
// metrics of the epochs run by this call.
std::vector<EpochMetrics> run_training(const RunConfig& config,
                                       const TrainOptions& opts);

}  // namespace stbp
