#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stbp/arch.hpp"
#include "stbp/data.hpp"
#include "stbp/optim.hpp"

namespace stbp {

// Every knob of a run. Text form: one "key = value" per line, '#' starts a
// comment, unknown keys are rejected.
struct RunConfig {
  // Model.
  std::string arch = "resnet8";
  int width = 16;
  int depth = 20;
  bool use_tdbn = true;
  int timesteps = 2;
  double tau_decay = 0.25;
  double v_th = 1.0;
  double surrogate_width = 1.0;
  bool detach_reset = false;

  // Optimization.
  int batch_size = 16;
  int epochs = 10;
  double lr = 0.1;
  double momentum = 0.9;
  int lr_decay_every = 35;
  double lr_decay_factor = 0.1;
  std::uint64_t seed = 1;

  // Data. `dataset` is a toy kind (two_gaussians | xor_patches |
  // moving_bar) or a manifest path relative to the config file.
  std::string dataset = "two_gaussians";
  std::string eval_dataset;  // empty: toy sets draw a fresh split
  int train_size = 64;
  int test_size = 64;
  bool augment = false;
  double slice_ms = 30.0;
  int frame_height = 0;
  int frame_width = 0;
  int image_size = 8;

  // Output.
  std::string out_dir = "runs";
  std::string resume;  // checkpoint to continue from

  // Diagnostics.
  std::vector<double> sigma_in;  // empty: the diagnostic's default grid
  int samples = 4000;
  std::string checkpoint;        // opcount: fused checkpoint to analyze
  std::string diag_input = "data";  // opcount input: data | zeros
  double diag_surrogate_width = 0.0;  // gradnorm; 0 selects the isometric width

  // Directory of the config file; resolves relative paths. Not serialized.
  std::filesystem::path base_dir;

  // Range checks for every field; throws ConfigError naming the key.
  void validate() const;

  LifHyper lif() const;
  ArchConfig arch_config(int classes, int input_channels, int input_hw) const;
  SgdConfig sgd() const;
  bool is_toy() const;
  std::filesystem::path resolve(const std::string& path) const;

  friend bool operator==(const RunConfig& a, const RunConfig& b);
};

// Throws ConfigError with the line number and key on malformed input.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Canonical text form; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& c);

std::vector<std::string> config_keys();

}  // namespace stbp
