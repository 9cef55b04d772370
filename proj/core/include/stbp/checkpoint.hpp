#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stbp/config.hpp"
#include "stbp/data.hpp"
#include "stbp/network.hpp"
#include "stbp/optim.hpp"

namespace stbp {

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Little-endian container: "STBN", u32 version, u32 config length, config
// text, then until end of file records {u16 name_len, name, u8 dtype (0 =
// f32), u8 ndim, u32 dims[ndim], payload}.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::string config_text;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  const NamedTensor& get(const std::string& name) const;  // FormatError if absent
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Everything needed to rebuild a model and continue or evaluate a run.
struct ModelState {
  RunConfig config;
  Network net;
  int classes = 2;
  Shape input;            // [1, 1, C, H, W]
  ChannelStats normalization;
  int epoch = 0;          // completed epochs
  std::optional<Sgd> optimizer;
};

// Tensor names: <node>.weight/.bias/.lambda/.beta, <node>.running_mean/
// .running_var/.num_updates, optim.<param>.velocity, optim.lr,
// data.mean/.std, meta.epoch/.fused/.classes/.input.
Checkpoint make_checkpoint(const ModelState& state);
// Rebuilds the architecture from the embedded config and loads every tensor.
ModelState restore_checkpoint(const Checkpoint& ckpt);

}  // namespace stbp
