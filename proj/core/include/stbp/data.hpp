#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "stbp/tensor.hpp"

namespace stbp {

// A static image in [C, H, W] order.
struct Image {
  int channels = 1;
  int height = 1;
  int width = 1;
  std::vector<float> pixels;

  float& at(int c, int h, int w) {
    return pixels[(static_cast<std::size_t>(c) * height + h) * width + w];
  }
  float at(int c, int h, int w) const {
    return pixels[(static_cast<std::size_t>(c) * height + h) * width + w];
  }
  friend bool operator==(const Image&, const Image&) = default;
};

struct Event {
  std::uint32_t t_us = 0;
  std::uint16_t x = 0;  // column
  std::uint16_t y = 0;  // row
  std::uint8_t polarity = 0;
  friend bool operator==(const Event&, const Event&) = default;
};

struct EventStream {
  int height = 1;  // sensor rows
  int width = 1;   // sensor columns
  std::vector<Event> events;  // sorted by t_us
  friend bool operator==(const EventStream&, const EventStream&) = default;
};

// Throws DataError on unsorted events, bad polarity or out-of-range coords.
void validate_stream(const EventStream& stream);

// Replicates an image over T timesteps: [T, 1, C, H, W].
Tensor encode_static(const Image& image, int T);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;
};

// Per-channel mean and standard deviation over a set of images.
ChannelStats compute_channel_stats(const std::vector<const Image*>& images);
Image normalize(const Image& image, const ChannelStats& stats);

// Integrates events into [T, 1, 2, H', W'] count frames. Frame t holds the
// events with t_us in [t * slice, (t + 1) * slice); later events are
// dropped. Sensor dims must be integer multiples of the target dims.
Tensor events_to_frames(const EventStream& stream, int T, double slice_ms,
                        int target_height, int target_width);

// Event file codec (little-endian "EVS1" format).
std::vector<std::uint8_t> encode_event_stream(const EventStream& stream);
EventStream decode_event_stream(const std::vector<std::uint8_t>& bytes);
void save_event_file(const std::filesystem::path& path,
                     const EventStream& stream);
EventStream load_event_file(const std::filesystem::path& path);

// Binary PGM (1 channel) / PPM (3 channels), 8-bit; pixels scaled to [0, 1].
Image load_pnm(const std::filesystem::path& path);
void save_pnm(const std::filesystem::path& path, const Image& image);

// ---- Datasets -------------------------------------------------------------

using Item = std::variant<Image, EventStream>;

enum class Encoding { kStatic, kEvents };

struct Dataset {
  std::string name;
  Encoding encoding = Encoding::kStatic;
  int classes = 0;
  std::vector<Item> items;
  std::vector<int> labels;

  std::size_t size() const { return items.size(); }
  // Throws DataError on empty sets, mixed encodings or bad labels.
  void validate() const;
};

enum class ToyKind { kTwoGaussians, kXorPatches, kMovingBar };

ToyKind parse_toy_kind(const std::string& name);
const char* toy_kind_name(ToyKind kind);

struct ToyOptions {
  int image_size = 8;   // static sets: H = W
  // moving_bar: sensor is (frame * downsample)^2, one slice per bar step
  int frame_size = 8;
  int downsample = 2;
  int timesteps = 8;
  double slice_ms = 10.0;
  double noise = 1.0;   // two_gaussians: sigma; xor_patches: pixel noise
};

// Deterministic synthetic sets with two balanced classes.
//  two_gaussians: class means at +/-2 sigma along a fixed unit pattern, so
//    the classes sit 4 sigma apart; samples on the wrong side of the
//    separating hyperplane are redrawn, making the set linearly separable.
//  xor_patches: two 3x3 patches, each bright or dark; label = XOR.
//  moving_bar: a vertical bar steps one frame column per slice left (0) or
//    right (1) with wrap-around from a random start column; polarity is
//    random, so any single frame is class-ambiguous.
Dataset make_toy_dataset(ToyKind kind, int n, std::uint64_t seed,
                         const ToyOptions& opts = {});

// Manifest: one "relative/path<TAB>label" line per item; paths resolve
// against the manifest's directory. .pgm/.ppm items are static images,
// .evs items event streams.
Dataset load_manifest(const std::filesystem::path& manifest);
// Writes every item next to a new manifest; returns the manifest path.
std::filesystem::path write_manifest_dataset(const std::filesystem::path& dir,
                                             const Dataset& data);

// ---- Batching -------------------------------------------------------------

struct BatchOptions {
  int timesteps = 1;
  // Event sets.
  double slice_ms = 30.0;
  int frame_height = 0;  // 0 keeps the sensor resolution
  int frame_width = 0;
  // Static sets: applied when non-empty.
  ChannelStats normalization;
  // Random pad-1 crop and horizontal flip of static images.
  bool augment = false;
  std::uint64_t augment_seed = 0;
};

struct Batch {
  Tensor x;                 // [T, B, C, H, W]
  std::vector<int> labels;  // [B]
};

// Encodes the items at `indices` into one batch.
Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                 const BatchOptions& opts);

// Input shape [C, H, W] of one encoded item.
Shape item_shape(const Dataset& data, const BatchOptions& opts);

// Normalization statistics for a static dataset (empty for event sets).
ChannelStats dataset_stats(const Dataset& data);

}  // namespace stbp
