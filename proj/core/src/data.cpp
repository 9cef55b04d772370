#include "stbp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "stbp/errors.hpp"
#include "stbp/random.hpp"

namespace stbp {

void validate_stream(const EventStream& s) {
  if (s.height < 1 || s.width < 1) {
    throw DataError("event stream needs positive sensor dimensions");
  }
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const Event& e = s.events[i];
    if (e.x >= s.width || e.y >= s.height) {
      throw DataError("event " + std::to_string(i) + " at (x=" +
                      std::to_string(e.x) + ", y=" + std::to_string(e.y) +
                      ") lies outside the " + std::to_string(s.width) + "x" +
                      std::to_string(s.height) + " sensor");
    }
    if (e.polarity > 1) {
      throw DataError("event " + std::to_string(i) + " has polarity " +
                      std::to_string(e.polarity));
    }
    if (i > 0 && e.t_us < s.events[i - 1].t_us) {
      throw DataError("event stream is not sorted by time at index " +
                      std::to_string(i));
    }
  }
}

Tensor encode_static(const Image& image, int T) {
  if (T < 1) throw ConfigError("timesteps must be at least 1");
  if (image.pixels.size() !=
      static_cast<std::size_t>(image.channels) * image.height * image.width) {
    throw DimensionError("image pixel count does not match its dimensions");
  }
  Tensor x(Shape{T, 1, image.channels, image.height, image.width});
  for (int t = 0; t < T; ++t) {
    std::copy(image.pixels.begin(), image.pixels.end(),
              x.storage().begin() +
                  static_cast<std::ptrdiff_t>(t * image.pixels.size()));
  }
  return x;
}

ChannelStats compute_channel_stats(const std::vector<const Image*>& images) {
  if (images.empty()) throw DataError("no images to compute statistics on");
  const int c = images.front()->channels;
  std::vector<double> sum(static_cast<std::size_t>(c), 0.0);
  std::vector<double> sq(static_cast<std::size_t>(c), 0.0);
  double count = 0.0;
  for (const Image* img : images) {
    if (img->channels != c) {
      throw DimensionError("images disagree in channel count");
    }
    const std::size_t plane = static_cast<std::size_t>(img->height) * img->width;
    for (int ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = img->pixels[ch * plane + i];
        sum[static_cast<std::size_t>(ch)] += v;
        sq[static_cast<std::size_t>(ch)] += v * v;
      }
    }
    count += static_cast<double>(plane);
  }
  ChannelStats stats;
  for (int ch = 0; ch < c; ++ch) {
    const double mean = sum[static_cast<std::size_t>(ch)] / count;
    const double var =
        std::max(sq[static_cast<std::size_t>(ch)] / count - mean * mean, 0.0);
    stats.mean.push_back(mean);
    stats.std.push_back(var > 1e-12 ? std::sqrt(var) : 1.0);
  }
  return stats;
}

Image normalize(const Image& image, const ChannelStats& stats) {
  if (stats.mean.size() != static_cast<std::size_t>(image.channels) ||
      stats.std.size() != stats.mean.size()) {
    throw DimensionError("normalization has " +
                         std::to_string(stats.mean.size()) +
                         " channels, image has " +
                         std::to_string(image.channels));
  }
  Image out = image;
  const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
  for (int c = 0; c < image.channels; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    for (std::size_t i = 0; i < plane; ++i) {
      float& v = out.pixels[ci * plane + i];
      v = static_cast<float>((v - stats.mean[ci]) / stats.std[ci]);
    }
  }
  return out;
}

Tensor events_to_frames(const EventStream& stream, int T, double slice_ms,
                        int target_height, int target_width) {
  if (T < 1) throw ConfigError("timesteps must be at least 1");
  if (!(slice_ms > 0.0)) throw ConfigError("slice_ms must be positive");
  validate_stream(stream);
  if (target_height < 1 || target_width < 1 ||
      stream.height % target_height != 0 || stream.width % target_width != 0) {
    throw DimensionError("frame size " + std::to_string(target_height) + "x" +
                         std::to_string(target_width) +
                         " does not divide the sensor size " +
                         std::to_string(stream.height) + "x" +
                         std::to_string(stream.width));
  }
  const int by = stream.height / target_height;
  const int bx = stream.width / target_width;
  const double slice_us = slice_ms * 1000.0;
  Tensor frames(Shape{T, 1, 2, target_height, target_width});
  for (const Event& e : stream.events) {
    const auto t = static_cast<long long>(std::floor(e.t_us / slice_us));
    if (t >= T) continue;
    frames.at(static_cast<int>(t), 0, e.polarity, e.y / by, e.x / bx) += 1.0f;
  }
  return frames;
}

void Dataset::validate() const {
  if (items.empty()) throw DataError("dataset '" + name + "' is empty");
  if (labels.size() != items.size()) {
    throw DataError("dataset '" + name + "' has " +
                    std::to_string(items.size()) + " items but " +
                    std::to_string(labels.size()) + " labels");
  }
  if (classes < 2) {
    throw DataError("dataset '" + name + "' needs at least two classes");
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    const bool is_static = std::holds_alternative<Image>(items[i]);
    if (is_static != (encoding == Encoding::kStatic)) {
      throw DataError("dataset '" + name + "' mixes static and event items");
    }
    if (labels[i] < 0 || labels[i] >= classes) {
      throw DataError("dataset '" + name + "' item " + std::to_string(i) +
                      " has label " + std::to_string(labels[i]) +
                      " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

ToyKind parse_toy_kind(const std::string& name) {
  if (name == "two_gaussians") return ToyKind::kTwoGaussians;
  if (name == "xor_patches") return ToyKind::kXorPatches;
  if (name == "moving_bar") return ToyKind::kMovingBar;
  throw ConfigError("unknown toy dataset '" + name +
                    "' (expected two_gaussians, xor_patches or moving_bar)");
}

const char* toy_kind_name(ToyKind kind) {
  switch (kind) {
    case ToyKind::kTwoGaussians: return "two_gaussians";
    case ToyKind::kXorPatches: return "xor_patches";
    case ToyKind::kMovingBar: return "moving_bar";
  }
  return "?";
}

namespace {

// Shared class direction for every two_gaussians draw, independent of seed
// so that train and test splits agree.
std::vector<double> gaussian_pattern(int size) {
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> u(static_cast<std::size_t>(size) * size);
  double norm = 0.0;
  for (double& v : u) {
    v = normal(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : u) v /= norm;
  return u;
}

Image two_gaussians_item(int label, const std::vector<double>& u, int size,
                         double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sigma);
  const double sign = label == 1 ? 1.0 : -1.0;
  Image img{1, size, size, std::vector<float>(u.size())};
  for (;;) {
    double proj = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double v = sign * 2.0 * sigma * u[i] + normal(rng);
      img.pixels[i] = static_cast<float>(v);
      proj += v * u[i];
    }
    if (sign * proj > 0.0) return img;
  }
}

Image xor_item(int label, int size, double noise, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, noise);
  const bool a = coin(rng);
  const bool b = label == 1 ? !a : a;
  Image img{1, size, size,
            std::vector<float>(static_cast<std::size_t>(size) * size)};
  for (float& v : img.pixels) v = static_cast<float>(normal(rng));
  const int second = size / 2;
  for (int dy = 0; dy < 3; ++dy) {
    for (int dx = 0; dx < 3; ++dx) {
      img.at(0, 1 + dy, 1 + dx) += a ? 1.0f : -1.0f;
      img.at(0, second + dy, second + dx) += b ? 1.0f : -1.0f;
    }
  }
  return img;
}

EventStream moving_bar_item(int label, const ToyOptions& o,
                            std::mt19937_64& rng) {
  const int sensor = o.frame_size * o.downsample;
  EventStream s;
  s.height = sensor;
  s.width = sensor;
  std::uniform_int_distribution<int> start_dist(0, o.frame_size - 1);
  std::bernoulli_distribution coin(0.5);
  const double slice_us = o.slice_ms * 1000.0;
  std::uniform_real_distribution<double> jitter(0.0, 0.999 * slice_us);
  const int start = start_dist(rng);
  const int step = label == 1 ? 1 : -1;
  for (int k = 0; k < o.timesteps; ++k) {
    const int col =
        ((start + step * k) % o.frame_size + o.frame_size) % o.frame_size;
    for (int y = 0; y < sensor; ++y) {
      for (int dx = 0; dx < o.downsample; ++dx) {
        Event e;
        e.t_us = static_cast<std::uint32_t>(k * slice_us + jitter(rng));
        e.x = static_cast<std::uint16_t>(col * o.downsample + dx);
        e.y = static_cast<std::uint16_t>(y);
        e.polarity = coin(rng) ? 1 : 0;
        s.events.push_back(e);
      }
    }
  }
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const Event& a, const Event& b) {
                     return a.t_us < b.t_us;
                   });
  return s;
}

}  // namespace

Dataset make_toy_dataset(ToyKind kind, int n, std::uint64_t seed,
                         const ToyOptions& o) {
  if (n < 4) throw ConfigError("toy datasets need at least 2 items per class");
  if (o.image_size < 8 && kind == ToyKind::kXorPatches) {
    throw ConfigError("xor_patches needs image_size >= 8");
  }
  if (o.image_size < 1 || o.frame_size < 2 || o.downsample < 1 ||
      o.timesteps < 1 || !(o.slice_ms > 0.0) || !(o.noise >= 0.0)) {
    throw ConfigError("invalid toy dataset options");
  }
  Dataset d;
  d.name = toy_kind_name(kind);
  d.classes = 2;
  d.encoding = kind == ToyKind::kMovingBar ? Encoding::kEvents
                                           : Encoding::kStatic;
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(kind)));
  const auto pattern = kind == ToyKind::kTwoGaussians
                           ? gaussian_pattern(o.image_size)
                           : std::vector<double>{};
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    switch (kind) {
      case ToyKind::kTwoGaussians:
        d.items.emplace_back(
            two_gaussians_item(label, pattern, o.image_size, o.noise, rng));
        break;
      case ToyKind::kXorPatches:
        d.items.emplace_back(xor_item(label, o.image_size, 0.2 * o.noise, rng));
        break;
      case ToyKind::kMovingBar:
        d.items.emplace_back(moving_bar_item(label, o, rng));
        break;
    }
    d.labels.push_back(label);
  }
  return d;
}

Dataset load_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest '" + manifest.string() + "'");
  const std::filesystem::path root = manifest.parent_path();
  Dataset d;
  d.name = manifest.string();
  std::string line;
  int line_no = 0;
  int max_label = -1;
  bool have_encoding = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(manifest.string() + ":" + std::to_string(line_no) +
                      ": expected \"path<TAB>label\"");
    }
    const std::string rel = line.substr(0, tab);
    const std::string label_text = line.substr(tab + 1);
    int label = -1;
    try {
      std::size_t used = 0;
      label = std::stoi(label_text, &used);
      if (used != label_text.size()) label = -1;
    } catch (const std::exception&) {
      label = -1;
    }
    if (label < 0) {
      throw DataError(manifest.string() + ":" + std::to_string(line_no) +
                      ": bad label '" + label_text + "'");
    }
    const std::filesystem::path path = root / rel;
    const std::string ext = path.extension().string();
    Encoding enc;
    if (ext == ".evs") {
      enc = Encoding::kEvents;
      d.items.emplace_back(load_event_file(path));
    } else if (ext == ".pgm" || ext == ".ppm") {
      enc = Encoding::kStatic;
      d.items.emplace_back(load_pnm(path));
    } else {
      throw DataError(manifest.string() + ":" + std::to_string(line_no) +
                      ": unsupported item type '" + ext + "'");
    }
    if (have_encoding && enc != d.encoding) {
      throw DataError(manifest.string() + " mixes static and event items");
    }
    d.encoding = enc;
    have_encoding = true;
    d.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  if (d.items.empty()) {
    throw UsageError("manifest '" + manifest.string() + "' lists no items");
  }
  d.classes = std::max(2, max_label + 1);
  d.validate();
  return d;
}

std::filesystem::path write_manifest_dataset(const std::filesystem::path& dir,
                                             const Dataset& data) {
  data.validate();
  std::filesystem::create_directories(dir);
  const std::filesystem::path manifest = dir / "manifest.tsv";
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write '" + manifest.string() + "'");
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::string name = "item_" + std::to_string(i);
    if (const auto* img = std::get_if<Image>(&data.items[i])) {
      name += img->channels == 1 ? ".pgm" : ".ppm";
      save_pnm(dir / name, *img);
    } else {
      name += ".evs";
      save_event_file(dir / name, std::get<EventStream>(data.items[i]));
    }
    out << name << '\t' << data.labels[i] << '\n';
  }
  if (!out) throw IoError("failed while writing '" + manifest.string() + "'");
  return manifest;
}

namespace {

Image augment_image(const Image& img, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> shift(-1, 1);
  std::bernoulli_distribution flip(0.5);
  const int dy = shift(rng);
  const int dx = shift(rng);
  const bool mirror = flip(rng);
  Image out{img.channels, img.height, img.width,
            std::vector<float>(img.pixels.size(), 0.0f)};
  for (int c = 0; c < img.channels; ++c) {
    for (int h = 0; h < img.height; ++h) {
      for (int w = 0; w < img.width; ++w) {
        const int sh = h + dy;
        int sw = w + dx;
        if (mirror) sw = img.width - 1 - sw;
        if (sh < 0 || sh >= img.height || sw < 0 || sw >= img.width) continue;
        out.at(c, h, w) = img.at(c, sh, sw);
      }
    }
  }
  return out;
}

Tensor encode_item(const Dataset& data, std::size_t index,
                   const BatchOptions& o) {
  const Item& item = data.items.at(index);
  if (const auto* img = std::get_if<Image>(&item)) {
    Image work = o.normalization.mean.empty() ? *img
                                              : normalize(*img, o.normalization);
    if (o.augment) {
      work = augment_image(work, derive_seed(o.augment_seed, index));
    }
    return encode_static(work, o.timesteps);
  }
  const auto& s = std::get<EventStream>(item);
  return events_to_frames(s, o.timesteps, o.slice_ms,
                          o.frame_height > 0 ? o.frame_height : s.height,
                          o.frame_width > 0 ? o.frame_width : s.width);
}

}  // namespace

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                 const BatchOptions& o) {
  if (indices.empty()) throw DataError("cannot build an empty batch");
  std::vector<Tensor> samples;
  samples.reserve(indices.size());
  Batch b;
  for (std::size_t i : indices) {
    if (i >= data.size()) {
      throw DataError("item index " + std::to_string(i) + " out of range");
    }
    samples.push_back(encode_item(data, i, o));
    if (samples.back().shape() != samples.front().shape()) {
      throw DimensionError("dataset items encode to different shapes: " +
                           samples.front().shape().str() + " vs " +
                           samples.back().shape().str());
    }
    b.labels.push_back(data.labels[i]);
  }
  b.x = stack_batch<float>(samples);
  return b;
}

Shape item_shape(const Dataset& data, const BatchOptions& o) {
  BatchOptions one = o;
  one.timesteps = 1;
  one.augment = false;
  const Shape s = encode_item(data, 0, one).shape();
  return Shape{1, 1, s.c, s.h, s.w};
}

ChannelStats dataset_stats(const Dataset& data) {
  if (data.encoding != Encoding::kStatic) return {};
  std::vector<const Image*> images;
  for (const Item& item : data.items) images.push_back(&std::get<Image>(item));
  return compute_channel_stats(images);
}

}  // namespace stbp
