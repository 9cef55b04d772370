#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "stbp/data.hpp"
#include "stbp/errors.hpp"

namespace stbp {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("stbp_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
}

double frame_sum(const Tensor& f, int t) {
  double s = 0.0;
  const Shape sh = f.shape();
  for (int c = 0; c < sh.c; ++c)
    for (int h = 0; h < sh.h; ++h)
      for (int w = 0; w < sh.w; ++w) s += f.at(t, 0, c, h, w);
  return s;
}

TEST(EncodeStatic, Replication) {
  Image img{2, 2, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}};
  const Tensor one = encode_static(img, 1);
  EXPECT_EQ(one.shape(), (Shape{1, 1, 2, 2, 3}));
  EXPECT_EQ(one.at(0, 0, 1, 0, 2), 9.0f);
  const Tensor four = encode_static(img, 4);
  for (int t = 1; t < 4; ++t) EXPECT_EQ(four.slice_time(t), four.slice_time(0));
}

TEST(ChannelNormalization, StandardizesEachChannel) {
  Image a{2, 1, 2, {0, 2, 10, 10}};
  Image b{2, 1, 2, {4, 6, 20, 20}};
  const auto stats = compute_channel_stats({&a, &b});
  EXPECT_DOUBLE_EQ(stats.mean[0], 3.0);
  EXPECT_DOUBLE_EQ(stats.std[0], std::sqrt(5.0));
  EXPECT_DOUBLE_EQ(stats.mean[1], 15.0);
  const Image n = normalize(a, stats);
  EXPECT_NEAR(n.at(0, 0, 0), -3.0 / std::sqrt(5.0), 1e-6);
  EXPECT_NEAR(n.at(1, 0, 0), -1.0, 1e-6);
}

TEST(EventsToFrames, OneEventPerSlice) {
  EventStream s{4, 4, {{0, 0, 0, 1}, {31000, 1, 1, 0}, {65000, 2, 2, 1}}};
  const Tensor f = events_to_frames(s, 3, 30.0, 4, 4);
  EXPECT_EQ(f.shape(), (Shape{3, 1, 2, 4, 4}));
  for (int t = 0; t < 3; ++t) EXPECT_EQ(frame_sum(f, t), 1.0) << t;
  EXPECT_EQ(f.at(1, 0, 0, 1, 1), 1.0f);
  EXPECT_EQ(f.at(2, 0, 1, 2, 2), 1.0f);
}

TEST(EventsToFrames, TimestepsFromWindow) {
  const double window_ms = 1200;
  const double slice_ms = 30;
  EXPECT_EQ(static_cast<int>(window_ms / slice_ms), 40);
  EventStream s{2, 2, {{1199999, 0, 0, 0}, {1200000, 0, 0, 0}}};
  const Tensor f = events_to_frames(s, 40, slice_ms, 2, 2);
  EXPECT_EQ(f.at(39, 0, 0, 0, 0), 1.0f);
  double total = 0.0;
  for (int t = 0; t < 40; ++t) total += frame_sum(f, t);
  EXPECT_EQ(total, 1.0);
}

TEST(EventsToFrames, BlockDownsampling) {
  EventStream s{128, 128, {{0, 5, 9, 0}}};
  const Tensor f = events_to_frames(s, 1, 30.0, 32, 32);
  EXPECT_EQ(f.at(0, 0, 0, 2, 1), 1.0f);
  EXPECT_EQ(frame_sum(f, 0), 1.0);
  EXPECT_THROW(events_to_frames(s, 1, 30.0, 30, 30), DimensionError);
}

TEST(EventsToFrames, ConservesEventsInsideWindow) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> xy(0, 63);
  std::uniform_int_distribution<std::uint32_t> t(0, 200000);
  EventStream s{64, 64, {}};
  for (int i = 0; i < 500; ++i) {
    s.events.push_back({t(rng), static_cast<std::uint16_t>(xy(rng)),
                        static_cast<std::uint16_t>(xy(rng)),
                        static_cast<std::uint8_t>(i % 2)});
  }
  std::sort(s.events.begin(), s.events.end(),
            [](const Event& a, const Event& b) { return a.t_us < b.t_us; });
  const int T = 5;
  const double slice_ms = 30.0;
  std::size_t inside = 0;
  for (const auto& e : s.events) inside += e.t_us < T * slice_ms * 1000;
  const Tensor f = events_to_frames(s, T, slice_ms, 16, 16);
  double total = 0.0;
  for (int k = 0; k < T; ++k) total += frame_sum(f, k);
  EXPECT_EQ(total, static_cast<double>(inside));
}

TEST(EventsToFrames, EmptyAndMalformedStreams) {
  const Tensor f = events_to_frames(EventStream{8, 8, {}}, 2, 10.0, 4, 4);
  for (float v : f.values()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(events_to_frames(EventStream{8, 8, {{0, 8, 0, 0}}}, 1, 10, 8, 8),
               DataError);
  EXPECT_THROW(events_to_frames(EventStream{8, 8, {{0, 0, 0, 2}}}, 1, 10, 8, 8),
               DataError);
  EXPECT_THROW(
      events_to_frames(EventStream{8, 8, {{5, 0, 0, 0}, {4, 0, 0, 0}}}, 1, 10,
                       8, 8),
      DataError);
}

// Hand-assembled file: 2x3 sensor, three events.
const std::vector<std::uint8_t> kGolden = {
    'E', 'V', 'S', '1', 1, 0, 0, 0,   // magic, version 1
    2, 0, 3, 0,                       // height 2, width 3
    3, 0, 0, 0,                       // 3 events
    0x10, 0x00, 0x00, 0x00, 0, 0, 0, 0, 1, 0,  // t=16 x=0 y=0 +
    0x00, 0x01, 0x00, 0x00, 2, 0, 1, 0, 0, 0,  // t=256 x=2 y=1 -
    0x40, 0x42, 0x0F, 0x00, 1, 0, 1, 0, 1, 0,  // t=1000000 x=1 y=1 +
};

TEST(EventCodec, GoldenFile) {
  const auto dir = scratch_dir("golden");
  write_bytes(dir / "golden.evs", kGolden);
  const EventStream s = load_event_file(dir / "golden.evs");
  EXPECT_EQ(s.height, 2);
  EXPECT_EQ(s.width, 3);
  const std::vector<Event> expect{
      {16, 0, 0, 1}, {256, 2, 1, 0}, {1000000, 1, 1, 1}};
  EXPECT_EQ(s.events, expect);
  EXPECT_EQ(encode_event_stream(s), kGolden);
}

TEST(EventCodec, RoundTrip) {
  const EventStream empty{5, 7, {}};
  EXPECT_EQ(decode_event_stream(encode_event_stream(empty)), empty);
  const Dataset bars = make_toy_dataset(ToyKind::kMovingBar, 6, 3);
  for (const auto& item : bars.items) {
    const auto& s = std::get<EventStream>(item);
    EXPECT_EQ(decode_event_stream(encode_event_stream(s)), s);
  }
  const auto dir = scratch_dir("roundtrip");
  const auto& s = std::get<EventStream>(bars.items[0]);
  save_event_file(dir / "a.evs", s);
  EXPECT_EQ(load_event_file(dir / "a.evs"), s);
}

std::uint64_t format_offset(const std::vector<std::uint8_t>& b) {
  try {
    decode_event_stream(b);
  } catch (const FormatError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "no FormatError";
  return ~0ULL;
}

TEST(EventCodec, FormatErrorsCarryOffsets) {
  auto bad = kGolden;
  bad[3] = '2';
  EXPECT_EQ(format_offset(bad), 0u);

  bad = kGolden;
  bad[4] = 9;
  EXPECT_EQ(format_offset(bad), 4u);

  bad = kGolden;
  bad[8] = 0;
  bad[9] = 0;
  EXPECT_EQ(format_offset(bad), 8u);

  // Truncated inside the third record.
  bad.assign(kGolden.begin(), kGolden.end() - 3);
  EXPECT_EQ(format_offset(bad), 36u);

  // Truncated header.
  bad.assign(kGolden.begin(), kGolden.begin() + 10);
  EXPECT_EQ(format_offset(bad), 0u);

  // Second record with x outside the 3-wide sensor.
  bad = kGolden;
  bad[26 + 4] = 3;
  EXPECT_EQ(format_offset(bad), 26u);

  bad = kGolden;
  bad.push_back(0);
  EXPECT_EQ(format_offset(bad), kGolden.size());

  const auto dir = scratch_dir("format");
  write_bytes(dir / "bad.evs", {'X', 'V', 'S', '1'});
  try {
    load_event_file(dir / "bad.evs");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.evs"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos);
  }
  EXPECT_THROW(load_event_file(dir / "missing.evs"), IoError);
}

TEST(Pnm, RoundTripAndErrors) {
  const auto dir = scratch_dir("pnm");
  Image gray{1, 2, 3, {0, 1, 0.5f, 0.2f, 0.4f, 1}};
  save_pnm(dir / "g.pgm", gray);
  const Image g = load_pnm(dir / "g.pgm");
  EXPECT_EQ(g.height, 2);
  EXPECT_EQ(g.width, 3);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
    EXPECT_NEAR(g.pixels[i], gray.pixels[i], 0.5 / 255 + 1e-6);
  }
  Image rgb{3, 1, 2, {0, 1, 0.2f, 0.8f, 1, 0}};
  save_pnm(dir / "c.ppm", rgb);
  const Image c = load_pnm(dir / "c.ppm");
  EXPECT_EQ(c.channels, 3);
  EXPECT_NEAR(c.at(1, 0, 1), 0.8f, 0.5 / 255 + 1e-6);

  // Hand-written header with a comment.
  std::vector<std::uint8_t> raw{'P', '5', '\n', '#', ' ', 'x', '\n', '2', ' ',
                                '1', '\n', '2', '5', '5', '\n', 0, 255};
  write_bytes(dir / "h.pgm", raw);
  EXPECT_EQ(load_pnm(dir / "h.pgm").pixels, (std::vector<float>{0, 1}));
  raw.pop_back();
  write_bytes(dir / "t.pgm", raw);
  EXPECT_THROW(load_pnm(dir / "t.pgm"), FormatError);
  write_bytes(dir / "p2.pgm", {'P', '2', '\n'});
  EXPECT_THROW(load_pnm(dir / "p2.pgm"), FormatError);
  EXPECT_THROW(save_pnm(dir / "x.pgm", Image{2, 1, 1, {0, 0}}), DataError);
}

TEST(ToyData, Deterministic) {
  for (ToyKind k : {ToyKind::kTwoGaussians, ToyKind::kXorPatches,
                    ToyKind::kMovingBar}) {
    const Dataset a = make_toy_dataset(k, 20, 7);
    const Dataset b = make_toy_dataset(k, 20, 7);
    const Dataset c = make_toy_dataset(k, 20, 8);
    EXPECT_EQ(a.items, b.items);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(a.items, c.items);
    EXPECT_EQ(a.classes, 2);
    EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), 0), 10);
    EXPECT_EQ(parse_toy_kind(toy_kind_name(k)), k);
  }
  EXPECT_THROW(parse_toy_kind("spirals"), ConfigError);
}

TEST(ToyData, TwoGaussiansAreLinearlySeparable) {
  // The perceptron reaches zero training errors iff the set is separable.
  const Dataset d = make_toy_dataset(ToyKind::kTwoGaussians, 200, 1);
  const std::size_t dim = std::get<Image>(d.items[0]).pixels.size();
  std::vector<double> w(dim + 1, 0.0);
  auto score = [&](const Image& img) {
    double s = w[dim];
    for (std::size_t j = 0; j < dim; ++j) s += w[j] * img.pixels[j];
    return s;
  };
  int errors = 1;
  for (int epoch = 0; epoch < 10000 && errors > 0; ++epoch) {
    errors = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto& img = std::get<Image>(d.items[i]);
      const double y = d.labels[i] == 1 ? 1.0 : -1.0;
      if (y * score(img) <= 0.0) {
        ++errors;
        for (std::size_t j = 0; j < dim; ++j) w[j] += y * img.pixels[j];
        w[dim] += y;
      }
    }
  }
  EXPECT_EQ(errors, 0);
}

TEST(ToyData, MovingBarNeedsTime) {
  ToyOptions o;
  const Dataset d = make_toy_dataset(ToyKind::kMovingBar, 40, 2, o);
  BatchOptions bo;
  bo.timesteps = o.timesteps;
  bo.slice_ms = o.slice_ms;
  bo.frame_height = o.frame_size;
  bo.frame_width = o.frame_size;
  std::set<int> starts[2];
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Batch b = make_batch(d, {i}, bo);
    std::vector<int> cols;
    for (int t = 0; t < o.timesteps; ++t) {
      std::set<int> lit;
      for (int c = 0; c < 2; ++c)
        for (int h = 0; h < o.frame_size; ++h)
          for (int w = 0; w < o.frame_size; ++w)
            if (b.x.at(t, 0, c, h, w) > 0) lit.insert(w);
      ASSERT_EQ(lit.size(), 1u) << "frame " << t;
      cols.push_back(*lit.begin());
    }
    const int step = d.labels[i] == 1 ? 1 : -1;
    for (int t = 1; t < o.timesteps; ++t) {
      EXPECT_EQ(cols[t], ((cols[t - 1] + step) % o.frame_size + o.frame_size) %
                             o.frame_size);
    }
    starts[d.labels[i]].insert(cols[0]);
  }
  // A single frame shows a bar anywhere for either class.
  EXPECT_GE(starts[0].size(), 4u);
  EXPECT_GE(starts[1].size(), 4u);
}

TEST(Batching, ShapesNormalizationAndAugmentation) {
  const Dataset d = make_toy_dataset(ToyKind::kXorPatches, 8, 1);
  BatchOptions bo;
  bo.timesteps = 3;
  const Batch b = make_batch(d, {0, 2, 5}, bo);
  EXPECT_EQ(b.x.shape(), (Shape{3, 3, 1, 8, 8}));
  EXPECT_EQ(b.labels, (std::vector<int>{d.labels[0], d.labels[2], d.labels[5]}));
  EXPECT_EQ(item_shape(d, bo), (Shape{1, 1, 1, 8, 8}));
  EXPECT_EQ(b.x.at(2, 1, 0, 3, 3), std::get<Image>(d.items[2]).at(0, 3, 3));

  bo.normalization = dataset_stats(d);
  const Batch n = make_batch(d, {0, 1, 2, 3, 4, 5, 6, 7}, bo);
  double sum = 0.0;
  const Tensor first = n.x.slice_time(0);
  for (float v : first.values()) sum += v;
  EXPECT_NEAR(sum / (8 * 64), 0.0, 1e-5);

  bo.augment = true;
  bo.augment_seed = 4;
  const Batch a1 = make_batch(d, {0, 1}, bo);
  const Batch a2 = make_batch(d, {0, 1}, bo);
  EXPECT_EQ(a1.x, a2.x);
  EXPECT_EQ(a1.x.shape(), (Shape{3, 2, 1, 8, 8}));
  EXPECT_EQ(a1.x.slice_time(0), a1.x.slice_time(2));
}

TEST(Manifest, RoundTripAndErrors) {
  const auto dir = scratch_dir("manifest");
  const Dataset bars = make_toy_dataset(ToyKind::kMovingBar, 4, 5);
  const fs::path m = write_manifest_dataset(dir / "bars", bars);
  const Dataset back = load_manifest(m);
  EXPECT_EQ(back.items, bars.items);
  EXPECT_EQ(back.labels, bars.labels);
  EXPECT_EQ(back.encoding, Encoding::kEvents);

  const Dataset imgs = make_toy_dataset(ToyKind::kXorPatches, 4, 5);
  const Dataset img_back = load_manifest(write_manifest_dataset(dir / "img", imgs));
  EXPECT_EQ(img_back.encoding, Encoding::kStatic);
  EXPECT_EQ(img_back.labels, imgs.labels);

  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return dir / name;
  };
  EXPECT_THROW(load_manifest(write("empty.txt", "# nothing\n\n")), UsageError);
  EXPECT_THROW(load_manifest(write("tab.txt", "a.pgm 1\n")), DataError);
  EXPECT_THROW(load_manifest(write("label.txt", "a.pgm\tx\n")), DataError);
  EXPECT_THROW(load_manifest(write("ext.txt", "a.png\t0\n")), DataError);
  EXPECT_THROW(load_manifest(write("gone.txt", "nope.pgm\t0\n")), IoError);
  EXPECT_THROW(load_manifest(dir / "absent.txt"), DataError);
}

}  // namespace
}  // namespace stbp
