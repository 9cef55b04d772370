#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "stbp/data.hpp"
#include "stbp/errors.hpp"

namespace stbp {

namespace {

constexpr char kMagic[4] = {'E', 'V', 'S', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 2 + 2 + 4;
constexpr std::size_t kRecordBytes = 4 + 2 + 2 + 1 + 1;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated event file: missing ") + what,
                        pos_);
    }
  }
  std::uint8_t u8() { return bytes_[pos_++]; }
  std::uint16_t u16() {
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] |
                                              (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed while writing '" + path.string() + "'");
}

}  // namespace

std::vector<std::uint8_t> encode_event_stream(const EventStream& stream) {
  validate_stream(stream);
  if (stream.height > 0xFFFF || stream.width > 0xFFFF) {
    throw DataError("sensor dimensions exceed the 16-bit event format");
  }
  if (stream.events.size() > 0xFFFFFFFFULL) {
    throw DataError("too many events for the 32-bit event count");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + kRecordBytes * stream.events.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  put_u16(out, static_cast<std::uint16_t>(stream.height));
  put_u16(out, static_cast<std::uint16_t>(stream.width));
  put_u32(out, static_cast<std::uint32_t>(stream.events.size()));
  for (const Event& e : stream.events) {
    put_u32(out, e.t_us);
    put_u16(out, e.x);
    put_u16(out, e.y);
    out.push_back(e.polarity);
    out.push_back(0);
  }
  return out;
}

EventStream decode_event_stream(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad magic, expected \"EVS1\"", 0);
  }
  r.need(kHeaderBytes, "header");
  for (int i = 0; i < 4; ++i) r.u8();
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("unsupported event format version " +
                          std::to_string(version),
                      version_at);
  }
  EventStream s;
  const std::size_t dims_at = r.offset();
  s.height = r.u16();
  s.width = r.u16();
  if (s.height == 0 || s.width == 0) {
    throw FormatError("sensor dimensions must be positive", dims_at);
  }
  const std::uint32_t count = r.u32();
  if ((bytes.size() - r.offset()) / kRecordBytes < count) {
    throw FormatError("truncated event file: header announces " +
                          std::to_string(count) + " events",
                      r.offset() + ((bytes.size() - r.offset()) /
                                    kRecordBytes) * kRecordBytes);
  }
  s.events.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    Event e;
    e.t_us = r.u32();
    e.x = r.u16();
    e.y = r.u16();
    e.polarity = r.u8();
    r.u8();
    if (e.x >= s.width || e.y >= s.height || e.polarity > 1) {
      throw FormatError("event " + std::to_string(i) + " out of range (x=" +
                            std::to_string(e.x) + ", y=" +
                            std::to_string(e.y) + ", polarity=" +
                            std::to_string(e.polarity) + ")",
                        at);
    }
    s.events.push_back(e);
  }
  if (r.offset() != bytes.size()) {
    throw FormatError("trailing bytes after the last event record",
                      r.offset());
  }
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const Event& a, const Event& b) {
                     return a.t_us < b.t_us;
                   });
  return s;
}

void save_event_file(const std::filesystem::path& path,
                     const EventStream& stream) {
  write_file(path, encode_event_stream(stream));
}

EventStream load_event_file(const std::filesystem::path& path) {
  try {
    return decode_event_stream(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') {
    tok.push_back(static_cast<char>(b[pos++]));
  }
  if (tok.empty()) throw FormatError("truncated image header", pos);
  return tok;
}

int pnm_int(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  const std::size_t at = pos;
  const std::string tok = pnm_token(b, pos);
  if (tok.find_first_not_of("0123456789") != std::string::npos ||
      tok.size() > 6) {
    throw FormatError("bad image header field '" + tok + "'", at);
  }
  return std::stoi(tok);
}

}  // namespace

Image load_pnm(const std::filesystem::path& path) {
  const auto b = read_file(path);
  try {
    std::size_t pos = 0;
    const std::string magic = pnm_token(b, pos);
    int channels = 0;
    if (magic == "P5") {
      channels = 1;
    } else if (magic == "P6") {
      channels = 3;
    } else {
      throw FormatError("expected binary PGM (P5) or PPM (P6)", 0);
    }
    const int width = pnm_int(b, pos);
    const int height = pnm_int(b, pos);
    const int maxval = pnm_int(b, pos);
    if (width < 1 || height < 1 || maxval < 1 || maxval > 255) {
      throw FormatError("unsupported image dimensions or depth", pos);
    }
    ++pos;  // single whitespace before the raster
    const std::size_t need =
        static_cast<std::size_t>(width) * height * channels;
    if (pos > b.size() || b.size() - pos < need) {
      throw FormatError("truncated image raster", std::min(pos, b.size()));
    }
    Image img{channels, height, width,
              std::vector<float>(need, 0.0f)};
    for (int h = 0; h < height; ++h) {
      for (int w = 0; w < width; ++w) {
        for (int c = 0; c < channels; ++c) {
          img.at(c, h, w) = static_cast<float>(b[pos++]) / maxval;
        }
      }
    }
    return img;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

void save_pnm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw DataError("PNM images need 1 or 3 channels, got " +
                    std::to_string(image.channels));
  }
  std::ostringstream header;
  header << (image.channels == 1 ? "P5" : "P6") << '\n'
         << image.width << ' ' << image.height << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> bytes(h.begin(), h.end());
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        bytes.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
      }
    }
  }
  write_file(path, bytes);
}

}  // namespace stbp
