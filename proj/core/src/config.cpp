#include "stbp/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "stbp/errors.hpp"

namespace stbp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw ConfigError("config key '" + key + "': '" + value + "' is not " +
                    expected);
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    bad_value(key, v, "an integer");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    bad_value(key, v, "a non-negative integer");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  // strtod: from_chars for floating point is incomplete in older libstdc++.
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out)) {
    bad_value(key, v, "a finite number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_double(key, item));
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(bool v) { return v ? "true" : "false"; }

std::string fmt(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt(v[i]);
  }
  return out;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define STBP_STR(name)                                                       \
  Field{#name, [](RunConfig& c, const std::string& v) { c.name = v; },       \
        [](const RunConfig& c) { return c.name; }}
#define STBP_INT(name)                                                       \
  Field{#name,                                                               \
        [](RunConfig& c, const std::string& v) {                             \
          c.name = parse_int(#name, v);                                      \
        },                                                                   \
        [](const RunConfig& c) { return std::to_string(c.name); }}
#define STBP_U64(name)                                                       \
  Field{#name,                                                               \
        [](RunConfig& c, const std::string& v) {                             \
          c.name = parse_u64(#name, v);                                      \
        },                                                                   \
        [](const RunConfig& c) { return std::to_string(c.name); }}
#define STBP_REAL(name)                                                      \
  Field{#name,                                                               \
        [](RunConfig& c, const std::string& v) {                             \
          c.name = parse_double(#name, v);                                   \
        },                                                                   \
        [](const RunConfig& c) { return fmt(c.name); }}
#define STBP_BOOL(name)                                                      \
  Field{#name,                                                               \
        [](RunConfig& c, const std::string& v) {                             \
          c.name = parse_bool(#name, v);                                     \
        },                                                                   \
        [](const RunConfig& c) { return fmt(c.name); }}
#define STBP_LIST(name)                                                      \
  Field{#name,                                                               \
        [](RunConfig& c, const std::string& v) {                             \
          c.name = parse_list(#name, v);                                     \
        },                                                                   \
        [](const RunConfig& c) { return fmt(c.name); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      STBP_STR(arch),          STBP_INT(width),
      STBP_INT(depth),         STBP_BOOL(use_tdbn),
      STBP_INT(timesteps),     STBP_REAL(tau_decay),
      STBP_REAL(v_th),         STBP_REAL(surrogate_width),
      STBP_BOOL(detach_reset), STBP_INT(batch_size),
      STBP_INT(epochs),        STBP_REAL(lr),
      STBP_REAL(momentum),     STBP_INT(lr_decay_every),
      STBP_REAL(lr_decay_factor), STBP_U64(seed),
      STBP_STR(dataset),       STBP_STR(eval_dataset),
      STBP_INT(train_size),    STBP_INT(test_size),
      STBP_BOOL(augment),      STBP_REAL(slice_ms),
      STBP_INT(frame_height),  STBP_INT(frame_width),
      STBP_INT(image_size),    STBP_STR(out_dir),
      STBP_STR(resume),        STBP_LIST(sigma_in),
      STBP_INT(samples),       STBP_STR(checkpoint),
      STBP_STR(diag_input),    STBP_REAL(diag_surrogate_width),
  };
  return table;
}

#undef STBP_STR
#undef STBP_INT
#undef STBP_U64
#undef STBP_REAL
#undef STBP_BOOL
#undef STBP_LIST

void require(bool ok, const char* key, const std::string& why) {
  if (!ok) throw ConfigError("config key '" + std::string(key) + "': " + why);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

void RunConfig::validate() const {
  bool known = false;
  for (const auto& name : known_architectures()) known |= name == arch;
  require(known, "arch", "unknown architecture '" + arch + "'");
  require(width >= 1, "width", "must be positive");
  require(depth >= 3, "depth", "must be at least 3");
  require(timesteps >= 1, "timesteps", "must be at least 1");
  require(tau_decay >= 0.0 && tau_decay < 1.0, "tau_decay",
          "must lie in [0, 1)");
  require(v_th > 0.0, "v_th", "must be positive");
  require(surrogate_width > 0.0, "surrogate_width", "must be positive");
  require(batch_size >= 1, "batch_size", "must be positive");
  require(epochs >= 1, "epochs", "must be positive");
  require(lr > 0.0, "lr", "must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "momentum", "must lie in [0, 1)");
  require(lr_decay_every >= 1, "lr_decay_every", "must be positive");
  require(lr_decay_factor > 0.0 && lr_decay_factor < 1.0, "lr_decay_factor",
          "must lie in (0, 1)");
  require(!dataset.empty(), "dataset", "must name a toy set or a manifest");
  require(train_size >= 4, "train_size", "must be at least 4");
  require(test_size >= 4, "test_size", "must be at least 4");
  require(slice_ms > 0.0, "slice_ms", "must be positive");
  require(frame_height >= 0, "frame_height", "must be non-negative");
  require(frame_width >= 0, "frame_width", "must be non-negative");
  require(image_size >= 1, "image_size", "must be positive");
  require(samples >= 2, "samples", "must be at least 2");
  require(diag_input == "data" || diag_input == "zeros", "diag_input",
          "must be 'data' or 'zeros'");
  require(diag_surrogate_width >= 0.0, "diag_surrogate_width",
          "must be non-negative");
  for (double s : sigma_in) {
    require(s > 0.0, "sigma_in", "values must be positive");
  }
}

LifHyper RunConfig::lif() const {
  LifHyper h;
  h.tau_decay = tau_decay;
  h.v_th = v_th;
  h.a = surrogate_width;
  h.detach_reset = detach_reset;
  return h;
}

ArchConfig RunConfig::arch_config(int classes, int input_channels,
                                  int input_hw) const {
  ArchConfig a;
  a.name = arch;
  a.classes = classes;
  a.input_channels = input_channels;
  a.input_hw = input_hw;
  a.width = width;
  a.depth = depth;
  a.use_tdbn = use_tdbn;
  a.lif = lif();
  return a;
}

SgdConfig RunConfig::sgd() const {
  return SgdConfig{lr, momentum, lr_decay_every, lr_decay_factor};
}

bool RunConfig::is_toy() const {
  return dataset == "two_gaussians" || dataset == "xor_patches" ||
         dataset == "moving_bar";
}

std::filesystem::path RunConfig::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return to_text(a) == to_text(b);
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  std::vector<std::string> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos
                                      ? raw
                                      : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected \"key = value\"");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (key == f.key) field = &f;
    }
    if (field == nullptr) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
    }
    for (const auto& s : seen) {
      if (s == key) {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": key '" + key + "' given twice");
      }
    }
    seen.push_back(key);
    field->set(c, value);
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = parse_config(ss.str());
  c.base_dir = path.parent_path();
  return c;
}

std::string to_text(const RunConfig& c) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(c);
    out += '\n';
  }
  return out;
}

}  // namespace stbp
