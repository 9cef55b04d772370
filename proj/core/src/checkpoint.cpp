#include "stbp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "stbp/errors.hpp"

namespace stbp {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'B', 'N'};
constexpr std::uint8_t kFloat32 = 0;

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
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }
  void need(std::size_t n, const std::string& what) const {
    if (b_.size() - pos_ < n) {
      throw FormatError("truncated checkpoint: missing " + what, pos_);
    }
  }
  std::uint8_t u8() { return b_[pos_++]; }
  std::uint16_t u16() {
    const auto v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const NamedTensor& Checkpoint::get(const std::string& name) const {
  const NamedTensor* t = find(name);
  if (t == nullptr) {
    throw FormatError("checkpoint lacks tensor '" + name + "'", 0);
  }
  return *t;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, Checkpoint::kVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.config_text.size()));
  out.insert(out.end(), ckpt.config_text.begin(), ckpt.config_text.end());
  for (const auto& t : ckpt.tensors) {
    if (t.name.empty() || t.name.size() > 0xFFFF || t.dims.size() > 0xFF) {
      throw DataError("tensor '" + t.name + "' cannot be stored");
    }
    std::size_t count = 1;
    for (auto d : t.dims) count *= d;
    if (count != t.values.size()) {
      throw DimensionError("tensor '" + t.name + "' holds " +
                           std::to_string(t.values.size()) +
                           " values but its dims imply " +
                           std::to_string(count));
    }
    put_u16(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(kFloat32);
    out.push_back(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) put_u32(out, d);
    for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad magic, expected \"STBN\"", 0);
  }
  r.str(4);
  r.need(4, "version");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw FormatError("unsupported checkpoint version " +
                          std::to_string(version),
                      version_at);
  }
  r.need(4, "config length");
  const std::uint32_t config_len = r.u32();
  r.need(config_len, "config text");
  Checkpoint ckpt;
  ckpt.config_text = r.str(config_len);
  while (!r.done()) {
    const std::size_t record_at = r.offset();
    r.need(2, "tensor name length");
    const std::uint16_t name_len = r.u16();
    r.need(name_len, "tensor name");
    NamedTensor t;
    t.name = r.str(name_len);
    if (t.name.empty()) throw FormatError("empty tensor name", record_at);
    r.need(2, "dtype and rank of '" + t.name + "'");
    const std::size_t dtype_at = r.offset();
    const std::uint8_t dtype = r.u8();
    if (dtype != kFloat32) {
      throw FormatError("tensor '" + t.name + "' has unknown dtype " +
                            std::to_string(dtype),
                        dtype_at);
    }
    const std::uint8_t ndim = r.u8();
    r.need(4ULL * ndim, "dims of '" + t.name + "'");
    std::uint64_t count = 1;
    for (int i = 0; i < ndim; ++i) {
      t.dims.push_back(r.u32());
      count *= t.dims.back();
    }
    if (count > (bytes.size() - r.offset()) / 4) {
      throw FormatError("truncated checkpoint: payload of '" + t.name + "'",
                        r.offset());
    }
    t.values.resize(count);
    for (auto& v : t.values) v = std::bit_cast<float>(r.u32());
    if (ckpt.find(t.name) != nullptr) {
      throw FormatError("duplicate tensor '" + t.name + "'", record_at);
    }
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  // Write-then-rename so readers never observe a partial file.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed while writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

namespace {

NamedTensor scalar(const std::string& name, double v) {
  return {name, {1}, {static_cast<float>(v)}};
}

NamedTensor vec(const std::string& name, const std::vector<float>& v) {
  return {name, {static_cast<std::uint32_t>(v.size())}, v};
}

NamedTensor vec(const std::string& name, const std::vector<double>& v) {
  return {name, {static_cast<std::uint32_t>(v.size())},
          std::vector<float>(v.begin(), v.end())};
}

std::vector<std::uint32_t> to_dims(const std::vector<int>& dims) {
  return {dims.begin(), dims.end()};
}

// Buffers and parameters of the network, in node order.
std::vector<NamedTensor> network_tensors(Network& net) {
  std::vector<NamedTensor> out;
  for (auto& p : net.parameters()) {
    out.push_back({p.name, to_dims(p.dims),
                   std::vector<float>(p.values.begin(), p.values.end())});
  }
  for (auto& nd : net.nodes()) {
    if (nd.kind() != NodeKind::kTdBn) continue;
    const auto& bn = nd.as<TdBnParams>();
    out.push_back(vec(nd.name + ".running_mean", bn.running_mean));
    out.push_back(vec(nd.name + ".running_var", bn.running_var));
    out.push_back(scalar(nd.name + ".num_updates",
                         static_cast<double>(bn.num_updates)));
  }
  return out;
}

void load_into(std::vector<float>& dst, const NamedTensor& t,
               const std::vector<std::uint32_t>& dims) {
  if (t.dims != dims) {
    std::string want;
    std::string got;
    for (auto d : dims) want += std::to_string(d) + " ";
    for (auto d : t.dims) got += std::to_string(d) + " ";
    throw DataError("checkpoint tensor '" + t.name + "' has dims [ " + got +
                    "], the model expects [ " + want + "]");
  }
  dst = t.values;
}

}  // namespace

Checkpoint make_checkpoint(const ModelState& state) {
  Checkpoint ckpt;
  RunConfig snapshot = state.config;
  snapshot.out_dir = RunConfig{}.out_dir;
  snapshot.resume.clear();
  ckpt.config_text = to_text(snapshot);

  Network net = state.net;
  ckpt.tensors = network_tensors(net);
  if (state.optimizer && !net.fused()) {
    const auto params = net.parameters();
    const auto& velocity = state.optimizer->velocity();
    if (!velocity.empty()) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        ckpt.tensors.push_back({"optim." + params[i].name + ".velocity",
                                to_dims(params[i].dims), velocity.at(i)});
      }
    }
    ckpt.tensors.push_back(scalar("optim.lr", state.optimizer->lr()));
  }
  if (!state.normalization.mean.empty()) {
    ckpt.tensors.push_back(vec("data.mean", state.normalization.mean));
    ckpt.tensors.push_back(vec("data.std", state.normalization.std));
  }
  ckpt.tensors.push_back(scalar("meta.epoch", state.epoch));
  ckpt.tensors.push_back(scalar("meta.fused", net.fused() ? 1.0 : 0.0));
  ckpt.tensors.push_back(scalar("meta.classes", state.classes));
  ckpt.tensors.push_back(
      {"meta.input", {3},
       {static_cast<float>(state.input.c), static_cast<float>(state.input.h),
        static_cast<float>(state.input.w)}});
  return ckpt;
}

ModelState restore_checkpoint(const Checkpoint& ckpt) {
  ModelState s;
  s.config = parse_config(ckpt.config_text);
  s.classes = static_cast<int>(ckpt.get("meta.classes").values.at(0));
  const auto& in = ckpt.get("meta.input").values;
  if (in.size() != 3) throw FormatError("meta.input must hold 3 values", 0);
  s.input = Shape{1, 1, static_cast<int>(in[0]), static_cast<int>(in[1]),
                  static_cast<int>(in[2])};
  s.epoch = static_cast<int>(ckpt.get("meta.epoch").values.at(0));
  const bool fused = ckpt.get("meta.fused").values.at(0) != 0.0f;

  Network net = build_network<float>(
      s.config.arch_config(s.classes, s.input.c, s.input.h));
  if (fused) net = strip_normalization(net);

  std::vector<std::string> used;
  for (auto& p : net.parameters()) {
    const auto& t = ckpt.get(p.name);
    std::vector<float> values;
    load_into(values, t, to_dims(p.dims));
    std::copy(values.begin(), values.end(), p.values.begin());
    used.push_back(p.name);
  }
  for (auto& nd : net.nodes()) {
    if (nd.kind() != NodeKind::kTdBn) continue;
    auto& bn = nd.as<TdBnParams>();
    const std::uint32_t c = static_cast<std::uint32_t>(bn.channels());
    load_into(bn.running_mean, ckpt.get(nd.name + ".running_mean"), {c});
    load_into(bn.running_var, ckpt.get(nd.name + ".running_var"), {c});
    bn.num_updates = static_cast<std::int64_t>(
        ckpt.get(nd.name + ".num_updates").values.at(0));
    used.push_back(nd.name + ".running_mean");
    used.push_back(nd.name + ".running_var");
    used.push_back(nd.name + ".num_updates");
  }
  for (const auto& t : ckpt.tensors) {
    const bool known = t.name.starts_with("optim.") ||
                       t.name.starts_with("data.") ||
                       t.name.starts_with("meta.") ||
                       std::find(used.begin(), used.end(), t.name) != used.end();
    if (!known) {
      throw DataError("checkpoint tensor '" + t.name +
                      "' does not belong to architecture '" + s.config.arch +
                      "'");
    }
  }

  if (const auto* lr = ckpt.find("optim.lr")) {
    Sgd opt(s.config.sgd());
    opt.set_lr(lr->values.at(0));
    const auto params = net.parameters();
    if (ckpt.find("optim." + params.front().name + ".velocity") != nullptr) {
      auto& velocity = opt.velocity();
      for (const auto& p : params) {
        std::vector<float> v;
        load_into(v, ckpt.get("optim." + p.name + ".velocity"),
                  to_dims(p.dims));
        velocity.push_back(std::move(v));
      }
    }
    s.optimizer = std::move(opt);
  }
  if (const auto* mean = ckpt.find("data.mean")) {
    const auto& sd = ckpt.get("data.std");
    s.normalization.mean.assign(mean->values.begin(), mean->values.end());
    s.normalization.std.assign(sd.values.begin(), sd.values.end());
  }
  net.set_fused(fused);
  s.net = std::move(net);
  return s;
}

}  // namespace stbp
