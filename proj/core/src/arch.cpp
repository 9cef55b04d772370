#include "stbp/arch.hpp"

#include <cmath>
#include <random>

#include "stbp/errors.hpp"

namespace stbp {

namespace {

constexpr const char* kShortcutSuffix = ".down";

bool is_shortcut(const std::string& name) {
  const std::string suffix = kShortcutSuffix;
  return name.size() >= suffix.size() &&
         name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<std::string> known_architectures() {
  return {"resnet17", "resnet19", "resnet34", "resnet34_large",
          "resnet50", "resnet8",  "plain"};
}

template <typename Real>
NetBuilderT<Real>::NetBuilderT(int channels, int height, int width,
                               LifHyper lif)
    : lif_(lif) {
  lif_.validate();
  if (channels < 1 || height < 1 || width < 1) {
    throw DimensionError("network input must have positive dimensions");
  }
  input_ = push("input", InputOp{channels, height, width}, {},
                Dims{channels, height, width});
}

template <typename Real>
int NetBuilderT<Real>::push(std::string name, NodeOp<Real> op,
                            std::vector<int> inputs, Dims dims) {
  const int id = net_.add(std::move(name), std::move(op), std::move(inputs));
  dims_.push_back(dims);
  return id;
}

template <typename Real>
int NetBuilderT<Real>::conv(int from, const std::string& name, int out_ch,
                            int kernel, int stride, int padding) {
  const Dims in = dims_.at(static_cast<std::size_t>(from));
  const Dims out{out_ch, conv_output_extent(in.h, kernel, stride, padding),
                 conv_output_extent(in.w, kernel, stride, padding)};
  return push(name, ConvParamsT<Real>(in.c, out_ch, kernel, stride, padding),
              {from}, out);
}

template <typename Real>
int NetBuilderT<Real>::linear(int from, const std::string& name,
                              int out_features) {
  const Dims in = dims_.at(static_cast<std::size_t>(from));
  return push(name, LinearParamsT<Real>(in.c * in.h * in.w, out_features),
              {from}, Dims{out_features, 1, 1});
}

template <typename Real>
int NetBuilderT<Real>::tdbn(int from, const std::string& name, double alpha) {
  const Dims in = dims_.at(static_cast<std::size_t>(from));
  return push(name, TdBnParamsT<Real>(in.c, alpha, lif_.v_th), {from}, in);
}

template <typename Real>
int NetBuilderT<Real>::lif(int from, const std::string& name) {
  return push(name, lif_, {from}, dims_.at(static_cast<std::size_t>(from)));
}

template <typename Real>
int NetBuilderT<Real>::pool(int from, const std::string& name, int window) {
  const Dims in = dims_.at(static_cast<std::size_t>(from));
  const int w = window == 0 ? in.h : window;
  if (w < 1 || in.h % w != 0 || in.w % w != 0 || (window == 0 && in.h != in.w)) {
    throw DimensionError("pool '" + name + "' window " + std::to_string(w) +
                         " does not tile " + std::to_string(in.h) + "x" +
                         std::to_string(in.w));
  }
  return push(name, PoolOp{window}, {from}, Dims{in.c, in.h / w, in.w / w});
}

template <typename Real>
int NetBuilderT<Real>::add(const std::vector<int>& from,
                           const std::vector<BranchKind>& kinds,
                           const std::string& name) {
  const Dims first = dims_.at(static_cast<std::size_t>(from.at(0)));
  for (int f : from) {
    const Dims d = dims_.at(static_cast<std::size_t>(f));
    if (d.c != first.c || d.h != first.h || d.w != first.w) {
      throw DimensionError("junction '" + name + "' joins branches of "
                           "different shapes");
    }
  }
  return push(name, AddOp{kinds}, from, first);
}

template <typename Real>
int NetBuilderT<Real>::decode(int from, const std::string& name, int classes) {
  const Dims in = dims_.at(static_cast<std::size_t>(from));
  return push(name,
              DecodeOp<Real>{LinearParamsT<Real>(in.c * in.h * in.w, classes)},
              {from}, Dims{classes, 1, 1});
}

template <typename Real>
int NetBuilderT<Real>::conv_bn_lif(int from, const std::string& name,
                                   int out_ch, int kernel, int stride,
                                   int padding) {
  int x = conv(from, name, out_ch, kernel, stride, padding);
  x = tdbn(x, name + ".bn");
  return lif(x, name + ".lif");
}

template <typename Real>
NetworkT<Real> NetBuilderT<Real>::finish() {
  assign_alpha(net_);
  net_.topological_order();
  return std::move(net_);
}

namespace {

// Identity when the shape is preserved, else 1x1 projection + tdBN.
template <typename Real>
std::pair<int, BranchKind> shortcut(NetBuilderT<Real>& b, int from,
                                    const std::string& name, int out_ch,
                                    int stride) {
  if (stride == 1 && b.channels(from) == out_ch) {
    return {from, BranchKind::kIdentity};
  }
  const int c = b.conv(from, name + kShortcutSuffix, out_ch, 1, stride, 0);
  return {b.tdbn(c, name + ".down_bn"), BranchKind::kNormalized};
}

template <typename Real>
int join(NetBuilderT<Real>& b, const std::string& name, int main,
         std::pair<int, BranchKind> side) {
  const int sum = b.add({main, side.first},
                        {BranchKind::kNormalized, side.second}, name + ".add");
  return b.lif(sum, name + ".lif");
}

}  // namespace

template <typename Real>
int build_basic_block(NetBuilderT<Real>& b, int from, const std::string& name,
                      int out_ch, int stride) {
  if (out_ch < 1 || (stride != 1 && stride != 2)) {
    throw ConfigError("basic block '" + name + "' needs positive channels "
                      "and stride 1 or 2");
  }
  int x = b.conv_bn_lif(from, name + ".conv1", out_ch, 3, stride, 1);
  x = b.conv(x, name + ".conv2", out_ch, 3, 1, 1);
  x = b.tdbn(x, name + ".conv2.bn");
  return join(b, name, x, shortcut(b, from, name, out_ch, stride));
}

template <typename Real>
int build_bottleneck_block(NetBuilderT<Real>& b, int from,
                           const std::string& name, int out_ch, int stride) {
  if (out_ch < 4 || out_ch % 4 != 0 || (stride != 1 && stride != 2)) {
    throw ConfigError("bottleneck block '" + name + "' needs channels "
                      "divisible by 4 and stride 1 or 2");
  }
  const int inner = out_ch / 4;
  int x = b.conv_bn_lif(from, name + ".conv1", inner, 1, 1, 0);
  x = b.conv_bn_lif(x, name + ".conv2", inner, 3, stride, 1);
  x = b.conv(x, name + ".conv3", out_ch, 1, 1, 0);
  x = b.tdbn(x, name + ".conv3.bn");
  return join(b, name, x, shortcut(b, from, name, out_ch, stride));
}

template <typename Real>
int build_series(NetBuilderT<Real>& b, int from, const std::string& prefix,
                 const BlockSpec& spec) {
  if (spec.repeat < 1) throw ConfigError("block series needs repeat >= 1");
  int x = from;
  for (int i = 0; i < spec.repeat; ++i) {
    const int stride = i == 0 ? spec.stride : 1;
    const std::string name = prefix + "." + std::to_string(i);
    x = spec.kind == BlockKind::kBasic
            ? build_basic_block(b, x, name, spec.channels, stride)
            : build_bottleneck_block(b, x, name, spec.channels, stride);
  }
  return x;
}

namespace {

struct Family {
  int conv1_channels;
  int conv1_kernel;
  int conv1_stride;
  std::vector<BlockSpec> series;
  bool spiking_fc;  // avgpool/2 -> 256-d spiking fc; else global avgpool
  int default_hw;
};

Family family(const std::string& name) {
  using BK = BlockKind;
  if (name == "resnet17") {
    return {64, 3, 1, {{BK::kBasic, 64, 1, 3}, {BK::kBasic, 128, 2, 4}},
            true, 32};
  }
  if (name == "resnet19") {
    return {128, 3, 1,
            {{BK::kBasic, 128, 1, 3},
             {BK::kBasic, 256, 2, 3},
             {BK::kBasic, 512, 2, 2}},
            true, 32};
  }
  if (name == "resnet34" || name == "resnet34_large") {
    const int m = name == "resnet34_large" ? 2 : 1;
    return {64 * m, 7, 2,
            {{BK::kBasic, 64 * m, 2, 3},
             {BK::kBasic, 128 * m, 2, 4},
             {BK::kBasic, 256 * m, 2, 6},
             {BK::kBasic, 512 * m, 2, 3}},
            false, 224};
  }
  if (name == "resnet50") {
    return {64, 7, 2,
            {{BK::kBottleneck, 256, 2, 3},
             {BK::kBottleneck, 512, 2, 4},
             {BK::kBottleneck, 1024, 2, 6},
             {BK::kBottleneck, 2048, 2, 3}},
            false, 224};
  }
  throw ConfigError("unknown architecture '" + name + "'");
}

void check_common(const ArchConfig& c) {
  if (c.classes < 2) throw ConfigError("classes must be at least 2");
  if (c.input_channels < 1) {
    throw ConfigError("input_channels must be positive");
  }
  if (c.input_hw < 0) throw ConfigError("image size must be positive");
}

template <typename Real>
NetworkT<Real> build_plain(const ArchConfig& c) {
  if (c.depth < 3) throw ConfigError("plain stack needs depth >= 3");
  if (c.width < 1) throw ConfigError("width must be positive");
  const int hw = c.input_hw == 0 ? 8 : c.input_hw;
  NetBuilderT<Real> b(c.input_channels, hw, hw, c.lif);
  int x = b.input();
  for (int i = 1; i < c.depth; ++i) {
    const std::string name = "conv" + std::to_string(i);
    x = b.conv(x, name, c.width, 3, 1, 1);
    if (c.use_tdbn) x = b.tdbn(x, name + ".bn");
    x = b.lif(x, name + ".lif");
  }
  b.decode(x, "decode", c.classes);
  return b.finish();
}

template <typename Real>
NetworkT<Real> build_resnet8(const ArchConfig& c) {
  if (c.width < 1) throw ConfigError("width must be positive");
  const int hw = c.input_hw == 0 ? 8 : c.input_hw;
  NetBuilderT<Real> b(c.input_channels, hw, hw, c.lif);
  int x = b.conv_bn_lif(b.input(), "conv1", c.width, 3, 1, 1);
  x = build_series(b, x, "block1", {BlockKind::kBasic, c.width, 1, 1});
  x = build_series(b, x, "block2", {BlockKind::kBasic, 2 * c.width, 2, 2});
  b.decode(x, "decode", c.classes);
  return b.finish();
}

}  // namespace

template <typename Real>
NetworkT<Real> build_network(const ArchConfig& c) {
  check_common(c);
  if (c.name == "plain") return build_plain<Real>(c);
  if (c.name == "resnet8") return build_resnet8<Real>(c);

  const Family f = family(c.name);
  const int hw = c.input_hw == 0 ? f.default_hw : c.input_hw;
  NetBuilderT<Real> b(c.input_channels, hw, hw, c.lif);
  int x = b.conv_bn_lif(b.input(), "conv1", f.conv1_channels, f.conv1_kernel,
                        f.conv1_stride, f.conv1_kernel / 2);
  for (std::size_t i = 0; i < f.series.size(); ++i) {
    x = build_series(b, x, "block" + std::to_string(i + 1), f.series[i]);
  }
  if (f.spiking_fc) {
    x = b.pool(x, "pool", 2);
    x = b.linear(x, "fc", 256);
    x = b.tdbn(x, "fc.bn");
    x = b.lif(x, "fc.lif");
  } else {
    x = b.pool(x, "pool", 0);
  }
  b.decode(x, "decode", c.classes);
  return b.finish();
}

template <typename Real>
NetworkT<Real> build_resnet(const std::string& name, int classes,
                            int input_channels, int input_hw) {
  ArchConfig c;
  c.name = name;
  c.classes = classes;
  c.input_channels = input_channels;
  c.input_hw = input_hw;
  if (name == "plain" || name == "resnet8") {
    throw ConfigError("'" + name + "' is not a member of the ResNet family");
  }
  return build_network<Real>(c);
}

template <typename Real>
void assign_alpha(NetworkT<Real>& net) {
  const auto consumers = net.consumers();
  for (auto& nd : net.nodes()) {
    if (nd.kind() == NodeKind::kTdBn) nd.template as<TdBnParamsT<Real>>().alpha = 1.0;
  }
  for (int i = 0; i < net.size(); ++i) {
    const auto& nd = net.node(i);
    if (nd.kind() != NodeKind::kAdd) continue;
    const auto& kinds = nd.template as<AddOp>().branches;
    if (kinds.size() != nd.inputs.size()) {
      throw GraphError("junction '" + nd.name +
                       "' branch tags do not match its inputs");
    }
    const double alpha = 1.0 / std::sqrt(static_cast<double>(kinds.size()));
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      const int src = nd.inputs[k];
      switch (kinds[k]) {
        case BranchKind::kUntagged:
          throw GraphError("junction '" + nd.name + "' has untagged branch " +
                           std::to_string(k));
        case BranchKind::kIdentity:
          break;
        case BranchKind::kNormalized: {
          auto& producer = net.node(src);
          if (producer.kind() != NodeKind::kTdBn) {
            throw GraphError("junction '" + nd.name + "' branch " +
                             std::to_string(k) + " is tagged normalized but "
                             "comes from " + node_kind_name(producer.kind()) +
                             " node '" + producer.name + "'");
          }
          if (consumers[static_cast<std::size_t>(src)].size() != 1) {
            throw GraphError("tdBN '" + producer.name +
                             "' feeds a junction and other nodes");
          }
          producer.template as<TdBnParamsT<Real>>().alpha = alpha;
          break;
        }
      }
    }
  }
}

template <typename Real>
void init_weights(NetworkT<Real>& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fill = [&rng](std::vector<Real>& w, std::vector<Real>& bias,
                     int fan_in) {
    std::normal_distribution<double> dist(0.0,
                                          std::sqrt(2.0 / std::max(fan_in, 1)));
    for (Real& v : w) v = static_cast<Real>(dist(rng));
    std::fill(bias.begin(), bias.end(), Real(0));
  };
  for (auto& nd : net.nodes()) {
    switch (nd.kind()) {
      case NodeKind::kConv: {
        auto& p = nd.template as<ConvParamsT<Real>>();
        fill(p.weight, p.bias, p.fan_in());
        break;
      }
      case NodeKind::kLinear: {
        auto& p = nd.template as<LinearParamsT<Real>>();
        fill(p.weight, p.bias, p.fan_in());
        break;
      }
      case NodeKind::kDecode: {
        auto& p = nd.template as<DecodeOp<Real>>().params;
        fill(p.weight, p.bias, p.fan_in());
        break;
      }
      case NodeKind::kTdBn: {
        auto& p = nd.template as<TdBnParamsT<Real>>();
        std::fill(p.lambda.begin(), p.lambda.end(), Real(1));
        std::fill(p.beta.begin(), p.beta.end(), Real(0));
        break;
      }
      default:
        break;
    }
  }
}

template <typename Real>
int weighted_layer_count(const NetworkT<Real>& net, bool include_shortcuts) {
  int count = 0;
  for (const auto& nd : net.nodes()) {
    const NodeKind k = nd.kind();
    if (k != NodeKind::kConv && k != NodeKind::kLinear &&
        k != NodeKind::kDecode) {
      continue;
    }
    if (!include_shortcuts && is_shortcut(nd.name)) continue;
    ++count;
  }
  return count;
}

#define STBP_INSTANTIATE_ARCH(Real)                                          \
  template class NetBuilderT<Real>;                                          \
  template int build_basic_block(NetBuilderT<Real>&, int, const std::string&, \
                                 int, int);                                  \
  template int build_bottleneck_block(NetBuilderT<Real>&, int,               \
                                      const std::string&, int, int);         \
  template int build_series(NetBuilderT<Real>&, int, const std::string&,     \
                            const BlockSpec&);                               \
  template NetworkT<Real> build_network<Real>(const ArchConfig&);            \
  template NetworkT<Real> build_resnet<Real>(const std::string&, int, int,   \
                                             int);                           \
  template void assign_alpha(NetworkT<Real>&);                               \
  template void init_weights(NetworkT<Real>&, std::uint64_t);                \
  template int weighted_layer_count(const NetworkT<Real>&, bool);

STBP_INSTANTIATE_ARCH(float)
STBP_INSTANTIATE_ARCH(double)

}  // namespace stbp
