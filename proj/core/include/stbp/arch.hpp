#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stbp/network.hpp"

namespace stbp {

enum class BlockKind { kBasic, kBottleneck };

// One series of residual blocks; only the first block may use stride 2.
struct BlockSpec {
  BlockKind kind = BlockKind::kBasic;
  int channels = 64;  // output channels (bottleneck: inner width is /4)
  int stride = 1;
  int repeat = 1;
};

struct ArchConfig {
  // resnet17 | resnet19 | resnet34 | resnet34_large | resnet50 | resnet8 |
  // plain
  std::string name = "resnet8";
  int classes = 10;
  int input_channels = 3;
  int input_hw = 0;  // 0 selects the family default
  int width = 16;    // resnet8 / plain channel width
  int depth = 20;    // plain: weighted layers including encoder and decoder
  bool use_tdbn = true;  // plain only
  LifHyper lif;
};

std::vector<std::string> known_architectures();

// Incremental graph construction with shape tracking. Every method appends
// nodes after `from` and returns the id of the last node appended.
template <typename Real>
class NetBuilderT {
 public:
  NetBuilderT(int channels, int height, int width, LifHyper lif = {});

  int input() const { return input_; }
  int channels(int node) const { return dims_.at(static_cast<std::size_t>(node)).c; }
  int height(int node) const { return dims_.at(static_cast<std::size_t>(node)).h; }
  int width(int node) const { return dims_.at(static_cast<std::size_t>(node)).w; }

  int conv(int from, const std::string& name, int out_ch, int kernel,
           int stride, int padding);
  int linear(int from, const std::string& name, int out_features);
  int tdbn(int from, const std::string& name, double alpha = 1.0);
  int lif(int from, const std::string& name);
  int pool(int from, const std::string& name, int window);
  int add(const std::vector<int>& from, const std::vector<BranchKind>& kinds,
          const std::string& name);
  int decode(int from, const std::string& name, int classes);

  // conv -> tdBN(alpha) -> LIF.
  int conv_bn_lif(int from, const std::string& name, int out_ch, int kernel,
                  int stride, int padding);

  NetworkT<Real> finish();

 private:
  struct Dims { int c, h, w; };
  int push(std::string name, NodeOp<Real> op, std::vector<int> inputs,
           Dims dims);

  NetworkT<Real> net_;
  std::vector<Dims> dims_;
  LifHyper lif_;
  int input_ = 0;
};

using NetBuilder = NetBuilderT<float>;

// Spiking basic block: conv3x3 -> tdBN -> LIF -> conv3x3 -> tdBN on the main
// path; identity shortcut when shapes match, else conv1x1(stride) -> tdBN;
// branches summed, then LIF. Returns the block's output node.
template <typename Real>
int build_basic_block(NetBuilderT<Real>& b, int from, const std::string& name,
                      int out_ch, int stride);

// Bottleneck triple 1x1 -> 3x3(stride) -> 1x1 with the same shortcut rule.
template <typename Real>
int build_bottleneck_block(NetBuilderT<Real>& b, int from,
                           const std::string& name, int out_ch, int stride);

// Appends `spec.repeat` blocks named <prefix>.<i>.
template <typename Real>
int build_series(NetBuilderT<Real>& b, int from, const std::string& prefix,
                 const BlockSpec& spec);

// Builds the graph and assigns alpha; weights stay zero until init_weights.
template <typename Real>
NetworkT<Real> build_network(const ArchConfig& config);

// ResNet family by name with family-default input size.
template <typename Real>
NetworkT<Real> build_resnet(const std::string& name, int classes,
                            int input_channels, int input_hw = 0);

// tdBN nodes feeding an n-way junction get alpha = 1/sqrt(n); every other
// tdBN gets 1. Throws GraphError on untagged branches or a normalized branch
// whose producer is not a tdBN node.
template <typename Real>
void assign_alpha(NetworkT<Real>& net);

// Kaiming Gaussian weights (variance 2/fan_in), zero biases, lambda = 1,
// beta = 0. Deterministic in `seed`.
template <typename Real>
void init_weights(NetworkT<Real>& net, std::uint64_t seed);

// Number of conv/linear/decode nodes; shortcut projections are skipped
// unless requested.
template <typename Real>
int weighted_layer_count(const NetworkT<Real>& net,
                         bool include_shortcuts = false);

}  // namespace stbp
