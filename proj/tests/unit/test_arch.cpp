#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "oracles.hpp"
#include "stbp/arch.hpp"
#include "stbp/errors.hpp"

namespace stbp {
namespace {

const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

double alpha_of(const Network& net, const std::string& name) {
  const int i = net.find(name);
  EXPECT_GE(i, 0) << name;
  return net.node(i).as<TdBnParams>().alpha;
}

// For every junction: the normalized branches share alpha = 1/sqrt(n), and
// an n-way junction therefore has sum of squared branch scales equal to 1.
void expect_junction_alphas(const Network& net) {
  for (const auto& nd : net.nodes()) {
    if (nd.kind() != NodeKind::kAdd) continue;
    const auto& kinds = nd.as<AddOp>().branches;
    const double n = static_cast<double>(kinds.size());
    double sum_sq = 0.0;
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      double a = 1.0 / std::sqrt(n);
      if (kinds[k] == BranchKind::kNormalized) {
        a = net.node(nd.inputs[k]).as<TdBnParams>().alpha;
        EXPECT_NEAR(a, 1.0 / std::sqrt(n), 1e-15) << nd.name;
      }
      sum_sq += a * a;
    }
    EXPECT_NEAR(sum_sq, 1.0, 1e-12) << nd.name;
  }
}

TEST(BasicBlock, IdentityShortcut) {
  NetBuilder b(64, 8, 8);
  int x = b.conv_bn_lif(b.input(), "stem", 64, 3, 1, 1);
  x = build_basic_block(b, x, "blk", 64, 1);
  b.decode(x, "decode", 10);
  const Network net = b.finish();
  EXPECT_EQ(net.find("blk.down"), -1);
  EXPECT_EQ(net.find("blk.down_bn"), -1);
  EXPECT_EQ(net.nodes_of_kind(NodeKind::kConv).size(), 3u);
  EXPECT_DOUBLE_EQ(alpha_of(net, "stem.bn"), 1.0);
  EXPECT_DOUBLE_EQ(alpha_of(net, "blk.conv1.bn"), 1.0);
  EXPECT_DOUBLE_EQ(alpha_of(net, "blk.conv2.bn"), kInvSqrt2);
  const auto& add = net.node(net.find("blk.add"));
  EXPECT_EQ(add.as<AddOp>().branches,
            (std::vector<BranchKind>{BranchKind::kNormalized,
                                     BranchKind::kIdentity}));
  EXPECT_EQ(add.inputs[1], net.find("stem.lif"));
  EXPECT_EQ(net.node(net.find("blk.lif")).inputs,
            std::vector<int>{net.find("blk.add")});
  expect_junction_alphas(net);
}

TEST(BasicBlock, ProjectionShortcut) {
  NetBuilder b(64, 8, 8);
  int x = b.conv_bn_lif(b.input(), "stem", 64, 3, 1, 1);
  x = build_basic_block(b, x, "blk", 128, 2);
  EXPECT_EQ(b.channels(x), 128);
  EXPECT_EQ(b.height(x), 4);
  b.decode(x, "decode", 10);
  const Network net = b.finish();
  const auto& down = net.node(net.find("blk.down")).as<ConvParams>();
  EXPECT_EQ(down.kernel, 1);
  EXPECT_EQ(down.stride, 2);
  EXPECT_DOUBLE_EQ(alpha_of(net, "blk.down_bn"), kInvSqrt2);
  EXPECT_DOUBLE_EQ(alpha_of(net, "blk.conv2.bn"), kInvSqrt2);
  EXPECT_DOUBLE_EQ(alpha_of(net, "blk.conv1.bn"), 1.0);
  expect_junction_alphas(net);
}

TEST(AssignAlpha, SerialChainAndWideJunction) {
  NetBuilder b(2, 4, 4);
  int x = b.conv_bn_lif(b.input(), "a", 3, 3, 1, 1);
  x = b.conv_bn_lif(x, "b", 3, 3, 1, 1);
  std::vector<int> branches;
  for (int k = 0; k < 4; ++k) {
    const std::string n = "br" + std::to_string(k);
    branches.push_back(b.tdbn(b.conv(x, n, 3, 1, 1, 0), n + ".bn"));
  }
  x = b.add(branches, std::vector<BranchKind>(4, BranchKind::kNormalized),
            "merge");
  x = b.lif(x, "merge.lif");
  b.decode(x, "decode", 2);
  const Network net = b.finish();
  EXPECT_DOUBLE_EQ(alpha_of(net, "a.bn"), 1.0);
  EXPECT_DOUBLE_EQ(alpha_of(net, "b.bn"), 1.0);
  for (int k = 0; k < 4; ++k) {
    EXPECT_DOUBLE_EQ(alpha_of(net, "br" + std::to_string(k) + ".bn"), 0.5);
  }
  expect_junction_alphas(net);
}

TEST(AssignAlpha, UntaggedBranchIsGraphError) {
  NetBuilder b(2, 4, 4);
  const int x = b.conv_bn_lif(b.input(), "a", 2, 3, 1, 1);
  const int y = b.tdbn(b.conv(x, "c", 2, 3, 1, 1), "c.bn");
  const int s = b.add({y, x}, {BranchKind::kNormalized, BranchKind::kUntagged},
                      "add");
  b.decode(b.lif(s, "add.lif"), "decode", 2);
  EXPECT_THROW(b.finish(), GraphError);
}

TEST(AssignAlpha, NormalizedTagNeedsTdBnProducer) {
  NetBuilder b(2, 4, 4);
  const int x = b.conv_bn_lif(b.input(), "a", 2, 3, 1, 1);
  const int y = b.conv(x, "c", 2, 3, 1, 1);
  const int s = b.add({y, x}, {BranchKind::kNormalized, BranchKind::kIdentity},
                      "add");
  b.decode(b.lif(s, "add.lif"), "decode", 2);
  EXPECT_THROW(b.finish(), GraphError);
}

TEST(Families, ResNet19LayerCount) {
  const Network net = build_resnet<float>("resnet19", 10, 3);
  EXPECT_EQ(weighted_layer_count(net), 19);
  // Two projections: into the 256 and 512 series.
  EXPECT_EQ(weighted_layer_count(net, true), 21);
  const auto& fc = net.node(net.find("fc")).as<LinearParams>();
  EXPECT_EQ(fc.out_features, 256);
  EXPECT_EQ(net.node(net.find("conv1")).as<ConvParams>().out_channels, 128);
  expect_junction_alphas(net);
}

TEST(Families, ResNet17Classifier) {
  const Network net = build_resnet<float>("resnet17", 11, 2);
  const auto& dec = net.node(net.find("decode")).as<DecodeOp<float>>().params;
  EXPECT_EQ(dec.out_features, 11);
  EXPECT_EQ(weighted_layer_count(net), 1 + 2 * 7 + 2);
  const auto shapes = net.infer_shapes(Shape{2, 1, 2, 32, 32});
  EXPECT_EQ(shapes[static_cast<std::size_t>(net.find("pool"))],
            (Shape{2, 1, 128, 8, 8}));
  EXPECT_EQ(net.node(net.find("block1.0.conv1")).as<ConvParams>().stride, 1);
  EXPECT_EQ(net.node(net.find("block2.0.conv1")).as<ConvParams>().stride, 2);
}

TEST(Families, ResNet34LargeDoublesChannels) {
  const Network small = build_resnet<float>("resnet34", 1000, 3);
  const Network large = build_resnet<float>("resnet34_large", 1000, 3);
  ASSERT_EQ(small.size(), large.size());
  int convs = 0;
  for (int i = 0; i < small.size(); ++i) {
    ASSERT_EQ(small.node(i).name, large.node(i).name);
    if (small.node(i).kind() != NodeKind::kConv) continue;
    ++convs;
    EXPECT_EQ(2 * small.node(i).as<ConvParams>().out_channels,
              large.node(i).as<ConvParams>().out_channels);
  }
  EXPECT_EQ(weighted_layer_count(small), 34);
  EXPECT_GT(convs, 30);
}

TEST(Families, EveryMemberProducesClassLogits) {
  for (const std::string name :
       {"resnet17", "resnet19", "resnet34", "resnet34_large", "resnet50"}) {
    const int hw = name.starts_with("resnet1") ? 32 : 224;
    const Network net = build_resnet<float>(name, 7, 3);
    const auto shapes = net.infer_shapes(Shape{2, 1, 3, hw, hw});
    EXPECT_EQ(shapes.back(), (Shape{1, 1, 7, 1, 1})) << name;
    expect_junction_alphas(net);
  }
  ArchConfig c;
  for (const std::string name : {"resnet8", "plain"}) {
    c.name = name;
    c.input_hw = 8;
    const Network net = build_network<float>(c);
    const auto shapes = net.infer_shapes(Shape{2, 4, 3, 8, 8});
    EXPECT_EQ(shapes.back(), (Shape{1, 4, 10, 1, 1})) << name;
  }
}

TEST(Families, Resnet50UsesBottlenecks) {
  const Network net = build_resnet<float>("resnet50", 1000, 3);
  EXPECT_EQ(weighted_layer_count(net), 50);
  const auto& c1 = net.node(net.find("block1.0.conv1")).as<ConvParams>();
  const auto& c2 = net.node(net.find("block1.0.conv2")).as<ConvParams>();
  const auto& c3 = net.node(net.find("block1.0.conv3")).as<ConvParams>();
  EXPECT_EQ(c1.kernel, 1);
  EXPECT_EQ(c2.kernel, 3);
  EXPECT_EQ(c3.kernel, 1);
  EXPECT_EQ(c3.out_channels, 4 * c2.out_channels);
}

TEST(Families, UnknownNames) {
  EXPECT_THROW(build_resnet<float>("resnet18", 10, 3), ConfigError);
  EXPECT_THROW(build_resnet<float>("resnet8", 10, 3), ConfigError);
  ArchConfig c;
  c.name = "vgg";
  EXPECT_THROW(build_network<float>(c), ConfigError);
  const auto names = known_architectures();
  EXPECT_NE(std::find(names.begin(), names.end(), "resnet50"), names.end());
}

TEST(Families, PlainStackHonoursNormalizationFlag) {
  ArchConfig c;
  c.name = "plain";
  c.depth = 20;
  const Network with = build_network<float>(c);
  c.use_tdbn = false;
  const Network without = build_network<float>(c);
  EXPECT_EQ(weighted_layer_count(with), 20);
  EXPECT_EQ(with.nodes_of_kind(NodeKind::kTdBn).size(), 19u);
  EXPECT_TRUE(without.nodes_of_kind(NodeKind::kTdBn).empty());
}

TEST(InitWeights, KaimingStatistics) {
  NetBuilder b(64, 16, 16);
  b.decode(b.conv_bn_lif(b.input(), "c", 64, 3, 1, 1), "decode", 2);
  Network net = b.finish();
  init_weights(net, 11);
  const auto& conv = net.node(net.find("c")).as<ConvParams>();
  double sum = 0.0;
  double sq = 0.0;
  for (float v : conv.weight) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(conv.weight.size());
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(std::sqrt(2.0 / 576.0), 0.0589, 1e-4);
  EXPECT_NEAR(sd, std::sqrt(2.0 / 576.0), 0.002);
  EXPECT_LT(std::abs(mean), 0.002);
  for (float v : conv.bias) EXPECT_EQ(v, 0.0f);
  const auto& bn = net.node(net.find("c.bn")).as<TdBnParams>();
  for (float v : bn.lambda) EXPECT_EQ(v, 1.0f);
  for (float v : bn.beta) EXPECT_EQ(v, 0.0f);
}

TEST(InitWeights, DeterministicInSeed) {
  ArchConfig c;
  c.name = "resnet8";
  Network a = build_network<float>(c);
  Network b = build_network<float>(c);
  Network d = build_network<float>(c);
  init_weights(a, 42);
  init_weights(b, 42);
  init_weights(d, 43);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  const auto pd = d.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_EQ(pa[i].values.size(), pb[i].values.size());
    EXPECT_EQ(std::memcmp(pa[i].values.data(), pb[i].values.data(),
                          pa[i].values.size_bytes()),
              0)
        << pa[i].name;
    any_diff |= !std::equal(pa[i].values.begin(), pa[i].values.end(),
                            pd[i].values.begin());
  }
  EXPECT_TRUE(any_diff);
}

TEST(Graph, TopologicalOrderIsStable) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const Network net = oracle::random_network<float>(rng);
    const auto order = net.topological_order();
    ASSERT_EQ(order.size(), static_cast<std::size_t>(net.size()));
    std::vector<int> pos(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) pos[order[k]] = k;
    for (int i = 0; i < net.size(); ++i)
      for (int src : net.node(i).inputs) EXPECT_LT(pos[src], pos[i]);
    EXPECT_EQ(order, net.topological_order());
  }
}

}  // namespace
}  // namespace stbp
