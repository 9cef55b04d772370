#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stbp/layers.hpp"
#include "stbp/neuron.hpp"
#include "stbp/tdbn.hpp"
#include "stbp/tensor.hpp"

namespace stbp {

// Role of one incoming edge of an additive junction.
enum class BranchKind {
  kUntagged,    // rejected by assign_alpha
  kNormalized,  // produced by a tdBN node; receives alpha = 1/sqrt(n)
  kIdentity,    // carries spikes unchanged (identity shortcut)
};

struct InputOp {
  int channels = 1;
  int height = 1;
  int width = 1;
};

// Non-overlapping average pooling; window 0 pools the whole plane.
struct PoolOp {
  int window = 2;
};

struct AddOp {
  std::vector<BranchKind> branches;
};

template <typename Real>
struct DecodeOp {
  LinearParamsT<Real> params;
};

template <typename Real>
using NodeOp = std::variant<InputOp, ConvParamsT<Real>, LinearParamsT<Real>,
                            TdBnParamsT<Real>, LifHyper, PoolOp, AddOp,
                            DecodeOp<Real>>;

// Mirrors the NodeOp alternative order.
enum class NodeKind { kInput, kConv, kLinear, kTdBn, kLif, kPool, kAdd, kDecode };

const char* node_kind_name(NodeKind kind);

template <typename Real>
struct NodeT {
  std::string name;
  NodeOp<Real> op;
  std::vector<int> inputs;

  NodeKind kind() const { return static_cast<NodeKind>(op.index()); }
  template <typename T>
  T& as() { return std::get<T>(op); }
  template <typename T>
  const T& as() const { return std::get<T>(op); }
};

// Mutable view of one trainable array.
template <typename Real>
struct ParamRef {
  std::string name;
  std::span<Real> values;
  std::vector<int> dims;
};

// A directed acyclic graph of layers. Node 0..size()-1 are referenced by
// index; execution follows a topological order with ties broken by index.
template <typename Real>
class NetworkT {
 public:
  int add(std::string name, NodeOp<Real> op, std::vector<int> inputs = {});

  int size() const { return static_cast<int>(nodes_.size()); }
  NodeT<Real>& node(int i) { return nodes_.at(static_cast<std::size_t>(i)); }
  const NodeT<Real>& node(int i) const {
    return nodes_.at(static_cast<std::size_t>(i));
  }
  std::span<NodeT<Real>> nodes() { return nodes_; }
  std::span<const NodeT<Real>> nodes() const { return nodes_; }
  // -1 when absent.
  int find(const std::string& name) const;

  bool fused() const { return fused_; }
  void set_fused(bool fused) { fused_ = fused; }

  // Validates edges and returns the execution order. Throws GraphError on
  // dangling edges, cycles, or a missing/duplicated input or decode node.
  std::vector<int> topological_order() const;
  std::vector<std::vector<int>> consumers() const;
  int input_node() const;
  int output_node() const;
  std::vector<int> nodes_of_kind(NodeKind kind) const;

  // Shapes of every node output for an input batch of the given shape
  // (Decode reports [1, N, classes, 1, 1]).
  std::vector<Shape> infer_shapes(const Shape& input) const;

  // Trainable arrays in node order: weight, bias, lambda, beta.
  std::vector<ParamRef<Real>> parameters();
  std::size_t parameter_count() const;

 private:
  std::vector<NodeT<Real>> nodes_;
  bool fused_ = false;
};

using Network = NetworkT<float>;
using Node = NodeT<float>;

enum class Mode { kTrain, kInfer };

struct ForwardOptions {
  FireMode fire = FireMode::kSpike;
};

// Saved forward values needed by backward_pass.
template <typename Real>
struct Tape {
  Mode mode = Mode::kInfer;
  std::vector<TensorT<Real>> outputs;     // per node; empty for Decode
  std::vector<TensorT<Real>> potentials;  // per node; LIF only
  std::vector<std::optional<TdBnCache<Real>>> bn;  // per node; tdBN only
  bool valid() const { return !outputs.empty(); }
  void clear();
};

template <typename Real>
struct ForwardResult {
  MatrixT<Real> logits;  // Q, [N, classes]
  Tape<Real> tape;
};

// Runs the network. Train mode normalizes with batch statistics and updates
// running statistics; infer mode uses running statistics (unfused network)
// or the fused weights (fused network).
template <typename Real>
ForwardResult<Real> forward_pass(NetworkT<Real>& net, const TensorT<Real>& x,
                                 Mode mode, const ForwardOptions& opts = {});

template <typename Real>
struct Gradients {
  // Aligned with NetworkT::parameters().
  std::vector<std::vector<Real>> params;
  // Gradient of the loss w.r.t. every node output (kept on request).
  std::vector<TensorT<Real>> nodes;
};

struct BackwardOptions {
  bool keep_node_grads = false;
};

// Reverse-mode pass through layers (spatial) and timesteps (temporal).
// Consumes and clears the tape.
template <typename Real>
Gradients<Real> backward_pass(const NetworkT<Real>& net,
                              const MatrixT<Real>& grad_q, Tape<Real>& tape,
                              const BackwardOptions& opts = {});

// Folds every tdBN node into its producing conv/linear node and removes it.
template <typename Real>
NetworkT<Real> fuse_network(const NetworkT<Real>& net);

// Removes tdBN nodes without touching weights: the fused topology, used to
// receive fused weights from a checkpoint.
template <typename Real>
NetworkT<Real> strip_normalization(const NetworkT<Real>& net);

// Sets the hyper-parameters of every LIF node.
template <typename Real>
void set_lif_hyper(NetworkT<Real>& net, const LifHyper& hyper);

template <typename To, typename From>
NetworkT<To> network_cast(const NetworkT<From>& net);

}  // namespace stbp
