#include "stbp/network.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <string>

#include "stbp/errors.hpp"
#include "stbp/loss.hpp"

namespace stbp {

const char* node_kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::kInput: return "input";
    case NodeKind::kConv: return "conv";
    case NodeKind::kLinear: return "linear";
    case NodeKind::kTdBn: return "tdbn";
    case NodeKind::kLif: return "lif";
    case NodeKind::kPool: return "pool";
    case NodeKind::kAdd: return "add";
    case NodeKind::kDecode: return "decode";
  }
  return "?";
}

template <typename Real>
int NetworkT<Real>::add(std::string name, NodeOp<Real> op,
                        std::vector<int> inputs) {
  if (find(name) >= 0) {
    throw GraphError("duplicate node name '" + name + "'");
  }
  nodes_.push_back(NodeT<Real>{std::move(name), std::move(op),
                               std::move(inputs)});
  return size() - 1;
}

template <typename Real>
int NetworkT<Real>::find(const std::string& name) const {
  for (int i = 0; i < size(); ++i) {
    if (nodes_[static_cast<std::size_t>(i)].name == name) return i;
  }
  return -1;
}

template <typename Real>
std::vector<int> NetworkT<Real>::topological_order() const {
  const int count = size();
  std::vector<int> indegree(static_cast<std::size_t>(count), 0);
  std::vector<std::vector<int>> out_edges(static_cast<std::size_t>(count));
  int inputs = 0;
  int decoders = 0;
  for (int i = 0; i < count; ++i) {
    const auto& nd = nodes_[static_cast<std::size_t>(i)];
    const std::size_t arity = nd.inputs.size();
    switch (nd.kind()) {
      case NodeKind::kInput:
        ++inputs;
        if (arity != 0) {
          throw GraphError("input node '" + nd.name + "' has producers");
        }
        break;
      case NodeKind::kAdd:
        if (arity < 2) {
          throw GraphError("junction '" + nd.name +
                           "' needs at least two branches");
        }
        if (nd.template as<AddOp>().branches.size() != arity) {
          throw GraphError("junction '" + nd.name +
                           "' branch tags do not match its inputs");
        }
        break;
      default:
        if (nd.kind() == NodeKind::kDecode) ++decoders;
        if (arity != 1) {
          throw GraphError("node '" + nd.name + "' must have exactly one "
                           "producer, has " + std::to_string(arity));
        }
    }
    for (int src : nd.inputs) {
      if (src < 0 || src >= count) {
        throw GraphError("node '" + nd.name + "' has dangling edge to " +
                         std::to_string(src));
      }
      if (src == i) throw GraphError("node '" + nd.name + "' feeds itself");
      out_edges[static_cast<std::size_t>(src)].push_back(i);
      ++indegree[static_cast<std::size_t>(i)];
    }
  }
  if (inputs != 1) {
    throw GraphError("network needs exactly one input node, has " +
                     std::to_string(inputs));
  }
  if (decoders != 1) {
    throw GraphError("network needs exactly one decode node, has " +
                     std::to_string(decoders));
  }

  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int i = 0; i < count; ++i) {
    if (indegree[static_cast<std::size_t>(i)] == 0) ready.push(i);
  }
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(count));
  while (!ready.empty()) {
    const int i = ready.top();
    ready.pop();
    order.push_back(i);
    for (int dst : out_edges[static_cast<std::size_t>(i)]) {
      if (--indegree[static_cast<std::size_t>(dst)] == 0) ready.push(dst);
    }
  }
  if (static_cast<int>(order.size()) != count) {
    throw GraphError("network graph contains a cycle");
  }
  const int sink = order.back();
  if (nodes_[static_cast<std::size_t>(sink)].kind() != NodeKind::kDecode ||
      !out_edges[static_cast<std::size_t>(sink)].empty()) {
    throw GraphError("decode node must be the final sink of the graph");
  }
  for (int i = 0; i < count; ++i) {
    if (i != sink && out_edges[static_cast<std::size_t>(i)].empty()) {
      throw GraphError("node '" + nodes_[static_cast<std::size_t>(i)].name +
                       "' output is never consumed");
    }
  }
  return order;
}

template <typename Real>
std::vector<std::vector<int>> NetworkT<Real>::consumers() const {
  std::vector<std::vector<int>> out(nodes_.size());
  for (int i = 0; i < size(); ++i) {
    for (int src : nodes_[static_cast<std::size_t>(i)].inputs) {
      if (src >= 0 && src < size()) {
        out[static_cast<std::size_t>(src)].push_back(i);
      }
    }
  }
  return out;
}

template <typename Real>
int NetworkT<Real>::input_node() const {
  for (int i = 0; i < size(); ++i) {
    if (node(i).kind() == NodeKind::kInput) return i;
  }
  throw GraphError("network has no input node");
}

template <typename Real>
int NetworkT<Real>::output_node() const {
  for (int i = 0; i < size(); ++i) {
    if (node(i).kind() == NodeKind::kDecode) return i;
  }
  throw GraphError("network has no decode node");
}

template <typename Real>
std::vector<int> NetworkT<Real>::nodes_of_kind(NodeKind kind) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (node(i).kind() == kind) out.push_back(i);
  }
  return out;
}

template <typename Real>
std::vector<Shape> NetworkT<Real>::infer_shapes(const Shape& input) const {
  const std::vector<int> order = topological_order();
  std::vector<Shape> shapes(nodes_.size());
  for (int i : order) {
    const auto& nd = node(i);
    auto in_shape = [&](std::size_t k) {
      return shapes[static_cast<std::size_t>(nd.inputs[k])];
    };
    Shape s;
    switch (nd.kind()) {
      case NodeKind::kInput: {
        const auto& op = nd.template as<InputOp>();
        if (input.c != op.channels || input.h != op.height ||
            input.w != op.width) {
          throw DimensionError("network '" + nd.name + "' expects [T,N," +
                               std::to_string(op.channels) + "," +
                               std::to_string(op.height) + "," +
                               std::to_string(op.width) + "], got " +
                               input.str());
        }
        validate_shape(input);
        s = input;
        break;
      }
      case NodeKind::kConv:
        s = conv2d_output_shape(in_shape(0),
                                nd.template as<ConvParamsT<Real>>());
        break;
      case NodeKind::kLinear: {
        const auto& p = nd.template as<LinearParamsT<Real>>();
        const Shape ins = in_shape(0);
        if (ins.sample_size() != static_cast<std::size_t>(p.in_features)) {
          throw DimensionError("linear '" + nd.name + "' expects " +
                               std::to_string(p.in_features) +
                               " features, input " + ins.str());
        }
        s = Shape{ins.t, ins.n, p.out_features, 1, 1};
        break;
      }
      case NodeKind::kTdBn: {
        s = in_shape(0);
        if (s.c != nd.template as<TdBnParamsT<Real>>().channels()) {
          throw DimensionError("tdbn '" + nd.name + "' channel mismatch on " +
                               s.str());
        }
        break;
      }
      case NodeKind::kLif:
        s = in_shape(0);
        break;
      case NodeKind::kPool: {
        s = in_shape(0);
        const int window = nd.template as<PoolOp>().window;
        const int w = window == 0 ? s.h : window;
        if (window == 0 && s.h != s.w) {
          throw DimensionError("global pool '" + nd.name +
                               "' needs a square plane, got " + s.str());
        }
        if (w < 1 || s.h % w != 0 || s.w % w != 0) {
          throw DimensionError("pool '" + nd.name + "' window " +
                               std::to_string(w) + " does not divide " +
                               s.str());
        }
        s.h /= w;
        s.w /= w;
        break;
      }
      case NodeKind::kAdd:
        s = in_shape(0);
        for (std::size_t k = 1; k < nd.inputs.size(); ++k) {
          if (in_shape(k) != s) {
            throw DimensionError("junction '" + nd.name + "' branch shapes " +
                                 s.str() + " and " + in_shape(k).str() +
                                 " differ");
          }
        }
        break;
      case NodeKind::kDecode: {
        const auto& p = nd.template as<DecodeOp<Real>>().params;
        const Shape ins = in_shape(0);
        if (ins.sample_size() != static_cast<std::size_t>(p.in_features)) {
          throw DimensionError("decode '" + nd.name + "' expects " +
                               std::to_string(p.in_features) +
                               " features, input " + ins.str());
        }
        s = Shape{1, ins.n, p.out_features, 1, 1};
        break;
      }
    }
    shapes[static_cast<std::size_t>(i)] = s;
  }
  return shapes;
}

template <typename Real>
std::vector<ParamRef<Real>> NetworkT<Real>::parameters() {
  std::vector<ParamRef<Real>> out;
  for (auto& nd : nodes_) {
    switch (nd.kind()) {
      case NodeKind::kConv: {
        auto& p = nd.template as<ConvParamsT<Real>>();
        out.push_back({nd.name + ".weight", p.weight,
                       {p.out_channels, p.in_channels, p.kernel, p.kernel}});
        out.push_back({nd.name + ".bias", p.bias, {p.out_channels}});
        break;
      }
      case NodeKind::kLinear: {
        auto& p = nd.template as<LinearParamsT<Real>>();
        out.push_back({nd.name + ".weight", p.weight,
                       {p.out_features, p.in_features}});
        out.push_back({nd.name + ".bias", p.bias, {p.out_features}});
        break;
      }
      case NodeKind::kDecode: {
        auto& p = nd.template as<DecodeOp<Real>>().params;
        out.push_back({nd.name + ".weight", p.weight,
                       {p.out_features, p.in_features}});
        out.push_back({nd.name + ".bias", p.bias, {p.out_features}});
        break;
      }
      case NodeKind::kTdBn: {
        auto& p = nd.template as<TdBnParamsT<Real>>();
        out.push_back({nd.name + ".lambda", p.lambda, {p.channels()}});
        out.push_back({nd.name + ".beta", p.beta, {p.channels()}});
        break;
      }
      default:
        break;
    }
  }
  return out;
}

template <typename Real>
std::size_t NetworkT<Real>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& ref : const_cast<NetworkT*>(this)->parameters()) {
    total += ref.values.size();
  }
  return total;
}

template <typename Real>
void Tape<Real>::clear() {
  outputs.clear();
  potentials.clear();
  bn.clear();
}

namespace {

template <typename Real>
TensorT<Real> add_tensors(std::span<const TensorT<Real>* const> parts) {
  TensorT<Real> out = *parts.front();
  auto ov = out.values();
  for (std::size_t k = 1; k < parts.size(); ++k) {
    if (parts[k]->shape() != out.shape()) {
      throw DimensionError("junction branch shapes " + out.shape().str() +
                           " and " + parts[k]->shape().str() + " differ");
    }
    auto pv = parts[k]->values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += pv[i];
  }
  return out;
}

template <typename Real>
void accumulate(TensorT<Real>& slot, TensorT<Real>&& grad) {
  if (slot.empty()) {
    slot = std::move(grad);
    return;
  }
  auto sv = slot.values();
  auto gv = grad.values();
  for (std::size_t i = 0; i < sv.size(); ++i) sv[i] += gv[i];
}

int pool_window(const PoolOp& op, const Shape& in) {
  return op.window == 0 ? in.h : op.window;
}

}  // namespace

template <typename Real>
ForwardResult<Real> forward_pass(NetworkT<Real>& net, const TensorT<Real>& x,
                                 Mode mode, const ForwardOptions& opts) {
  if (mode == Mode::kTrain && net.fused()) {
    throw StateError("a fused network can only run in inference mode");
  }
  const std::vector<int> order = net.topological_order();
  net.infer_shapes(x.shape());

  ForwardResult<Real> result;
  Tape<Real>& tape = result.tape;
  tape.mode = mode;
  const auto count = static_cast<std::size_t>(net.size());
  tape.outputs.resize(count);
  tape.potentials.resize(count);
  tape.bn.resize(count);

  for (int i : order) {
    auto& nd = net.node(i);
    const auto idx = static_cast<std::size_t>(i);
    auto input = [&](std::size_t k) -> const TensorT<Real>& {
      return tape.outputs[static_cast<std::size_t>(nd.inputs[k])];
    };
    switch (nd.kind()) {
      case NodeKind::kInput:
        tape.outputs[idx] = x;
        break;
      case NodeKind::kConv:
        tape.outputs[idx] =
            conv2d(input(0), nd.template as<ConvParamsT<Real>>());
        break;
      case NodeKind::kLinear:
        tape.outputs[idx] =
            linear(input(0), nd.template as<LinearParamsT<Real>>());
        break;
      case NodeKind::kTdBn: {
        auto& p = nd.template as<TdBnParamsT<Real>>();
        if (mode == Mode::kTrain) {
          auto r = tdbn_forward_train(input(0), p);
          tape.outputs[idx] = std::move(r.y);
          tape.bn[idx] = std::move(r.cache);
        } else {
          tape.outputs[idx] = tdbn_forward_infer(input(0), p);
        }
        break;
      }
      case NodeKind::kLif: {
        auto r = lif_forward(input(0), nd.template as<LifHyper>(), opts.fire);
        tape.outputs[idx] = std::move(r.spikes);
        tape.potentials[idx] = std::move(r.potentials);
        break;
      }
      case NodeKind::kPool:
        tape.outputs[idx] = avg_pool2d(
            input(0), pool_window(nd.template as<PoolOp>(), input(0).shape()));
        break;
      case NodeKind::kAdd: {
        std::vector<const TensorT<Real>*> parts;
        for (std::size_t k = 0; k < nd.inputs.size(); ++k) {
          parts.push_back(&input(k));
        }
        tape.outputs[idx] = add_tensors<Real>(parts);
        break;
      }
      case NodeKind::kDecode:
        result.logits =
            decode(input(0), nd.template as<DecodeOp<Real>>().params);
        break;
    }
  }
  return result;
}

template <typename Real>
Gradients<Real> backward_pass(const NetworkT<Real>& net,
                              const MatrixT<Real>& grad_q, Tape<Real>& tape,
                              const BackwardOptions& opts) {
  if (!tape.valid() ||
      tape.outputs.size() != static_cast<std::size_t>(net.size())) {
    throw StateError("backward_pass: no forward cache for this network");
  }
  if (tape.mode != Mode::kTrain) {
    throw StateError("backward_pass: cache comes from an inference pass");
  }
  const std::vector<int> order = net.topological_order();
  const auto count = static_cast<std::size_t>(net.size());

  // Offsets of each node's arrays inside the flat parameter list.
  std::vector<int> param_slot(count, -1);
  int slots = 0;
  for (int i = 0; i < net.size(); ++i) {
    switch (net.node(i).kind()) {
      case NodeKind::kConv:
      case NodeKind::kLinear:
      case NodeKind::kDecode:
      case NodeKind::kTdBn:
        param_slot[static_cast<std::size_t>(i)] = slots;
        slots += 2;
        break;
      default:
        break;
    }
  }
  Gradients<Real> grads;
  grads.params.resize(static_cast<std::size_t>(slots));
  std::vector<TensorT<Real>> node_grads(count);

  // Gradients flowing into a node's producers are needed unless the producer
  // is the network input.
  auto wants_grad = [&](int producer) {
    return net.node(producer).kind() != NodeKind::kInput;
  };

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int i = *it;
    const auto idx = static_cast<std::size_t>(i);
    const auto& nd = net.node(i);
    const int src = nd.inputs.empty() ? -1 : nd.inputs.front();
    const auto sidx = static_cast<std::size_t>(src);
    const int slot = param_slot[idx];

    if (nd.kind() == NodeKind::kDecode) {
      const auto& p = nd.template as<DecodeOp<Real>>().params;
      auto g = decode_backward(grad_q, tape.outputs[sidx], p, wants_grad(src));
      grads.params[static_cast<std::size_t>(slot)] = std::move(g.weight);
      grads.params[static_cast<std::size_t>(slot) + 1] = std::move(g.bias);
      if (wants_grad(src)) accumulate(node_grads[sidx], std::move(g.input));
      continue;
    }
    if (nd.kind() == NodeKind::kInput) continue;

    if (node_grads[idx].empty()) {
      // No loss path reaches this node: its gradients are zero.
      node_grads[idx] = TensorT<Real>(tape.outputs[idx].shape());
    }
    const TensorT<Real>& g_out = node_grads[idx];

    switch (nd.kind()) {
      case NodeKind::kConv: {
        const auto& p = nd.template as<ConvParamsT<Real>>();
        auto g = conv2d_backward(g_out, tape.outputs[sidx], p, wants_grad(src));
        grads.params[static_cast<std::size_t>(slot)] = std::move(g.weight);
        grads.params[static_cast<std::size_t>(slot) + 1] = std::move(g.bias);
        if (wants_grad(src)) accumulate(node_grads[sidx], std::move(g.input));
        break;
      }
      case NodeKind::kLinear: {
        const auto& p = nd.template as<LinearParamsT<Real>>();
        auto g = linear_backward(g_out, tape.outputs[sidx], p, wants_grad(src));
        grads.params[static_cast<std::size_t>(slot)] = std::move(g.weight);
        grads.params[static_cast<std::size_t>(slot) + 1] = std::move(g.bias);
        if (wants_grad(src)) accumulate(node_grads[sidx], std::move(g.input));
        break;
      }
      case NodeKind::kTdBn: {
        if (!tape.bn[idx]) {
          throw StateError("backward_pass: missing tdBN cache for '" +
                           nd.name + "'");
        }
        const auto& p = nd.template as<TdBnParamsT<Real>>();
        auto g = tdbn_backward(g_out, *tape.bn[idx], p);
        grads.params[static_cast<std::size_t>(slot)] = std::move(g.lambda);
        grads.params[static_cast<std::size_t>(slot) + 1] = std::move(g.beta);
        if (wants_grad(src)) accumulate(node_grads[sidx], std::move(g.input));
        break;
      }
      case NodeKind::kLif: {
        if (tape.potentials[idx].empty()) {
          throw StateError("backward_pass: missing LIF cache for '" +
                           nd.name + "'");
        }
        auto g = lif_backward(g_out, tape.potentials[idx], tape.outputs[idx],
                              nd.template as<LifHyper>());
        if (wants_grad(src)) accumulate(node_grads[sidx], std::move(g));
        break;
      }
      case NodeKind::kPool: {
        const Shape in_shape = tape.outputs[sidx].shape();
        auto g = avg_pool2d_backward(
            g_out, in_shape, pool_window(nd.template as<PoolOp>(), in_shape));
        if (wants_grad(src)) accumulate(node_grads[sidx], std::move(g));
        break;
      }
      case NodeKind::kAdd:
        // Additive junction: every branch receives the full gradient.
        for (int b : nd.inputs) {
          if (wants_grad(b)) {
            TensorT<Real> copy = g_out;
            accumulate(node_grads[static_cast<std::size_t>(b)],
                       std::move(copy));
          }
        }
        break;
      default:
        break;
    }
  }
  if (opts.keep_node_grads) grads.nodes = std::move(node_grads);
  tape.clear();
  return grads;
}

namespace {

template <typename Real>
NetworkT<Real> remove_tdbn(const NetworkT<Real>& net, bool fold_weights) {
  if (net.fused()) {
    throw StateError("network is already fused");
  }
  net.topological_order();
  const auto consumers = net.consumers();
  const int count = net.size();

  // For each node, the node that replaces it after removal (itself, or the
  // producer of a removed tdBN).
  std::vector<int> alias(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) alias[static_cast<std::size_t>(i)] = i;
  std::vector<NodeOp<Real>> ops;
  ops.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) ops.push_back(net.node(i).op);

  for (int i = 0; i < count; ++i) {
    const auto& nd = net.node(i);
    if (nd.kind() != NodeKind::kTdBn) continue;
    const int src = nd.inputs.front();
    const auto& producer = net.node(src);
    if (producer.kind() != NodeKind::kConv &&
        producer.kind() != NodeKind::kLinear) {
      throw StateError("tdBN '" + nd.name + "' follows a " +
                       node_kind_name(producer.kind()) +
                       " node and cannot be folded into weights");
    }
    if (consumers[static_cast<std::size_t>(src)].size() != 1) {
      throw StateError("layer '" + producer.name +
                       "' feeds more than its tdBN; cannot fuse");
    }
    const auto& bn = nd.template as<TdBnParamsT<Real>>();
    if (fold_weights) {
      auto& op = ops[static_cast<std::size_t>(src)];
      if (producer.kind() == NodeKind::kConv) {
        op = fuse_into_weights(std::get<ConvParamsT<Real>>(op), bn);
      } else {
        op = fuse_into_weights(std::get<LinearParamsT<Real>>(op), bn);
      }
    }
    alias[static_cast<std::size_t>(i)] = src;
  }

  NetworkT<Real> out;
  std::vector<int> new_index(static_cast<std::size_t>(count), -1);
  for (int i = 0; i < count; ++i) {
    const auto& nd = net.node(i);
    if (nd.kind() == NodeKind::kTdBn) continue;
    std::vector<int> inputs;
    for (int src : nd.inputs) {
      inputs.push_back(
          new_index[static_cast<std::size_t>(alias[static_cast<std::size_t>(src)])]);
    }
    new_index[static_cast<std::size_t>(i)] =
        out.add(nd.name, ops[static_cast<std::size_t>(i)], std::move(inputs));
  }
  out.set_fused(true);
  out.topological_order();
  return out;
}

template <typename To, typename From>
std::vector<To> convert(const std::vector<From>& v) {
  return std::vector<To>(v.begin(), v.end());
}

}  // namespace

template <typename Real>
NetworkT<Real> fuse_network(const NetworkT<Real>& net) {
  return remove_tdbn(net, true);
}

template <typename Real>
NetworkT<Real> strip_normalization(const NetworkT<Real>& net) {
  return remove_tdbn(net, false);
}

template <typename Real>
void set_lif_hyper(NetworkT<Real>& net, const LifHyper& hyper) {
  hyper.validate();
  for (auto& nd : net.nodes()) {
    if (nd.kind() == NodeKind::kLif) nd.template as<LifHyper>() = hyper;
  }
}

template <typename To, typename From>
NetworkT<To> network_cast(const NetworkT<From>& net) {
  NetworkT<To> out;
  for (const auto& nd : net.nodes()) {
    NodeOp<To> op = std::visit(
        [](const auto& o) -> NodeOp<To> {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, ConvParamsT<From>>) {
            ConvParamsT<To> c(o.in_channels, o.out_channels, o.kernel,
                              o.stride, o.padding);
            c.weight = convert<To>(o.weight);
            c.bias = convert<To>(o.bias);
            return c;
          } else if constexpr (std::is_same_v<T, LinearParamsT<From>>) {
            LinearParamsT<To> l(o.in_features, o.out_features);
            l.weight = convert<To>(o.weight);
            l.bias = convert<To>(o.bias);
            return l;
          } else if constexpr (std::is_same_v<T, DecodeOp<From>>) {
            LinearParamsT<To> l(o.params.in_features, o.params.out_features);
            l.weight = convert<To>(o.params.weight);
            l.bias = convert<To>(o.params.bias);
            return DecodeOp<To>{std::move(l)};
          } else if constexpr (std::is_same_v<T, TdBnParamsT<From>>) {
            TdBnParamsT<To> b;
            b.lambda = convert<To>(o.lambda);
            b.beta = convert<To>(o.beta);
            b.running_mean = convert<To>(o.running_mean);
            b.running_var = convert<To>(o.running_var);
            b.alpha = o.alpha;
            b.v_th = o.v_th;
            b.eps = o.eps;
            b.momentum = o.momentum;
            b.num_updates = o.num_updates;
            return b;
          } else {
            return o;
          }
        },
        nd.op);
    out.add(nd.name, std::move(op), nd.inputs);
  }
  out.set_fused(net.fused());
  return out;
}

#define STBP_INSTANTIATE_NETWORK(Real)                                       \
  template class NetworkT<Real>;                                             \
  template struct Tape<Real>;                                                \
  template ForwardResult<Real> forward_pass(NetworkT<Real>&,                 \
                                            const TensorT<Real>&, Mode,      \
                                            const ForwardOptions&);          \
  template Gradients<Real> backward_pass(const NetworkT<Real>&,              \
                                         const MatrixT<Real>&, Tape<Real>&,  \
                                         const BackwardOptions&);            \
  template NetworkT<Real> fuse_network(const NetworkT<Real>&);               \
  template NetworkT<Real> strip_normalization(const NetworkT<Real>&);        \
  template void set_lif_hyper(NetworkT<Real>&, const LifHyper&);

STBP_INSTANTIATE_NETWORK(float)
STBP_INSTANTIATE_NETWORK(double)

template NetworkT<double> network_cast<double, float>(const NetworkT<float>&);
template NetworkT<float> network_cast<float, double>(const NetworkT<double>&);

}  // namespace stbp
