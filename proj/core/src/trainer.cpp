#include "stbp/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "stbp/errors.hpp"
#include "stbp/loss.hpp"
#include "stbp/random.hpp"

namespace stbp {

namespace {

constexpr std::uint64_t kEvalSplitStream = 0x7e57;
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kShuffleStream = 0x5f;
constexpr std::uint64_t kAugmentStream = 0xa9;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

int argmax_row(const Matrix& q, int r) {
  int best = 0;
  for (int c = 1; c < q.cols(); ++c) {
    if (q(r, c) > q(r, best)) best = c;
  }
  return best;
}

// Config text with the keys that may legitimately change across a resume
// reset to their defaults.
std::string model_identity(RunConfig c) {
  const RunConfig d;
  c.out_dir = d.out_dir;
  c.resume = d.resume;
  c.epochs = d.epochs;
  return to_text(c);
}

std::string first_difference(const std::string& a, const std::string& b) {
  const auto la = split(a, '\n');
  const auto lb = split(b, '\n');
  for (std::size_t i = 0; i < std::min(la.size(), lb.size()); ++i) {
    if (la[i] != lb[i]) return la[i].substr(0, la[i].find(' '));
  }
  return "?";
}

void attach_datasets(Experiment& exp, const RunConfig& c) {
  exp.train = load_dataset(c, c.dataset, false);
  if (!c.eval_dataset.empty()) {
    exp.eval = load_dataset(c, c.eval_dataset, true);
  } else if (c.is_toy()) {
    exp.eval = load_dataset(c, c.dataset, true);
  } else {
    exp.eval = exp.train;
  }
  if (exp.eval.encoding != exp.train.encoding) {
    throw DataError("evaluation set '" + exp.eval.name +
                    "' and training set '" + exp.train.name +
                    "' use different encodings");
  }
}

struct SpikeAccumulator {
  SpikeProfile sum;
  double weight = 0.0;

  void add(const SpikeProfile& p, double w) {
    if (sum.layers.empty()) {
      sum.layers = p.layers;
      sum.spikes_per_neuron.assign(p.layers.size(), 0.0);
      sum.rate_per_timestep.assign(p.layers.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
      sum.spikes_per_neuron[i] += w * p.spikes_per_neuron[i];
      sum.rate_per_timestep[i] += w * p.rate_per_timestep[i];
    }
    sum.mean_rate += w * p.mean_rate;
    weight += w;
  }

  SpikeProfile mean() const {
    SpikeProfile out = sum;
    if (weight <= 0.0) return out;
    for (auto& v : out.spikes_per_neuron) v /= weight;
    for (auto& v : out.rate_per_timestep) v /= weight;
    out.mean_rate /= weight;
    return out;
  }
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

ToyOptions toy_options(const RunConfig& c) {
  ToyOptions o;
  o.image_size = c.image_size;
  o.frame_size = c.frame_height > 0 ? c.frame_height : 8;
  o.downsample = 2;
  o.timesteps = std::max(8, c.timesteps);
  o.slice_ms = c.slice_ms;
  return o;
}

BatchOptions batch_options(const RunConfig& c) {
  BatchOptions b;
  b.timesteps = c.timesteps;
  b.slice_ms = c.slice_ms;
  b.frame_height = c.frame_height;
  b.frame_width = c.frame_width;
  if (c.dataset == "moving_bar" || c.dataset.starts_with("toy:moving_bar")) {
    const int f = toy_options(c).frame_size;
    b.frame_height = f;
    b.frame_width = f;
  }
  return b;
}

Dataset load_dataset(const RunConfig& c, const std::string& spec,
                     bool eval_split) {
  if (spec.starts_with("toy:")) {
    const auto parts = split(spec, ':');
    if (parts.size() != 4) {
      throw UsageError("toy dataset spec must read toy:<kind>:<n>:<seed>, got '" +
                       spec + "'");
    }
    int n = 0;
    std::uint64_t seed = 0;
    try {
      n = std::stoi(parts[2]);
      seed = std::stoull(parts[3]);
    } catch (const std::exception&) {
      throw UsageError("bad item count or seed in '" + spec + "'");
    }
    if (n <= 0) throw UsageError("dataset '" + spec + "' is empty");
    return make_toy_dataset(parse_toy_kind(parts[1]), n, seed, toy_options(c));
  }
  if (spec == "two_gaussians" || spec == "xor_patches" ||
      spec == "moving_bar") {
    const int n = eval_split ? c.test_size : c.train_size;
    const std::uint64_t seed =
        eval_split ? derive_seed(c.seed, kEvalSplitStream) : c.seed;
    return make_toy_dataset(parse_toy_kind(spec), n, seed, toy_options(c));
  }
  const auto path = c.resolve(spec);
  if (!std::filesystem::exists(path)) {
    throw DataError("dataset manifest '" + path.string() + "' not found");
  }
  return load_manifest(path);
}

Experiment prepare_experiment(const RunConfig& c) {
  c.validate();
  Experiment exp;
  attach_datasets(exp, c);
  ModelState& s = exp.state;
  s.config = c;
  s.normalization = dataset_stats(exp.train);
  // Checkpoints store these as float32; round now so resumes match.
  for (auto* v : {&s.normalization.mean, &s.normalization.std}) {
    for (double& x : *v) x = static_cast<float>(x);
  }
  BatchOptions bo = batch_options(c);
  bo.normalization = s.normalization;
  s.input = item_shape(exp.train, bo);
  if (item_shape(exp.eval, bo) != s.input) {
    throw DataError("evaluation items have shape " +
                    item_shape(exp.eval, bo).str() + ", training items " +
                    s.input.str());
  }
  if (s.input.h != s.input.w) {
    throw DataError("inputs must be square, got " + s.input.str());
  }
  s.classes = std::max(exp.train.classes, exp.eval.classes);
  s.net = build_network<float>(c.arch_config(s.classes, s.input.c, s.input.h));
  init_weights(s.net, derive_seed(c.seed, kInitStream));
  s.optimizer.emplace(c.sgd());
  s.epoch = 0;
  return exp;
}

Experiment resume_experiment(const RunConfig& c,
                             const std::filesystem::path& checkpoint) {
  c.validate();
  Experiment exp;
  attach_datasets(exp, c);
  exp.state = restore_checkpoint(load_checkpoint(checkpoint));
  ModelState& s = exp.state;
  if (s.net.fused()) {
    throw StateError("cannot resume training from fused checkpoint '" +
                     checkpoint.string() + "'");
  }
  const std::string have = model_identity(s.config);
  const std::string want = model_identity(c);
  if (have != want) {
    throw ConfigError("config key '" + first_difference(want, have) +
                      "' differs from the resumed checkpoint '" +
                      checkpoint.string() + "'");
  }
  BatchOptions bo = batch_options(c);
  bo.normalization = s.normalization;
  if (item_shape(exp.train, bo) != s.input) {
    throw DataError("training items do not match the checkpoint input " +
                    s.input.str());
  }
  s.config = c;
  if (!s.optimizer) s.optimizer.emplace(c.sgd());
  return exp;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n,
                                                    int batch_size,
                                                    std::uint64_t seed,
                                                    int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(derive_seed(seed, kShuffleStream),
                                  static_cast<std::uint64_t>(epoch)));
  // Fisher-Yates with an explicit draw: std::shuffle's algorithm is
  // implementation-defined, which would break cross-platform determinism.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> out;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t i = 0; i < n; i += bs) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() +
                         static_cast<std::ptrdiff_t>(std::min(n, i + bs)));
  }
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

EpochMetrics train_epoch(Experiment& exp) {
  ModelState& s = exp.state;
  const RunConfig& c = s.config;
  if (!s.optimizer) s.optimizer.emplace(c.sgd());
  const int epoch = s.epoch + 1;
  Sgd& opt = *s.optimizer;
  opt.set_epoch(epoch);

  BatchOptions bo = batch_options(c);
  bo.normalization = s.normalization;
  bo.augment = c.augment;
  bo.augment_seed = derive_seed(derive_seed(c.seed, kAugmentStream),
                                static_cast<std::uint64_t>(epoch));

  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::size_t seen = 0;
  SpikeAccumulator firing;
  for (const auto& idx : epoch_batches(exp.train.size(), c.batch_size, c.seed,
                                       epoch)) {
    const Batch b = make_batch(exp.train, idx, bo);
    auto fr = forward_pass(s.net, b.x, Mode::kTrain);
    const auto out = softmax_ce(fr.logits, one_hot<float>(b.labels, s.classes));
    for (int r = 0; r < fr.logits.rows(); ++r) {
      correct += argmax_row(fr.logits, r) == b.labels[r] ? 1 : 0;
    }
    const double n = static_cast<double>(idx.size());
    loss_sum += out.loss * n;
    seen += idx.size();
    firing.add(spike_profile_from_tape(s.net, fr.tape), n);
    const auto grads = backward_pass(s.net, out.grad_q, fr.tape);
    opt.step(s.net, grads);
  }
  s.epoch = epoch;

  EpochMetrics m;
  m.epoch = epoch;
  m.train_loss = loss_sum / static_cast<double>(seen);
  m.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
  m.lr = opt.lr();
  m.mean_firing_rate = firing.mean().mean_rate;
  BatchOptions eo = batch_options(c);
  eo.normalization = s.normalization;
  m.eval_acc = evaluate(s.net, exp.eval, eo, c.batch_size).accuracy;
  return m;
}

EvalResult evaluate(Network& net, const Dataset& data,
                    const BatchOptions& opts, int batch_size) {
  if (data.size() == 0) throw UsageError("dataset '" + data.name + "' is empty");
  EvalResult r;
  SpikeAccumulator firing;
  std::size_t correct = 0;
  const auto bs = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t i = 0; i < data.size(); i += bs) {
    std::vector<std::size_t> idx;
    for (std::size_t j = i; j < std::min(data.size(), i + bs); ++j) {
      idx.push_back(j);
    }
    const Batch b = make_batch(data, idx, opts);
    const auto fr = forward_pass(net, b.x, Mode::kInfer);
    for (int row = 0; row < fr.logits.rows(); ++row) {
      correct += argmax_row(fr.logits, row) == b.labels[row] ? 1 : 0;
    }
    firing.add(spike_profile_from_tape(net, fr.tape),
               static_cast<double>(idx.size()));
  }
  r.count = data.size();
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.count);
  r.firing = firing.mean();
  return r;
}

std::string metrics_csv_header() {
  return "epoch,train_loss,train_acc,eval_acc,lr,mean_firing_rate";
}

std::string metrics_csv_row(const EpochMetrics& m) {
  return std::to_string(m.epoch) + "," + fmt(m.train_loss) + "," +
         fmt(m.train_acc) + "," + fmt(m.eval_acc) + "," + fmt(m.lr) + "," +
         fmt(m.mean_firing_rate);
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line != metrics_csv_header()) {
    throw DataError("'" + path.string() + "' lacks the metrics header");
  }
  std::vector<EpochMetrics> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) {
      throw DataError("malformed metrics row '" + line + "'");
    }
    EpochMetrics m;
    try {
      m.epoch = std::stoi(f[0]);
      m.train_loss = std::stod(f[1]);
      m.train_acc = std::stod(f[2]);
      m.eval_acc = std::stod(f[3]);
      m.lr = std::stod(f[4]);
      m.mean_firing_rate = std::stod(f[5]);
    } catch (const std::exception&) {
      throw DataError("malformed metrics row '" + line + "'");
    }
    out.push_back(m);
  }
  return out;
}

std::vector<EpochMetrics> run_training(const RunConfig& c,
                                       const TrainOptions& opts) {
  Experiment exp = c.resume.empty() ? prepare_experiment(c)
                                    : resume_experiment(c, c.resolve(c.resume));
  std::filesystem::create_directories(opts.out_dir);
  const auto csv_path = opts.out_dir / "metrics.csv";

  // Rows up to the resumed epoch survive; later ones are recomputed.
  std::vector<std::string> kept;
  if (exp.state.epoch > 0 && std::filesystem::exists(csv_path)) {
    const auto rows = read_metrics_csv(csv_path);
    std::ifstream in(csv_path);
    std::string line;
    std::getline(in, line);
    for (const auto& m : rows) {
      while (std::getline(in, line) && line.empty()) {
      }
      if (m.epoch <= exp.state.epoch) kept.push_back(line);
    }
  }
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw IoError("cannot write '" + csv_path.string() + "'");
  csv << metrics_csv_header() << '\n';
  for (const auto& row : kept) csv << row << '\n';
  csv.flush();

  std::vector<EpochMetrics> out;
  while (exp.state.epoch < c.epochs) {
    const EpochMetrics m = train_epoch(exp);
    const Checkpoint ckpt = make_checkpoint(exp.state);
    save_checkpoint(opts.out_dir / ("epoch_" + std::to_string(m.epoch) +
                                    ".stbn"),
                    ckpt);
    save_checkpoint(opts.out_dir / "last.stbn", ckpt);
    csv << metrics_csv_row(m) << '\n';
    csv.flush();
    if (!csv) throw IoError("failed while writing '" + csv_path.string() + "'");
    if (opts.on_epoch) opts.on_epoch(m);
    out.push_back(m);
  }
  return out;
}

}  // namespace stbp
