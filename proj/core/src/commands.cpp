#include "stbp/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "stbp/checkpoint.hpp"
#include "stbp/config.hpp"
#include "stbp/diagnostics.hpp"
#include "stbp/errors.hpp"
#include "stbp/trainer.hpp"

namespace stbp {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::filesystem::path output_dir(const RunConfig& c) {
  if (const char* env = std::getenv("STBP_OUT_DIR"); env && *env) {
    return env;
  }
  return c.resolve(c.out_dir);
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

void print_firing(std::ostream& out, const SpikeProfile& p) {
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    out << "firing " << p.layers[i] << ' '
        << fmt("%.6f", p.rate_per_timestep[i]) << '\n';
  }
  out << "mean_firing_rate=" << fmt("%.6f", p.mean_rate) << '\n';
}

int verdict(std::ostream& out, bool pass, const std::string& detail) {
  out << (pass ? "PASS " : "FAIL ") << detail << '\n';
  return pass ? kExitOk : kExitFailure;
}

int diagnose_gradnorm(const RunConfig& c, const std::filesystem::path& dir,
                      std::ostream& out) {
  GradNormOptions o;
  o.depth = c.depth;
  o.tau_decay = c.tau_decay;
  o.batch = c.batch_size;
  o.seed = c.seed;
  o.use_tdbn = c.use_tdbn;
  o.width = c.width;
  o.image_size = c.image_size;
  o.timesteps = c.timesteps;
  o.v_th = c.v_th;
  o.surrogate_width = c.diag_surrogate_width;
  const GradNormProfile p = grad_norm_profile(o);
  write_grad_norm_csv((dir / "gradnorm.csv").string(), p);
  const double r = p.ratio();
  const std::string detail = "ratio=" + fmt("%.4g", r);
  if (!c.use_tdbn) {
    return verdict(out, !(r >= 0.1 && r <= 10.0),
                   detail + " (without normalization, expected outside "
                            "[0.1, 10])");
  }
  const double band = c.tau_decay == 0.0 ? 3.0 : 10.0;
  return verdict(out, r >= 1.0 / band && r <= band,
                 detail + " band=[" + fmt("%.4g", 1.0 / band) + ", " +
                     fmt("%.4g", band) + "]");
}

int diagnose_variance(const RunConfig& c, const std::filesystem::path& dir,
                      std::ostream& out) {
  VarianceScanOptions o;
  if (!c.sigma_in.empty()) {
    o.input_variances.clear();
    for (double s : c.sigma_in) o.input_variances.push_back(s * s);
  }
  o.tau_decay = c.tau_decay;
  o.samples = c.samples;
  o.seed = c.seed;
  const VarianceScan scan = membrane_variance_scan(o);
  write_variance_csv((dir / "variance.csv").string(), scan);
  const double gain = stationary_variance_gain(c.tau_decay);
  bool pass = scan.r_squared > 0.99;
  double worst = 0.0;
  for (const auto& p : scan.points) {
    const double expected = p.sigma2_in * gain;
    worst = std::max(worst, std::abs(p.sigma2_out - expected) / expected);
  }
  pass = pass && worst < 0.10;
  return verdict(out, pass,
                 "slope=" + fmt("%.4f", scan.slope) + " expected=" +
                     fmt("%.4f", gain) + " max_rel_err=" +
                     fmt("%.4f", worst) + " r2=" +
                     fmt("%.6f", scan.r_squared));
}

int diagnose_firing(const RunConfig& c, const std::filesystem::path& dir,
                    std::ostream& out) {
  FiringScanOptions o;
  if (!c.sigma_in.empty()) o.input_stds = c.sigma_in;
  o.tau_decay = c.tau_decay;
  o.v_th = c.v_th;
  o.samples = c.samples;
  o.seed = c.seed;
  const auto points = firing_rate_scan(o);
  write_firing_csv((dir / "firing.csv").string(), points, c.tau_decay);
  bool monotone = true;
  double lo = points.front().firing_rate;
  double hi = lo;
  for (std::size_t i = 1; i < points.size(); ++i) {
    monotone &= points[i].firing_rate >= points[i - 1].firing_rate;
    lo = std::min(lo, points[i].firing_rate);
    hi = std::max(hi, points[i].firing_rate);
  }
  return verdict(out, monotone && lo < 0.05 && hi > 0.3,
                 std::string("monotone=") + (monotone ? "yes" : "no") +
                     " min_rate=" + fmt("%.4f", lo) +
                     " max_rate=" + fmt("%.4f", hi));
}

int diagnose_opcount(const RunConfig& c, const std::filesystem::path& dir,
                     std::ostream& out) {
  Experiment exp = prepare_experiment(c);
  BatchOptions bo = batch_options(c);
  bo.normalization = exp.state.normalization;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < std::min<std::size_t>(exp.eval.size(),
                                                    c.batch_size);
       ++i) {
    idx.push_back(i);
  }
  if (idx.size() < 2) idx.push_back(idx.empty() ? 0 : idx.front());
  const Batch batch = make_batch(exp.eval, idx, bo);

  Network fused;
  if (!c.checkpoint.empty()) {
    ModelState s = restore_checkpoint(load_checkpoint(c.resolve(c.checkpoint)));
    if (!s.net.fused()) {
      throw UsageError("opcount needs a fused checkpoint; run 'fuse' first");
    }
    fused = std::move(s.net);
  } else {
    // Running statistics from one training-mode batch, then fold.
    forward_pass(exp.state.net, batch.x, Mode::kTrain);
    fused = fuse_network(exp.state.net);
  }
  Tensor x = batch.x;
  if (c.diag_input == "zeros") x = Tensor(x.shape());
  const OpCountReport snn = count_ops(fused, x, CountMode::kSnn);
  const OpCountReport ann = count_ops(fused, x, CountMode::kAnn);
  write_op_count_csv((dir / "opcount.csv").string(), snn, ann);
  for (const auto& l : snn.layers) {
    out << "layer " << l.name << " additions=" << l.additions
        << " multiplications=" << l.multiplications << '\n';
  }
  const std::string detail =
      "snn_additions=" + std::to_string(snn.additions) +
      " snn_multiplications=" + std::to_string(snn.multiplications) +
      " ann_macs=" + std::to_string(ann.multiplications) +
      " mean_firing_rate=" + fmt("%.4f", snn.mean_firing_rate);
  if (snn.mean_firing_rate >= 1.0) {
    return verdict(out, true, detail + " (saturated: no saving expected)");
  }
  return verdict(out, snn.additions < ann.multiplications ||
                          ann.multiplications == 0,
                 detail);
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) != nullptr ||
      dynamic_cast<const ConfigError*>(&e) != nullptr) {
    return kExitUsage;
  }
  if (dynamic_cast<const DataError*>(&e) != nullptr ||
      dynamic_cast<const FormatError*>(&e) != nullptr ||
      dynamic_cast<const IoError*>(&e) != nullptr ||
      dynamic_cast<const DimensionError*>(&e) != nullptr) {
    return kExitData;
  }
  return kExitFailure;
}

std::vector<std::string> diagnostic_kinds() {
  return {"gradnorm", "variance", "firing", "opcount"};
}

int cmd_train(const std::filesystem::path& config_path, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig c = load_config(config_path);
    TrainOptions opts;
    opts.out_dir = output_dir(c);
    opts.on_epoch = [&](const EpochMetrics& m) {
      out << "epoch " << m.epoch << " loss=" << fmt("%.6f", m.train_loss)
          << " train_acc=" << fmt("%.4f", m.train_acc)
          << " eval_acc=" << fmt("%.4f", m.eval_acc)
          << " lr=" << fmt("%.4g", m.lr)
          << " firing=" << fmt("%.4f", m.mean_firing_rate) << '\n';
    };
    run_training(c, opts);
    out << "wrote " << (opts.out_dir / "metrics.csv").string() << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_eval(const std::filesystem::path& checkpoint,
             const std::string& dataset, std::ostream& out,
             std::ostream& err) {
  return guarded(err, [&] {
    ModelState s = restore_checkpoint(load_checkpoint(checkpoint));
    RunConfig c = s.config;
    c.base_dir.clear();
    const Dataset data = load_dataset(c, dataset, true);
    if (data.size() == 0) throw UsageError("dataset is empty");
    BatchOptions bo = batch_options(c);
    bo.normalization = s.normalization;
    if (data.classes > s.classes) {
      throw DataError("dataset has " + std::to_string(data.classes) +
                      " classes, the model " + std::to_string(s.classes));
    }
    const Shape shape = item_shape(data, bo);
    if (shape != s.input) {
      throw DataError("dataset items have shape " + shape.str() +
                      ", the model expects " + s.input.str());
    }
    const EvalResult r = evaluate(s.net, data, bo, c.batch_size);
    out << "accuracy=" << fmt("%.6f", r.accuracy) << " ("
        << static_cast<std::size_t>(std::lround(r.accuracy * r.count)) << '/'
        << r.count << ")" << (s.net.fused() ? " fused" : "") << '\n';
    print_firing(out, r.firing);
    return static_cast<int>(kExitOk);
  });
}

int cmd_fuse(const std::filesystem::path& in,
             const std::filesystem::path& out_path, std::ostream& out,
             std::ostream& err) {
  return guarded(err, [&] {
    ModelState s = restore_checkpoint(load_checkpoint(in));
    if (s.net.fused()) {
      throw UsageError("checkpoint '" + in.string() + "' is already fused");
    }
    for (const auto& nd : s.net.nodes()) {
      if (nd.kind() == NodeKind::kTdBn &&
          !nd.template as<TdBnParams>().stats_populated()) {
        throw UsageError("tdBN node '" + nd.name +
                         "' has no running statistics; train first");
      }
    }
    const int before = s.net.size();
    s.net = fuse_network(s.net);
    s.optimizer.reset();
    save_checkpoint(out_path, make_checkpoint(s));
    out << "fused " << (before - s.net.size()) << " tdBN nodes into "
        << out_path.string() << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_diagnose(const std::string& kind,
                 const std::filesystem::path& config_path, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&] {
    const auto kinds = diagnostic_kinds();
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
      std::string list;
      for (const auto& k : kinds) list += (list.empty() ? "" : ", ") + k;
      throw UsageError("unknown diagnostic '" + kind + "'; valid kinds: " +
                       list);
    }
    const RunConfig c = load_config(config_path);
    const auto dir = output_dir(c);
    std::filesystem::create_directories(dir);
    if (kind == "gradnorm") return diagnose_gradnorm(c, dir, out);
    if (kind == "variance") return diagnose_variance(c, dir, out);
    if (kind == "firing") return diagnose_firing(c, dir, out);
    return diagnose_opcount(c, dir, out);
  });
}

}  // namespace stbp
