#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "sgdvit/config/run_config.hpp"
#include "sgdvit/core/serialize.hpp"
#include "sgdvit/data/synth.hpp"
#include "sgdvit/eval/metrics.hpp"
#include "sgdvit/track/trainer.hpp"

namespace sgdvit::app {

namespace fs = std::filesystem;
using config::RunConfig;

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kNumericalError = 4 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfigError;
  if (dynamic_cast<const DataError*>(&e)) return kDataError;
  if (dynamic_cast<const NumericalError*>(&e)) return kNumericalError;
  return kFailure;
}

/// Loads, applies SGDVIT_SEED and range-checks a run config.
inline RunConfig load_run_config(const std::string& path) {
  auto cfg = path.empty() ? RunConfig::from(config::KeyValues{}) : RunConfig::load(path);
  cfg.apply_environment();
  cfg.validate();
  return cfg;
}

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw DataError("cannot create directory " + dir);
}

inline std::string checkpoint_path(const RunConfig& cfg) {
  return cfg.checkpoint.empty() ? (fs::path(cfg.output) / "model.ckpt").string() : cfg.checkpoint;
}

/// paths.sequence when set, otherwise the synth.* sequence.
inline data::Sequence training_sequence(const RunConfig& cfg) {
  if (!cfg.sequence.empty()) {
    RunConfig::require_dir(cfg.sequence, "paths.sequence");
    return data::load_sequence(cfg.sequence);
  }
  return data::generate_sequence(cfg.synth);
}

struct TrainResult {
  track::TrainLog log;
  std::string checkpoint;
};

/// Trains on the configured sequence, writes the checkpoint and loss.csv.
inline TrainResult cmd_train_toy(const RunConfig& cfg, std::ostream& out) {
  const auto seq = training_sequence(cfg);
  ensure_dir(cfg.output);
  model::SgdVit<float> net(cfg.model);
  const auto log = track::train_toy(net, seq, cfg.train, cfg.loss, [&](std::size_t i, double loss) {
    if (i % 20 == 0 || i + 1 == cfg.train.iterations)
      out << "iter " << i << " loss " << fmt("%.5f", loss) << '\n' << std::flush;
  });
  const auto ckpt = checkpoint_path(cfg);
  if (const auto parent = fs::path(ckpt).parent_path(); !parent.empty()) ensure_dir(parent.string());
  io::save_checkpoint(ckpt, net.params());

  const auto csv = (fs::path(cfg.output) / "loss.csv").string();
  std::ofstream os(csv);
  if (!os) throw DataError("cannot write " + csv);
  os << "iteration,lr,loss,cls,reg\n";
  char buf[160];
  for (std::size_t i = 0; i < log.loss.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.8g,%.8g,%.8g,%.8g\n", i, log.lr[i], log.loss[i], log.cls[i], log.reg[i]);
    os << buf;
  }
  if (!log.loss.empty()) {
    out << "initial_loss " << fmt("%.6f", log.initial_mean()) << '\n'
        << "final_loss " << fmt("%.6f", log.final_mean()) << '\n'
        << "loss_ratio " << fmt("%.6f", log.final_mean() / log.initial_mean()) << '\n';
  }
  out << "checkpoint " << ckpt << '\n';
  return {log, ckpt};
}

struct TrackRun {
  std::vector<data::BBox> boxes;
  std::vector<double> confidence;
  std::vector<std::size_t> n_tokens, k_fine;
};

/// Runs the tracker over a loaded sequence: frame 0 is initialized from its
/// ground truth and reported as such.
inline TrackRun track_sequence(const model::SgdVit<float>& net, const track::TrackerParams& params,
                               const data::Sequence& seq, const std::string& saliency_dir = {}) {
  track::Tracker<float> tracker(net, params);
  tracker.init(seq.frames[0], seq.boxes[0]);
  TrackRun run;
  run.boxes.push_back(seq.boxes[0]);
  run.confidence.push_back(1.0);
  run.n_tokens.push_back(0);
  run.k_fine.push_back(0);
  for (std::size_t i = 1; i < seq.frames.size(); ++i) {
    const auto r = tracker.track(seq.frames[i]);
    run.boxes.push_back(r.box);
    run.confidence.push_back(r.confidence);
    run.n_tokens.push_back(r.n_tokens);
    run.k_fine.push_back(r.k_fine);
    if (!saliency_dir.empty() && r.saliency_map.defined()) {
      const auto& m = r.saliency_map;
      std::vector<double> v(m.data().begin(), m.data().end());
      char name[32];
      std::snprintf(name, sizeof name, "%04zu.pgm", i + 1);
      data::write_pgm((fs::path(saliency_dir) / name).string(), m.dim(2), m.dim(1), v);
    }
  }
  return run;
}

inline model::SgdVit<float> load_model(const RunConfig& cfg) {
  const auto ckpt = checkpoint_path(cfg);
  RunConfig::require_file(ckpt, "paths.checkpoint");
  model::SgdVit<float> net(cfg.model);
  io::load_checkpoint(ckpt, net.params());
  return net;
}

/// Writes results.txt (x,y,w,h per frame) and confidence.csv to `out_dir`.
inline TrackRun cmd_track(const RunConfig& cfg, const std::string& seq_dir, const std::string& out_dir,
                          bool save_saliency = false) {
  RunConfig::require_dir(seq_dir, "sequence directory");
  const auto net = load_model(cfg);
  const auto seq = data::load_sequence(seq_dir);
  ensure_dir(out_dir);
  std::string sal;
  if (save_saliency) {
    sal = (fs::path(out_dir) / "saliency").string();
    ensure_dir(sal);
  }
  auto run = track_sequence(net, cfg.tracker, seq, sal);
  data::write_boxes((fs::path(out_dir) / "results.txt").string(), run.boxes);
  std::ofstream os(fs::path(out_dir) / "confidence.csv");
  if (!os) throw DataError("cannot write confidence.csv in " + out_dir);
  os << "frame,confidence,n_tokens,k_fine\n";
  for (std::size_t i = 0; i < run.boxes.size(); ++i)
    os << i + 1 << ',' << fmt("%.6f", run.confidence[i]) << ',' << run.n_tokens[i] << ',' << run.k_fine[i] << '\n';
  return run;
}

/// Prints the summary CSV; with `out_dir`, also writes frames.csv,
/// summary.csv and the precision / success plots.
inline eval::MetricReport cmd_eval(const std::string& results, const std::string& gt, const std::string& out_dir,
                                   std::ostream& out) {
  const auto r = eval::report(data::read_boxes(results), data::read_boxes(gt));
  const auto summary = eval::summary_csv(r);
  out << summary;
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    eval::write_frames_csv((fs::path(out_dir) / "frames.csv").string(), r);
    std::ofstream(fs::path(out_dir) / "summary.csv") << summary;
    std::ofstream(fs::path(out_dir) / "precision.svg") << eval::curve_svg(r.precision, "precision", "cle (px)");
    std::ofstream(fs::path(out_dir) / "success.svg") << eval::curve_svg(r.success, "success", "iou threshold");
    std::ofstream(fs::path(out_dir) / "norm_precision.svg")
        << eval::curve_svg(r.normalized, "normalized precision", "normalized cle");
  }
  return r;
}

struct BenchRow {
  double density;
  std::size_t k_fine, n_tokens;
  std::uint64_t encoder_macs, encoder_qk_macs, decoder_macs, total_macs;
};

/// Forces k = round(d * windows) fine windows for each density d and records
/// token counts and MAC counts of one forward pass on blank crops.
inline std::vector<BenchRow> cmd_bench_tokens(const RunConfig& cfg, const std::vector<double>& densities,
                                              std::ostream& out) {
  if (cfg.model.variant != Variant::Sat && cfg.model.variant != Variant::SatDyn)
    throw ConfigError("bench-tokens needs model.variant = sat or sat_dyn");
  if (densities.empty()) throw ConfigError("bench-tokens: no densities given");
  for (double d : densities)
    if (!(d >= 0 && d <= 1)) throw ConfigError("bench-tokens: densities must lie in [0, 1]");
  const model::SgdVit<float> net(cfg.model);
  const auto& bb = cfg.model.backbone;
  const auto templ = net.encode_template(Tensor<float>(Shape{3, bb.template_size, bb.template_size}));
  const Tensor<float> search(Shape{3, bb.search_size, bb.search_size});
  const std::size_t windows = cfg.model.window_count();

  std::vector<BenchRow> rows;
  out << "density,k_fine,n_tokens,encoder_macs,encoder_qk_macs,decoder_macs,total_macs\n";
  for (double d : densities) {
    model::ForwardOptions opt;
    opt.forced_fine = std::size_t(std::lround(d * double(windows)));
    const auto o = net.forward_search(templ, search, opt);
    BenchRow r{d, o.k_fine, o.n_tokens, o.encoder_flops.total(), o.encoder_flops.get("attn_qk"),
               o.decoder_flops.total(), o.total_flops.total()};
    rows.push_back(r);
    out << config::KeyValues::format(d) << ',' << r.k_fine << ',' << r.n_tokens << ',' << r.encoder_macs << ','
        << r.encoder_qk_macs << ',' << r.decoder_macs << ',' << r.total_macs << '\n';
  }
  return rows;
}

/// Reads a spec file of bare synth keys (width = 320, ...) and writes the
/// sequence directory.
inline data::Sequence cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  auto kv = spec_path.empty() ? config::KeyValues{} : config::KeyValues::load(spec_path);
  auto spec = data::SynthSpec::from(kv, "");
  if (const auto unused = kv.unused_keys(); !unused.empty())
    throw ConfigError("unknown synth key '" + unused.front() + "'");
  if (const char* s = std::getenv("SGDVIT_SEED")) {
    config::KeyValues env;
    env.set("SGDVIT_SEED", std::string(s));
    spec.seed = env.get<std::uint64_t>("SGDVIT_SEED", spec.seed);
  }
  auto seq = data::generate_sequence(spec);
  data::write_sequence(out_dir, seq);
  return seq;
}

/// Trains and evaluates every variant with the same seed and data, one CSV
/// row each. Evaluation uses paths.sequence when set, else the training data.
inline void cmd_ablate(const RunConfig& base, const std::string& out_dir, std::ostream& out) {
  ensure_dir(out_dir);
  const auto train_seq = data::generate_sequence(base.synth);
  const auto eval_seq = base.sequence.empty() ? train_seq : data::load_sequence(base.sequence);
  if (eval_seq.boxes.size() != eval_seq.frames.size())
    throw DataError("ablate: evaluation sequence needs one ground-truth box per frame");
  std::ofstream csv(fs::path(out_dir) / "ablation.csv");
  const std::string header = "variant,parameters,final_loss,precision20,norm_precision,success_auc,mean_iou,total_macs\n";
  csv << header;
  out << header;
  for (auto v : {Variant::Baseline, Variant::Sit, Variant::Sat, Variant::SatDyn}) {
    auto cfg = base;
    cfg.model.variant = v;
    model::SgdVit<float> net(cfg.model);
    const auto log = track::train_toy(net, train_seq, cfg.train, cfg.loss);
    const auto run = track_sequence(net, cfg.tracker, eval_seq);
    const auto r = eval::report(run.boxes, eval_seq.boxes);
    const auto& bb = cfg.model.backbone;
    const auto templ = net.encode_template(Tensor<float>(Shape{3, bb.template_size, bb.template_size}));
    const auto o = net.forward_search(templ, Tensor<float>(Shape{3, bb.search_size, bb.search_size}));
    const std::string row = std::string(variant_name(v)) + ',' + std::to_string(net.params().scalar_count()) + ',' +
                            fmt("%.6f", log.final_mean()) + ',' + fmt("%.6f", r.precision20) + ',' +
                            fmt("%.6f", r.norm_precision) + ',' + fmt("%.6f", r.success_auc) + ',' + fmt("%.6f", r.mean_iou) + ',' +
                            std::to_string(o.total_flops.total()) + '\n';
    csv << row;
    out << row << std::flush;
  }
}

}  // namespace sgdvit::app
