// relight: adaptive per-frame gamma correction for video lighting
// consistency. Subcommands: synth | train | enhance | oracle | eval.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relight/controller.hpp"
#include "relight/image_io.hpp"
#include "relight/oracle.hpp"
#include "relight/photometric.hpp"
#include "relight/synth.hpp"
#include "relight/trainer.hpp"
#include "relight/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_json_atomic(const json& j, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << j.dump(1) << "\n";
  }
  fs::rename(tmp, path);
}

double eval_photometric(const relight::Sequence& seq) {
  if (seq.size() < 2) return 0.0;
  const auto corr = relight::CorrespondenceSet::identity(seq.frames[0].width,
                                                         seq.frames[0].height);
  std::vector<relight::CorrespondenceSet> per_pair(seq.size() - 1, corr);
  return relight::sequence_photometric_score(seq, per_pair);
}

double eval_photometric(const relight::Sequence& seq,
                        const relight::CorrespondenceSet& corr) {
  std::vector<relight::CorrespondenceSet> per_pair(seq.size() - 1, corr);
  return relight::sequence_photometric_score(seq, per_pair);
}

int cmd_synth(const std::string& out_dir, int len, int size,
              std::uint64_t seed, double walk_sigma, bool contrast,
              const std::string& base, bool float_out) {
  relight::SynthConfig cfg;
  cfg.length = len;
  cfg.width = size;
  cfg.height = size;
  cfg.rng_seed = seed;
  cfg.walk_sigma = walk_sigma;
  cfg.contrast_jitter = contrast;
  cfg.base = base;
  if (base != "tube") cfg.user_base = relight::load_frame(base);
  const auto result = relight::generate(cfg);

  const std::string pattern =
      float_out ? "frame_%06d.pfm" : "frame_%06d.png";
  relight::save_sequence(result.clean, (fs::path(out_dir) / "clean").string(),
                         pattern);
  relight::save_sequence(result.degraded,
                         (fs::path(out_dir) / "degraded").string(), pattern);
  relight::write_truth_csv(result.truth,
                           (fs::path(out_dir) / "truth.csv").string());

  json summary = {{"version", relight::kToolVersion},
                  {"report_version", relight::kReportVersion},
                  {"command", "synth"},
                  {"frames", len},
                  {"out", out_dir}};
  std::cout << summary.dump(1) << "\n";
  return 0;
}

int cmd_train(const std::string& in_dir, const std::string& weights_path,
              const std::string& report_path, const std::string& pattern,
              relight::TrainConfig cfg, int stride) {
  if (!fs::is_directory(in_dir)) {
    throw std::runtime_error("training directory not found: " + in_dir);
  }
  // Each subdirectory is one snippet; a directory with frames directly in it
  // is treated as a single snippet.
  std::vector<std::string> snippet_dirs;
  for (const auto& e : fs::directory_iterator(in_dir)) {
    if (e.is_directory()) snippet_dirs.push_back(e.path().string());
  }
  if (snippet_dirs.empty()) snippet_dirs.push_back(in_dir);
  std::sort(snippet_dirs.begin(), snippet_dirs.end());

  std::vector<relight::Sequence> windows;
  for (const auto& dir : snippet_dirs) {
    const auto snippet = relight::load_sequence(dir, pattern);
    auto w = relight::make_training_windows(snippet, stride, cfg.seq_len);
    for (auto& seq : w) windows.push_back(std::move(seq));
  }
  if (windows.empty()) {
    throw std::runtime_error("no training windows found under " + in_dir);
  }

  relight::Rng init_rng(cfg.rng_seed);
  relight::ControllerParams params =
      relight::ControllerParams::init(relight::ControllerArch{}, init_rng);
  auto [trained, report] = relight::train(params, windows, cfg, {});

  relight::save_params(trained, weights_path);
  relight::write_train_report_csv(report, report_path);

  json echo = {{"version", relight::kToolVersion},
               {"report_version", relight::kReportVersion},
               {"command", "train"},
               {"config",
                {{"lr", cfg.learning_rate},
                 {"epochs", cfg.epochs},
                 {"batch", cfg.batch_size},
                 {"seq_len", cfg.seq_len},
                 {"seed", cfg.rng_seed},
                 {"stride", stride}}},
               {"windows", windows.size()},
               {"final_epoch_mean_loss", report.epoch_mean_loss.back()},
               {"weights", weights_path},
               {"report", report_path}};
  std::cout << echo.dump(1) << "\n";
  return 0;
}

int cmd_enhance(const std::string& mode, const std::string& weights_path,
                const std::string& in_dir, const std::string& out_dir,
                const std::string& pattern, const std::string& report_path,
                bool float_out, bool stable_report) {
  const auto seq = relight::load_sequence(in_dir, pattern);
  relight::Sequence enhanced;
  enhanced.fps = seq.fps;
  std::vector<relight::GammaValue> trace;
  std::vector<double> ms_per_frame;
  ms_per_frame.reserve(seq.size());

  if (mode == "rnn") {
    if (weights_path.empty()) {
      throw UsageError("mode rnn requires --weights");
    }
    const auto params = relight::load_params(weights_path);
    auto state = relight::ControllerState::zero(params.arch);
    for (const auto& f : seq.frames) {
      const auto t0 = std::chrono::steady_clock::now();
      auto [g, next] = relight::step(
          params, state, relight::controller_input(f, params.arch));
      state = std::move(next);
      enhanced.frames.push_back(relight::apply_gamma(f, g));
      const auto t1 = std::chrono::steady_clock::now();
      trace.push_back(g);
      ms_per_frame.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  } else if (mode == "oracle") {
    const auto t0 = std::chrono::steady_clock::now();
    auto result = relight::oracle_enhance(seq);
    const auto t1 = std::chrono::steady_clock::now();
    enhanced = std::move(result.enhanced);
    trace = std::move(result.gammas);
    ms_per_frame.assign(
        seq.size(),
        std::chrono::duration<double, std::milli>(t1 - t0).count() /
            static_cast<double>(seq.size()));
  } else if (mode.rfind("fixed:", 0) == 0) {
    double g = 0.0;
    try {
      g = std::stod(mode.substr(6));
    } catch (const std::exception&) {
      throw UsageError("bad gamma in mode string: " + mode);
    }
    if (!(g > 0.0)) throw UsageError("fixed gamma must be positive");
    for (const auto& f : seq.frames) {
      const auto t0 = std::chrono::steady_clock::now();
      enhanced.frames.push_back(relight::apply_gamma(f, relight::GammaValue{g}));
      const auto t1 = std::chrono::steady_clock::now();
      trace.push_back(relight::GammaValue{g});
      ms_per_frame.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  } else {
    throw UsageError("unknown mode: " + mode + " (rnn | oracle | fixed:<g>)");
  }

  const std::string out_pattern =
      float_out ? "frame_%06d.pfm" : "frame_%06d.png";
  relight::save_sequence(enhanced, out_dir, out_pattern);

  json trace_json = json::array();
  for (const auto& g : trace) trace_json.push_back(g.value);
  json report = {
      {"version", relight::kToolVersion},
      {"report_version", relight::kReportVersion},
      {"command", "enhance"},
      {"config",
       {{"mode", mode},
        {"input", in_dir},
        {"output", out_dir},
        {"float", float_out}}},
      {"gamma_trace", trace_json},
      {"metrics",
       {{"inconsistency_before", relight::adjacent_inconsistency(seq)},
        {"inconsistency_after", relight::adjacent_inconsistency(enhanced)},
        {"photometric_before", eval_photometric(seq)},
        {"photometric_after", eval_photometric(enhanced)}}}};
  if (!stable_report) {
    double mean_ms = 0.0;
    for (double m : ms_per_frame) mean_ms += m;
    mean_ms /= static_cast<double>(ms_per_frame.size());
    report["timing"] = {{"ms_per_frame", ms_per_frame},
                        {"mean_ms_per_frame", mean_ms}};
  }
  if (!report_path.empty()) write_json_atomic(report, report_path);
  std::cout << report.dump(1) << "\n";
  return 0;
}

int cmd_eval(const std::string& dir_a, const std::string& dir_b,
             const std::string& pattern, const std::string& corr_path,
             const std::string& out_path) {
  const auto a = relight::load_sequence(dir_a, pattern);
  const auto b = relight::load_sequence(dir_b, pattern);
  if (a.size() != b.size()) {
    throw std::runtime_error("sequence length mismatch: " +
                             std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
  }
  auto metrics = [&](const relight::Sequence& s, const std::string& dir) {
    double photo = 0.0;
    if (corr_path.empty()) {
      photo = eval_photometric(s);
    } else {
      photo = eval_photometric(s, relight::load_correspondences(corr_path));
    }
    return json{{"dir", dir},
                {"inconsistency", relight::adjacent_inconsistency(s)},
                {"photometric", photo}};
  };
  json report = {{"version", relight::kToolVersion},
                 {"report_version", relight::kReportVersion},
                 {"command", "eval"},
                 {"a", metrics(a, dir_a)},
                 {"b", metrics(b, dir_b)}};
  if (!out_path.empty()) write_json_atomic(report, out_path);
  std::cout << report.dump(1) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive gamma correction for video lighting consistency"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic sequence");
  std::string synth_out;
  int synth_len = 50, synth_size = 64;
  std::uint64_t synth_seed = 0;
  double synth_sigma = 0.08;
  bool synth_contrast = false, synth_float = false;
  std::string synth_base = "tube";
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--len", synth_len, "frame count (>= 10)")
      ->check(CLI::Range(10, 1000000));
  synth->add_option("--size", synth_size, "frame width/height")
      ->check(CLI::Range(8, 8192));
  synth->add_option("--seed", synth_seed, "rng seed");
  synth->add_option("--walk-sigma", synth_sigma, "log-gamma walk std");
  synth->add_flag("--contrast", synth_contrast, "enable affine contrast jitter");
  synth->add_option("--base", synth_base, "'tube' or an image path");
  synth->add_flag("--float", synth_float, "write 32-bit PFM frames");

  // train
  auto* train = app.add_subcommand("train", "train the controller");
  std::string train_in, train_weights = "controller.weights.json";
  std::string train_report = "train_report.csv";
  std::string train_pattern = "frame_%06d.png";
  relight::TrainConfig tcfg;
  int train_stride = 1;
  train->add_option("--in", train_in, "directory of snippet frame dirs")
      ->required();
  train->add_option("--weights", train_weights, "output weights file");
  train->add_option("--report", train_report, "output CSV report");
  train->add_option("--pattern", train_pattern, "frame filename template");
  train->add_option("--lr", tcfg.learning_rate, "learning rate");
  train->add_option("--epochs", tcfg.epochs, "epochs")->check(CLI::Range(1, 10000));
  train->add_option("--batch", tcfg.batch_size, "batch size")
      ->check(CLI::Range(1, 4096));
  train->add_option("--seed", tcfg.rng_seed, "rng seed");
  train->add_option("--stride", train_stride, "window stride")
      ->check(CLI::Range(1, 1000));

  // enhance / oracle
  auto* enhance = app.add_subcommand("enhance", "enhance a frame directory");
  std::string enh_mode = "rnn", enh_weights, enh_in, enh_out, enh_report;
  std::string enh_pattern = "frame_%06d.png";
  bool enh_float = false, enh_stable = false;
  enhance->add_option("--mode", enh_mode, "rnn | oracle | fixed:<gamma>");
  enhance->add_option("--weights", enh_weights, "weights file (rnn mode)");
  enhance->add_option("--in", enh_in, "input frame directory")->required();
  enhance->add_option("--out", enh_out, "output frame directory")->required();
  enhance->add_option("--report", enh_report, "write the run report here");
  enhance->add_option("--pattern", enh_pattern, "frame filename template");
  enhance->add_flag("--float", enh_float, "write 32-bit PFM frames");
  enhance->add_flag("--stable-report", enh_stable,
                    "omit wall-clock fields for byte-reproducible reports");

  auto* oracle = app.add_subcommand("oracle", "grid-search oracle enhancement");
  std::string orc_in, orc_out, orc_report;
  std::string orc_pattern = "frame_%06d.png";
  bool orc_float = false, orc_stable = false;
  oracle->add_option("--in", orc_in, "input frame directory")->required();
  oracle->add_option("--out", orc_out, "output frame directory")->required();
  oracle->add_option("--report", orc_report, "write the run report here");
  oracle->add_option("--pattern", orc_pattern, "frame filename template");
  oracle->add_flag("--float", orc_float, "write 32-bit PFM frames");
  oracle->add_flag("--stable-report", orc_stable,
                   "omit wall-clock fields for byte-reproducible reports");

  // eval
  auto* eval = app.add_subcommand("eval", "compare two frame directories");
  std::string eval_a, eval_b, eval_corr, eval_out;
  std::string eval_pattern = "frame_%06d.png";
  eval->add_option("--a", eval_a, "first frame directory")->required();
  eval->add_option("--b", eval_b, "second frame directory")->required();
  eval->add_option("--pattern", eval_pattern, "frame filename template");
  eval->add_option("--corr", eval_corr, "correspondence file (x_i y_i x_j y_j [w])");
  eval->add_option("--out", eval_out, "write the metrics report here");

  try {
    app.parse(argc, argv);
    if (synth->parsed()) {
      return cmd_synth(synth_out, synth_len, synth_size, synth_seed,
                       synth_sigma, synth_contrast, synth_base, synth_float);
    }
    if (train->parsed()) {
      return cmd_train(train_in, train_weights, train_report, train_pattern,
                       tcfg, train_stride);
    }
    if (enhance->parsed()) {
      return cmd_enhance(enh_mode, enh_weights, enh_in, enh_out, enh_pattern,
                         enh_report, enh_float, enh_stable);
    }
    if (oracle->parsed()) {
      return cmd_enhance("oracle", "", orc_in, orc_out, orc_pattern, orc_report,
                         orc_float, orc_stable);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_a, eval_b, eval_pattern, eval_corr, eval_out);
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
