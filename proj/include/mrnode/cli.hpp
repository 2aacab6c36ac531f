// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Failures are reported as one JSON object per line on
// the error stream with a nonzero exit code.
#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mrnode/checkpoint.hpp"
#include "mrnode/climate.hpp"
#include "mrnode/config.hpp"
#include "mrnode/harness.hpp"
#include "mrnode/selftest.hpp"
#include "mrnode/sigatoka.hpp"
#include "mrnode/train.hpp"

namespace mrnode::cli {

inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline void report_error(std::ostream& err, const std::string& kind, const std::string& message,
                         const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json j = {{"error", kind}, {"message", message}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  err << j.dump() << "\n";
}

inline std::string stem_of(const std::string& path) { return std::filesystem::path(path).stem().string(); }

inline std::string drop_tag(double p) {
  std::string s = text::format_double(p);
  for (auto& c : s)
    if (c == '.') c = 'p';
  return s;
}

struct Options {
  // generate
  std::string climate_path;
  bool synthetic = false;
  std::uint64_t seed = 0;
  std::size_t n = 1460;
  std::string out;
  // train
  std::string config_path;
  std::vector<std::string> data;
  std::optional<std::uint64_t> seed_override;
  bool quiet = false;
  // eval
  std::string ckpt;
  double drop_rate = 0.0;
  // plot
  std::string report;
  std::optional<std::size_t> window;
  // selftest
  std::size_t gradient_seeds = 10;
};

inline int cmd_generate(const Options& o, std::ostream& out) {
  if (o.synthetic == !o.climate_path.empty())
    throw ContractError("generate needs exactly one of --climate FILE or --synthetic");
  const ClimateSeries climate = o.synthetic ? synth_climate(o.seed, o.n) : load_climate_csv(o.climate_path);
  const auto ds = generate_infection_series(climate);
  save_dataset_csv(o.out, ds);
  out << "wrote " << o.out << " (" << ds.size() << " points, " << detect_wet_periods(climate).size()
      << " wet periods)\n";
  return 0;
}

inline int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  TrainConfig cfg = o.config_path.empty() ? TrainConfig{} : load_train_config(o.config_path);
  if (o.seed_override) cfg.seed = *o.seed_override;
  cfg.validate();
  std::vector<std::pair<std::string, DiseaseDataset>> datasets;
  for (const auto& path : o.data) datasets.emplace_back(stem_of(path), load_dataset_csv(path));
  auto result = train_model(datasets, cfg, o.quiet ? nullptr : &err);
  save_checkpoint(o.out, result.checkpoint);
  out << "wrote " << o.out << " (model " << to_string(cfg.model.kind) << ", best epoch " << result.checkpoint.epoch
      << ", validation mse " << text::format_double(result.validation_mse[result.checkpoint.epoch]) << ")\n";
  return 0;
}

inline int cmd_eval(const Options& o, TestKind kind, std::ostream& out) {
  const auto ck = load_checkpoint(o.ckpt);
  const auto ds = load_dataset_csv(o.data.front());
  const std::uint64_t seed = o.seed_override.value_or(ck.seed);
  const auto tag = stem_of(o.data.front());
  const auto rep = kind == TestKind::Extrapolation ? run_extrapolation_test(ck, tag, ds, o.drop_rate, seed)
                                                   : run_interpolation_test(ck, tag, ds, o.drop_rate, seed);
  std::string path = o.out;
  if (path.empty()) {
    auto p = std::filesystem::path(o.ckpt);
    path = (p.parent_path() / (p.stem().string() + "." + tag + "." + to_string(kind) + ".drop" +
                               drop_tag(o.drop_rate) + ".report"))
               .string();
  }
  save_report(path, rep);
  out << "wrote " << path << "\n"
      << to_string(kind) << " model=" << rep.model << " drop_rate=" << text::format_double(rep.drop_rate)
      << " windows=" << rep.windows.size() << " encoded_points=" << rep.encoded_points
      << " mean_mse=" << text::format_double(rep.mean_mse)
      << " constant_mean_mse=" << text::format_double(rep.reference_mse);
  if (kind == TestKind::Interpolation) {
    out << " seen_mse=" << text::format_double(rep.mean_seen) << " unseen_mse="
        << (rep.mean_unseen ? text::format_double(*rep.mean_unseen) : std::string("none (no points dropped)"));
  }
  out << "\n";
  return 0;
}

inline int cmd_plot(const Options& o, std::ostream& out) {
  const auto rep = load_report(o.report);
  if (rep.windows.empty()) throw ContractError("report has no windows");
  const std::size_t start = o.window.value_or(rep.windows.front().start);
  const auto series = plot_series(rep, start);
  if (series.t.empty()) throw ContractError("report has no window starting at " + std::to_string(start));
  std::string prefix = o.out;
  if (prefix.empty()) {
    auto p = std::filesystem::path(o.report);
    prefix = (p.parent_path() / (p.stem().string() + ".w" + std::to_string(start))).string();
  }
  emit_plot(series, prefix);
  out << "wrote " << prefix << ".svg and " << prefix << ".csv (" << series.t.size() << " points)\n";
  return 0;
}

inline int cmd_selftest(const Options& o, std::ostream& out) {
  bool ok = true;
  for (const auto& c : selftest::run_all(o.gradient_seeds)) {
    out << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.detail << "\n";
    ok = ok && c.passed;
  }
  return ok ? 0 : kExitFailure;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"MR. NODE: black Sigatoka infection-risk generation and latent ODE forecasting", "mrnode"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate", "Compute the infection-risk series for a climate CSV");
  gen->add_option("--climate", o.climate_path, "Climate CSV (timestamp,rh_percent,t_celsius,cm_meters)");
  gen->add_flag("--synthetic", o.synthetic, "Use the seeded synthetic climate instead of a file");
  gen->add_option("--seed", o.seed, "Seed of the synthetic climate");
  gen->add_option("--n", o.n, "Number of 6-hourly points of the synthetic climate")->check(CLI::PositiveNumber);
  gen->add_option("--out", o.out, "Output dataset CSV")->required();

  auto* train = app.add_subcommand("train", "Train a model and write its checkpoint");
  train->add_option("--config", o.config_path, "Config file of key = value lines");
  train->add_option("--data", o.data, "Dataset CSV; repeat for several regions")->required();
  train->add_option("--seed", o.seed_override, "Override the config seed");
  train->add_option("--out", o.out, "Checkpoint path")->required();
  train->add_flag("--quiet", o.quiet, "Do not log per-epoch losses");

  auto add_eval = [&](const char* name, const char* help) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
    c->add_option("--data", o.data, "Dataset CSV")->required()->expected(1);
    c->add_option("--drop-rate", o.drop_rate, "Fraction of encoder points dropped")->check(CLI::Range(0.0, 0.999999));
    c->add_option("--seed", o.seed_override, "Seed of the drop masks (default: checkpoint seed)");
    c->add_option("--out", o.out, "Report path (default: next to the checkpoint)");
    return c;
  };
  auto* extra = add_eval("eval-extrapolate", "Encode 100 points, extrapolate 150 and score the horizon");
  auto* inter = add_eval("eval-interpolate", "Encode kept points of 100-point windows and score seen and unseen points");

  auto* plot = app.add_subcommand("plot", "Render one report window as SVG plus CSV");
  plot->add_option("--report", o.report, "Report file")->required();
  plot->add_option("--window", o.window, "Window start (default: first window)");
  plot->add_option("--out", o.out, "Output prefix (default: next to the report)");

  auto* self = app.add_subcommand("selftest", "Gradient, solver and disease-model property suites");
  self->add_option("--gradient-seeds", o.gradient_seeds, "Random instances per gradient check")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what(), {{"usage", app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help()}});
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(o, out);
    if (train->parsed()) return cmd_train(o, out, err);
    if (extra->parsed()) return cmd_eval(o, TestKind::Extrapolation, out);
    if (inter->parsed()) return cmd_eval(o, TestKind::Interpolation, out);
    if (plot->parsed()) return cmd_plot(o, out);
    if (self->parsed()) return cmd_selftest(o, out);
  } catch (const ParseError& e) {
    report_error(err, e.kind(), e.what(), {{"file", e.file()}, {"row", e.row()}, {"field", e.field()}});
    return kExitFailure;
  } catch (const Error& e) {
    report_error(err, e.kind(), e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace mrnode::cli
