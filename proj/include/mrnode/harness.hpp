// SPDX-License-Identifier: Apache-2.0
// Extrapolation and interpolation protocols, report files and SVG plots.
#pragma once

#include <cmath>
#include <cstdio>
#include <algorithm>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mrnode/checkpoint.hpp"
#include "mrnode/model.hpp"
#include "mrnode/train.hpp"
#include "mrnode/windows.hpp"

#ifndef MRNODE_BUILD_TAG
#define MRNODE_BUILD_TAG "unknown"
#endif

namespace mrnode {

inline constexpr const char* kBuildTag = MRNODE_BUILD_TAG;

enum class TestKind { Extrapolation, Interpolation };

inline std::string to_string(TestKind k) { return k == TestKind::Extrapolation ? "extrapolation" : "interpolation"; }

inline TestKind parse_test_kind(const std::string& s) {
  if (s == "extrapolation") return TestKind::Extrapolation;
  if (s == "interpolation") return TestKind::Interpolation;
  throw ContractError("unknown test kind '" + s + "'");
}

struct WindowScore {
  std::size_t start = 0;  // grid index in the dataset
  double mse = 0.0;       // extrapolated points, or all points for interpolation
  double mse_seen = 0.0;  // interpolation only
  std::optional<double> mse_unseen;  // interpolation only; empty when nothing was dropped
  friend bool operator==(const WindowScore&, const WindowScore&) = default;
};

/// One plotted grid point. seen = the encoder consumed it.
struct SeriesPoint {
  std::size_t window_start = 0;
  std::size_t t = 0;  // grid index in the dataset
  double truth = 0.0;
  double pred = 0.0;
  bool seen = false;
  friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

struct ExperimentReport {
  TestKind kind = TestKind::Extrapolation;
  std::string model;
  std::string dataset;
  std::uint64_t seed = 0;
  double drop_rate = 0.0;
  std::string build = kBuildTag;
  std::size_t encode_length = 0;
  std::size_t horizon = 0;
  std::size_t encoded_points = 0;  // per window after drops
  std::vector<WindowScore> windows;
  double mean_mse = 0.0;
  double reference_mse = 0.0;  // extrapolation: constant-mean predictor
  double mean_seen = 0.0;
  std::optional<double> mean_unseen;
  std::vector<SeriesPoint> series;
  friend bool operator==(const ExperimentReport&, const ExperimentReport&) = default;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// MSE of predicting the target's own mean, i.e. its population variance.
inline double constant_mean_mse(const std::vector<double>& truth) {
  const double m = mean_of(truth);
  double s = 0.0;
  for (double x : truth) s += (x - m) * (x - m);
  return s / static_cast<double>(truth.size());
}

inline std::vector<Window> test_windows(const ModelCheckpoint& ck, const std::string& tag, const DiseaseDataset& ds,
                                        Phase phase, double drop_rate, std::uint64_t seed, std::uint64_t stream) {
  auto prepared = std::make_shared<const PreparedDataset>(
      prepare_dataset(tag, ds, ck.stats, ck.config.split_train, ck.config.split_val));
  auto windows = make_windows(prepared, phase, ck.config);
  if (windows.empty()) throw ContractError("dataset '" + tag + "' yields no test windows");
  if (drop_rate > 0.0)
    for (auto& w : windows) {
      auto rng = window_rng(seed, stream, w.start);
      w = apply_drop(std::move(w), drop_rate, rng);
    }
  return windows;
}

inline double denorm_y(const ModelCheckpoint& ck, double z) { return denormalize_value(z, ck.stats.y); }

}  // namespace detail

/// Normalized predictions of a baseline at every grid point 0..n-1 of a
/// window. Kept encode points feed their observed Y to the next step; other
/// points feed the model's own previous output.
inline std::vector<double> baseline_grid_predictions(RecurrentBaseline& model, const Window& w, std::size_t n) {
  const auto& grid = w.data->predictors.grid();
  auto state = model.zero_state(1);
  std::vector<double> out;
  double prev_y = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = w.start + k;
    const double dt = k == 0 ? 0.0 : 1.0;
    auto [s, y] = model.step(state, Tensor::constant({1, kBaselineInputWidth}, {prev_y, grid.rh[i], grid.t[i], grid.cm[i], dt}),
                             Binder{});
    state = s;
    out.push_back(y.item());
    prev_y = (k < w.encode_length && w.mask[k]) ? w.encode_obs[k][0] : y.item();
  }
  return out;
}

/// Drops encode points, encodes the survivors, predicts the full window and
/// scores the horizon in denormalized units.
inline ExperimentReport run_extrapolation_test(const ModelCheckpoint& ck, const std::string& tag,
                                               const DiseaseDataset& ds, double drop_rate, std::uint64_t seed) {
  const auto windows = detail::test_windows(ck, tag, ds, Phase::ExtrapolationTest, drop_rate, seed, 1);
  AnyModel model = restore_model(ck);
  ExperimentReport rep;
  rep.kind = TestKind::Extrapolation;
  rep.model = to_string(ck.config.model.kind);
  rep.dataset = tag;
  rep.seed = seed;
  rep.drop_rate = drop_rate;
  rep.encode_length = ck.config.eval_encode;
  rep.horizon = ck.config.eval_horizon;
  rep.encoded_points = windows.front().kept_count();
  std::vector<double> mses, refs;
  for (const auto& w : windows) {
    std::vector<double> pred;
    if (auto* node = std::get_if<MrNodeModel>(&model)) {
      pred = node->predict(w, w.target_times, {ck.config.substep, true});
    } else {
      auto& base = std::get<RecurrentBaseline>(model);
      const auto fit = base.predict(w, future_climate(w, w.horizon), w.horizon);
      // Reconstruction covers kept points only; dropped ones are filled
      // from the step-wise grid pass for plotting.
      const auto grid = baseline_grid_predictions(base, w, w.encode_length);
      pred = grid;
      std::size_t k = 0;
      for (std::size_t i = 0; i < w.encode_length; ++i)
        if (w.mask[i]) pred[i] = fit.y[k++];
      pred.insert(pred.end(), fit.y.end() - static_cast<std::ptrdiff_t>(w.horizon), fit.y.end());
    }
    std::vector<double> truth(pred.size()), p(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      truth[i] = detail::denorm_y(ck, w.target_y[i]);
      p[i] = detail::denorm_y(ck, pred[i]);
      rep.series.push_back({w.start, w.start + i, truth[i], p[i], i < w.encode_length && w.mask[i]});
    }
    const std::vector<double> th(truth.begin() + static_cast<std::ptrdiff_t>(w.encode_length), truth.end());
    const std::vector<double> ph(p.begin() + static_cast<std::ptrdiff_t>(w.encode_length), p.end());
    WindowScore sc;
    sc.start = w.start;
    sc.mse = mse(ph, th);
    rep.windows.push_back(sc);
    mses.push_back(sc.mse);
    refs.push_back(detail::constant_mean_mse(th));
  }
  rep.mean_mse = detail::mean_of(mses);
  rep.reference_mse = detail::mean_of(refs);
  return rep;
}

/// Drops points of each window, encodes the survivors and scores the
/// reconstruction at seen and unseen grid points separately.
inline ExperimentReport run_interpolation_test(const ModelCheckpoint& ck, const std::string& tag,
                                               const DiseaseDataset& ds, double drop_rate, std::uint64_t seed) {
  const auto windows = detail::test_windows(ck, tag, ds, Phase::InterpolationTest, drop_rate, seed, 2);
  AnyModel model = restore_model(ck);
  ExperimentReport rep;
  rep.kind = TestKind::Interpolation;
  rep.model = to_string(ck.config.model.kind);
  rep.dataset = tag;
  rep.seed = seed;
  rep.drop_rate = drop_rate;
  rep.encode_length = ck.config.interp_length;
  rep.horizon = 0;
  rep.encoded_points = windows.front().kept_count();
  std::vector<double> all, seen, unseen, refs;
  for (const auto& w : windows) {
    std::vector<double> pred;
    if (auto* node = std::get_if<MrNodeModel>(&model))
      pred = node->predict(w, w.target_times, {ck.config.substep, true});
    else
      pred = baseline_grid_predictions(std::get<RecurrentBaseline>(model), w, w.encode_length);
    std::vector<double> ts, ps, tu, pu, ta, pa;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double truth = detail::denorm_y(ck, w.target_y[i]);
      const double p = detail::denorm_y(ck, pred[i]);
      ta.push_back(truth);
      pa.push_back(p);
      (w.mask[i] ? ts : tu).push_back(truth);
      (w.mask[i] ? ps : pu).push_back(p);
      rep.series.push_back({w.start, w.start + i, truth, p, static_cast<bool>(w.mask[i])});
    }
    WindowScore sc;
    sc.start = w.start;
    sc.mse = mse(pa, ta);
    sc.mse_seen = mse(ps, ts);
    if (!tu.empty()) sc.mse_unseen = mse(pu, tu);
    rep.windows.push_back(sc);
    all.push_back(sc.mse);
    seen.push_back(sc.mse_seen);
    if (sc.mse_unseen) unseen.push_back(*sc.mse_unseen);
    refs.push_back(detail::constant_mean_mse(ta));
  }
  rep.mean_mse = detail::mean_of(all);
  rep.reference_mse = detail::mean_of(refs);
  rep.mean_seen = detail::mean_of(seen);
  if (!unseen.empty()) rep.mean_unseen = detail::mean_of(unseen);
  return rep;
}

// ---------------------------------------------------------------------------
// Report files. A header block of "# key: value" lines, then a CSV table of
// per-window scores. The plotted series lives in a companion CSV named by the
// "series" header entry, relative to the report.

inline constexpr const char* kReportMagic = "# mrnode-report v1";

inline std::string report_string(const ExperimentReport& r, const std::string& series_name) {
  auto d = [](double v) { return text::format_double(v); };
  auto opt = [&](const std::optional<double>& v) { return v ? d(*v) : std::string("none"); };
  std::string out = std::string(kReportMagic) + "\n";
  auto kv = [&](const std::string& k, const std::string& v) { out += "# " + k + ": " + v + "\n"; };
  kv("kind", to_string(r.kind));
  kv("model", r.model);
  kv("dataset", r.dataset);
  kv("seed", std::to_string(r.seed));
  kv("drop_rate", d(r.drop_rate));
  kv("build", r.build);
  kv("encode_length", std::to_string(r.encode_length));
  kv("horizon", std::to_string(r.horizon));
  kv("encoded_points", std::to_string(r.encoded_points));
  kv("windows", std::to_string(r.windows.size()));
  kv("mean_mse", d(r.mean_mse));
  kv("reference_mse", d(r.reference_mse));
  if (r.kind == TestKind::Interpolation) {
    kv("mean_mse_seen", d(r.mean_seen));
    kv("mean_mse_unseen", opt(r.mean_unseen));
  }
  kv("series", series_name);
  if (r.kind == TestKind::Extrapolation) {
    out += "window_start,mse\n";
    for (const auto& w : r.windows) out += std::to_string(w.start) + "," + d(w.mse) + "\n";
  } else {
    out += "window_start,mse,mse_seen,mse_unseen\n";
    for (const auto& w : r.windows)
      out += std::to_string(w.start) + "," + d(w.mse) + "," + d(w.mse_seen) + "," + opt(w.mse_unseen) + "\n";
  }
  return out;
}

inline constexpr const char* kSeriesHeader = "window_start,t,truth,pred,seen_flag";

inline std::string series_string(const std::vector<SeriesPoint>& s) {
  std::string out = std::string(kSeriesHeader) + "\n";
  for (const auto& p : s)
    out += std::to_string(p.window_start) + "," + std::to_string(p.t) + "," + text::format_double(p.truth) + "," +
           text::format_double(p.pred) + "," + (p.seen ? "1" : "0") + "\n";
  return out;
}

inline std::string series_path_for(const std::string& report_path) {
  std::filesystem::path p(report_path);
  return p.replace_extension(".series.csv").string();
}

inline void save_report(const std::string& path, const ExperimentReport& r) {
  const std::string series = series_path_for(path);
  text::write_file_atomic(series, series_string(r.series));
  text::write_file_atomic(path, report_string(r, std::filesystem::path(series).filename().string()));
}

namespace detail {

inline double need_double(const std::string& file, std::size_t row, const std::string& field, std::string_view s) {
  auto v = text::parse_double(s);
  if (!v) throw ParseError(file, row, field, "expected a number, got '" + std::string(s) + "'");
  return *v;
}

inline std::size_t need_size(const std::string& file, std::size_t row, const std::string& field, std::string_view s) {
  auto v = text::parse_int(s);
  if (!v || *v < 0) throw ParseError(file, row, field, "expected a non-negative integer, got '" + std::string(s) + "'");
  return static_cast<std::size_t>(*v);
}

inline std::optional<double> need_opt(const std::string& file, std::size_t row, const std::string& field,
                                      std::string_view s) {
  if (s == "none") return std::nullopt;
  return need_double(file, row, field, s);
}

}  // namespace detail

inline std::vector<SeriesPoint> parse_series(const std::string& file, const std::string& content) {
  auto lines = text::split(content, '\n');
  if (lines.empty() || text::trim(lines[0]) != kSeriesHeader)
    throw ParseError(file, 0, "", std::string("expected header '") + kSeriesHeader + "'");
  std::vector<SeriesPoint> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    auto f = text::split(lines[i], ',');
    if (f.size() != 5) throw ParseError(file, i, "", "expected 5 fields");
    SeriesPoint p;
    p.window_start = detail::need_size(file, i, "window_start", f[0]);
    p.t = detail::need_size(file, i, "t", f[1]);
    p.truth = detail::need_double(file, i, "truth", f[2]);
    p.pred = detail::need_double(file, i, "pred", f[3]);
    if (f[4] != "0" && f[4] != "1") throw ParseError(file, i, "seen_flag", "expected 0 or 1");
    p.seen = f[4] == "1";
    out.push_back(p);
  }
  return out;
}

/// Parses a report; `series_loader` receives the companion file name.
inline ExperimentReport parse_report(const std::string& file, const std::string& content,
                                     const std::function<std::string(const std::string&)>& series_loader) {
  auto lines = text::split(content, '\n');
  if (lines.empty() || lines[0] != kReportMagic) throw ParseError(file, 0, "", "not a report file");
  std::map<std::string, std::string> head;
  std::size_t i = 1;
  for (; i < lines.size() && lines[i].starts_with("# "); ++i) {
    auto body = lines[i].substr(2);
    auto colon = body.find(": ");
    if (colon == std::string_view::npos) throw ParseError(file, 0, "", "malformed header line");
    head[std::string(body.substr(0, colon))] = std::string(body.substr(colon + 2));
  }
  auto get = [&](const std::string& k) {
    auto it = head.find(k);
    if (it == head.end()) throw ParseError(file, 0, k, "missing header entry");
    return it->second;
  };
  ExperimentReport r;
  r.kind = parse_test_kind(get("kind"));
  r.model = get("model");
  r.dataset = get("dataset");
  r.seed = detail::need_size(file, 0, "seed", get("seed"));
  r.drop_rate = detail::need_double(file, 0, "drop_rate", get("drop_rate"));
  r.build = get("build");
  r.encode_length = detail::need_size(file, 0, "encode_length", get("encode_length"));
  r.horizon = detail::need_size(file, 0, "horizon", get("horizon"));
  r.encoded_points = detail::need_size(file, 0, "encoded_points", get("encoded_points"));
  const auto n = detail::need_size(file, 0, "windows", get("windows"));
  r.mean_mse = detail::need_double(file, 0, "mean_mse", get("mean_mse"));
  r.reference_mse = detail::need_double(file, 0, "reference_mse", get("reference_mse"));
  const bool interp = r.kind == TestKind::Interpolation;
  if (interp) {
    r.mean_seen = detail::need_double(file, 0, "mean_mse_seen", get("mean_mse_seen"));
    r.mean_unseen = detail::need_opt(file, 0, "mean_mse_unseen", get("mean_mse_unseen"));
  }
  if (i >= lines.size()) throw ParseError(file, 0, "", "missing score table");
  ++i;  // column header
  for (std::size_t row = 1; i < lines.size(); ++i, ++row) {
    if (text::trim(lines[i]).empty()) continue;
    auto f = text::split(lines[i], ',');
    if (f.size() != (interp ? 4u : 2u)) throw ParseError(file, row, "", "wrong field count");
    WindowScore w;
    w.start = detail::need_size(file, row, "window_start", f[0]);
    w.mse = detail::need_double(file, row, "mse", f[1]);
    if (interp) {
      w.mse_seen = detail::need_double(file, row, "mse_seen", f[2]);
      w.mse_unseen = detail::need_opt(file, row, "mse_unseen", f[3]);
    }
    r.windows.push_back(w);
  }
  if (r.windows.size() != n) throw ParseError(file, 0, "windows", "header count disagrees with table");
  const auto series = get("series");
  r.series = parse_series(series, series_loader(series));
  return r;
}

inline ExperimentReport load_report(const std::string& path) {
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_report(path, text::read_file(path),
                      [&](const std::string& name) { return text::read_file((dir / name).string()); });
}

// ---------------------------------------------------------------------------
// Plots

struct PlotSeries {
  std::string title;
  std::vector<std::size_t> t;
  std::vector<double> truth, pred;
  std::vector<bool> seen;
  std::optional<std::size_t> boundary;  // first extrapolated grid index
};

/// Series of one report window.
inline PlotSeries plot_series(const ExperimentReport& r, std::size_t window_start) {
  PlotSeries s;
  s.title = r.model + " " + to_string(r.kind) + " on " + r.dataset + ", window " + std::to_string(window_start) +
            ", drop rate " + text::format_double(r.drop_rate);
  for (const auto& p : r.series)
    if (p.window_start == window_start) {
      s.t.push_back(p.t);
      s.truth.push_back(p.truth);
      s.pred.push_back(p.pred);
      s.seen.push_back(p.seen);
    }
  if (r.kind == TestKind::Extrapolation) s.boundary = window_start + r.encode_length;
  return s;
}

namespace detail {

inline std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '&') o += "&amp;";
    else if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else o += c;
  }
  return o;
}

}  // namespace detail

inline std::string plot_svg(const PlotSeries& s) {
  if (s.t.empty() || s.pred.size() != s.t.size() || s.truth.size() != s.t.size() || s.seen.size() != s.t.size())
    throw ContractError("emit_plot: empty or misaligned series");
  const double w = 900, h = 360, l = 60, r = 20, top = 40, bottom = 40;
  double lo = std::min(*std::min_element(s.truth.begin(), s.truth.end()), *std::min_element(s.pred.begin(), s.pred.end()));
  double hi = std::max(*std::max_element(s.truth.begin(), s.truth.end()), *std::max_element(s.pred.begin(), s.pred.end()));
  if (hi - lo < 1e-12) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double t0 = static_cast<double>(s.t.front()), t1 = static_cast<double>(std::max(s.t.back(), s.t.front() + 1));
  auto x = [&](double t) { return l + (t - t0) / (t1 - t0) * (w - l - r); };
  auto y = [&](double v) { return top + (hi - v) / (hi - lo) * (h - top - bottom); };
  using detail::fixed;
  std::string o = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(w) + "\" height=\"" + fixed(h) + "\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + fixed(l) + "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">" + detail::xml_escape(s.title) +
       "</text>\n";
  o += "<line x1=\"" + fixed(l) + "\" y1=\"" + fixed(h - bottom) + "\" x2=\"" + fixed(w - r) + "\" y2=\"" +
       fixed(h - bottom) + "\" stroke=\"black\"/>\n";
  o += "<line x1=\"" + fixed(l) + "\" y1=\"" + fixed(top) + "\" x2=\"" + fixed(l) + "\" y2=\"" + fixed(h - bottom) +
       "\" stroke=\"black\"/>\n";
  o += "<text x=\"5\" y=\"" + fixed(top + 4) + "\" font-family=\"sans-serif\" font-size=\"11\">" + fixed(hi) + "</text>\n";
  o += "<text x=\"5\" y=\"" + fixed(h - bottom) + "\" font-family=\"sans-serif\" font-size=\"11\">" + fixed(lo) + "</text>\n";
  o += "<text x=\"" + fixed(l) + "\" y=\"" + fixed(h - 12) + "\" font-family=\"sans-serif\" font-size=\"11\">t = " +
       std::to_string(s.t.front()) + "</text>\n";
  o += "<text x=\"" + fixed(w - r - 80) + "\" y=\"" + fixed(h - 12) + "\" font-family=\"sans-serif\" font-size=\"11\">t = " +
       std::to_string(s.t.back()) + "</text>\n";
  if (s.boundary)
    o += "<line x1=\"" + fixed(x(static_cast<double>(*s.boundary))) + "\" y1=\"" + fixed(top) + "\" x2=\"" +
         fixed(x(static_cast<double>(*s.boundary))) + "\" y2=\"" + fixed(h - bottom) +
         "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
  auto polyline = [&](const std::vector<double>& v, const char* color) {
    o += "<polyline fill=\"none\" stroke=\"";
    o += color;
    o += "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) o += ' ';
      o += fixed(x(static_cast<double>(s.t[i]))) + "," + fixed(y(v[i]));
    }
    o += "\"/>\n";
  };
  polyline(s.truth, "black");
  polyline(s.pred, "crimson");
  // Seen ground truth as filled dots, unseen as hollow ones.
  for (std::size_t i = 0; i < s.t.size(); ++i)
    o += "<circle cx=\"" + fixed(x(static_cast<double>(s.t[i]))) + "\" cy=\"" + fixed(y(s.truth[i])) + "\" r=\"2.5\" " +
         (s.seen[i] ? "fill=\"black\"" : "fill=\"none\" stroke=\"steelblue\"") + "/>\n";
  o += "<text x=\"" + fixed(w - r - 200) + "\" y=\"20\" font-family=\"sans-serif\" font-size=\"11\">"
       "black: truth, red: prediction, filled: seen</text>\n";
  o += "</svg>\n";
  return o;
}

inline constexpr const char* kPlotCsvHeader = "t,truth,pred,seen_flag";

inline std::string plot_csv(const PlotSeries& s) {
  if (s.t.empty()) throw ContractError("emit_plot: empty series");
  std::string out = std::string(kPlotCsvHeader) + "\n";
  for (std::size_t i = 0; i < s.t.size(); ++i)
    out += std::to_string(s.t[i]) + "," + text::format_double(s.truth[i]) + "," + text::format_double(s.pred[i]) + "," +
           (s.seen[i] ? "1" : "0") + "\n";
  return out;
}

/// Writes `<prefix>.svg` and `<prefix>.csv`.
inline void emit_plot(const PlotSeries& s, const std::string& prefix) {
  const auto svg = plot_svg(s);
  const auto csv = plot_csv(s);
  text::write_file_atomic(prefix + ".svg", svg);
  text::write_file_atomic(prefix + ".csv", csv);
}

}  // namespace mrnode
