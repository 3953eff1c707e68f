#pragma once

// Morphological feature time series and dataset-level comparison.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "efdgen/error.hpp"
#include "efdgen/geometry.hpp"
#include "efdgen/mask.hpp"

namespace efdgen::metrics {

enum class Feature { Area, Roundness, Elongation, Convexity };

inline constexpr std::array<Feature, 4> kFeatures{Feature::Area, Feature::Roundness, Feature::Elongation,
                                                  Feature::Convexity};

constexpr const char* feature_name(Feature f) {
  switch (f) {
    case Feature::Area: return "area";
    case Feature::Roundness: return "roundness";
    case Feature::Elongation: return "elongation";
    case Feature::Convexity: return "convexity";
  }
  return "?";
}

constexpr const char* feature_units(Feature f) { return f == Feature::Area ? "px^2" : "1"; }

// NaN marks a gap (invalid frame).
struct FeatureCurve {
  Feature feature = Feature::Area;
  std::vector<double> values;

  int length() const noexcept { return static_cast<int>(values.size()); }
};

using VideoFeatures = std::array<FeatureCurve, 4>;

struct FrameFeatures {
  double area = 0.0;
  double roundness = 0.0;
  double elongation = 0.0;
  double convexity = 0.0;
};

inline FrameFeatures frame_features(const MaskFrame& frame) {
  const auto contour = extract_contour(frame);  // throws on invalid frames
  FrameFeatures f;
  f.area = static_cast<double>(frame.count());
  const double p = traced_perimeter(contour);
  f.roundness = std::clamp(4.0 * std::numbers::pi * f.area / (p * p), 0.0, 1.0);
  const auto ax = moments_axes(frame);
  f.elongation = ax.major / ax.minor;
  f.convexity = std::min(1.0, f.area / convex_hull_area(frame));
  return f;
}

// Invalid frames become NaN gaps unless `strict` is set, in which case the
// error propagates with the frame index attached.
inline VideoFeatures feature_curves(const MaskVideo& video, bool strict = false) {
  VideoFeatures out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i].feature = kFeatures[i];
    out[i].values.assign(video.frames.size(), std::numeric_limits<double>::quiet_NaN());
  }
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    FrameFeatures f;
    try {
      f = frame_features(video.frames[t]);
    } catch (const Error& e) {
      if (strict) throw Error(e.code(), "frame " + std::to_string(t) + ": " + e.what());
      continue;
    }
    out[0].values[t] = f.area;
    out[1].values[t] = f.roundness;
    out[2].values[t] = f.elongation;
    out[3].values[t] = f.convexity;
  }
  return out;
}

using DatasetFeatures = std::vector<VideoFeatures>;

inline DatasetFeatures dataset_features(const std::vector<MaskVideo>& videos) {
  DatasetFeatures out;
  out.reserve(videos.size());
  for (const auto& v : videos) out.push_back(feature_curves(v));
  return out;
}

// Per-frame statistics over the videos that have a value at that frame.
struct PopulationCurve {
  std::vector<double> mean;
  std::vector<double> q25;
  std::vector<double> q75;
};

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline int common_length(const DatasetFeatures& d) {
  int len = std::numeric_limits<int>::max();
  for (const auto& v : d) len = std::min(len, v[0].length());
  return d.empty() ? 0 : len;
}

inline PopulationCurve population_curve(const DatasetFeatures& data, Feature feature, int length) {
  require(!data.empty(), ErrorCode::EmptyDataset, "dataset has no videos");
  const auto fi = static_cast<std::size_t>(feature);
  PopulationCurve pc;
  std::vector<double> column;
  for (int t = 0; t < length; ++t) {
    column.clear();
    for (const auto& v : data) {
      const double x = v[fi].values[static_cast<std::size_t>(t)];
      if (!std::isnan(x)) column.push_back(x);
    }
    if (column.empty()) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      pc.mean.push_back(nan);
      pc.q25.push_back(nan);
      pc.q75.push_back(nan);
      continue;
    }
    double s = 0.0;
    for (double x : column) s += x;
    pc.mean.push_back(s / static_cast<double>(column.size()));
    pc.q25.push_back(quantile(column, 0.25));
    pc.q75.push_back(quantile(column, 0.75));
  }
  return pc;
}

// Mean absolute difference between the two datasets' per-frame mean curves,
// over the shorter dataset's length.  Frames where either mean is missing
// are skipped.
inline double diff_metric(const DatasetFeatures& a, const DatasetFeatures& b, Feature feature) {
  require(!a.empty() && !b.empty(), ErrorCode::EmptyDataset, "diff needs two non-empty datasets");
  const int len = std::min(common_length(a), common_length(b));
  const auto ma = population_curve(a, feature, len).mean;
  const auto mb = population_curve(b, feature, len).mean;
  double acc = 0.0;
  int n = 0;
  for (int t = 0; t < len; ++t) {
    const auto i = static_cast<std::size_t>(t);
    if (std::isnan(ma[i]) || std::isnan(mb[i])) continue;
    acc += std::abs(ma[i] - mb[i]);
    ++n;
  }
  return n ? acc / n : 0.0;
}

// Dynamic time warping with L1 local cost and steps (1,0), (0,1), (1,1),
// anchored at both ends, divided by the longer length.
inline double dtw_distance(std::span<const double> x, std::span<const double> y) {
  require(!x.empty() && !y.empty(), ErrorCode::EmptyCurve, "DTW needs non-empty curves");
  const std::size_t n = x.size(), m = y.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m, inf), cur(m, inf);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double c = std::abs(x[i] - y[j]);
      double best;
      if (i == 0 && j == 0) best = 0.0;
      else {
        best = inf;
        if (i > 0) best = std::min(best, prev[j]);
        if (j > 0) best = std::min(best, cur[j - 1]);
        if (i > 0 && j > 0) best = std::min(best, prev[j - 1]);
      }
      cur[j] = best + c;
    }
    std::swap(prev, cur);
  }
  return prev[m - 1] / static_cast<double>(std::max(n, m));
}

inline std::vector<double> drop_gaps(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v)
    if (!std::isnan(x)) out.push_back(x);
  return out;
}

// DTW between the datasets' mean curves (gaps removed).
inline double dtw_metric(const DatasetFeatures& a, const DatasetFeatures& b, Feature feature) {
  require(!a.empty() && !b.empty(), ErrorCode::EmptyDataset, "DTW needs two non-empty datasets");
  const auto ma = drop_gaps(population_curve(a, feature, common_length(a)).mean);
  const auto mb = drop_gaps(population_curve(b, feature, common_length(b)).mean);
  return dtw_distance(ma, mb);
}

// Sensitivity mode: average over all video pairs instead of mean curves.
inline double pairwise_diff(const DatasetFeatures& a, const DatasetFeatures& b, Feature feature) {
  require(!a.empty() && !b.empty(), ErrorCode::EmptyDataset, "diff needs two non-empty datasets");
  const auto fi = static_cast<std::size_t>(feature);
  double acc = 0.0;
  long pairs = 0;
  for (const auto& va : a)
    for (const auto& vb : b) {
      const int len = std::min(va[fi].length(), vb[fi].length());
      double s = 0.0;
      int n = 0;
      for (int t = 0; t < len; ++t) {
        const double x = va[fi].values[static_cast<std::size_t>(t)], y = vb[fi].values[static_cast<std::size_t>(t)];
        if (std::isnan(x) || std::isnan(y)) continue;
        s += std::abs(x - y);
        ++n;
      }
      if (n) {
        acc += s / n;
        ++pairs;
      }
    }
  return pairs ? acc / static_cast<double>(pairs) : 0.0;
}

// ---------------------------------------------------------------------------
// Reports

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double s = 0.0;
    for (double x : v) s += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(s / static_cast<double>(v.size() - 1));
  }
  return r;
}

struct FeatureRow {
  Feature feature = Feature::Area;
  MeanStd diff;
  MeanStd dtw;
  std::vector<double> diff_runs;
  std::vector<double> dtw_runs;
};

struct CurveBand {
  std::string dataset;
  Feature feature = Feature::Area;
  PopulationCurve curve;
};

struct EvalReport {
  std::array<FeatureRow, 4> rows;
  std::vector<CurveBand> curves;
  int replications = 0;
};

using SynthGenerator = std::function<std::vector<MaskVideo>(std::uint64_t seed)>;

// Each replication regenerates the synthetic set with seed + r and compares
// it against the real set.  Curves come from the first replication.
inline EvalReport evaluate(const std::vector<MaskVideo>& real, const SynthGenerator& generate, int replications,
                           std::uint64_t seed) {
  require(!real.empty(), ErrorCode::EmptyDataset, "real dataset is empty");
  require(replications >= 1, ErrorCode::InvalidArgument, "need at least one replication");
  const auto real_f = dataset_features(real);
  EvalReport rep;
  rep.replications = replications;
  for (std::size_t i = 0; i < 4; ++i) rep.rows[i].feature = kFeatures[i];
  for (int r = 0; r < replications; ++r) {
    const auto synth = generate(seed + static_cast<std::uint64_t>(r));
    require(!synth.empty(), ErrorCode::EmptyDataset, "synthetic dataset is empty");
    const auto synth_f = dataset_features(synth);
    for (std::size_t i = 0; i < 4; ++i) {
      rep.rows[i].diff_runs.push_back(diff_metric(real_f, synth_f, kFeatures[i]));
      rep.rows[i].dtw_runs.push_back(dtw_metric(real_f, synth_f, kFeatures[i]));
    }
    if (r == 0) {
      for (auto f : kFeatures) {
        rep.curves.push_back({"real", f, population_curve(real_f, f, common_length(real_f))});
        rep.curves.push_back({"synthetic", f, population_curve(synth_f, f, common_length(synth_f))});
      }
    }
  }
  for (auto& row : rep.rows) {
    row.diff = mean_std(row.diff_runs);
    row.dtw = mean_std(row.dtw_runs);
  }
  return rep;
}

inline EvalReport evaluate(const std::vector<MaskVideo>& real, const std::vector<MaskVideo>& synth) {
  return evaluate(real, [&](std::uint64_t) { return synth; }, 1, 0);
}

inline const FeatureRow& row_for(const EvalReport& rep, Feature f) {
  return rep.rows[static_cast<std::size_t>(f)];
}

inline void write_report_table(std::ostream& os, const EvalReport& rep) {
  os << "Feature     Metric  Mean        Std\n";
  os << "----------  ------  ----------  ----------\n";
  for (const auto& row : rep.rows) {
    for (int m = 0; m < 2; ++m) {
      const auto& ms = m == 0 ? row.diff : row.dtw;
      os << std::left << std::setw(10) << feature_name(row.feature) << "  " << std::setw(6)
         << (m == 0 ? "Diff" : "DTW") << "  " << std::right << std::setw(10) << std::fixed << std::setprecision(4)
         << ms.mean << "  " << std::setw(10) << ms.std << '\n';
    }
  }
  os << "replications: " << rep.replications << '\n';
  os.unsetf(std::ios::fixed);
}

inline void write_report_csv(std::ostream& os, const EvalReport& rep) {
  os << "feature,metric,mean,std,replications\n";
  os << std::setprecision(10);
  for (const auto& row : rep.rows) {
    os << feature_name(row.feature) << ",diff," << row.diff.mean << ',' << row.diff.std << ',' << rep.replications
       << '\n';
    os << feature_name(row.feature) << ",dtw," << row.dtw.mean << ',' << row.dtw.std << ',' << rep.replications
       << '\n';
  }
}

inline void write_curves_csv(std::ostream& os, const EvalReport& rep) {
  os << "t,feature,mean,q25,q75,dataset\n";
  os << std::setprecision(10);
  for (const auto& band : rep.curves)
    for (std::size_t t = 0; t < band.curve.mean.size(); ++t)
      os << t << ',' << feature_name(band.feature) << ',' << band.curve.mean[t] << ',' << band.curve.q25[t] << ','
         << band.curve.q75[t] << ',' << band.dataset << '\n';
}

// One panel per feature; mean line plus a translucent interquartile band per dataset.
inline void write_curves_svg(std::ostream& os, const EvalReport& rep) {
  constexpr int panel_w = 320, panel_h = 200, pad = 30;
  const int width = 4 * panel_w;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << panel_h + 2 * pad
     << "\">\n";
  static constexpr std::array<const char*, 4> colors{"#2a9d4a", "#1f5fbf", "#e07b1a", "#8e44ad"};
  for (std::size_t fi = 0; fi < 4; ++fi) {
    const Feature f = kFeatures[fi];
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t tmax = 1;
    for (const auto& b : rep.curves) {
      if (b.feature != f) continue;
      tmax = std::max(tmax, b.curve.mean.size());
      for (std::size_t t = 0; t < b.curve.mean.size(); ++t) {
        if (std::isnan(b.curve.mean[t])) continue;
        lo = std::min(lo, b.curve.q25[t]);
        hi = std::max(hi, b.curve.q75[t]);
      }
    }
    if (!(hi > lo)) {
      lo -= 1.0;
      hi += 1.0;
    }
    const double x0 = static_cast<double>(fi) * panel_w + pad, w = panel_w - 2 * pad;
    auto px = [&](std::size_t t) { return x0 + w * static_cast<double>(t) / static_cast<double>(std::max<std::size_t>(1, tmax - 1)); };
    auto py = [&](double v) { return pad + panel_h * (1.0 - (v - lo) / (hi - lo)); };
    os << "<text x=\"" << x0 << "\" y=\"" << pad - 10 << "\" font-size=\"12\">" << feature_name(f) << "</text>\n";
    os << "<rect x=\"" << x0 << "\" y=\"" << pad << "\" width=\"" << w << "\" height=\"" << panel_h
       << "\" fill=\"none\" stroke=\"#999\"/>\n";
    int ds = 0;
    for (const auto& b : rep.curves) {
      if (b.feature != f) continue;
      const char* color = colors[static_cast<std::size_t>(ds++) % colors.size()];
      std::ostringstream band, line;
      for (std::size_t t = 0; t < b.curve.mean.size(); ++t)
        if (!std::isnan(b.curve.mean[t])) band << px(t) << ',' << py(b.curve.q75[t]) << ' ';
      for (std::size_t t = b.curve.mean.size(); t-- > 0;)
        if (!std::isnan(b.curve.mean[t])) band << px(t) << ',' << py(b.curve.q25[t]) << ' ';
      for (std::size_t t = 0; t < b.curve.mean.size(); ++t)
        if (!std::isnan(b.curve.mean[t])) line << px(t) << ',' << py(b.curve.mean[t]) << ' ';
      os << "<polygon points=\"" << band.str() << "\" fill=\"" << color << "\" fill-opacity=\"0.2\"/>\n";
      os << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color
         << "\" stroke-width=\"1.5\"><title>" << b.dataset << "</title></polyline>\n";
    }
  }
  os << "</svg>\n";
}

}  // namespace efdgen::metrics
