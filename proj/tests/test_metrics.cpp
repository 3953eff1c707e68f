#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "efdgen/efdgen.hpp"

using namespace efdgen;
using namespace efdgen::metrics;
namespace fx = efdgen::fixtures;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

const double kNan = std::numeric_limits<double>::quiet_NaN();

// Dataset whose only populated feature is area.
DatasetFeatures areas(const std::vector<std::vector<double>>& curves) {
  DatasetFeatures d;
  for (const auto& c : curves) {
    VideoFeatures v;
    for (std::size_t i = 0; i < 4; ++i) {
      v[i].feature = kFeatures[i];
      v[i].values = i == 0 ? c : std::vector<double>(c.size(), 0.5);
    }
    d.push_back(v);
  }
  return d;
}

MaskVideo repeat(const MaskFrame& f, int t) { return MaskVideo{std::vector<MaskFrame>(static_cast<std::size_t>(t), f)}; }

MaskFrame ellipse_mask(int canvas, Point c, double a, double b, double angle) {
  return rasterize_contour(fx::ellipse_contour(c, a, b, angle, 720), canvas, canvas).mask;
}

// Exhaustive minimum over every monotone, boundary-anchored alignment.
double dtw_brute(const std::vector<double>& x, const std::vector<double>& y) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
    acc += std::abs(x[i] - y[j]);
    if (acc >= best) return;
    if (i + 1 == x.size() && j + 1 == y.size()) {
      best = acc;
      return;
    }
    if (i + 1 < x.size()) walk(i + 1, j, acc);
    if (j + 1 < y.size()) walk(i, j + 1, acc);
    if (i + 1 < x.size() && j + 1 < y.size()) walk(i + 1, j + 1, acc);
  };
  walk(0, 0, 0.0);
  return best / static_cast<double>(std::max(x.size(), y.size()));
}

double gift_wrap_area(const MaskFrame& m) {
  std::vector<Point> pts;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.at(x, y))
        pts.insert(pts.end(), {{double(x), double(y)}, {x + 1.0, double(y)}, {x + 1.0, y + 1.0}, {double(x), y + 1.0}});
  std::size_t start = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i].x < pts[start].x || (pts[i].x == pts[start].x && pts[i].y < pts[start].y)) start = i;
  std::vector<Point> hull;
  std::size_t cur = start;
  do {
    hull.push_back(pts[cur]);
    std::size_t next = (cur + 1) % pts.size();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double c = cross(pts[next] - pts[cur], pts[i] - pts[cur]);
      if (c < 0 || (c == 0 && distance(pts[cur], pts[i]) > distance(pts[cur], pts[next]))) next = i;
    }
    cur = next;
  } while (cur != start);
  return std::abs(signed_area(std::span<const Point>(hull)));
}

}  // namespace

// ---------------------------------------------------------------------------
// Features

TEST(Features, StaticDisk) {
  const auto disk = fx::filled_disk(64, 64, {32, 32}, 20);
  const auto curves = feature_curves(repeat(disk, 5));
  const double convexity_oracle = static_cast<double>(disk.count()) / gift_wrap_area(disk);
  for (int t = 0; t < 5; ++t) {
    EXPECT_EQ(curves[0].values[t], static_cast<double>(disk.count()));
    EXPECT_GE(curves[1].values[t], 0.95);
    EXPECT_LE(curves[1].values[t], 1.0);
    EXPECT_LE(curves[2].values[t], 1.05);
    EXPECT_GE(curves[2].values[t], 1.0);
    // The corner hull of a digitized r = 20 disk gains its boundary half-pixels.
    EXPECT_NEAR(curves[3].values[t], convexity_oracle, 1e-12);
    EXPECT_GE(curves[3].values[t], 0.96);
  }
  EXPECT_EQ(curves[0].feature, Feature::Area);
  EXPECT_STREQ(feature_units(Feature::Area), "px^2");
  EXPECT_STREQ(feature_units(Feature::Convexity), "1");
}

TEST(Features, SquareRoundness) {
  const auto sq = fx::filled_rect(64, 64, 12, 12, 51, 51);
  const auto f = frame_features(sq);
  EXPECT_NEAR(f.roundness, std::numbers::pi / 4.0, 0.05);
  EXPECT_NEAR(f.convexity, 1.0, 1e-12);
  EXPECT_NEAR(f.elongation, 1.0, 1e-9);
}

TEST(Features, EllipseElongation) {
  const auto m = ellipse_mask(64, {32.3, 31.7}, 20, 10, 0.0);
  EXPECT_NEAR(frame_features(m).elongation, 2.0, 0.1);
  const auto tilted = ellipse_mask(64, {32.3, 31.7}, 20, 10, 0.6);
  EXPECT_NEAR(frame_features(tilted).elongation, 2.0, 0.1);
}

TEST(Features, RangesOnRandomShapes) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 40; ++i) {
    auto f = fx::random_low_harmonic_frame(rng);
    f.centroid = {32, 32};
    const auto r = rasterize_contour(efd_decode(f, 256), 64, 64);
    const auto m = keep_largest_component(r.mask);
    if (m.count() == 0) continue;
    const auto ff = frame_features(m);
    EXPECT_GT(ff.area, 0.0);
    EXPECT_GE(ff.roundness, 0.0);
    EXPECT_LE(ff.roundness, 1.0);
    EXPECT_GE(ff.elongation, 1.0);
    EXPECT_GT(ff.convexity, 0.0);
    EXPECT_LE(ff.convexity, 1.0);
  }
}

TEST(Features, InvalidFramesBecomeGaps) {
  const auto disk = fx::filled_disk(48, 48, {24, 24}, 10);
  auto two = disk;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) two.set(x, y, true);
  const MaskVideo v{{disk, MaskFrame(48, 48), two, disk}};
  const auto c = feature_curves(v);
  for (const auto& curve : c) {
    EXPECT_FALSE(std::isnan(curve.values[0]));
    EXPECT_TRUE(std::isnan(curve.values[1]));
    EXPECT_TRUE(std::isnan(curve.values[2]));
    EXPECT_FALSE(std::isnan(curve.values[3]));
  }
  try {
    feature_curves(v, true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoForeground);
    EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos);
  }
}

TEST(Features, TranslationAndScaleInvariance) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const double a = 10 + 4 * u(rng), b = a / (1.0 + u(rng)), angle = std::numbers::pi * u(rng);
    const Point c{40 + u(rng), 40 + u(rng)};
    const auto base = frame_features(ellipse_mask(96, c, a, b, angle));
    const auto moved = frame_features(ellipse_mask(96, {c.x + 7, c.y - 5}, a, b, angle));
    // Integer shifts move the pixel set exactly.
    EXPECT_EQ(moved.area, base.area);
    EXPECT_NEAR(moved.roundness, base.roundness, 1e-9);
    EXPECT_NEAR(moved.elongation, base.elongation, 1e-9);
    EXPECT_NEAR(moved.convexity, base.convexity, 1e-9);

    const auto big = frame_features(ellipse_mask(96, {48 + u(rng), 48 + u(rng)}, 2 * a, 2 * b, angle));
    EXPECT_NEAR(big.area / (4.0 * base.area), 1.0, 0.05);
    EXPECT_NEAR(big.roundness / base.roundness, 1.0, 0.05);
    EXPECT_NEAR(big.elongation / base.elongation, 1.0, 0.05);
    EXPECT_NEAR(big.convexity / base.convexity, 1.0, 0.05);
  }
}

// ---------------------------------------------------------------------------
// Diff

TEST(Diff, Examples) {
  const auto a = areas({{10, 20, 30}, {20, 30, 40}, {30, 40, 50}});
  EXPECT_EQ(diff_metric(a, a, Feature::Area), 0.0);
  EXPECT_EQ(diff_metric(a, a, Feature::Roundness), 0.0);

  auto shifted = areas({{13.5, 23.5, 33.5}, {23.5, 33.5, 43.5}, {33.5, 43.5, 53.5}});
  EXPECT_NEAR(diff_metric(a, shifted, Feature::Area), 3.5, 1e-12);
  auto lowered = areas({{7, 17, 27}, {17, 27, 37}, {27, 37, 47}});
  EXPECT_NEAR(diff_metric(a, lowered, Feature::Area), 3.0, 1e-12);

  // Hand computation.  Means of a: 20, 30, 40.  b is truncated to length 3
  // and its first video has a gap at t = 1: means 12, (22 + 26) / 2 = 24, 36.
  // Diff = (8 + 6 + 4) / 3 = 6.
  const auto b = areas({{12, kNan, 36, 99}, {14, 22, 30, 99}, {10, 26, 42, 99}});
  EXPECT_NEAR(diff_metric(a, b, Feature::Area), 6.0, 1e-12);
  EXPECT_NEAR(diff_metric(b, a, Feature::Area), 6.0, 1e-12);
  EXPECT_EQ(code_of([&] { diff_metric({}, a, Feature::Area); }), ErrorCode::EmptyDataset);
}

TEST(Diff, PairwiseMode) {
  const auto a = areas({{1, 2}, {3, 4}});
  const auto b = areas({{2, 2}});
  // Pairs: |1-2|,|2-2| -> 0.5 and |3-2|,|4-2| -> 1.5; mean 1.0.
  EXPECT_NEAR(pairwise_diff(a, b, Feature::Area), 1.0, 1e-12);
  EXPECT_EQ(pairwise_diff(a, a, Feature::Roundness), 0.0);
}

TEST(Diff, PopulationCurveQuartiles) {
  const auto d = areas({{1}, {2}, {3}, {4}, {5}});
  const auto pc = population_curve(d, Feature::Area, 1);
  EXPECT_DOUBLE_EQ(pc.mean[0], 3.0);
  EXPECT_DOUBLE_EQ(pc.q25[0], 2.0);
  EXPECT_DOUBLE_EQ(pc.q75[0], 4.0);
  EXPECT_DOUBLE_EQ(quantile({1, 2}, 0.5), 1.5);
}

// ---------------------------------------------------------------------------
// DTW

TEST(Dtw, Examples) {
  const std::vector<double> x{1, 2, 3}, y{1, 2, 2, 3}, z0{0, 0, 0}, z1{1, 1, 1};
  EXPECT_EQ(dtw_distance(x, x), 0.0);
  EXPECT_EQ(dtw_distance(x, y), 0.0);
  EXPECT_EQ(dtw_distance(z0, z1), 1.0);
  EXPECT_EQ(dtw_brute(x, y), 0.0);
  EXPECT_EQ(code_of([&] { dtw_distance({}, x); }), ErrorCode::EmptyCurve);
}

TEST(Dtw, MatchesExhaustiveAlignment) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> len(1, 8), val(-64, 64);
  for (int pair = 0; pair < 1000; ++pair) {
    std::vector<double> x(static_cast<std::size_t>(len(rng))), y(static_cast<std::size_t>(len(rng)));
    // Dyadic values keep every partial sum exact.
    for (auto& v : x) v = val(rng) / 8.0;
    for (auto& v : y) v = val(rng) / 8.0;
    EXPECT_EQ(dtw_distance(x, y), dtw_brute(x, y)) << pair;
  }
}

TEST(Dtw, SymmetryIdentityAndDiagonalBound) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 30);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> x(static_cast<std::size_t>(len(rng))), y(static_cast<std::size_t>(len(rng)));
    for (auto& v : x) v = n(rng);
    for (auto& v : y) v = n(rng);
    EXPECT_NEAR(dtw_distance(x, y), dtw_distance(y, x), 1e-12);
    EXPECT_EQ(dtw_distance(x, x), 0.0);
    EXPECT_GE(dtw_distance(x, y), 0.0);
    std::vector<double> w(x.size());
    for (auto& v : w) v = n(rng);
    double diag = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) diag += std::abs(x[t] - w[t]);
    EXPECT_LE(dtw_distance(x, w), diag / static_cast<double>(x.size()) + 1e-12);
  }
}

TEST(Dtw, MetricOnMeanCurvesDropsGaps) {
  const auto a = areas({{1, kNan, 3}, {1, kNan, 3}});
  const auto b = areas({{1, 3}});
  EXPECT_EQ(dtw_metric(a, b, Feature::Area), 0.0);
  EXPECT_EQ(code_of([&] { dtw_metric(a, {}, Feature::Area); }), ErrorCode::EmptyDataset);
}

// ---------------------------------------------------------------------------
// Reports

TEST(Report, IdenticalSetsScoreZero) {
  const auto real = fx::pulsating_dataset(4, 6, 64, 5);
  const auto rep = evaluate(real, real);
  EXPECT_EQ(rep.replications, 1);
  for (const auto& row : rep.rows) {
    EXPECT_EQ(row.diff.mean, 0.0);
    EXPECT_EQ(row.dtw.mean, 0.0);
    EXPECT_EQ(row.diff.std, 0.0);
  }
  EXPECT_EQ(row_for(rep, Feature::Elongation).feature, Feature::Elongation);
  EXPECT_EQ(rep.curves.size(), 8u);
  EXPECT_EQ(code_of([&] { evaluate({}, real); }), ErrorCode::EmptyDataset);
}

TEST(Report, ReplicationsAreSeededAndDeterministic) {
  const auto real = fx::pulsating_dataset(4, 6, 64, 6);
  auto gen = [](std::uint64_t s) { return fx::pulsating_dataset(4, 6, 64, 100 + s); };
  const auto a = evaluate(real, gen, 3, 9), b = evaluate(real, gen, 3, 9);
  for (std::size_t i = 0; i < 4; ++i) {
    ASSERT_EQ(a.rows[i].diff_runs.size(), 3u);
    EXPECT_EQ(a.rows[i].diff_runs, b.rows[i].diff_runs);
    EXPECT_EQ(a.rows[i].dtw_runs, b.rows[i].dtw_runs);
    EXPECT_GT(a.rows[i].diff.std, 0.0);
    EXPECT_GE(a.rows[i].dtw.mean, 0.0);
    EXPECT_LE(a.rows[i].dtw.mean, a.rows[i].diff.mean + 1e-12);
  }
  std::ostringstream ta, tb;
  write_report_table(ta, a);
  write_report_table(tb, b);
  EXPECT_EQ(ta.str(), tb.str());
  EXPECT_EQ(code_of([&] { evaluate(real, gen, 0, 1); }), ErrorCode::InvalidArgument);
}

TEST(Report, OutputFormats) {
  const auto real = fx::pulsating_dataset(3, 5, 64, 7);
  const auto rep = evaluate(real, fx::pulsating_dataset(3, 5, 64, 8));

  std::ostringstream table;
  write_report_table(table, rep);
  std::istringstream tl(table.str());
  std::string line;
  int lines = 0;
  while (std::getline(tl, line)) ++lines;
  EXPECT_EQ(lines, 2 + 8 + 1);
  EXPECT_NE(table.str().find("roundness   Diff"), std::string::npos);

  std::ostringstream csv;
  write_report_csv(csv, rep);
  std::istringstream cl(csv.str());
  std::getline(cl, line);
  EXPECT_EQ(line, "feature,metric,mean,std,replications");
  std::getline(cl, line);
  EXPECT_EQ(line.rfind("area,diff,", 0), 0u);

  std::ostringstream curves;
  write_curves_csv(curves, rep);
  std::istringstream vl(curves.str());
  std::getline(vl, line);
  EXPECT_EQ(line, "t,feature,mean,q25,q75,dataset");
  int rows = 0;
  while (std::getline(vl, line)) ++rows;
  EXPECT_EQ(rows, 8 * 5);

  std::ostringstream svg;
  write_curves_svg(svg, rep);
  const auto s = svg.str();
  EXPECT_EQ(s.rfind("<svg", 0), 0u);
  int polylines = 0;
  for (std::size_t p = s.find("<polyline"); p != std::string::npos; p = s.find("<polyline", p + 1)) ++polylines;
  EXPECT_EQ(polylines, 8);
}

// ---------------------------------------------------------------------------
// Ablation

TEST(Ablation, CsvFormat) {
  std::vector<pipeline::AblationRow> rows{{1, Feature::Area, "diff", {12.5, 0.25}},
                                          {9, Feature::Convexity, "dtw", {0.0125, 0.0}}};
  std::ostringstream os;
  pipeline::write_ablation_csv(os, rows);
  EXPECT_EQ(os.str(), "d,feature,metric,mean,std\n1,area,diff,12.5,0.25\n9,convexity,dtw,0.0125,0\n");
}

TEST(Ablation, EccentricEllipsesNeedThirdHarmonic) {
  // Sampled uniformly in arc length, an eccentric ellipse spreads power into
  // harmonics 3, 5, ...; its first harmonic alone is a rounder ellipse.
  const auto videos = fx::ellipse_dataset(12, 2, 64, 13);
  const auto real = dataset_features(videos);
  auto rebuilt = [&](int d) {
    std::vector<MaskVideo> out;
    for (const auto& s : pipeline::encode_all(videos, d, 128)) out.push_back(pipeline::decode_series(s, 64, 256));
    return dataset_features(out);
  };
  const auto one = rebuilt(1), three = rebuilt(3);
  const auto pc_real = population_curve(real, Feature::Elongation, 2).mean;
  const auto pc_one = population_curve(one, Feature::Elongation, 2).mean;
  EXPECT_LT(pc_one[0], pc_real[0] - 0.05);
  EXPECT_LE(diff_metric(real, three, Feature::Elongation), 0.05);
  EXPECT_LT(diff_metric(real, three, Feature::Elongation), diff_metric(real, one, Feature::Elongation));
}

TEST(Ablation, SingleHarmonicOnEllipses) {
  pipeline::PipelineConfig cfg;
  cfg.canvas = 48;
  cfg.n = 128;
  cfg.count = 16;
  cfg.k_steps = 100;
  cfg.d_values = {1};
  cfg.seed = 3;
  cfg.train.steps = 800;
  cfg.train.batch_size = 16;
  cfg.train.learning_rate = 3e-3;
  cfg.train.model.width = 32;
  cfg.train.model.heads = 2;
  cfg.train.model.blocks = 2;
  // Near-circular ellipses: their arc-length first harmonic is the whole shape.
  const auto train = fx::ellipse_dataset(40, 8, 48, 11, 1.0, 1.05);
  const auto held_out = fx::ellipse_dataset(16, 8, 48, 12, 1.0, 1.05);
  int seen = 0;
  const auto rows = pipeline::ablation_sweep(train, held_out, cfg, nullptr, [&](int d) { seen = d; });
  EXPECT_EQ(seen, 1);
  ASSERT_EQ(rows.size(), 8u);
  double mean_area = 0.0;
  for (const auto& v : held_out) mean_area += static_cast<double>(v.frames[0].count());
  mean_area /= static_cast<double>(held_out.size());
  for (const auto& r : rows) {
    EXPECT_EQ(r.d, 1);
    if (r.metric != "diff") continue;
    switch (r.feature) {
      case Feature::Area: EXPECT_LE(r.value.mean, 0.08 * mean_area); break;
      case Feature::Elongation: EXPECT_LE(r.value.mean, 0.15); break;
      default: EXPECT_LE(r.value.mean, 0.05) << feature_name(r.feature);
    }
  }
  cfg.d_values.clear();
  EXPECT_EQ(code_of([&] { pipeline::ablation_sweep(train, held_out, cfg); }), ErrorCode::InvalidConfig);
}
