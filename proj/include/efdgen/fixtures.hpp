#pragma once

// Synthetic datasets bundled for offline runs: analytic shapes, pulsating
// ellipse phantom videos, corner-rich shapes and small labelled tracking
// videos with lineages.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include "efdgen/dataset.hpp"
#include "efdgen/efd.hpp"
#include "efdgen/geometry.hpp"
#include "efdgen/mask.hpp"

namespace efdgen::fixtures {

inline Contour ellipse_contour(Point center, double semi_major, double semi_minor, double angle, int n = 256,
                               double phase = 0.0) {
  Contour c;
  c.points.reserve(static_cast<std::size_t>(n));
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int j = 0; j < n; ++j) {
    const double s = phase + 2.0 * std::numbers::pi * j / n;
    const double ex = semi_major * std::cos(s), ey = semi_minor * std::sin(s);
    c.points.push_back({center.x + ca * ex - sa * ey, center.y + sa * ex + ca * ey});
  }
  return c;
}

inline Contour circle_contour(Point center, double radius, int n = 256) {
  return ellipse_contour(center, radius, radius, 0.0, n);
}

// Axis-aligned square with side `side` centred at `center`, starting at the
// lower-left corner and running counterclockwise.
inline Contour square_contour(Point center, double side) {
  const double h = side / 2.0;
  return {{{center.x - h, center.y - h}, {center.x + h, center.y - h}, {center.x + h, center.y + h},
           {center.x - h, center.y + h}}};
}

// |x/a|^p + |y/b|^p = 1, rotated; p > 2 gives rounded-rectangle corners.
inline Contour superellipse_contour(Point center, double a, double b, double p, double angle, int n = 512) {
  Contour c;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int j = 0; j < n; ++j) {
    const double s = 2.0 * std::numbers::pi * j / n;
    const double cs = std::cos(s), sn = std::sin(s);
    const double ex = a * std::copysign(std::pow(std::abs(cs), 2.0 / p), cs);
    const double ey = b * std::copysign(std::pow(std::abs(sn), 2.0 / p), sn);
    c.points.push_back({center.x + ca * ex - sa * ey, center.y + sa * ex + ca * ey});
  }
  return c;
}

inline MaskFrame filled_disk(int width, int height, Point center, double radius) {
  return rasterize_contour(circle_contour(center, radius, 720), height, width).mask;
}

inline MaskFrame filled_rect(int width, int height, int x0, int y0, int x1, int y1) {
  MaskFrame m(width, height);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) m.set(x, y, true);
  return m;
}

// Parameters of one pulsating/rotating ellipse phantom video.
struct PulsatingParams {
  double radius = 14.0;       // equivalent radius at unit area factor
  double aspect = 1.3;        // major/minor
  double angle0 = 0.0;
  double spin = 0.0;          // rad per frame
  double pulse_phase = 0.0;
  double drop_frame = 10.0;
};

inline PulsatingParams random_pulsating(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PulsatingParams p;
  p.radius = 13.0 + 3.0 * u(rng);
  p.aspect = 1.2 + 0.35 * u(rng);
  p.angle0 = std::numbers::pi * u(rng);
  p.spin = 0.04 * (u(rng) - 0.5);
  p.pulse_phase = 0.6 * (u(rng) - 0.5);
  p.drop_frame = 9.0 + 2.0 * u(rng);
  return p;
}

// Area factor over time: slow sinusoidal pulsation, a sudden drop around
// `drop_frame` (division-like) and a linear recovery to the end.
inline double pulsating_area_factor(const PulsatingParams& p, double t, int length) {
  double f = 1.0 + 0.12 * std::sin(2.0 * std::numbers::pi * 1.5 * t / length + p.pulse_phase);
  if (t >= p.drop_frame) f *= 0.6 + 0.35 * (t - p.drop_frame) / std::max(1.0, length - p.drop_frame);
  return f;
}

inline Contour pulsating_contour(const PulsatingParams& p, int t, int length, int canvas) {
  const double area = pulsating_area_factor(p, t, length);
  // Elongation peaks just before the drop.
  const double stretch = 1.0 + 0.25 * std::exp(-0.5 * std::pow((t - (p.drop_frame - 1.0)) / 1.5, 2.0));
  const double aspect = p.aspect * stretch;
  const double r = p.radius * std::sqrt(area);
  return ellipse_contour({canvas / 2.0, canvas / 2.0}, r * std::sqrt(aspect), r / std::sqrt(aspect),
                         p.angle0 + p.spin * t, 360);
}

inline MaskVideo pulsating_video(const PulsatingParams& p, int length, int canvas) {
  MaskVideo v;
  for (int t = 0; t < length; ++t)
    v.frames.push_back(rasterize_contour(pulsating_contour(p, t, length, canvas), canvas, canvas).mask);
  return v;
}

inline std::vector<MaskVideo> pulsating_dataset(int count, int length, int canvas, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<MaskVideo> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(pulsating_video(random_pulsating(rng), length, canvas));
  return out;
}

// Static ellipses with a random size, aspect ratio and orientation, one per video.
inline std::vector<MaskVideo> ellipse_dataset(int count, int length, int canvas, std::uint64_t seed,
                                              double min_aspect = 1.2, double max_aspect = 1.8) {
  require(min_aspect >= 1.0 && max_aspect >= min_aspect, ErrorCode::InvalidArgument, "bad aspect range");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MaskVideo> out;
  for (int i = 0; i < count; ++i) {
    const double a = 0.25 * canvas + 0.1 * canvas * u(rng);
    const double b = a / (min_aspect + (max_aspect - min_aspect) * u(rng));
    const double angle = std::numbers::pi * u(rng);
    MaskVideo v;
    for (int t = 0; t < length; ++t) {
      const double grow = 1.0 + 0.05 * std::sin(2.0 * std::numbers::pi * t / length);
      v.frames.push_back(rasterize_contour(ellipse_contour({canvas / 2.0, canvas / 2.0}, a * grow, b * grow,
                                                           angle + 0.02 * t, 360),
                                           canvas, canvas)
                             .mask);
    }
    out.push_back(std::move(v));
  }
  return out;
}

// Analytic ellipses resampled uniformly in arc length.  Under that
// parametrization an ellipse is a single harmonic only in the limit of a
// circle, so `max_aspect` bounds how much power leaks past the first one.
inline std::vector<Contour> ellipse_contours(int count, double max_aspect, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Contour> out;
  for (int i = 0; i < count; ++i) {
    const double a = 10.0 + 20.0 * u(rng);
    const double aspect = 1.0 + (max_aspect - 1.0) * u(rng);
    out.push_back(resample_arclength(ellipse_contour({0, 0}, a, a / aspect, std::numbers::pi * u(rng), 4096,
                                                     2.0 * std::numbers::pi * u(rng)),
                                     n));
  }
  return out;
}

// Rounded squares and rectangles (superellipse exponent 6..10).
inline std::vector<MaskVideo> square_dataset(int count, int length, int canvas, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MaskVideo> out;
  for (int i = 0; i < count; ++i) {
    const double a = 0.2 * canvas + 0.1 * canvas * u(rng);
    const double b = a * (0.7 + 0.3 * u(rng));
    const double p = 6.0 + 4.0 * u(rng);
    const double angle = 0.5 * std::numbers::pi * u(rng);
    MaskVideo v;
    for (int t = 0; t < length; ++t)
      v.frames.push_back(
          rasterize_contour(superellipse_contour({canvas / 2.0, canvas / 2.0}, a, b, p, angle + 0.01 * t), canvas,
                            canvas)
              .mask);
    out.push_back(std::move(v));
  }
  return out;
}

// Random low-order EFD frame: a dominant first ellipse plus harmonics whose
// amplitude decays as 1/n^2.
inline EfdFrame random_low_harmonic_frame(std::mt19937_64& rng, int d = 5, double radius = 18.0,
                                          double detail = 0.25) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  EfdFrame f;
  const double aspect = 1.0 + 0.8 * u(rng);
  const double angle = std::numbers::pi * u(rng);
  const double a = radius * std::sqrt(aspect), b = radius / std::sqrt(aspect);
  const double ca = std::cos(angle), sa = std::sin(angle);
  f.harmonics.push_back({a * ca, -b * sa, a * sa, b * ca});
  for (int n = 2; n <= d; ++n) {
    const double amp = detail * radius / (n * n);
    f.harmonics.push_back({amp * normal(rng), amp * normal(rng), amp * normal(rng), amp * normal(rng)});
  }
  return f;
}

// Labelled video with cells drifting on a field; some tracks divide into
// two daughters.  Cells are discs or ellipses, kept apart by construction.
struct TrackingScene {
  LabeledVideo video;
  int canvas = 0;
};

inline TrackingScene tracking_scene(int frames, int field, int cells, std::uint64_t seed, int division_every = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Cell {
    int id;
    Point pos;
    Point vel;
    double radius;
    double aspect;
    double angle;
  };
  std::vector<Cell> alive;
  TrackingScene scene;
  scene.video.frames.assign(static_cast<std::size_t>(frames), LabelImage{field, field, std::vector<std::uint16_t>(
                                                                                           static_cast<std::size_t>(field) * field, 0)});
  std::map<int, TrackRecord> records;
  int next_id = 1;
  const int grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cells))));
  const double spacing = static_cast<double>(field) / grid;
  for (int i = 0; i < cells; ++i) {
    const Point home{spacing * (i % grid + 0.5), spacing * (i / grid + 0.5)};
    alive.push_back({next_id, home, {0.3 * (u(rng) - 0.5), 0.3 * (u(rng) - 0.5)}, 0.18 * spacing + 0.05 * spacing * u(rng),
                     1.0 + 0.4 * u(rng), std::numbers::pi * u(rng)});
    records[next_id] = {next_id, 0, 0, 0};
    ++next_id;
  }
  for (int t = 0; t < frames; ++t) {
    if (division_every > 0 && t > 0 && t % division_every == 0 && !alive.empty()) {
      const std::size_t k = static_cast<std::size_t>(t / division_every - 1) % alive.size();
      const Cell parent = alive[k];
      records[parent.id].end = t - 1;
      alive.erase(alive.begin() + static_cast<long>(k));
      for (int s = 0; s < 2; ++s) {
        const double off = (s == 0 ? -0.5 : 0.5) * parent.radius;
        alive.push_back({next_id, {parent.pos.x + off * std::cos(parent.angle), parent.pos.y + off * std::sin(parent.angle)},
                         parent.vel, parent.radius * 0.75, 1.1, parent.angle});
        records[next_id] = {next_id, t, t, parent.id};
        ++next_id;
      }
    }
    auto& img = scene.video.frames[static_cast<std::size_t>(t)];
    for (auto& c : alive) {
      c.pos = c.pos + c.vel;
      c.angle += 0.02;
      const double a = c.radius * std::sqrt(c.aspect), b = c.radius / std::sqrt(c.aspect);
      const double ca = std::cos(c.angle), sa = std::sin(c.angle);
      const int x0 = std::max(0, static_cast<int>(c.pos.x - a - 1)), x1 = std::min(field - 1, static_cast<int>(c.pos.x + a + 1));
      const int y0 = std::max(0, static_cast<int>(c.pos.y - a - 1)), y1 = std::min(field - 1, static_cast<int>(c.pos.y + a + 1));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double dx = x + 0.5 - c.pos.x, dy = y + 0.5 - c.pos.y;
          const double ex = ca * dx + sa * dy, ey = -sa * dx + ca * dy;
          if ((ex * ex) / (a * a) + (ey * ey) / (b * b) <= 1.0 && img.ids[static_cast<std::size_t>(y) * field + x] == 0)
            img.ids[static_cast<std::size_t>(y) * field + x] = static_cast<std::uint16_t>(c.id);
        }
      records[c.id].end = t;
    }
  }
  for (const auto& [id, r] : records) scene.video.lineage.push_back(r);
  return scene;
}

}  // namespace efdgen::fixtures
