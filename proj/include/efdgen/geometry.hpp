#pragma once

// Pixel-space geometry for single-phantom masks.
//
// Coordinate convention: pixel (x, y) covers the unit square [x, x+1] x [y, y+1]
// and its center sits at (x + 0.5, y + 0.5).  Signed area uses the usual
// shoelace sign on (x, y), so "counterclockwise" means positive signed area.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numbers>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "efdgen/error.hpp"
#include "efdgen/mask.hpp"

namespace efdgen {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Point&, const Point&) = default;
};

inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }
inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Closed polyline; the last point connects back to the first.
struct Contour {
  std::vector<Point> points;

  std::size_t size() const noexcept { return points.size(); }
  const Point& operator[](std::size_t i) const { return points[i]; }
};

using ContourVideo = std::vector<Contour>;

inline double signed_area(std::span<const Point> pts) {
  double acc = 0.0;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) acc += cross(pts[i], pts[(i + 1) % n]);
  return 0.5 * acc;
}
inline double signed_area(const Contour& c) { return signed_area(std::span<const Point>(c.points)); }

inline double perimeter(const Contour& c) {
  double acc = 0.0;
  const std::size_t n = c.size();
  for (std::size_t i = 0; i < n; ++i) acc += distance(c[i], c[(i + 1) % n]);
  return acc;
}

// Polygon through the midpoints of each edge; shortens pixel staircases.
inline Contour midpoint_smooth(const Contour& c) {
  Contour out;
  const std::size_t n = c.size();
  out.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.points.push_back(0.5 * (c[i] + c[(i + 1) % n]));
  return out;
}

// Length of a traced pixel contour after `passes` rounds of midpoint smoothing.
inline double traced_perimeter(const Contour& c, int passes = 2) {
  Contour s = c;
  for (int i = 0; i < passes; ++i) s = midpoint_smooth(s);
  return perimeter(s);
}

inline Point centroid_of_points(const Contour& c) {
  Point acc;
  for (const auto& p : c.points) acc = acc + p;
  return (1.0 / static_cast<double>(c.size())) * acc;
}

inline Contour translated(Contour c, Point offset) {
  for (auto& p : c.points) p = p + offset;
  return c;
}

// ---------------------------------------------------------------------------
// Connectivity

struct Topology {
  int components = 0;
  int holes = 0;
  friend bool operator==(const Topology&, const Topology&) = default;
};

namespace detail {

// Labels 4-connected foreground components; returns labels (0 = background)
// and the number of components.
inline std::pair<std::vector<int>, int> label_foreground(const MaskFrame& frame) {
  const int w = frame.width(), h = frame.height();
  std::vector<int> labels(frame.size(), 0);
  int next = 0;
  std::vector<int> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (!frame.at(x, y) || labels[idx]) continue;
      ++next;
      labels[idx] = next;
      stack.assign(1, static_cast<int>(idx));
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int cx = cur % w, cy = cur / w;
        constexpr std::array<std::pair<int, int>, 4> nb{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
        for (auto [dx, dy] : nb) {
          const int nx = cx + dx, ny = cy + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h || !frame.at(nx, ny)) continue;
          const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
          if (labels[nidx]) continue;
          labels[nidx] = next;
          stack.push_back(static_cast<int>(nidx));
        }
      }
    }
  }
  return {std::move(labels), next};
}

// Marks background pixels 8-connected to the (virtual) outside of the frame.
inline std::vector<std::uint8_t> exterior_background(const MaskFrame& frame) {
  const int w = frame.width(), h = frame.height();
  std::vector<std::uint8_t> outside(frame.size(), 0);
  std::vector<int> stack;
  auto seed = [&](int x, int y) {
    const std::size_t idx = static_cast<std::size_t>(y) * w + x;
    if (!frame.at(x, y) && !outside[idx]) {
      outside[idx] = 1;
      stack.push_back(static_cast<int>(idx));
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(x, 0);
    seed(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed(0, y);
    seed(w - 1, y);
  }
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    const int cx = cur % w, cy = cur / w;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = cx + dx, ny = cy + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        seed(nx, ny);
      }
    }
  }
  return outside;
}

}  // namespace detail

// Foreground components use 4-connectivity; holes are 8-connected background
// regions that do not reach the frame border.
inline Topology count_components_and_holes(const MaskFrame& frame) {
  Topology topo;
  topo.components = detail::label_foreground(frame).second;

  const int w = frame.width(), h = frame.height();
  auto seen = detail::exterior_background(frame);
  std::vector<int> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (frame.at(x, y) || seen[idx]) continue;
      ++topo.holes;
      seen[idx] = 1;
      stack.assign(1, static_cast<int>(idx));
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int cx = cur % w, cy = cur / w;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h || frame.at(nx, ny)) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
            if (seen[nidx]) continue;
            seen[nidx] = 1;
            stack.push_back(static_cast<int>(nidx));
          }
        }
      }
    }
  }
  return topo;
}

inline bool is_valid_phantom(const MaskFrame& frame) {
  return count_components_and_holes(frame) == Topology{1, 0};
}

// Keeps the largest 4-connected component (ties go to the lowest label) and
// fills every hole in it.
inline MaskFrame keep_largest_component(const MaskFrame& frame) {
  auto [labels, n] = detail::label_foreground(frame);
  MaskFrame out(frame.width(), frame.height());
  if (n == 0) return out;
  std::vector<std::size_t> sizes(static_cast<std::size_t>(n) + 1, 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  sizes[0] = 0;
  const auto best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t i = 0; i < labels.size(); ++i) out.bits()[i] = labels[i] == best ? 1 : 0;
  const auto outside = detail::exterior_background(out);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!out.bits()[i] && !outside[i]) out.bits()[i] = 1;
  return out;
}

// ---------------------------------------------------------------------------
// Contour tracing (marching squares on pixel centers)

// Traces the outer boundary of a valid phantom.  Vertices sit at midpoints
// between a foreground pixel center and a 4-adjacent background pixel center,
// so a lone pixel yields a 4-vertex diamond.  Saddle cells are split so that
// diagonal foreground pixels stay separate (4-connectivity).
inline Contour extract_contour(const MaskFrame& frame) {
  const auto topo = count_components_and_holes(frame);
  require(topo.components > 0, ErrorCode::NoForeground, "frame has no foreground");
  require(topo.components == 1, ErrorCode::MultipleComponents,
          "frame has " + std::to_string(topo.components) + " components");
  require(topo.holes == 0, ErrorCode::HasHoles,
          "frame has " + std::to_string(topo.holes) + " holes");

  // Samples live on a grid padded by one background pixel on each side:
  // padded sample (i, j) is pixel (i-1, j-1) with center (i-0.5, j-0.5).
  const int pw = frame.width() + 2;
  const int ph = frame.height() + 2;
  auto sample = [&](int i, int j) { return frame.get(i - 1, j - 1) != 0; };
  // Edge ids: horizontal edge (i,j)-(i+1,j) -> 2*(j*pw+i); vertical
  // (i,j)-(i,j+1) -> 2*(j*pw+i)+1.
  auto h_edge = [&](int i, int j) { return 2L * (static_cast<long>(j) * pw + i); };
  auto v_edge = [&](int i, int j) { return 2L * (static_cast<long>(j) * pw + i) + 1; };
  auto edge_point = [&](long id) {
    const long cell = id / 2;
    const int i = static_cast<int>(cell % pw), j = static_cast<int>(cell / pw);
    if (id % 2 == 0) return Point{static_cast<double>(i), j - 0.5};
    return Point{i - 0.5, static_cast<double>(j)};
  };

  std::unordered_map<long, std::array<long, 2>> adj;
  long start = -1;
  auto link = [&](long a, long b) {
    if (start < 0) start = a;
    auto add = [&](long from, long to) {
      auto [it, fresh] = adj.try_emplace(from, std::array<long, 2>{-1, -1});
      auto& slots = it->second;
      (slots[0] < 0 ? slots[0] : slots[1]) = to;
    };
    add(a, b);
    add(b, a);
  };

  for (int j = 0; j + 1 < ph; ++j) {
    for (int i = 0; i + 1 < pw; ++i) {
      const bool c0 = sample(i, j), c1 = sample(i + 1, j);
      const bool c2 = sample(i + 1, j + 1), c3 = sample(i, j + 1);
      const int mask = (c0 ? 1 : 0) | (c1 ? 2 : 0) | (c2 ? 4 : 0) | (c3 ? 8 : 0);
      if (mask == 0 || mask == 15) continue;
      const long top = h_edge(i, j), right = v_edge(i + 1, j);
      const long bottom = h_edge(i, j + 1), left = v_edge(i, j);
      if (mask == 5) {  // c0 and c2 diagonal
        link(left, top);
        link(right, bottom);
      } else if (mask == 10) {  // c1 and c3 diagonal
        link(top, right);
        link(bottom, left);
      } else {
        std::array<long, 2> ends{};
        int k = 0;
        if (c0 != c1) ends[k++] = top;
        if (c1 != c2) ends[k++] = right;
        if (c3 != c2) ends[k++] = bottom;
        if (c0 != c3) ends[k++] = left;
        link(ends[0], ends[1]);
      }
    }
  }

  // With one component and no holes there is exactly one loop.
  Contour out;
  long prev = -1, cur = start;
  do {
    out.points.push_back(edge_point(cur));
    const auto& nb = adj.at(cur);
    const long next = nb[0] != prev ? nb[0] : nb[1];
    prev = cur;
    cur = next;
  } while (cur != start && out.points.size() <= adj.size());

  if (signed_area(out) < 0.0) std::reverse(out.points.begin() + 1, out.points.end());
  return out;
}

// ---------------------------------------------------------------------------
// Arc-length resampling

// Returns n points spaced uniformly in arc length along the closed polyline,
// starting at the input's first point.
inline Contour resample_arclength(const Contour& contour, int n) {
  require(contour.size() >= 3, ErrorCode::InvalidArgument, "contour needs at least 3 points");
  require(n >= 8, ErrorCode::InvalidArgument, "resampling requires n >= 8");
  const std::size_t m = contour.size();
  std::vector<double> cum(m + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    cum[i + 1] = cum[i] + distance(contour[i], contour[(i + 1) % m]);
  const double total = cum[m];
  require(total > 0.0, ErrorCode::DegenerateContour, "contour has zero perimeter");

  Contour out;
  out.points.reserve(static_cast<std::size_t>(n));
  std::size_t seg = 0;
  for (int k = 0; k < n; ++k) {
    const double target = total * static_cast<double>(k) / n;
    while (seg + 1 < m && cum[seg + 1] <= target) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double t = len > 0.0 ? (target - cum[seg]) / len : 0.0;
    const Point a = contour[seg], b = contour[(seg + 1) % m];
    out.points.push_back(a + t * (b - a));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rasterization

struct RasterResult {
  MaskFrame mask;
  bool degenerate = false;         // zero-area input
  bool self_intersecting = false;  // non-adjacent edges cross
};

inline bool segments_cross(Point p1, Point p2, Point q1, Point q2) {
  const double d1 = cross(q2 - q1, p1 - q1), d2 = cross(q2 - q1, p2 - q1);
  const double d3 = cross(p2 - p1, q1 - p1), d4 = cross(p2 - p1, q2 - p1);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

inline bool is_self_intersecting(const Contour& c) {
  const std::size_t n = c.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (segments_cross(c[i], c[(i + 1) % n], c[j], c[(j + 1) % n])) return true;
    }
  }
  return false;
}

// Even-odd scanline fill: a pixel is set when its center is inside.
inline RasterResult rasterize_contour(const Contour& contour, int height, int width) {
  require(height >= 8 && width >= 8, ErrorCode::InvalidArgument, "canvas must be at least 8x8");
  for (const auto& p : contour.points)
    require(p.x >= 0.0 && p.y >= 0.0 && p.x < width && p.y < height, ErrorCode::OutOfCanvas,
            "contour point outside the canvas");

  RasterResult result{MaskFrame(width, height), false, false};
  const std::size_t n = contour.size();
  if (n < 3 || std::abs(signed_area(contour)) < 1e-12) {
    result.degenerate = true;
    return result;
  }
  result.self_intersecting = is_self_intersecting(contour);

  std::vector<double> xs;
  for (int row = 0; row < height; ++row) {
    const double y = row + 0.5;
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Point a = contour[i], b = contour[(i + 1) % n];
      // Half-open rule so shared vertices are counted once.
      if ((a.y <= y && b.y > y) || (b.y <= y && a.y > y))
        xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      // Pixel centers x+0.5 in [xs[k], xs[k+1]).
      const int x0 = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
      const int x1 = std::min(width - 1, static_cast<int>(std::ceil(xs[k + 1] - 0.5)) - 1);
      for (int x = x0; x <= x1; ++x) result.mask.set(x, row, true);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Moments and hull

struct Axes {
  double major = 0.0;
  double minor = 0.0;
};

// Ellipse-equivalent axes, 4*sqrt(eigenvalue) of the second central moments.
// Pixels are unit squares, so each contributes its own 1/12 variance per axis.
inline Axes moments_axes(const MaskFrame& frame) {
  double n = 0, sx = 0, sy = 0;
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x)
      if (frame.at(x, y)) {
        n += 1;
        sx += x;
        sy += y;
      }
  require(n > 0, ErrorCode::NoForeground, "frame has no foreground");
  const double mx = sx / n, my = sy / n;
  double cxx = 0, cyy = 0, cxy = 0;
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x)
      if (frame.at(x, y)) {
        const double dx = x - mx, dy = y - my;
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
      }
  cxx = cxx / n + 1.0 / 12.0;
  cyy = cyy / n + 1.0 / 12.0;
  cxy /= n;
  const double mean = 0.5 * (cxx + cyy);
  const double disc = std::sqrt(0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy);
  return {4.0 * std::sqrt(mean + disc), 4.0 * std::sqrt(std::max(mean - disc, 0.0))};
}

// Andrew's monotone chain; returns the hull counterclockwise without
// collinear points.
inline std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(),
            [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    const Point p = pts[i];
    while (k >= lower && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

// Hull over the corners of foreground pixels.  Only pixels with a background
// 4-neighbour can contribute hull vertices.
inline std::vector<Point> mask_hull(const MaskFrame& frame) {
  std::vector<Point> corners;
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x) {
      if (!frame.at(x, y)) continue;
      if (frame.get(x - 1, y) && frame.get(x + 1, y) && frame.get(x, y - 1) && frame.get(x, y + 1))
        continue;
      const double fx = x, fy = y;
      corners.insert(corners.end(), {{fx, fy}, {fx + 1, fy}, {fx + 1, fy + 1}, {fx, fy + 1}});
    }
  require(!corners.empty(), ErrorCode::NoForeground, "frame has no foreground");
  return convex_hull(std::move(corners));
}

inline double convex_hull_area(const MaskFrame& frame) {
  return std::abs(signed_area(std::span<const Point>(mask_hull(frame))));
}

// Boundary-inclusive containment for a counterclockwise convex polygon.
inline bool convex_contains(std::span<const Point> hull, Point p) {
  const std::size_t n = hull.size();
  for (std::size_t i = 0; i < n; ++i)
    if (cross(hull[(i + 1) % n] - hull[i], p - hull[i]) < -1e-12) return false;
  return true;
}

struct PixelCentroid {
  double x = 0.0;
  double y = 0.0;
};

inline PixelCentroid foreground_centroid(const MaskFrame& frame) {
  double n = 0, sx = 0, sy = 0;
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x)
      if (frame.at(x, y)) {
        n += 1;
        sx += x + 0.5;
        sy += y + 0.5;
      }
  require(n > 0, ErrorCode::NoForeground, "frame has no foreground");
  return {sx / n, sy / n};
}

// Copies the frame onto a new canvas, shifting it by an integer offset.
// Pixels that fall off the canvas are dropped; returns false if any were.
inline bool shift_onto(const MaskFrame& src, MaskFrame& dst, int dx, int dy) {
  bool clipped = false;
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) {
      if (!src.at(x, y)) continue;
      const int nx = x + dx, ny = y + dy;
      if (nx < 0 || ny < 0 || nx >= dst.width() || ny >= dst.height()) {
        clipped = true;
        continue;
      }
      dst.set(nx, ny, true);
    }
  return !clipped;
}

}  // namespace efdgen
