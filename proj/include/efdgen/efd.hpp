#pragma once

// Elliptical Fourier descriptors of uniformly resampled closed contours.
//
// For a contour of N points spaced uniformly in arc length, with s_j = 2*pi*j/N:
//   a_n = (2/N) sum_j x_j cos(n s_j)    b_n = (2/N) sum_j x_j sin(n s_j)
//   c_n = (2/N) sum_j y_j cos(n s_j)    d_n = (2/N) sum_j y_j sin(n s_j)
// and the inverse is x(s) = A0 + sum_n a_n cos(ns) + b_n sin(ns), likewise y.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "efdgen/error.hpp"
#include "efdgen/geometry.hpp"
#include "efdgen/mask.hpp"

namespace efdgen {

struct Harmonic {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
};

struct EfdFrame {
  std::vector<Harmonic> harmonics;  // orders 1..d
  Point centroid;                   // (A0, C0)

  int order() const noexcept { return static_cast<int>(harmonics.size()); }
};

// Z in R^{4d x T}; rows are [a1 b1 c1 d1 ... ad bd cd dd], columns are frames.
struct EfdSeries {
  int d = 0;
  Eigen::MatrixXd z;

  int channels() const noexcept { return static_cast<int>(z.rows()); }
  int length() const noexcept { return static_cast<int>(z.cols()); }

  EfdFrame frame(int t) const {
    EfdFrame f;
    f.harmonics.resize(static_cast<std::size_t>(d));
    for (int n = 0; n < d; ++n) {
      f.harmonics[static_cast<std::size_t>(n)] = {z(4 * n, t), z(4 * n + 1, t), z(4 * n + 2, t),
                                                  z(4 * n + 3, t)};
    }
    return f;
  }

  // Keeps the first `order` harmonics.
  EfdSeries truncated(int order) const {
    require(order >= 1 && order <= d, ErrorCode::InvalidArgument, "truncation order out of range");
    return {order, z.topRows(4 * order)};
  }
};

inline EfdSeries make_series(const std::vector<EfdFrame>& frames) {
  require(!frames.empty(), ErrorCode::EmptyDataset, "no frames to stack");
  const int d = frames.front().order();
  EfdSeries s{d, Eigen::MatrixXd(4 * d, static_cast<Eigen::Index>(frames.size()))};
  for (std::size_t t = 0; t < frames.size(); ++t) {
    require(frames[t].order() == d, ErrorCode::ShapeMismatch, "frames differ in harmonic order");
    for (int n = 0; n < d; ++n) {
      const auto& h = frames[t].harmonics[static_cast<std::size_t>(n)];
      const auto col = static_cast<Eigen::Index>(t);
      s.z(4 * n, col) = h.a;
      s.z(4 * n + 1, col) = h.b;
      s.z(4 * n + 2, col) = h.c;
      s.z(4 * n + 3, col) = h.d;
    }
  }
  return s;
}

// Relative spread of consecutive chord lengths above which a contour is not
// considered uniformly resampled.  Chords across corners are shorter than the
// arc they span, so this is deliberately loose.
inline constexpr double kUniformityTolerance = 0.25;

inline double gap_relative_spread(const Contour& contour) {
  const std::size_t n = contour.size();
  double mean = 0.0;
  std::vector<double> gaps(n);
  for (std::size_t i = 0; i < n; ++i) {
    gaps[i] = distance(contour[i], contour[(i + 1) % n]);
    mean += gaps[i];
  }
  mean /= static_cast<double>(n);
  if (mean <= 0.0) return std::numeric_limits<double>::infinity();
  double var = 0.0;
  for (double g : gaps) var += (g - mean) * (g - mean);
  return std::sqrt(var / static_cast<double>(n)) / mean;
}

inline EfdFrame efd_encode(const Contour& contour, int d) {
  require(d >= 1, ErrorCode::InvalidArgument, "harmonic order must be >= 1");
  const int n_pts = static_cast<int>(contour.size());
  require(2 * d + 2 <= n_pts, ErrorCode::NyquistViolation,
          "need at least 2d+2 points (d=" + std::to_string(d) + ", N=" + std::to_string(n_pts) + ")");
  require(gap_relative_spread(contour) <= kUniformityTolerance, ErrorCode::NonUniformSampling,
          "contour is not uniformly resampled");

  EfdFrame f;
  f.harmonics.resize(static_cast<std::size_t>(d));
  double sx = 0.0, sy = 0.0;
  for (const auto& p : contour.points) {
    sx += p.x;
    sy += p.y;
  }
  f.centroid = {sx / n_pts, sy / n_pts};
  const double scale = 2.0 / n_pts;
  for (int order = 1; order <= d; ++order) {
    Harmonic h;
    for (int j = 0; j < n_pts; ++j) {
      // Reduce the angle index modulo N before scaling to keep phases exact.
      const double s = 2.0 * std::numbers::pi * static_cast<double>((order * j) % n_pts) / n_pts;
      const double cs = std::cos(s), sn = std::sin(s);
      const Point p = contour[static_cast<std::size_t>(j)];
      h.a += p.x * cs;
      h.b += p.x * sn;
      h.c += p.y * cs;
      h.d += p.y * sn;
    }
    h.a *= scale;
    h.b *= scale;
    h.c *= scale;
    h.d *= scale;
    f.harmonics[static_cast<std::size_t>(order - 1)] = h;
  }
  return f;
}

inline Contour efd_decode(const EfdFrame& frame, int n) {
  require(n >= 2 * frame.order() + 2, ErrorCode::NyquistViolation, "decode needs n >= 2d+2");
  Contour out;
  out.points.resize(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    Point p = frame.centroid;
    for (int order = 1; order <= frame.order(); ++order) {
      const double s = 2.0 * std::numbers::pi * static_cast<double>((order * j) % n) / n;
      const double cs = std::cos(s), sn = std::sin(s);
      const auto& h = frame.harmonics[static_cast<std::size_t>(order - 1)];
      p.x += h.a * cs + h.b * sn;
      p.y += h.c * cs + h.d * sn;
    }
    out.points[static_cast<std::size_t>(j)] = p;
  }
  return out;
}

inline EfdFrame center_frame(EfdFrame frame) {
  frame.centroid = {0.0, 0.0};
  return frame;
}

// Phase the first harmonic would have after moving the start point by
// `theta` along the parameter: (a, b) -> (a cos + b sin, b cos - a sin).
inline Harmonic shift_phase(const Harmonic& h, int order, double theta) {
  const double cs = std::cos(order * theta), sn = std::sin(order * theta);
  return {h.a * cs + h.b * sn, h.b * cs - h.a * sn, h.c * cs + h.d * sn, h.d * cs - h.c * sn};
}

inline EfdFrame shift_frame(EfdFrame frame, double theta) {
  for (int n = 1; n <= frame.order(); ++n) {
    auto& h = frame.harmonics[static_cast<std::size_t>(n - 1)];
    h = shift_phase(h, n, theta);
  }
  return frame;
}

// Parameter shift that puts the first-harmonic point on the +x ray from the
// centroid, i.e. c1 = 0 and a1 > 0 afterwards.
inline double anchor_angle(const Harmonic& h) {
  const double theta = std::atan2(-h.c, h.d);
  return shift_phase(h, 1, theta).a >= 0.0 ? theta : theta + std::numbers::pi;
}

// Parameter shift that best aligns the first harmonic with `reference`.
inline double phase_alignment_angle(const Harmonic& h, const Harmonic& reference) {
  const double c = h.a * reference.a + h.b * reference.b + h.c * reference.c + h.d * reference.d;
  const double s = h.b * reference.a - h.a * reference.b + h.d * reference.c - h.c * reference.d;
  return std::atan2(s, c);
}

struct EncodeOptions {
  int d = 9;
  int n = 128;
  bool align_phase = true;
};

struct FrameError : Error {
  FrameError(const Error& inner, int frame_index)
      : Error(inner.code(), "frame " + std::to_string(frame_index) + ": " + inner.what()),
        frame(frame_index) {}
  int frame;
};

// Per frame: trace, resample, encode, center.  With phase alignment the
// start point is moved continuously along the curve: the first frame is
// anchored on the +x ray and every later frame follows the previous frame's
// first-harmonic phase.
inline EfdSeries encode_video(const MaskVideo& video, const EncodeOptions& opt = {}) {
  require(video.length() >= 1, ErrorCode::EmptyDataset, "video has no frames");
  std::vector<EfdFrame> frames;
  frames.reserve(video.frames.size());
  for (int t = 0; t < video.length(); ++t) {
    try {
      const auto contour = resample_arclength(extract_contour(video.frames[static_cast<std::size_t>(t)]), opt.n);
      auto frame = center_frame(efd_encode(contour, opt.d));
      if (opt.align_phase) {
        const auto& first = frame.harmonics.front();
        frame = shift_frame(frame, frames.empty() ? anchor_angle(first)
                                                  : phase_alignment_angle(first, frames.back().harmonics.front()));
      }
      frames.push_back(std::move(frame));
    } catch (const Error& e) {
      throw FrameError(e, t);
    }
  }
  return make_series(frames);
}

// ---------------------------------------------------------------------------
// Harmonic selection

// Mean power per harmonic, P_n = mean over frames of (a^2+b^2+c^2+d^2)/2.
inline std::vector<double> harmonic_power(const std::vector<EfdSeries>& training) {
  require(!training.empty(), ErrorCode::EmptyDataset, "no training series");
  const int d = training.front().d;
  std::vector<double> power(static_cast<std::size_t>(d), 0.0);
  double frames = 0.0;
  for (const auto& s : training) {
    require(s.d == d, ErrorCode::ShapeMismatch, "series differ in harmonic order");
    for (int t = 0; t < s.length(); ++t) {
      for (int n = 0; n < d; ++n) power[static_cast<std::size_t>(n)] += 0.5 * s.z.col(t).segment(4 * n, 4).squaredNorm();
      frames += 1.0;
    }
  }
  require(frames > 0, ErrorCode::EmptyDataset, "training series have no frames");
  for (auto& p : power) p /= frames;
  return power;
}

// Smallest d whose cumulative power share reaches `fraction`.
inline int select_harmonics(const std::vector<EfdSeries>& training, double fraction = 0.9999) {
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::InvalidArgument, "fraction must be in (0, 1]");
  const auto power = harmonic_power(training);
  std::vector<double> cum(power.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < power.size(); ++i) cum[i] = acc += power[i];
  const double total = cum.back();
  if (total <= 0.0) return 1;
  for (std::size_t i = 0; i < cum.size(); ++i)
    if (cum[i] / total >= fraction) return static_cast<int>(i) + 1;
  return static_cast<int>(cum.size());
}

// ---------------------------------------------------------------------------
// Normalization

struct NormStats {
  Eigen::VectorXd min;
  Eigen::VectorXd max;

  int channels() const noexcept { return static_cast<int>(min.size()); }
};

struct NormDiagnostics {
  long clamped = 0;
  long total = 0;

  double clamp_rate() const { return total ? static_cast<double>(clamped) / total : 0.0; }
};

inline NormStats fit_norm(const std::vector<EfdSeries>& training) {
  require(!training.empty(), ErrorCode::EmptyDataset, "no training series");
  const int c = training.front().channels();
  NormStats st{Eigen::VectorXd::Constant(c, std::numeric_limits<double>::infinity()),
               Eigen::VectorXd::Constant(c, -std::numeric_limits<double>::infinity())};
  for (const auto& s : training) {
    require(s.channels() == c, ErrorCode::StatsMismatch, "series differ in channel count");
    if (s.length() == 0) continue;
    st.min = st.min.cwiseMin(s.z.rowwise().minCoeff());
    st.max = st.max.cwiseMax(s.z.rowwise().maxCoeff());
  }
  require(st.min.allFinite(), ErrorCode::EmptyDataset, "training series have no frames");
  return st;
}

// Maps each channel onto [0, 1] over its training range.  Values outside the
// range are clamped and counted; constant channels map to 0.5.
inline EfdSeries apply_norm(const EfdSeries& series, const NormStats& st,
                            NormDiagnostics* diag = nullptr) {
  require(series.channels() == st.channels(), ErrorCode::StatsMismatch,
          "series has " + std::to_string(series.channels()) + " channels, stats have " +
              std::to_string(st.channels()));
  EfdSeries out = series;
  for (int r = 0; r < out.channels(); ++r) {
    const double lo = st.min(r), span = st.max(r) - st.min(r);
    for (int t = 0; t < out.length(); ++t) {
      double& v = out.z(r, t);
      if (span <= 0.0) {
        if (diag && v != lo) ++diag->clamped;
        v = 0.5;
      } else {
        double u = (v - lo) / span;
        if (u < 0.0 || u > 1.0) {
          if (diag) ++diag->clamped;
          u = std::clamp(u, 0.0, 1.0);
        }
        v = u;
      }
      if (diag) ++diag->total;
    }
  }
  return out;
}

inline EfdSeries invert_norm(const EfdSeries& series, const NormStats& st) {
  require(series.channels() == st.channels(), ErrorCode::StatsMismatch,
          "series has " + std::to_string(series.channels()) + " channels, stats have " +
              std::to_string(st.channels()));
  EfdSeries out = series;
  for (int r = 0; r < out.channels(); ++r) {
    const double lo = st.min(r), span = st.max(r) - st.min(r);
    for (int t = 0; t < out.length(); ++t) out.z(r, t) = span <= 0.0 ? lo : lo + out.z(r, t) * span;
  }
  return out;
}

}  // namespace efdgen
