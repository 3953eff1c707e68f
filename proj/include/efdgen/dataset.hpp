#pragma once

// Carving per-cell phantom videos out of labelled tracking videos:
// instance filtering, sliding windows, lineage-aware splits and file adapters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "efdgen/error.hpp"
#include "efdgen/geometry.hpp"
#include "efdgen/mask.hpp"

namespace efdgen {

struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> ids;  // 0 = background

  std::uint16_t at(int x, int y) const { return ids[static_cast<std::size_t>(y) * width + x]; }
};

struct TrackRecord {
  int id = 0;
  int start = 0;
  int end = 0;
  int parent = 0;  // 0 = no parent

  friend bool operator==(const TrackRecord&, const TrackRecord&) = default;
};

struct LabeledVideo {
  std::vector<LabelImage> frames;
  std::vector<TrackRecord> lineage;
};

inline MaskFrame instance_mask(const LabelImage& img, int id) {
  MaskFrame m(img.width, img.height);
  for (std::size_t i = 0; i < img.ids.size(); ++i) m.bits()[i] = img.ids[i] == id ? 1 : 0;
  return m;
}

// ---------------------------------------------------------------------------
// Instance measures

inline double solidity(const MaskFrame& frame) {
  const double hull = convex_hull_area(frame);
  return static_cast<double>(frame.count()) / hull;
}

// |ConvHull(M_i) ∩ M_j| / |ConvHull(M_i)|; a pixel of j counts when its center
// lies in the hull of i (boundary included).
inline double overlap_ratio(const MaskFrame& frame_i, const MaskFrame& frame_j) {
  require(frame_i.width() == frame_j.width() && frame_i.height() == frame_j.height(),
          ErrorCode::InconsistentDimensions, "frames must share a canvas");
  const auto hull = mask_hull(frame_i);
  const double area = std::abs(signed_area(std::span<const Point>(hull)));
  double xmin = hull[0].x, xmax = hull[0].x, ymin = hull[0].y, ymax = hull[0].y;
  for (const auto& p : hull) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  double inside = 0;
  const int x0 = std::max(0, static_cast<int>(xmin)), x1 = std::min(frame_j.width() - 1, static_cast<int>(xmax));
  const int y0 = std::max(0, static_cast<int>(ymin)), y1 = std::min(frame_j.height() - 1, static_cast<int>(ymax));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (frame_j.at(x, y) && convex_contains(hull, {x + 0.5, y + 0.5})) inside += 1;
  return std::min(1.0, inside / area);
}

inline int border_contact(const MaskFrame& frame) {
  int count = 0;
  const int w = frame.width(), h = frame.height();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (frame.at(x, y) && (x == 0 || y == 0 || x == w - 1 || y == h - 1)) ++count;
  return count;
}

struct FilterParams {
  double s_min = 0.969;
  double o_max = 0.017;
  int border_px = 10;
};

// Validity per track, indexed by frame offset from the track's start.
using ValidityMap = std::map<int, std::vector<bool>>;

// A cell-frame is discarded when it touches the border with more than
// border_px pixels, or when it is both non-solid (s < s_min) and overlaps a
// neighbour's pixels inside its hull by more than o_max.  Frames where the id
// is absent are invalid.
inline ValidityMap filter_instances(const LabeledVideo& video, const FilterParams& p = {}) {
  ValidityMap out;
  for (const auto& tr : video.lineage) {
    auto& flags = out[tr.id];
    flags.assign(static_cast<std::size_t>(std::max(0, tr.end - tr.start + 1)), false);
  }
  for (int t = 0; t < static_cast<int>(video.frames.size()); ++t) {
    const auto& img = video.frames[static_cast<std::size_t>(t)];
    std::set<int> present(img.ids.begin(), img.ids.end());
    present.erase(0);
    std::map<int, MaskFrame> masks;
    for (int id : present) masks.emplace(id, instance_mask(img, id));
    for (const auto& tr : video.lineage) {
      if (t < tr.start || t > tr.end || !present.count(tr.id)) continue;
      const auto& m = masks.at(tr.id);
      bool valid = border_contact(m) <= p.border_px;
      if (valid && solidity(m) < p.s_min) {
        double worst = 0.0;
        for (const auto& [other, om] : masks)
          if (other != tr.id) worst = std::max(worst, overlap_ratio(m, om));
        if (worst > p.o_max) valid = false;
      }
      out[tr.id][static_cast<std::size_t>(t - tr.start)] = valid;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Phantom tracks and windows

struct PhantomTrack {
  int track_id = 0;
  int start = 0;  // absolute frame index of frames[0]
  std::vector<MaskFrame> frames;
  std::vector<bool> valid;
};

// Crops a track onto a fixed canvas centred on each frame's instance
// centroid.  Frames that fail the filter, are missing, do not fit the canvas,
// or are not a single hole-free component are marked invalid.
inline std::vector<PhantomTrack> carve_tracks(const LabeledVideo& video, const ValidityMap& filter,
                                              int canvas, std::vector<std::string>* warnings = nullptr) {
  std::vector<PhantomTrack> tracks;
  for (const auto& tr : video.lineage) {
    PhantomTrack pt;
    pt.track_id = tr.id;
    pt.start = tr.start;
    const auto& flags = filter.at(tr.id);
    for (int t = tr.start; t <= tr.end; ++t) {
      MaskFrame crop(canvas, canvas);
      bool ok = t >= 0 && t < static_cast<int>(video.frames.size()) &&
                flags[static_cast<std::size_t>(t - tr.start)];
      if (ok) {
        const auto m = instance_mask(video.frames[static_cast<std::size_t>(t)], tr.id);
        const auto c = foreground_centroid(m);
        const int dx = canvas / 2 - static_cast<int>(std::floor(c.x));
        const int dy = canvas / 2 - static_cast<int>(std::floor(c.y));
        if (!shift_onto(m, crop, dx, dy)) {
          ok = false;
          if (warnings)
            warnings->push_back("track " + std::to_string(tr.id) + " frame " + std::to_string(t) +
                                " larger than canvas; discarded");
        } else {
          ok = is_valid_phantom(crop);
        }
      }
      pt.frames.push_back(std::move(crop));
      pt.valid.push_back(ok);
    }
    tracks.push_back(std::move(pt));
  }
  return tracks;
}

// Window start offsets over maximal runs of valid frames.
inline std::vector<int> window_starts(const std::vector<bool>& valid, int t_win, int stride) {
  require(t_win >= 2 && stride >= 1, ErrorCode::InvalidArgument, "need t_win >= 2 and stride >= 1");
  std::vector<int> starts;
  const int n = static_cast<int>(valid.size());
  int i = 0;
  while (i < n) {
    if (!valid[static_cast<std::size_t>(i)]) {
      ++i;
      continue;
    }
    int run_end = i;
    while (run_end + 1 < n && valid[static_cast<std::size_t>(run_end + 1)]) ++run_end;
    for (int s = i; s + t_win <= run_end + 1; s += stride) starts.push_back(s);
    i = run_end + 1;
  }
  return starts;
}

struct Window {
  int track_id = 0;
  int start = 0;  // absolute frame index
  MaskVideo video;
};

inline std::vector<Window> sliding_windows(const PhantomTrack& track, int t_win, int stride) {
  std::vector<Window> out;
  for (int s : window_starts(track.valid, t_win, stride)) {
    Window w{track.track_id, track.start + s, {}};
    w.video.frames.assign(track.frames.begin() + s, track.frames.begin() + s + t_win);
    out.push_back(std::move(w));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lineage split

inline std::map<int, int> lineage_roots(const std::vector<TrackRecord>& lineage) {
  std::map<int, int> parent;
  for (const auto& tr : lineage) parent[tr.id] = tr.parent;
  std::map<int, int> root;
  for (const auto& tr : lineage) {
    int cur = tr.id;
    std::set<int> seen;
    while (parent.count(cur) && parent.at(cur) != 0 && parent.count(parent.at(cur)) && !seen.count(cur)) {
      seen.insert(cur);
      cur = parent.at(cur);
    }
    root[tr.id] = cur;
  }
  return root;
}

struct SplitManifest {
  std::vector<int> train;  // lineage root ids
  std::vector<int> test;
  double fraction = 0.0;
  long train_windows = 0;
  long test_windows = 0;

  friend bool operator==(const SplitManifest&, const SplitManifest&) = default;
};

// Assigns whole lineages to the test side, largest first (ties broken by a
// seeded shuffle), skipping lineages that would overshoot the target; if the
// target is still not met the smallest remaining lineages top it up, always
// leaving at least one lineage for training.
inline SplitManifest lineage_split(const std::map<int, long>& windows_per_root, double test_fraction,
                                   std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0, ErrorCode::InvalidArgument,
          "test fraction must be in (0, 1)");
  require(windows_per_root.size() >= 2, ErrorCode::SingleLineage, "need at least two lineages to split");
  std::vector<std::pair<int, long>> order(windows_per_root.begin(), windows_per_root.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  long total = 0;
  for (const auto& [root, w] : order) total += w;
  const double target = test_fraction * static_cast<double>(total);

  std::vector<bool> in_test(order.size(), false);
  long test = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const long w = order[i].second;
    if (w > 0 && static_cast<double>(test + w) <= target) {
      in_test[i] = true;
      test += w;
    }
  }
  auto train_left = static_cast<long>(std::count(in_test.begin(), in_test.end(), false));
  for (std::size_t i = order.size(); i-- > 0 && static_cast<double>(test) < target && train_left > 1;) {
    if (!in_test[i] && order[i].second > 0) {
      --train_left;
      in_test[i] = true;
      test += order[i].second;
    }
  }

  SplitManifest m;
  m.fraction = test_fraction;
  for (std::size_t i = 0; i < order.size(); ++i) (in_test[i] ? m.test : m.train).push_back(order[i].first);
  require(!m.train.empty() && !m.test.empty(), ErrorCode::SingleLineage,
          "split left one side empty");
  std::sort(m.train.begin(), m.train.end());
  std::sort(m.test.begin(), m.test.end());
  m.test_windows = test;
  m.train_windows = total - test;
  return m;
}

// ---------------------------------------------------------------------------
// File adapters

// One "id start end parent" row per track.
inline std::vector<TrackRecord> parse_lineage(std::istream& is) {
  std::vector<TrackRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    TrackRecord tr;
    std::string extra;
    if (!(row >> tr.id >> tr.start >> tr.end >> tr.parent) || (row >> extra))
      throw Error(ErrorCode::MalformedManifest, "lineage line " + std::to_string(lineno) + " is not 4 integers");
    require(tr.id > 0 && tr.start >= 0 && tr.end >= tr.start && tr.parent >= 0, ErrorCode::MalformedManifest,
            "lineage line " + std::to_string(lineno) + " has invalid values");
    out.push_back(tr);
  }
  return out;
}

inline void write_lineage(std::ostream& os, const std::vector<TrackRecord>& lineage) {
  for (const auto& tr : lineage) os << tr.id << ' ' << tr.start << ' ' << tr.end << ' ' << tr.parent << '\n';
}

// Directory layout: man_track.txt (lineage) plus numbered 16-bit label images
// named <prefix><digits>.pgm.  Frame indices come from the trailing digits.
inline LabeledVideo ingest_ctc(const std::filesystem::path& dir, std::vector<std::string>* warnings = nullptr) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), ErrorCode::MalformedManifest, dir.string() + " is not a directory");
  LabeledVideo video;
  std::ifstream lin(dir / "man_track.txt");
  require(static_cast<bool>(lin), ErrorCode::MalformedManifest, "missing man_track.txt in " + dir.string());
  video.lineage = parse_lineage(lin);
  require(!video.lineage.empty(), ErrorCode::MalformedManifest, "man_track.txt is empty");

  std::map<int, fs::path> frames;
  static const std::regex numbered(R"(.*?(\d+)\.pgm)");
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    std::smatch m;
    if (entry.is_regular_file() && std::regex_match(name, m, numbered)) {
      frames[std::stoi(m[1].str())] = entry.path();
    } else if (name != "man_track.txt" && warnings) {
      warnings->push_back("ignoring " + name);
    }
  }
  require(!frames.empty(), ErrorCode::MalformedManifest, "no label images in " + dir.string());
  require(frames.begin()->first == 0 && frames.rbegin()->first == static_cast<int>(frames.size()) - 1,
          ErrorCode::MalformedManifest, "label images are not numbered contiguously from 0");
  for (const auto& [idx, path] : frames) {
    const auto img = io::read_pgm(path);
    if (!video.frames.empty())
      require(img.width == video.frames.front().width && img.height == video.frames.front().height,
              ErrorCode::InconsistentDimensions, path.filename().string() + " differs in size");
    video.frames.push_back({img.width, img.height, img.pixels});
  }
  for (const auto& tr : video.lineage)
    require(tr.end < static_cast<int>(video.frames.size()), ErrorCode::MalformedManifest,
            "track " + std::to_string(tr.id) + " ends after the last frame");
  return video;
}

inline void write_ctc(const std::filesystem::path& dir, const LabeledVideo& video) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "man_track.txt");
    write_lineage(os, video.lineage);
  }
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "man_track%03zu.pgm", t);
    io::write_pgm16(dir / name, video.frames[t].width, video.frames[t].height, video.frames[t].ids);
  }
}

// Loads every *.mvb file and every sub-directory holding a manifest.txt,
// in lexicographic order of their names.
inline std::vector<MaskVideo> ingest_mvb(const std::filesystem::path& dir,
                                         std::vector<std::string>* warnings = nullptr,
                                         std::vector<std::string>* names = nullptr) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), ErrorCode::MalformedManifest, dir.string() + " is not a directory");
  std::vector<fs::path> entries;
  for (const auto& entry : fs::directory_iterator(dir)) entries.push_back(entry.path());
  std::sort(entries.begin(), entries.end());
  std::vector<MaskVideo> out;
  for (const auto& p : entries) {
    if (fs::is_regular_file(p) && p.extension() == ".mvb") {
      out.push_back(io::load_mvb(p));
    } else if (fs::is_directory(p) && fs::exists(p / "manifest.txt")) {
      out.push_back(io::load_video_dir(p));
    } else {
      if (warnings) warnings->push_back("ignoring " + p.filename().string());
      continue;
    }
    if (names) names->push_back(p.stem().string());
  }
  require(!out.empty(), ErrorCode::MalformedManifest, "no videos found in " + dir.string());
  for (const auto& v : out) {
    v.validate();
    require(v.width() == out.front().width() && v.height() == out.front().height(),
            ErrorCode::InconsistentDimensions, "videos differ in canvas size");
  }
  return out;
}

}  // namespace efdgen
