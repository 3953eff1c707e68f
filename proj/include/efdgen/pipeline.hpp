#pragma once

// End-to-end orchestration shared by the command-line tool and the
// acceptance suite: configuration, run manifests, series files and the
// prep / encode / train / generate / evaluate / ablate stages.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "efdgen/dataset.hpp"
#include "efdgen/diffusion/checkpoint.hpp"
#include "efdgen/diffusion/sample.hpp"
#include "efdgen/diffusion/schedule.hpp"
#include "efdgen/diffusion/train.hpp"
#include "efdgen/efd.hpp"
#include "efdgen/error.hpp"
#include "efdgen/fixtures.hpp"
#include "efdgen/geometry.hpp"
#include "efdgen/mask.hpp"
#include "efdgen/metrics.hpp"

namespace efdgen::pipeline {

namespace fs = std::filesystem;

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::uint64_t file_checksum(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return fnv1a(buf.str());
}

// splitmix64, used to derive independent per-item seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Configuration

struct PipelineConfig {
  std::string input;      // directory, or "fixture:<name>" for bundled data
  std::string output = "out";
  std::string model;      // checkpoint path
  std::string reference;  // second dataset for evaluate
  int d = 9;
  int d_max = 60;
  int n = 128;
  int t_win = 50;
  int k_steps = 200;
  int stride = 10;
  int canvas = 96;
  double fraction = 0.9999;
  double test_fraction = 0.1;
  FilterParams filter;
  int count = 100;
  int replications = 1;
  std::vector<int> d_values{1, 3, 5, 9, 15};
  int fixture_count = 200;
  int fixture_length = 40;
  bool pairwise = false;
  diffusion::TrainConfig train;
  std::uint64_t seed = 0;
  int threads = 1;

  void set(const std::string& key, const std::string& value) {
    auto as_int = [&] {
      std::size_t pos = 0;
      int v = 0;
      try {
        v = std::stoi(value, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      require(pos == value.size() && !value.empty(), ErrorCode::InvalidConfig, key + ": expected an integer, got '" + value + "'");
      return v;
    };
    auto as_double = [&] {
      std::size_t pos = 0;
      double v = 0;
      try {
        v = std::stod(value, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      require(pos == value.size() && !value.empty(), ErrorCode::InvalidConfig, key + ": expected a number, got '" + value + "'");
      return v;
    };
    auto as_bool = [&] {
      if (value == "1" || value == "true" || value == "yes") return true;
      if (value == "0" || value == "false" || value == "no") return false;
      throw Error(ErrorCode::InvalidConfig, key + ": expected a boolean, got '" + value + "'");
    };
    auto& m = train.model;
    if (key == "input") input = value;
    else if (key == "output") output = value;
    else if (key == "model") model = value;
    else if (key == "reference") reference = value;
    else if (key == "d") d = as_int();
    else if (key == "d_max") d_max = as_int();
    else if (key == "n") n = as_int();
    else if (key == "t_win") t_win = as_int();
    else if (key == "k") k_steps = as_int();
    else if (key == "stride") stride = as_int();
    else if (key == "canvas") canvas = as_int();
    else if (key == "fraction") fraction = as_double();
    else if (key == "test_fraction") test_fraction = as_double();
    else if (key == "s_min") filter.s_min = as_double();
    else if (key == "o_max") filter.o_max = as_double();
    else if (key == "border_px") filter.border_px = as_int();
    else if (key == "count") count = as_int();
    else if (key == "replications") replications = as_int();
    else if (key == "d_values") {
      d_values.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        PipelineConfig tmp;
        tmp.set("d", item);
        d_values.push_back(tmp.d);
      }
    } else if (key == "fixture_count") fixture_count = as_int();
    else if (key == "fixture_length") fixture_length = as_int();
    else if (key == "pairwise") pairwise = as_bool();
    else if (key == "seed") seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "threads") threads = as_int();
    else if (key == "lambda1") train.lambda1 = as_double();
    else if (key == "lambda2") train.lambda2 = as_double();
    else if (key == "batch_size") train.batch_size = as_int();
    else if (key == "train_steps") train.steps = as_int();
    else if (key == "learning_rate") train.learning_rate = as_double();
    else if (key == "min_lr_fraction") train.min_lr_fraction = as_double();
    else if (key == "warmup_steps") train.warmup_steps = as_int();
    else if (key == "grad_clip") train.grad_clip = as_double();
    else if (key == "ema_decay") train.ema_decay = as_double();
    else if (key == "log_every") train.log_every = as_int();
    else if (key == "width") m.width = as_int();
    else if (key == "heads") m.heads = as_int();
    else if (key == "blocks") m.blocks = as_int();
    else if (key == "mlp_ratio") m.mlp_ratio = as_int();
    else if (key == "poly_degree") m.poly_degree = as_int();
    else if (key == "season_freqs") m.season_freqs = as_int();
    else if (key == "use_trend") m.use_trend = as_bool();
    else if (key == "use_season") m.use_season = as_bool();
    else if (key == "use_residual") m.use_residual = as_bool();
    else throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
  }

  std::map<std::string, std::string> to_map() const {
    std::map<std::string, std::string> kv;
    auto num = [](double v) {
      std::ostringstream os;
      os << std::setprecision(17) << v;
      return os.str();
    };
    std::string dv;
    for (std::size_t i = 0; i < d_values.size(); ++i) dv += (i ? "," : "") + std::to_string(d_values[i]);
    const auto& m = train.model;
    kv = {{"input", input},
          {"output", output},
          {"model", model},
          {"reference", reference},
          {"d", std::to_string(d)},
          {"d_max", std::to_string(d_max)},
          {"n", std::to_string(n)},
          {"t_win", std::to_string(t_win)},
          {"k", std::to_string(k_steps)},
          {"stride", std::to_string(stride)},
          {"canvas", std::to_string(canvas)},
          {"fraction", num(fraction)},
          {"test_fraction", num(test_fraction)},
          {"s_min", num(filter.s_min)},
          {"o_max", num(filter.o_max)},
          {"border_px", std::to_string(filter.border_px)},
          {"count", std::to_string(count)},
          {"replications", std::to_string(replications)},
          {"d_values", dv},
          {"fixture_count", std::to_string(fixture_count)},
          {"fixture_length", std::to_string(fixture_length)},
          {"pairwise", pairwise ? "1" : "0"},
          {"seed", std::to_string(seed)},
          {"threads", std::to_string(threads)},
          {"lambda1", num(train.lambda1)},
          {"lambda2", num(train.lambda2)},
          {"batch_size", std::to_string(train.batch_size)},
          {"train_steps", std::to_string(train.steps)},
          {"learning_rate", num(train.learning_rate)},
          {"min_lr_fraction", num(train.min_lr_fraction)},
          {"warmup_steps", std::to_string(train.warmup_steps)},
          {"grad_clip", num(train.grad_clip)},
          {"ema_decay", num(train.ema_decay)},
          {"log_every", std::to_string(train.log_every)},
          {"width", std::to_string(m.width)},
          {"heads", std::to_string(m.heads)},
          {"blocks", std::to_string(m.blocks)},
          {"mlp_ratio", std::to_string(m.mlp_ratio)},
          {"poly_degree", std::to_string(m.poly_degree)},
          {"season_freqs", std::to_string(m.season_freqs)},
          {"use_trend", m.use_trend ? "1" : "0"},
          {"use_season", m.use_season ? "1" : "0"},
          {"use_residual", m.use_residual ? "1" : "0"}};
    return kv;
  }

  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : to_map()) out += k + "=" + v + "\n";
    return out;
  }

  std::uint64_t hash() const { return fnv1a(to_text()); }

  void validate() const {
    require(d >= 1, ErrorCode::InvalidConfig, "d must be >= 1");
    require(n >= 2 * d + 2, ErrorCode::InvalidConfig, "n must be >= 2d+2");
    require(d_max >= 1 && n >= 2 * d_max + 2, ErrorCode::InvalidConfig, "d_max must satisfy 1 <= d_max <= n/2-1");
    require(k_steps >= 2, ErrorCode::InvalidConfig, "k must be >= 2");
    require(t_win >= 2 && stride >= 1, ErrorCode::InvalidConfig, "t_win >= 2 and stride >= 1 required");
    require(canvas >= 8, ErrorCode::InvalidConfig, "canvas must be >= 8");
    require(fraction > 0.0 && fraction <= 1.0, ErrorCode::InvalidConfig, "fraction must be in (0, 1]");
    require(test_fraction > 0.0 && test_fraction < 1.0, ErrorCode::InvalidConfig, "test_fraction must be in (0, 1)");
    require(count >= 1 && replications >= 1, ErrorCode::InvalidConfig, "count and replications must be >= 1");
    require(threads >= 1, ErrorCode::InvalidConfig, "threads must be >= 1");
    require(!d_values.empty(), ErrorCode::InvalidConfig, "d_values is empty");
    for (int v : d_values)
      require(v >= 1 && n >= 2 * v + 2, ErrorCode::InvalidConfig, "d_values entry out of range");
    auto exists = [](const std::string& p, const char* what) {
      if (!p.empty() && p.rfind("fixture:", 0) != 0)
        require(fs::exists(p), ErrorCode::InvalidConfig, std::string(what) + " path does not exist: " + p);
    };
    exists(input, "input");
    exists(model, "model");
    exists(reference, "reference");
  }
};

// key=value lines; '#' starts a comment.
inline std::map<std::string, std::string> parse_key_values(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string{};
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": expected key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

// Defaults, then the config file (if any), then explicit overrides.
inline PipelineConfig load_config(const std::string& file, const std::map<std::string, std::string>& overrides) {
  PipelineConfig cfg;
  if (!file.empty()) {
    std::ifstream is(file);
    require(static_cast<bool>(is), ErrorCode::InvalidConfig, "cannot read config file " + file);
    for (const auto& [k, v] : parse_key_values(is)) cfg.set(k, v);
  }
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  cfg.train.seed = cfg.seed;
  cfg.train.threads = cfg.threads;
  cfg.train.diffusion_steps = cfg.k_steps;
  return cfg;
}

// ---------------------------------------------------------------------------
// Run manifest

class RunManifest {
 public:
  RunManifest(std::string command, const PipelineConfig& cfg)
      : command_(std::move(command)), started_(std::chrono::steady_clock::now()) {
    doc_["command"] = command_;
    doc_["config_hash"] = hex64(cfg.hash());
    doc_["seed"] = cfg.seed;
    doc_["config"] = cfg.to_map();
    doc_["artifacts"] = nlohmann::json::array();
    doc_["warnings"] = nlohmann::json::array();
    doc_["timings"] = nlohmann::json::object();
  }

  void artifact(const fs::path& path) {
    doc_["artifacts"].push_back({{"path", path.generic_string()},
                                 {"bytes", fs::file_size(path)},
                                 {"fnv1a64", hex64(file_checksum(path))}});
  }

  void warning(const std::string& w) { doc_["warnings"].push_back(w); }
  void timing(const std::string& stage, double seconds) { doc_["timings"][stage] = seconds; }
  void note(const std::string& key, nlohmann::json value) { doc_["results"][key] = std::move(value); }

  void succeed() { finish("ok", "", ""); }
  void fail(const std::string& code, const std::string& message) { finish("error", code, message); }

  const nlohmann::json& json() const { return doc_; }

  void write(const fs::path& dir) const {
    fs::create_directories(dir);
    std::ofstream os(dir / ("manifest_" + command_ + ".json"));
    os << doc_.dump(2) << '\n';
  }

 private:
  void finish(const std::string& status, const std::string& code, const std::string& message) {
    doc_["status"] = status;
    doc_["error_code"] = code;
    doc_["error_message"] = message;
    doc_["timings"]["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  }

  std::string command_;
  std::chrono::steady_clock::time_point started_;
  nlohmann::json doc_;
};

class StageTimer {
 public:
  StageTimer(RunManifest& m, std::string stage) : m_(m), stage_(std::move(stage)), t0_(std::chrono::steady_clock::now()) {}
  ~StageTimer() { m_.timing(stage_, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count()); }
  StageTimer(const StageTimer&) = delete;
  StageTimer& operator=(const StageTimer&) = delete;

 private:
  RunManifest& m_;
  std::string stage_;
  std::chrono::steady_clock::time_point t0_;
};

// ---------------------------------------------------------------------------
// Series files

inline void write_series_csv(std::ostream& os, const EfdSeries& s) {
  os << 't';
  for (int n = 1; n <= s.d; ++n) os << ",a" << n << ",b" << n << ",c" << n << ",d" << n;
  os << '\n' << std::setprecision(17);
  for (int t = 0; t < s.length(); ++t) {
    os << t;
    for (int r = 0; r < s.channels(); ++r) os << ',' << s.z(r, t);
    os << '\n';
  }
}

inline EfdSeries read_series_csv(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCode::MalformedManifest, "series file is empty");
  const auto columns = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  require(columns >= 5 && (columns - 1) % 4 == 0 && line.rfind("t,", 0) == 0, ErrorCode::MalformedManifest,
          "bad series header");
  const int channels = columns - 1;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    std::getline(ss, cell, ',');
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    require(static_cast<int>(row.size()) == channels, ErrorCode::MalformedManifest, "ragged series row");
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorCode::MalformedManifest, "series has no frames");
  EfdSeries s{channels / 4, Eigen::MatrixXd(channels, static_cast<Eigen::Index>(rows.size()))};
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (int r = 0; r < channels; ++r) s.z(r, static_cast<Eigen::Index>(t)) = rows[t][static_cast<std::size_t>(r)];
  return s;
}

inline void save_series(const fs::path& path, const EfdSeries& s) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorCode::Io, "cannot write " + path.string());
  write_series_csv(os, s);
}

inline EfdSeries load_series(const fs::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::Io, "cannot read " + path.string());
  return read_series_csv(is);
}

inline std::string join_vector(const Eigen::VectorXd& v) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << v(i);
  return os.str();
}

inline Eigen::VectorXd split_vector(const std::string& text) {
  std::istringstream is(text);
  std::vector<double> vals;
  for (double v; is >> v;) vals.push_back(v);
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

struct SeriesMeta {
  int d = 0;
  int t = 0;
  int n = 128;
  bool phase_anchored = true;
  NormStats stats;
};

inline void write_series_meta(const fs::path& path, const SeriesMeta& m) {
  std::ofstream os(path);
  os << "d=" << m.d << "\nT=" << m.t << "\nN=" << m.n << "\nphase_anchored=" << (m.phase_anchored ? 1 : 0)
     << "\nnorm.min=" << join_vector(m.stats.min) << "\nnorm.max=" << join_vector(m.stats.max) << '\n';
}

inline SeriesMeta read_series_meta(const fs::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::MalformedManifest, "missing series metadata " + path.string());
  const auto kv = parse_key_values(is);
  auto get = [&](const char* k) {
    const auto it = kv.find(k);
    require(it != kv.end(), ErrorCode::MalformedManifest, std::string("series metadata lacks ") + k);
    return it->second;
  };
  SeriesMeta m;
  m.d = std::stoi(get("d"));
  m.t = std::stoi(get("T"));
  m.n = std::stoi(get("N"));
  m.phase_anchored = get("phase_anchored") == "1";
  m.stats = {split_vector(get("norm.min")), split_vector(get("norm.max"))};
  require(m.stats.channels() == 4 * m.d && m.stats.max.size() == m.stats.min.size(), ErrorCode::StatsMismatch,
          "normalization stats do not match d");
  return m;
}

inline std::vector<EfdSeries> load_series_dir(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::MalformedManifest, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorCode::EmptyDataset, "no series in " + dir.string());
  std::vector<EfdSeries> out;
  for (const auto& f : files) out.push_back(load_series(f));
  return out;
}

// ---------------------------------------------------------------------------
// Datasets

inline std::vector<MaskVideo> fixture_videos(const std::string& name, int count, int length, int canvas,
                                             std::uint64_t seed) {
  if (name == "pulsating") return fixtures::pulsating_dataset(count, length, canvas, seed);
  if (name == "ellipses") return fixtures::ellipse_dataset(count, length, canvas, seed);
  if (name == "squares") return fixtures::square_dataset(count, length, canvas, seed);
  throw Error(ErrorCode::InvalidConfig, "unknown fixture '" + name + "' (pulsating, ellipses, squares)");
}

// A directory of videos, a prep output (its train split), or a bundled fixture.
inline std::vector<MaskVideo> load_videos(const std::string& source, const PipelineConfig& cfg,
                                          std::vector<std::string>* warnings = nullptr) {
  require(!source.empty(), ErrorCode::InvalidConfig, "no input given");
  if (source.rfind("fixture:", 0) == 0)
    return fixture_videos(source.substr(8), cfg.fixture_count, cfg.fixture_length, cfg.canvas, cfg.seed);
  const fs::path p(source);
  if (fs::is_directory(p / "windows" / "train")) return ingest_mvb(p / "windows" / "train", warnings);
  return ingest_mvb(p, warnings);
}

// Clamps decoded points into the canvas; returns the number moved.
inline int clamp_to_canvas(Contour& c, int canvas) {
  int moved = 0;
  const double hi = std::nextafter(static_cast<double>(canvas), 0.0);
  for (auto& p : c.points) {
    const Point q{std::clamp(p.x, 0.0, hi), std::clamp(p.y, 0.0, hi)};
    if (q.x != p.x || q.y != p.y) ++moved;
    p = q;
  }
  return moved;
}

struct DecodeStats {
  int frames = 0;
  int clamped_frames = 0;
  int degenerate_frames = 0;
  int self_intersecting_frames = 0;
  int repaired_frames = 0;  // changed by the largest-component policy
};

// Raw-domain series -> mask video: decode each frame centred on the canvas,
// rasterize, then keep the largest hole-free component.
inline MaskVideo decode_series(const EfdSeries& raw, int canvas, int n, DecodeStats* stats = nullptr) {
  MaskVideo v;
  v.frames.reserve(static_cast<std::size_t>(raw.length()));
  for (int t = 0; t < raw.length(); ++t) {
    EfdFrame f = raw.frame(t);
    f.centroid = {canvas / 2.0, canvas / 2.0};
    Contour c = efd_decode(f, n);
    const int moved = clamp_to_canvas(c, canvas);
    const auto r = rasterize_contour(c, canvas, canvas);
    MaskFrame m = keep_largest_component(r.mask);
    if (stats) {
      ++stats->frames;
      stats->clamped_frames += moved > 0;
      stats->degenerate_frames += r.degenerate;
      stats->self_intersecting_frames += r.self_intersecting;
      stats->repaired_frames += !(m == r.mask);
    }
    v.frames.push_back(std::move(m));
  }
  return v;
}

struct Generator {
  diffusion::DenoiserModel model;
  diffusion::DiffusionSchedule sched;
  NormStats stats;
  int d = 0;
  int n = 128;

  EfdSeries sample_raw(std::uint64_t seed) const {
    const EfdSeries normalized{d, diffusion::sample(model, sched, seed)};
    return invert_norm(normalized, stats);
  }

  // Video i of a batch uses mix_seed(seed, i), so output does not depend on
  // the thread count.
  std::vector<MaskVideo> generate(int count, std::uint64_t seed, int canvas, DecodeStats* ds = nullptr,
                                  int threads = 1) const {
    std::vector<MaskVideo> out(static_cast<std::size_t>(count));
    std::vector<DecodeStats> part(static_cast<std::size_t>(count));
    auto work = [&](int first, int step) {
      for (int i = first; i < count; i += step)
        out[static_cast<std::size_t>(i)] =
            decode_series(sample_raw(mix_seed(seed, static_cast<std::uint64_t>(i))), canvas, n,
                          &part[static_cast<std::size_t>(i)]);
    };
    const int workers = std::clamp(threads, 1, std::max(1, count));
    if (workers == 1) {
      work(0, 1);
    } else {
      std::vector<std::jthread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    }
    if (ds)
      for (const auto& p : part) {
        ds->frames += p.frames;
        ds->clamped_frames += p.clamped_frames;
        ds->degenerate_frames += p.degenerate_frames;
        ds->self_intersecting_frames += p.self_intersecting_frames;
        ds->repaired_frames += p.repaired_frames;
      }
    return out;
  }
};

inline diffusion::Checkpoint generator_checkpoint(const Generator& g, int t_len) {
  std::ostringstream extra;
  extra << "efd.d=" << g.d << "\nefd.n=" << g.n << "\nefd.T=" << t_len << "\ndiffusion.k=" << g.sched.K() << '\n';
  return diffusion::make_checkpoint(g.model, extra.str(),
                                    {diffusion::to_tensor("norm.min", g.stats.min),
                                     diffusion::to_tensor("norm.max", g.stats.max)});
}

inline Generator generator_from_checkpoint(const diffusion::Checkpoint& ck) {
  const auto kv = diffusion::parse_config_text(ck.config);
  auto get = [&](const char* k) {
    const auto it = kv.find(k);
    require(it != kv.end(), ErrorCode::BadCheckpoint, std::string("checkpoint lacks ") + k);
    return std::stoi(it->second);
  };
  Generator g{diffusion::model_from_checkpoint(ck), diffusion::cosine_schedule(get("diffusion.k")),
              {diffusion::to_matrix(ck.find("norm.min")).col(0), diffusion::to_matrix(ck.find("norm.max")).col(0)},
              get("efd.d"), get("efd.n")};
  require(g.stats.channels() == 4 * g.d && g.model.config().channels == 4 * g.d, ErrorCode::BadCheckpoint,
          "checkpoint channels do not match d");
  return g;
}

// ---------------------------------------------------------------------------
// Stages

struct PrepResult {
  SplitManifest split;
  std::vector<std::string> manifest_lines;  // window,track,start,root,split
  int tracks = 0;
  long windows = 0;
};

// Filters, carves and windows a labelled video, then splits by lineage and
// writes windows/<split>/<id>.mvb plus split_manifest.txt under `out`.
inline PrepResult prep(const LabeledVideo& video, const PipelineConfig& cfg, const fs::path& out,
                       std::vector<std::string>* warnings = nullptr) {
  const auto validity = filter_instances(video, cfg.filter);
  const auto tracks = carve_tracks(video, validity, cfg.canvas, warnings);
  const auto roots = lineage_roots(video.lineage);
  std::map<int, long> per_root;
  for (const auto& [id, root] : roots) per_root.emplace(root, 0);
  std::vector<Window> windows;
  for (const auto& tr : tracks) {
    auto w = sliding_windows(tr, cfg.t_win, cfg.stride);
    per_root[roots.at(tr.track_id)] += static_cast<long>(w.size());
    for (auto& x : w) windows.push_back(std::move(x));
  }
  PrepResult res;
  res.tracks = static_cast<int>(tracks.size());
  res.windows = static_cast<long>(windows.size());
  res.split = lineage_split(per_root, cfg.test_fraction, cfg.seed);
  const std::set<int> test(res.split.test.begin(), res.split.test.end());
  fs::create_directories(out / "windows" / "train");
  fs::create_directories(out / "windows" / "test");
  for (std::size_t i = 0; i < windows.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "w%05zu", i);
    const int root = roots.at(windows[i].track_id);
    const char* side = test.count(root) ? "test" : "train";
    io::save_mvb(out / "windows" / side / (std::string(id) + ".mvb"), windows[i].video);
    res.manifest_lines.push_back(std::string(id) + " " + std::to_string(windows[i].track_id) + " " +
                                 std::to_string(windows[i].start) + " " + std::to_string(root) + " " + side);
  }
  std::ofstream os(out / "split_manifest.txt");
  os << "# window track start root split\n";
  for (const auto& l : res.manifest_lines) os << l << '\n';
  os << "# test_fraction=" << cfg.test_fraction << " train_windows=" << res.split.train_windows
     << " test_windows=" << res.split.test_windows << '\n';
  return res;
}

// Encodes every video; videos whose frames cannot be encoded are skipped and
// reported.
inline std::vector<EfdSeries> encode_all(const std::vector<MaskVideo>& videos, int d, int n,
                                         std::vector<std::string>* warnings = nullptr) {
  std::vector<EfdSeries> out;
  out.reserve(videos.size());
  for (std::size_t i = 0; i < videos.size(); ++i) {
    try {
      out.push_back(encode_video(videos[i], {d, n, true}));
    } catch (const FrameError& e) {
      if (warnings) warnings->push_back("video " + std::to_string(i) + " skipped: " + e.what());
    }
  }
  require(!out.empty(), ErrorCode::EmptyDataset, "no video could be encoded");
  return out;
}

inline std::vector<Eigen::MatrixXd> normalized_matrices(const std::vector<EfdSeries>& series, const NormStats& st) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(series.size());
  for (const auto& s : series) out.push_back(apply_norm(s, st).z);
  return out;
}

// Fits normalization on `train_series`, trains a denoiser and wraps both.
inline Generator fit_generator(const std::vector<EfdSeries>& train_series, const PipelineConfig& cfg,
                               std::vector<diffusion::TrainRecord>* log = nullptr,
                               const std::function<void(const diffusion::TrainRecord&)>& on_step = {}) {
  const auto stats = fit_norm(train_series);
  auto cfg_train = cfg.train;
  cfg_train.seed = cfg.seed;
  cfg_train.threads = cfg.threads;
  cfg_train.diffusion_steps = cfg.k_steps;
  auto result = diffusion::train(normalized_matrices(train_series, stats), cfg_train, on_step);
  if (log) *log = std::move(result.log);
  return {std::move(result.model), diffusion::cosine_schedule(cfg.k_steps), stats, train_series.front().d, cfg.n};
}

// One CSV row per (d, feature, metric).
struct AblationRow {
  int d = 0;
  metrics::Feature feature = metrics::Feature::Area;
  std::string metric;
  metrics::MeanStd value;
};

inline void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "d,feature,metric,mean,std\n" << std::setprecision(10);
  for (const auto& r : rows)
    os << r.d << ',' << metrics::feature_name(r.feature) << ',' << r.metric << ',' << r.value.mean << ','
       << r.value.std << '\n';
}

// For each d: re-encode, retrain with cfg.train's step budget, regenerate
// and evaluate against `held_out`.
inline std::vector<AblationRow> ablation_sweep(const std::vector<MaskVideo>& train_videos,
                                               const std::vector<MaskVideo>& held_out, const PipelineConfig& cfg,
                                               std::vector<std::string>* warnings = nullptr,
                                               const std::function<void(int)>& on_d = {}) {
  require(!cfg.d_values.empty(), ErrorCode::InvalidConfig, "d_values is empty");
  std::vector<AblationRow> rows;
  for (int d : cfg.d_values) {
    if (on_d) on_d(d);
    const auto series = encode_all(train_videos, d, cfg.n, warnings);
    const auto gen = fit_generator(series, cfg);
    const auto rep = metrics::evaluate(
        held_out, [&](std::uint64_t s) { return gen.generate(cfg.count, s, cfg.canvas, nullptr, cfg.threads); }, cfg.replications, cfg.seed);
    for (const auto& row : rep.rows) {
      rows.push_back({d, row.feature, "diff", row.diff});
      rows.push_back({d, row.feature, "dtw", row.dtw});
    }
  }
  return rows;
}

}  // namespace efdgen::pipeline
