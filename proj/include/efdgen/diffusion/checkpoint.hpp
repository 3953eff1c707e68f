#pragma once

// EFDM checkpoint container (all integers little-endian):
//   "EFDM" | u32 version | u32 config length | config text
//   | u32 tensor count | per tensor: u32 name length, name, u32 rank,
//     rank x u32 dims, then row-major f64 values.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "efdgen/diffusion/denoiser.hpp"
#include "efdgen/error.hpp"

namespace efdgen::diffusion {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Tensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config;  // key=value lines
  std::vector<Tensor> tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;

  const Tensor& find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw Error(ErrorCode::BadCheckpoint, "checkpoint has no tensor '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return true;
    return false;
  }
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  require(static_cast<bool>(is), ErrorCode::BadCheckpoint, "truncated checkpoint");
  return b[0] | (static_cast<std::uint32_t>(b[1]) << 8) | (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  require(static_cast<bool>(is), ErrorCode::BadCheckpoint, "truncated checkpoint");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline std::string get_bytes(std::istream& is, std::uint32_t n) {
  require(n < (1u << 30), ErrorCode::BadCheckpoint, "implausible field length");
  std::string s(n, '\0');
  is.read(s.data(), n);
  require(static_cast<bool>(is), ErrorCode::BadCheckpoint, "truncated checkpoint");
  return s;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os.write("EFDM", 4);
  detail::put_u32(os, ck.version);
  detail::put_u32(os, static_cast<std::uint32_t>(ck.config.size()));
  os.write(ck.config.data(), static_cast<std::streamsize>(ck.config.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    detail::put_u32(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) detail::put_u32(os, d);
    for (double v : t.values) detail::put_f64(os, v);
  }
}

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  require(is && std::memcmp(magic, "EFDM", 4) == 0, ErrorCode::BadCheckpoint, "missing EFDM magic");
  Checkpoint ck;
  ck.version = detail::get_u32(is);
  require(ck.version == kCheckpointVersion, ErrorCode::BadCheckpoint,
          "unsupported checkpoint version " + std::to_string(ck.version));
  ck.config = detail::get_bytes(is, detail::get_u32(is));
  const auto count = detail::get_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = detail::get_bytes(is, detail::get_u32(is));
    const auto rank = detail::get_u32(is);
    require(rank <= 8, ErrorCode::BadCheckpoint, "implausible tensor rank");
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(detail::get_u32(is));
      n *= t.dims.back();
    }
    require(n < (1ull << 28), ErrorCode::BadCheckpoint, "implausible tensor size");
    t.values.resize(n);
    for (auto& v : t.values) v = detail::get_f64(is);
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::Io, "cannot open " + path.string());
  write_checkpoint(os, ck);
  require(static_cast<bool>(os), ErrorCode::Io, "write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::Io, "cannot open " + path.string());
  return read_checkpoint(is);
}

inline Tensor to_tensor(const std::string& name, const Eigen::MatrixXd& m) {
  Tensor t{name, {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, {}};
  t.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.values.push_back(m(r, c));
  return t;
}

inline Eigen::MatrixXd to_matrix(const Tensor& t) {
  require(t.dims.size() == 2 || t.dims.size() == 1, ErrorCode::BadCheckpoint, "tensor '" + t.name + "' is not 1-D or 2-D");
  const Eigen::Index rows = t.dims[0];
  const Eigen::Index cols = t.dims.size() == 2 ? t.dims[1] : 1;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = t.values[static_cast<std::size_t>(r * cols + c)];
  return m;
}

inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline DenoiserConfig config_from_text(const std::string& text) {
  const auto kv = parse_config_text(text);
  auto get = [&](const char* key) {
    const auto it = kv.find(key);
    require(it != kv.end(), ErrorCode::BadCheckpoint, std::string("config is missing '") + key + "'");
    return std::stoi(it->second);
  };
  DenoiserConfig c;
  c.channels = get("channels");
  c.length = get("length");
  c.width = get("width");
  c.heads = get("heads");
  c.blocks = get("blocks");
  c.mlp_ratio = get("mlp_ratio");
  c.poly_degree = get("poly_degree");
  c.season_freqs = get("season_freqs");
  c.use_trend = get("use_trend") != 0;
  c.use_season = get("use_season") != 0;
  c.use_residual = get("use_residual") != 0;
  return c;
}

// Model weights plus any extra tensors (e.g. normalisation statistics) and
// extra config lines.
inline Checkpoint make_checkpoint(const DenoiserModel& model, const std::string& extra_config = {},
                                  const std::vector<Tensor>& extra = {}) {
  Checkpoint ck;
  ck.config = model.config().to_text() + extra_config;
  for (std::size_t i = 0; i < model.params().size(); ++i)
    ck.tensors.push_back(to_tensor(model.params().name(i), model.params()[i]));
  ck.tensors.insert(ck.tensors.end(), extra.begin(), extra.end());
  return ck;
}

inline DenoiserModel model_from_checkpoint(const Checkpoint& ck) {
  DenoiserModel model(config_from_text(ck.config));
  ParamSet p = model.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& t = ck.find(p.name(i));
    const auto m = to_matrix(t);
    require(m.rows() == p[i].rows() && m.cols() == p[i].cols(), ErrorCode::BadCheckpoint,
            "tensor '" + p.name(i) + "' has the wrong shape");
    p[i] = m;
  }
  model.load_params(p);
  return model;
}

}  // namespace efdgen::diffusion
