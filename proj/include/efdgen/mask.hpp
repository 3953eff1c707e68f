#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "efdgen/error.hpp"

namespace efdgen {

// Binary occupancy grid, row-major, values 0 or 1.
class MaskFrame {
 public:
  MaskFrame() = default;
  MaskFrame(int width, int height)
      : width_(width), height_(height),
        bits_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0) {
    require(width > 0 && height > 0, ErrorCode::InvalidArgument,
            "mask dimensions must be positive");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }
  bool empty() const noexcept { return bits_.empty(); }

  std::uint8_t at(int x, int y) const {
    return bits_[static_cast<std::size_t>(y) * width_ + x];
  }
  // Out-of-range reads return background, which lets tracers treat the frame
  // as if it were padded with zeros.
  std::uint8_t get(int x, int y) const {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) return 0;
    return at(x, y);
  }
  void set(int x, int y, bool on) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = on ? 1 : 0;
  }

  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }
  std::vector<std::uint8_t>& bits() noexcept { return bits_; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
  }

  friend bool operator==(const MaskFrame&, const MaskFrame&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct MaskVideo {
  std::vector<MaskFrame> frames;

  int length() const noexcept { return static_cast<int>(frames.size()); }
  int width() const { return frames.empty() ? 0 : frames.front().width(); }
  int height() const { return frames.empty() ? 0 : frames.front().height(); }

  void validate() const {
    require(!frames.empty(), ErrorCode::InconsistentDimensions, "video has no frames");
    for (const auto& f : frames)
      require(f.width() == width() && f.height() == height(),
              ErrorCode::InconsistentDimensions, "frames differ in size");
  }

  friend bool operator==(const MaskVideo&, const MaskVideo&) = default;
};

namespace io {

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw Error(ErrorCode::MalformedManifest, "truncated integer field");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

// Skips whitespace and '#' comments in a netpbm header.
inline void skip_pnm_space(std::istream& is) {
  for (;;) {
    int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      is.get();
    } else {
      return;
    }
  }
}

}  // namespace detail

// MVB1: magic, T, H, W as u32 LE, then T*H*W bytes frame-major, row-major.
inline void write_mvb(std::ostream& os, const MaskVideo& video) {
  video.validate();
  os.write("MVB1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(video.length()));
  detail::put_u32(os, static_cast<std::uint32_t>(video.height()));
  detail::put_u32(os, static_cast<std::uint32_t>(video.width()));
  for (const auto& f : video.frames)
    os.write(reinterpret_cast<const char*>(f.bits().data()),
             static_cast<std::streamsize>(f.bits().size()));
}

inline MaskVideo read_mvb(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  require(is && std::string(magic, 4) == "MVB1", ErrorCode::MalformedManifest,
          "missing MVB1 magic");
  const auto t = detail::get_u32(is);
  const auto h = detail::get_u32(is);
  const auto w = detail::get_u32(is);
  require(t >= 1 && h >= 1 && w >= 1, ErrorCode::MalformedManifest, "zero dimension in MVB1");
  MaskVideo video;
  video.frames.reserve(t);
  for (std::uint32_t i = 0; i < t; ++i) {
    MaskFrame f(static_cast<int>(w), static_cast<int>(h));
    is.read(reinterpret_cast<char*>(f.bits().data()), static_cast<std::streamsize>(f.size()));
    require(static_cast<bool>(is), ErrorCode::MalformedManifest, "truncated MVB1 payload");
    for (auto b : f.bits())
      require(b <= 1, ErrorCode::MalformedManifest, "MVB1 payload byte is not 0 or 1");
    video.frames.push_back(std::move(f));
  }
  return video;
}

inline void save_mvb(const std::filesystem::path& path, const MaskVideo& video) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::Io, "cannot open " + path.string());
  write_mvb(os, video);
  require(static_cast<bool>(os), ErrorCode::Io, "write failed: " + path.string());
}

inline MaskVideo load_mvb(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::Io, "cannot open " + path.string());
  return read_mvb(is);
}

// Binary P5 PGM, maxval 255, foreground stored as 255.
inline void write_pgm(const std::filesystem::path& path, const MaskFrame& frame) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::Io, "cannot open " + path.string());
  os << "P5\n" << frame.width() << ' ' << frame.height() << "\n255\n";
  std::vector<char> row(frame.bits().size());
  std::transform(frame.bits().begin(), frame.bits().end(), row.begin(),
                 [](std::uint8_t b) { return static_cast<char>(b ? 255 : 0); });
  os.write(row.data(), static_cast<std::streamsize>(row.size()));
}

struct PgmImage {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::vector<std::uint16_t> pixels;
};

// Reads 8- or 16-bit binary PGM (16-bit samples are big-endian).
inline PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::Io, "cannot open " + path.string());
  std::string magic;
  is >> magic;
  require(magic == "P5", ErrorCode::MalformedManifest, path.string() + " is not a P5 PGM");
  PgmImage img;
  detail::skip_pnm_space(is);
  is >> img.width;
  detail::skip_pnm_space(is);
  is >> img.height;
  detail::skip_pnm_space(is);
  is >> img.maxval;
  is.get();
  require(is && img.width > 0 && img.height > 0 && img.maxval > 0 && img.maxval < 65536,
          ErrorCode::MalformedManifest, "bad PGM header in " + path.string());
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  img.pixels.resize(n);
  if (img.maxval < 256) {
    std::vector<unsigned char> raw(n);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    require(static_cast<bool>(is), ErrorCode::MalformedManifest, "truncated " + path.string());
    std::copy(raw.begin(), raw.end(), img.pixels.begin());
  } else {
    std::vector<unsigned char> raw(2 * n);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(2 * n));
    require(static_cast<bool>(is), ErrorCode::MalformedManifest, "truncated " + path.string());
    for (std::size_t i = 0; i < n; ++i)
      img.pixels[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  }
  return img;
}

inline void write_pgm16(const std::filesystem::path& path, int width, int height,
                        const std::vector<std::uint16_t>& pixels) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::Io, "cannot open " + path.string());
  os << "P5\n" << width << ' ' << height << "\n65535\n";
  for (auto v : pixels) {
    const char b[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xFF)};
    os.write(b, 2);
  }
}

// Directory layout: frame_0000.pgm ... plus manifest.txt holding "T H W".
inline void save_video_dir(const std::filesystem::path& dir, const MaskVideo& video) {
  video.validate();
  std::filesystem::create_directories(dir);
  {
    std::ofstream m(dir / "manifest.txt");
    require(static_cast<bool>(m), ErrorCode::Io, "cannot write manifest in " + dir.string());
    m << video.length() << ' ' << video.height() << ' ' << video.width() << '\n';
  }
  for (int t = 0; t < video.length(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.pgm", t);
    write_pgm(dir / name, video.frames[static_cast<std::size_t>(t)]);
  }
}

inline MaskVideo load_video_dir(const std::filesystem::path& dir) {
  std::ifstream m(dir / "manifest.txt");
  require(static_cast<bool>(m), ErrorCode::MalformedManifest,
          "missing manifest.txt in " + dir.string());
  int t = 0, h = 0, w = 0;
  m >> t >> h >> w;
  require(m && t >= 1 && h >= 1 && w >= 1, ErrorCode::MalformedManifest,
          "manifest.txt must hold 'T H W'");
  MaskVideo video;
  for (int i = 0; i < t; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.pgm", i);
    const auto img = read_pgm(dir / name);
    require(img.width == w && img.height == h, ErrorCode::InconsistentDimensions,
            std::string(name) + " does not match manifest dimensions");
    MaskFrame f(w, h);
    for (std::size_t k = 0; k < img.pixels.size(); ++k) f.bits()[k] = img.pixels[k] ? 1 : 0;
    video.frames.push_back(std::move(f));
  }
  return video;
}

}  // namespace io
}  // namespace efdgen
