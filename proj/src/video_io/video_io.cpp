#include "stcdit/video_io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "stcdit/error.hpp"
#include "stcdit/image.hpp"

namespace stcdit {

namespace fs = std::filesystem;

Frame::Frame(int width, int height, PixelFormat format, std::vector<std::uint8_t> data)
    : width_(width), height_(height), format_(format), data_(std::move(data)) {
  if (width < 8 || height < 8) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("frame {}x{} is below the 8x8 minimum", width, height));
  }
  const std::size_t expected = static_cast<std::size_t>(width) * height * channels(format);
  if (data_.size() != expected) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("frame buffer holds {} bytes, expected {}", data_.size(), expected));
  }
}

Frame Frame::filled(int width, int height, PixelFormat format, std::uint8_t value) {
  return Frame(width, height, format,
               std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * channels(format),
                                         value));
}

FrameSequence::FrameSequence(std::vector<Frame> frames, double fps)
    : frames_(std::move(frames)), fps_(fps) {
  if (frames_.empty()) throw Error(ErrorCode::DimensionMismatch, "empty frame sequence");
  const Frame& first = frames_.front();
  for (std::size_t i = 1; i < frames_.size(); ++i) {
    const Frame& f = frames_[i];
    if (f.width() != first.width() || f.height() != first.height() ||
        f.format() != first.format()) {
      throw Error(ErrorCode::DimensionMismatch,
                  fmt::format("frame {} is {}x{}, frame 0 is {}x{}", i, f.width(), f.height(),
                              first.width(), first.height()));
    }
  }
}

Frame to_grayscale(const Frame& f) {
  if (f.format() == PixelFormat::Gray8) return f;
  const auto src = f.data();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(f.width()) * f.height());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const unsigned r = src[3 * i];
    const unsigned g = src[3 * i + 1];
    const unsigned b = src[3 * i + 2];
    out[i] = static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
  }
  return Frame(f.width(), f.height(), PixelFormat::Gray8, std::move(out));
}

ImageF to_image(const Frame& f, int channel) {
  ImageF img(f.width(), f.height());
  const int nc = channels(f.format());
  const auto src = f.data();
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = src[i * nc + channel];
  return img;
}

ImageF luma_image(const Frame& f) { return to_image(to_grayscale(f)); }

ImageF downsample2(const ImageF& img) {
  ImageF out(img.width / 2, img.height / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      out.at(x, y) = 0.25f * (img.at(2 * x, 2 * y) + img.at(2 * x + 1, 2 * y) +
                              img.at(2 * x, 2 * y + 1) + img.at(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

namespace {

std::vector<std::uint8_t> read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reads one whitespace-delimited token from a netpbm header, skipping comments.
std::string next_token(const std::vector<std::uint8_t>& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(buf[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < buf.size() && !std::isspace(buf[pos]) && buf[pos] != '#') tok += static_cast<char>(buf[pos++]);
  return tok;
}

int parse_int(const std::string& tok, const fs::path& p) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::UnsupportedFormat, "bad header field '" + tok + "' in " + p.string());
  }
}

Frame read_netpbm(const fs::path& p) {
  const auto buf = read_all(p);
  std::size_t pos = 0;
  const std::string magic = next_token(buf, pos);
  PixelFormat format;
  if (magic == "P5") {
    format = PixelFormat::Gray8;
  } else if (magic == "P6") {
    format = PixelFormat::Rgb8;
  } else {
    throw Error(ErrorCode::UnsupportedFormat, "not a binary PGM/PPM: " + p.string());
  }
  const int w = parse_int(next_token(buf, pos), p);
  const int h = parse_int(next_token(buf, pos), p);
  const int maxval = parse_int(next_token(buf, pos), p);
  if (maxval != 255) throw Error(ErrorCode::UnsupportedFormat, "maxval must be 255: " + p.string());
  ++pos;  // single whitespace after maxval
  const std::size_t need = static_cast<std::size_t>(w) * h * channels(format);
  if (w <= 0 || h <= 0 || pos + need > buf.size()) {
    throw Error(ErrorCode::DimensionMismatch, "truncated image data in " + p.string());
  }
  return Frame(w, h, format, std::vector<std::uint8_t>(buf.begin() + pos, buf.begin() + pos + need));
}

bool is_netpbm(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

bool is_other_image(const fs::path& p) {
  static const char* kExts[] = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".gif", ".webp"};
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return std::find(std::begin(kExts), std::end(kExts), ext) != std::end(kExts);
}

FrameSequence load_directory(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto& p = entry.path();
    if (is_netpbm(p)) {
      files.push_back(p);
    } else if (is_other_image(p)) {
      throw Error(ErrorCode::UnsupportedFormat, "only PGM/PPM images are supported: " + p.string());
    }
  }
  if (files.empty()) throw Error(ErrorCode::MissingInput, "no PGM/PPM frames in " + dir.string());
  std::sort(files.begin(), files.end());
  std::vector<Frame> frames;
  frames.reserve(files.size());
  for (const auto& f : files) frames.push_back(read_netpbm(f));
  return FrameSequence(std::move(frames));
}

struct RawHeader {
  int width;
  int height;
  int count;
};

RawHeader parse_raw_header(const std::string& line, const fs::path& p) {
  std::istringstream ss(line);
  RawHeader h{};
  std::string extra;
  if (!(ss >> h.width >> h.height >> h.count) || (ss >> extra)) {
    throw Error(ErrorCode::UnsupportedFormat, "raw header must be 'W H N': " + p.string());
  }
  if (h.width <= 0 || h.height <= 0 || h.count <= 0) {
    throw Error(ErrorCode::UnsupportedFormat, "raw header fields must be positive: " + p.string());
  }
  return h;
}

FrameSequence load_raw(const fs::path& file) {
  auto buf = read_all(file);
  fs::path sidecar = file;
  sidecar += ".hdr";
  RawHeader h{};
  std::size_t offset = 0;
  if (fs::exists(sidecar)) {
    const auto hdr = read_all(sidecar);
    std::string line(hdr.begin(), std::find(hdr.begin(), hdr.end(), '\n'));
    h = parse_raw_header(line, sidecar);
  } else {
    const auto nl = std::find(buf.begin(), buf.end(), '\n');
    if (nl == buf.end()) throw Error(ErrorCode::UnsupportedFormat, "raw stream lacks header: " + file.string());
    h = parse_raw_header(std::string(buf.begin(), nl), file);
    offset = static_cast<std::size_t>(nl - buf.begin()) + 1;
  }
  const std::size_t frame_bytes = static_cast<std::size_t>(h.width) * h.height;
  const std::size_t have = buf.size() - offset;
  if (have != frame_bytes * h.count) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("header declares {} frames of {}x{} ({} bytes), stream has {} bytes",
                            h.count, h.width, h.height, frame_bytes * h.count, have));
  }
  std::vector<Frame> frames;
  frames.reserve(h.count);
  for (int i = 0; i < h.count; ++i) {
    const auto begin = buf.begin() + offset + i * frame_bytes;
    frames.emplace_back(h.width, h.height, PixelFormat::Gray8,
                        std::vector<std::uint8_t>(begin, begin + frame_bytes));
  }
  return FrameSequence(std::move(frames));
}

}  // namespace

FrameSequence load_frame_sequence(const fs::path& path, FormatHint hint) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingInput, "no such input: " + path.string());
  const bool is_dir = fs::is_directory(path);
  switch (hint) {
    case FormatHint::ImageDirectory:
      if (!is_dir) throw Error(ErrorCode::UnsupportedFormat, "expected a directory: " + path.string());
      return load_directory(path);
    case FormatHint::RawGray:
      if (is_dir) throw Error(ErrorCode::UnsupportedFormat, "expected a raw stream file: " + path.string());
      return load_raw(path);
    case FormatHint::Auto:
      break;
  }
  if (is_dir) return load_directory(path);
  if (is_netpbm(path)) return FrameSequence({read_netpbm(path)});
  if (is_other_image(path)) throw Error(ErrorCode::UnsupportedFormat, "unsupported image: " + path.string());
  return load_raw(path);
}

void save_image_directory(const FrameSequence& seq, const fs::path& dir) {
  fs::create_directories(dir);
  const bool gray = seq.format() == PixelFormat::Gray8;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const Frame& f = seq[i];
    const fs::path p = dir / fmt::format("frame_{:05d}.{}", i, gray ? "pgm" : "ppm");
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::MissingInput, "cannot write " + p.string());
    out << (gray ? "P5" : "P6") << '\n' << f.width() << ' ' << f.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(f.data().data()), static_cast<std::streamsize>(f.data().size()));
  }
}

void save_raw_stream(const FrameSequence& seq, const fs::path& file) {
  if (seq.format() != PixelFormat::Gray8) {
    throw Error(ErrorCode::UnsupportedFormat, "raw streams carry Gray8 frames only");
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::MissingInput, "cannot write " + file.string());
  out << seq.width() << ' ' << seq.height() << ' ' << seq.size() << '\n';
  for (const Frame& f : seq.frames()) {
    out.write(reinterpret_cast<const char*>(f.data().data()), static_cast<std::streamsize>(f.data().size()));
  }
}

}  // namespace stcdit
