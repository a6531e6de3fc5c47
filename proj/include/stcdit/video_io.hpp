#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace stcdit {

enum class PixelFormat { Gray8, Rgb8 };

constexpr int channels(PixelFormat f) { return f == PixelFormat::Gray8 ? 1 : 3; }

/// Row-major interleaved 8-bit raster. Immutable after construction.
class Frame {
 public:
  /// Throws DimensionMismatch when the buffer length or size invariant fails.
  Frame(int width, int height, PixelFormat format, std::vector<std::uint8_t> data);

  static Frame filled(int width, int height, PixelFormat format, std::uint8_t value);

  int width() const { return width_; }
  int height() const { return height_; }
  PixelFormat format() const { return format_; }
  std::span<const std::uint8_t> data() const { return data_; }

  std::uint8_t at(int x, int y, int channel = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels(format_) + channel];
  }

  friend bool operator==(const Frame&, const Frame&) = default;

 private:
  int width_;
  int height_;
  PixelFormat format_;
  std::vector<std::uint8_t> data_;
};

class FrameSequence {
 public:
  /// Throws DimensionMismatch on empty input or mixed width/height/format.
  explicit FrameSequence(std::vector<Frame> frames, double fps = 30.0);

  std::size_t size() const { return frames_.size(); }
  const Frame& operator[](std::size_t i) const { return frames_[i]; }
  const std::vector<Frame>& frames() const { return frames_; }
  double fps() const { return fps_; }
  int width() const { return frames_.front().width(); }
  int height() const { return frames_.front().height(); }
  PixelFormat format() const { return frames_.front().format(); }

  friend bool operator==(const FrameSequence& a, const FrameSequence& b) {
    return a.frames_ == b.frames_;
  }

 private:
  std::vector<Frame> frames_;
  double fps_;
};

enum class FormatHint { Auto, ImageDirectory, RawGray };

/// Loads numbered PGM/PPM images from a directory (lexicographic order) or a
/// raw Gray8 stream with an inline `W H N\n` header or a `<path>.hdr` sidecar.
FrameSequence load_frame_sequence(const std::filesystem::path& path,
                                  FormatHint hint = FormatHint::Auto);

/// Writes `frame_00000.pgm` (or .ppm) files into dir, creating it if needed.
void save_image_directory(const FrameSequence& seq, const std::filesystem::path& dir);

/// Writes the inline-header raw stream. Gray8 only.
void save_raw_stream(const FrameSequence& seq, const std::filesystem::path& file);

/// BT.601 luma, rounded half-up. Gray8 input is returned unchanged.
Frame to_grayscale(const Frame& f);

}  // namespace stcdit
