#include <doctest.h>

#include <cmath>

#include "stcdit/synth.hpp"
#include "stcdit/video_io.hpp"
#include "support.hpp"

using namespace stcdit;
using stcdit::test::TempDir;
using stcdit::test::throws_code;

namespace {

std::string pgm_bytes(int w, int h, std::uint8_t value) {
  std::string s = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  s.append(static_cast<std::size_t>(w) * h, static_cast<char>(value));
  return s;
}

// Smallest legal frame, filled with one colour.
Frame rgb_pixel(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  std::vector<std::uint8_t> px;
  for (int i = 0; i < 64; ++i) px.insert(px.end(), {r, g, b});
  return Frame(8, 8, PixelFormat::Rgb8, std::move(px));
}

}  // namespace

TEST_SUITE("video_io") {
  TEST_CASE("directory of identical gray frames loads in order") {
    TempDir dir;
    for (int i = 0; i < 3; ++i) test::write_file(dir / ("f" + std::to_string(i) + ".pgm"), pgm_bytes(16, 16, 90));
    const FrameSequence seq = load_frame_sequence(dir.path());
    CHECK(seq.size() == 3);
    CHECK(seq.width() == 16);
    CHECK(seq.height() == 16);
    CHECK(seq.format() == PixelFormat::Gray8);
    for (std::size_t i = 0; i < seq.size(); ++i) CHECK(seq[i] == Frame::filled(16, 16, PixelFormat::Gray8, 90));
  }

  TEST_CASE("raw stream shorter than its header is rejected") {
    TempDir dir;
    std::string bytes = "64 48 5\n";
    bytes.append(4u * 64u * 48u, '\x10');
    test::write_file(dir / "clip.raw", bytes);
    CHECK(throws_code([&] { load_frame_sequence(dir / "clip.raw"); }, ErrorCode::DimensionMismatch));
  }

  TEST_CASE("raw stream with sidecar header") {
    TempDir dir;
    test::write_file(dir / "clip.raw", std::string(2u * 8u * 10u, '\x20'));
    test::write_file(dir / "clip.raw.hdr", "8 10 2\n");
    const FrameSequence seq = load_frame_sequence(dir / "clip.raw", FormatHint::RawGray);
    CHECK(seq.size() == 2);
    CHECK(seq.width() == 8);
    CHECK(seq.height() == 10);
    CHECK(seq[1].at(7, 9) == 0x20);
  }

  TEST_CASE("mixed frame heights are rejected") {
    std::vector<Frame> frames{Frame::filled(8, 8, PixelFormat::Rgb8, 1), Frame::filled(8, 9, PixelFormat::Rgb8, 1)};
    CHECK(throws_code([&] { FrameSequence seq(std::move(frames)); }, ErrorCode::DimensionMismatch));

    TempDir dir;
    test::write_file(dir / "a.pgm", pgm_bytes(8, 8, 0));
    test::write_file(dir / "b.pgm", pgm_bytes(8, 10, 0));
    CHECK(throws_code([&] { load_frame_sequence(dir.path()); }, ErrorCode::DimensionMismatch));
  }

  TEST_CASE("frame buffer length must match its size") {
    CHECK(throws_code([] { Frame(8, 8, PixelFormat::Rgb8, std::vector<std::uint8_t>(64)); },
                      ErrorCode::DimensionMismatch));
    CHECK(throws_code([] { Frame::filled(7, 8, PixelFormat::Gray8, 0); }, ErrorCode::DimensionMismatch));
    CHECK(throws_code([] { FrameSequence(std::vector<Frame>{}); }, ErrorCode::DimensionMismatch));
  }

  TEST_CASE("missing and unsupported inputs") {
    TempDir dir;
    CHECK(throws_code([&] { load_frame_sequence(dir / "nope"); }, ErrorCode::MissingInput));
    test::write_file(dir / "x.png", "not really");
    CHECK(throws_code([&] { load_frame_sequence(dir / "x.png"); }, ErrorCode::UnsupportedFormat));
    TempDir empty;
    CHECK(throws_code([&] { load_frame_sequence(empty.path()); }, ErrorCode::MissingInput));
  }

  TEST_CASE("grayscale conversion") {
    CHECK(to_grayscale(rgb_pixel(255, 255, 255)).at(0, 0) == 255);
    CHECK(to_grayscale(rgb_pixel(255, 0, 0)).at(0, 0) == 76);
    CHECK(to_grayscale(rgb_pixel(0, 0, 0)).at(0, 0) == 0);

    const Frame g = test::noise_frame(9, 11, 5);
    CHECK(to_grayscale(g) == g);

    // Floating-point luma oracle, rounded half up.
    for (int r = 0; r < 256; r += 15) {
      for (int gr = 0; gr < 256; gr += 17) {
        for (int b = 0; b < 256; b += 51) {
          const double luma = 0.299 * r + 0.587 * gr + 0.114 * b;
          const auto got = to_grayscale(rgb_pixel(static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(gr),
                                                  static_cast<std::uint8_t>(b)))
                               .at(0, 0);
          CHECK(std::abs(got - std::floor(luma + 0.5)) <= (std::abs(luma - std::floor(luma) - 0.5) < 1e-9 ? 1 : 0));
        }
      }
    }
  }

  TEST_CASE("image directory round trip is byte identical") {
    TempDir dir;
    std::vector<Frame> frames;
    for (int i = 0; i < 3; ++i) frames.push_back(test::noise_frame(12, 10, 100 + i));
    const FrameSequence seq(frames);
    save_image_directory(seq, dir / "out");
    CHECK(load_frame_sequence(dir / "out") == seq);

    std::vector<std::uint8_t> rgb(9 * 8 * 3);
    for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<std::uint8_t>(i * 7);
    const FrameSequence color(std::vector<Frame>{Frame(9, 8, PixelFormat::Rgb8, rgb)});
    save_image_directory(color, dir / "rgb");
    CHECK(load_frame_sequence(dir / "rgb") == color);
  }

  TEST_CASE("raw stream round trip") {
    TempDir dir;
    const FrameSequence seq(std::vector<Frame>{test::noise_frame(10, 8, 1), test::noise_frame(10, 8, 2)});
    save_raw_stream(seq, dir / "s.raw");
    CHECK(load_frame_sequence(dir / "s.raw") == seq);
    const FrameSequence color(std::vector<Frame>{Frame::filled(8, 8, PixelFormat::Rgb8, 3)});
    CHECK(throws_code([&] { save_raw_stream(color, dir / "c.raw"); }, ErrorCode::UnsupportedFormat));
  }
}

TEST_SUITE("synth") {
  TEST_CASE("identity regime renders identical frames") {
    SynthSpec spec;
    spec.regimes = {{10, MotionParams::identity()}};
    spec.width = spec.height = 32;
    const SynthVideo v = synth_video(spec);
    REQUIRE(v.sequence.size() == 10);
    for (std::size_t i = 1; i < 10; ++i) CHECK(v.sequence[i] == v.sequence[0]);
    CHECK(v.truth.size() == 9);
    CHECK(v.breaks.empty());
  }

  TEST_CASE("translating checkerboard shifts by whole pixels") {
    SynthSpec spec;
    spec.base = Texture::Checkerboard;
    spec.regimes = {{6, {2.0, 0.0, 0.0, 1.0}}};
    spec.width = spec.height = 48;
    const SynthVideo v = synth_video(spec);
    for (int k = 1; k < 6; ++k) {
      int mismatches = 0;
      for (int y = 2; y < 46; ++y) {
        for (int x = 2; x + 2 * k < 46; ++x) {
          if (v.sequence[k].at(x + 2 * k, y) != v.sequence[0].at(x, y)) ++mismatches;
        }
      }
      CHECK(mismatches == 0);
    }
  }

  TEST_CASE("regime boundaries become ground-truth breaks") {
    SynthSpec spec;
    spec.regimes = {{20, {2.0, 0.0, 0.0, 1.0}}, {20, {0.0, 0.0, 0.0, 1.01}}};
    spec.width = spec.height = 32;
    const SynthVideo v = synth_video(spec);
    CHECK(v.sequence.size() == 40);
    CHECK(v.breaks == std::vector<int>{20});
    CHECK(v.truth[18].tx == doctest::Approx(2.0));
    CHECK(v.truth[19].scale == doctest::Approx(1.01));
  }

  TEST_CASE("rendering is deterministic and seed dependent") {
    SynthSpec spec = static_spec(3, 11);
    spec.width = spec.height = 24;
    CHECK(synth_video(spec).sequence == synth_video(spec).sequence);
    SynthSpec other = spec;
    other.texture_seed = 12;
    CHECK_FALSE(synth_video(other).sequence == synth_video(spec).sequence);
  }

  TEST_CASE("invalid synth descriptions") {
    SynthSpec spec;
    CHECK(throws_code([&] { synth_video(spec); }, ErrorCode::InvalidConfig));
    spec.regimes = {{0, {}}};
    CHECK(throws_code([&] { synth_video(spec); }, ErrorCode::InvalidConfig));
    spec.regimes = {{3, {0, 0, 0, 0.0}}};
    CHECK(throws_code([&] { synth_video(spec); }, ErrorCode::DegenerateMotion));
  }

  TEST_CASE("standard suite shape") {
    const auto suite = standard_suite();
    CHECK(suite.size() == 12);
    for (const SynthSpec& s : suite) {
      int frames = 0;
      for (const Regime& r : s.regimes) frames += r.length;
      CHECK(frames >= 60);
      CHECK(frames <= 120);
      CHECK(s.regimes.size() >= 2);
      CHECK(s.regimes.size() <= 4);
    }
  }
}
