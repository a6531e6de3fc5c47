#include <doctest.h>

#include <cmath>

#include "stcdit/pipeline.hpp"
#include "stcdit/synth.hpp"
#include "support.hpp"

using namespace stcdit;
using stcdit::test::random_tensor;
using stcdit::test::throws_code;

namespace {

Tensor32 static_clip(int frames, std::uint64_t seed) {
  const Tensor32 one = random_tensor<float>({3, 1, 8, 8}, seed, 0.0f, 1.0f);
  std::vector<Tensor32> parts(static_cast<std::size_t>(frames), one);
  return concat<float>(parts, 1);
}

FrameSequence synth(std::vector<Regime> regimes, int size = 64) {
  SynthSpec spec;
  spec.regimes = std::move(regimes);
  spec.width = spec.height = size;
  spec.texture_seed = 9;
  return synth_video(spec).sequence;
}

std::vector<ClipLatent> encoded(std::vector<int> lengths, std::uint64_t seed) {
  int total = 0;
  for (int l : lengths) total += l;
  std::vector<Frame> frames;
  for (int i = 0; i < total; ++i) frames.push_back(test::noise_frame(8, 8, seed + i));
  const FrameSequence seq(frames);
  std::vector<ClipSpec> clips;
  int start = 0;
  for (int l : lengths) clips.push_back({start, l}), start += l;
  return encode_segments(seq, clips, ToyVaeConfig{});
}

}  // namespace

TEST_SUITE("toy_vae") {
  TEST_CASE("basis has orthonormal columns") {
    const ToyVaeConfig cfg;
    const auto B = toy_vae_basis(cfg);
    const std::size_t rows = 12, cols = 12;
    REQUIRE(B.size() == rows * cols);
    for (std::size_t i = 0; i < cols; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        double d = 0;
        for (std::size_t r = 0; r < rows; ++r) d += B[r * cols + i] * B[r * cols + j];
        CHECK(std::abs(d - (i == j ? 1.0 : 0.0)) < 1e-12);
      }
    }
    ToyVaeConfig narrow;
    narrow.latent_channels = 8;
    CHECK(throws_code([&] { toy_vae_basis(narrow); }, ErrorCode::InvalidConfig));
    ToyVaeConfig wide;
    wide.latent_channels = 16;
    CHECK(toy_vae_basis(wide).size() == 16u * 12u);
  }

  TEST_CASE("single frame is lossless") {
    const Tensor32 x = random_tensor<float>({3, 1, 8, 8}, 1, 0.0f, 1.0f);
    const ClipLatent l = toy_vae_encode(x, ToyVaeConfig{}, MotionParams::identity(), {0, 1});
    CHECK(l.data.shape() == Shape{12, 1, 4, 4});
    CHECK(max_abs_diff(toy_vae_decode(l, ToyVaeConfig{}), x) < 1e-5);
  }

  TEST_CASE("temporal extent and length checks") {
    const Tensor32 nine = static_clip(9, 2);
    CHECK(toy_vae_encode(nine, ToyVaeConfig{}, {}, {0, 9}).frames() == 3);
    CHECK(throws_code([] { toy_vae_encode(static_clip(8, 3), ToyVaeConfig{}); }, ErrorCode::BadTemporalLength));
    CHECK(throws_code([] { toy_vae_encode(Tensor32::zeros({3, 1, 7, 8}), ToyVaeConfig{}); }, ErrorCode::ShapeMismatch));
  }

  TEST_CASE("static clip decodes exactly") {
    const Tensor32 x = static_clip(13, 4);
    const ClipLatent l = toy_vae_encode(x, ToyVaeConfig{}, {}, {0, 13});
    const Tensor32 back = toy_vae_decode(l, ToyVaeConfig{});
    CHECK(back.shape() == x.shape());
    CHECK(max_abs_diff(back, x) < 1e-5);
  }

  TEST_CASE("moving content costs more than static content") {
    const FrameSequence moving = synth({{9, {2.0, 1.0, 0.02, 1.0}}}, 32);
    const Tensor32 mx = frames_to_tensor(moving, 0, 9);
    const double moving_err = max_abs_diff(toy_vae_decode(toy_vae_encode(mx, ToyVaeConfig{}, {}, {0, 9}), ToyVaeConfig{}), mx);
    const Tensor32 sx = static_clip(9, 5);
    const double static_err = max_abs_diff(toy_vae_decode(toy_vae_encode(sx, ToyVaeConfig{}, {}, {0, 9}), ToyVaeConfig{}), sx);
    CHECK(moving_err > static_err);
  }

  TEST_CASE("key frames survive any motion") {
    const FrameSequence moving = synth({{9, {3.0, -1.0, 0.05, 1.03}}}, 32);
    const Tensor32 x = frames_to_tensor(moving, 0, 9);
    const Tensor32 back = toy_vae_decode(toy_vae_encode(x, ToyVaeConfig{}, {3.0, -1.0, 0.05, 1.03}, {0, 9}), ToyVaeConfig{});
    for (std::size_t k : {0u, 4u, 8u}) {
      double worst = 0;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < 32 * 32; ++p) {
          const std::size_t i = (c * 9 + k) * 32 * 32 + p;
          worst = std::max(worst, double(std::abs(back[i] - x[i])));
        }
      CHECK(worst < 1e-5);
    }
  }

  TEST_CASE("frame tensor conversion") {
    const FrameSequence seq(std::vector<Frame>{test::noise_frame(10, 8, 1), test::noise_frame(10, 8, 2)});
    const Tensor32 t = frames_to_tensor(seq, 0, 5);
    CHECK(t.shape() == Shape{3, 5, 8, 10});
    CHECK(t[(2 * 5 + 4) * 80 + 11] == doctest::Approx(seq[1].at(1, 1) / 255.0));
    const auto frames = tensor_to_frames(t, PixelFormat::Gray8);
    REQUIRE(frames.size() == 5);
    CHECK(frames[0] == seq[0]);
    CHECK(frames[4] == seq[1]);
  }
}

TEST_SUITE("latent_bookkeeping") {
  TEST_CASE("latent lengths follow clip lengths") {
    const auto latents = encoded({5, 9, 1, 13}, 10);
    REQUIRE(latents.size() == 4);
    const std::size_t want[] = {2, 3, 1, 4};
    for (std::size_t i = 0; i < 4; ++i) CHECK(latents[i].frames() == want[i]);
    CHECK(encoded({9}, 11).size() == 1);
  }

  TEST_CASE("concat and split are inverse") {
    const auto latents = encoded({17, 9, 13}, 20);
    const ConcatLatents cat = concat_latents(latents);
    CHECK(cat.y.shape()[1] == 5 + 3 + 4);
    CHECK(cat.lengths() == std::vector<std::size_t>{5, 3, 4});
    const auto back = split_latents(cat.y, cat.seg_map);
    REQUIRE(back.size() == latents.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(bit_equal(back[i].data, latents[i].data));
      CHECK(back[i].source == latents[i].source);
    }
    const auto single = encoded({9}, 21);
    CHECK(bit_equal(concat_latents(single).y, single[0].data));
  }

  TEST_CASE("seg map must partition the latent") {
    const auto latents = encoded({9, 5}, 30);
    ConcatLatents cat = concat_latents(latents);
    cat.seg_map[1].latent_length = 3;
    CHECK(throws_code([&] { split_latents(cat.y, cat.seg_map); }, ErrorCode::SegMapMismatch));
    CHECK(throws_code([&] { split_latents(cat.y, std::span<const SegMapEntry>{}); }, ErrorCode::SegMapMismatch));
  }

  TEST_CASE("key latents equal the transform of the clip frames") {
    std::vector<Frame> frames;
    for (int i = 0; i < 14; ++i) frames.push_back(test::noise_frame(8, 8, 40 + i));
    const FrameSequence seq(frames);
    const std::vector<ClipSpec> clips{{0, 9}, {9, 5}};
    const auto latents = encode_segments(seq, clips, ToyVaeConfig{});
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const Tensor32 want = toy_vae_transform(frames_to_tensor(seq, clips[i].start, 1), ToyVaeConfig{});
      std::vector<float> got;
      for (std::size_t c = 0; c < 12; ++c)
        for (std::size_t p = 0; p < 16; ++p) got.push_back(latents[i].data[(c * latents[i].frames()) * 16 + p]);
      CHECK(max_abs_diff(Tensor32(want.shape(), got), want) < 1e-5);
    }
  }

  TEST_CASE("decoding conserves frames and order") {
    const auto latents = encoded({5, 9}, 50);
    const FrameSequence out = decode_segments(latents, ToyVaeConfig{}, PixelFormat::Gray8);
    CHECK(out.size() == 14);
    const std::vector<ClipLatent> swapped{latents[1], latents[0]};
    CHECK_FALSE(decode_segments(swapped, ToyVaeConfig{}, PixelFormat::Gray8) == out);
  }

  TEST_CASE("thread count does not change encoding") {
    std::vector<Frame> frames;
    for (int i = 0; i < 18; ++i) frames.push_back(test::noise_frame(8, 8, 60 + i));
    const FrameSequence seq(frames);
    const std::vector<ClipSpec> clips{{0, 5}, {5, 5}, {10, 9}};
    const auto a = encode_segments(seq, clips, ToyVaeConfig{}, nullptr, 1);
    const auto b = encode_segments(seq, clips, ToyVaeConfig{}, nullptr, 4);
    for (std::size_t i = 0; i < 3; ++i) CHECK(bit_equal(a[i].data, b[i].data));
  }
}

TEST_SUITE("reconstruct") {
  TEST_CASE("psnr values") {
    const FrameSequence zero(std::vector<Frame>(2, Frame::filled(16, 16, PixelFormat::Gray8, 0)));
    const FrameSequence ten(std::vector<Frame>(2, Frame::filled(16, 16, PixelFormat::Gray8, 10)));
    CHECK(psnr_db(zero, zero) == kPsnrCeiling);
    CHECK(psnr_db(zero, ten) == doctest::Approx(20.0 * std::log10(255.0 / 10.0)));

    // Errors confined to the cropped border do not count.
    std::vector<std::uint8_t> px(256, 0);
    px[0] = 200;
    const FrameSequence edge(std::vector<Frame>(2, Frame(16, 16, PixelFormat::Gray8, px)));
    CHECK(psnr_db(zero, edge) == kPsnrCeiling);
    CHECK(psnr_db(zero, edge, 0) < 60.0);
  }

  TEST_CASE("static video is near lossless in both modes") {
    SynthSpec spec = static_spec(17);
    spec.width = spec.height = 64;
    const FrameSequence seq = synth_video(spec).sequence;
    for (ReconstructionMode m : {ReconstructionMode::Standard, ReconstructionMode::MotionAware}) {
      const ReconstructionResult r = reconstruct(seq, m, PipelineConfig{});
      CHECK(r.psnr > 50.0);
      CHECK(r.frames.size() == seq.size());
    }
  }

  TEST_CASE("motion-aware beats standard across a regime change") {
    const FrameSequence seq = synth({{16, {2.0, 0.0, 0.0, 1.0}}, {17, {0.0, 0.0, 0.04, 1.0}}});
    const ReconstructionResult st = reconstruct(seq, ReconstructionMode::Standard, PipelineConfig{});
    const ReconstructionResult ma = reconstruct(seq, ReconstructionMode::MotionAware, PipelineConfig{});
    CHECK(st.clips.size() == 1);
    CHECK(ma.clips.size() == 2);
    CHECK(ma.psnr > st.psnr);
    CHECK(std::string(mode_name(ReconstructionMode::MotionAware)) == "motion-aware");
    CHECK(std::string(mode_name(ReconstructionMode::Standard)) == "standard");
  }

  TEST_CASE("unaligned length is padded and trimmed") {
    SynthSpec spec = static_spec(11);
    spec.width = spec.height = 64;
    const FrameSequence seq = synth_video(spec).sequence;
    const ReconstructionResult r = reconstruct(seq, ReconstructionMode::Standard, PipelineConfig{});
    CHECK(r.clips == std::vector<ClipSpec>{{0, 13}});
    CHECK(r.frames.size() == 11);
    CHECK(r.seg_map == std::vector<std::size_t>{4});
  }
}

TEST_SUITE("forward") {
  const ModelConfig small = [] {
    ModelConfig m;
    m.dim = 32;
    m.blocks = 1;
    return m;
  }();

  TEST_CASE("frame count, determinism and anchor ablation") {
    SynthSpec spec;
    spec.regimes = {{9, {1.0, 0.0, 0.0, 1.0}}};
    spec.width = spec.height = 64;
    const FrameSequence seq = synth_video(spec).sequence;

    const ForwardResult a = run_restoration_forward(seq, PipelineConfig{}, small);
    const ForwardResult b = run_restoration_forward(seq, PipelineConfig{}, small);
    CHECK(a.frames.size() == seq.size());
    CHECK(a.frames == b.frames);
    CHECK(bit_equal(a.restored_latent, b.restored_latent));

    ForwardOptions bare;
    bare.use_anchors = false;
    const ForwardResult c = run_restoration_forward(seq, PipelineConfig{}, small, bare);
    CHECK(max_abs_diff(a.restored_latent, c.restored_latent) > 0.0);

    ForwardOptions reseeded;
    reseeded.seed = 7;
    CHECK(max_abs_diff(run_restoration_forward(seq, PipelineConfig{}, small, reseeded).restored_latent,
                       a.restored_latent) > 0.0);
  }

  TEST_CASE("explicit weights are used") {
    SynthSpec spec = static_spec(5);
    spec.width = spec.height = 64;
    const FrameSequence seq = synth_video(spec).sequence;
    const auto w = RestorationWeights<float>::init(small, 42);
    ForwardOptions opt;
    opt.weights = &w;
    CHECK(bit_equal(run_restoration_forward(seq, PipelineConfig{}, small, opt).restored_latent,
                    run_restoration_forward(seq, PipelineConfig{}, small).restored_latent));
  }
}
