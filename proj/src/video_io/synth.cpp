#include "stcdit/synth.hpp"

#include <cmath>

#include "stcdit/error.hpp"

namespace stcdit {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Integer-lattice base image, defined on the whole plane.
struct BaseTexture {
  Texture kind;
  std::uint64_t seed;
  int cell;

  double texel(long long ix, long long iy) const {
    const long long cx = ix >= 0 ? ix / cell : -((-ix - 1) / cell) - 1;
    const long long cy = iy >= 0 ? iy / cell : -((-iy - 1) / cell) - 1;
    if (kind == Texture::Checkerboard) return ((cx + cy) & 1) ? 255.0 : 0.0;
    const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(cx) * 0x100000001B3ull ^
                                                         splitmix64(static_cast<std::uint64_t>(cy))));
    return static_cast<double>(h % 256);
  }

  double sample(double x, double y) const {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const auto x0 = static_cast<long long>(fx);
    const auto y0 = static_cast<long long>(fy);
    const double ax = x - fx;
    const double ay = y - fy;
    const double top = texel(x0, y0) * (1 - ax) + texel(x0 + 1, y0) * ax;
    const double bottom = texel(x0, y0 + 1) * (1 - ax) + texel(x0 + 1, y0 + 1) * ax;
    return top * (1 - ay) + bottom * ay;
  }
};

Frame render(const BaseTexture& tex, const AffineMatrix& to_texture, int w, int h) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h);
  const double cx = 0.5 * (w - 1);
  const double cy = 0.5 * (h - 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Point2 q = to_texture.apply({x - cx, y - cy});
      const double v = tex.sample(q.x + cx, q.y + cy);
      px[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  }
  return Frame(w, h, PixelFormat::Gray8, std::move(px));
}

}  // namespace

SynthVideo synth_video(const SynthSpec& spec) {
  if (spec.regimes.empty()) throw Error(ErrorCode::InvalidConfig, "synth spec has no regimes");
  for (const Regime& r : spec.regimes) {
    if (r.length < 1) throw Error(ErrorCode::InvalidConfig, "regime length must be >= 1");
    if (!(r.motion.scale > 0.0)) throw Error(ErrorCode::DegenerateMotion, "regime scale must be > 0");
  }
  if (spec.cell < 1) throw Error(ErrorCode::InvalidConfig, "texture cell must be >= 1");

  std::vector<MotionParams> per_frame;  // motion used to reach each frame
  std::vector<int> breaks;
  for (const Regime& r : spec.regimes) {
    if (!per_frame.empty()) breaks.push_back(static_cast<int>(per_frame.size()));
    per_frame.insert(per_frame.end(), r.length, r.motion);
  }

  const BaseTexture tex{spec.base, spec.texture_seed, spec.cell};
  std::vector<Frame> frames;
  frames.reserve(per_frame.size());
  std::vector<MotionParams> truth;
  AffineMatrix to_frame = AffineMatrix::identity();  // frame 0 -> frame k
  frames.push_back(render(tex, to_frame, spec.width, spec.height));
  for (std::size_t k = 1; k < per_frame.size(); ++k) {
    truth.push_back(per_frame[k]);
    to_frame = compose_similarity(per_frame[k]).after(to_frame);
    frames.push_back(render(tex, to_frame.inverse(), spec.width, spec.height));
  }
  return {FrameSequence(std::move(frames), spec.fps), std::move(truth), std::move(breaks)};
}

namespace {

constexpr MotionParams translate(double tx, double ty) { return {tx, ty, 0.0, 1.0}; }
constexpr MotionParams rotate(double theta) { return {0.0, 0.0, theta, 1.0}; }
constexpr MotionParams zoom(double s) { return {0.0, 0.0, 0.0, s}; }

}  // namespace

std::vector<SynthSpec> standard_suite() {
  const MotionParams still = MotionParams::identity();
  const MotionParams t1 = translate(5.0, 0.0);
  const MotionParams t2 = translate(0.0, -5.0);
  const MotionParams t3 = translate(-4.0, 3.0);
  const MotionParams r_pos = rotate(0.04);
  const MotionParams r_neg = rotate(-0.04);
  const MotionParams z_in = zoom(1.05);
  const MotionParams z_out = zoom(0.95);

  const std::vector<std::vector<Regime>> layouts = {
      {{30, t1}, {30, r_pos}},
      {{30, still}, {40, t2}},
      {{35, r_neg}, {25, z_in}},
      {{25, t1}, {25, t2}, {30, r_pos}},
      {{20, z_in}, {30, t3}, {30, r_neg}},
      {{30, t2}, {30, still}, {30, t1}},
      {{30, r_pos}, {30, t1}, {20, z_in}, {25, t3}},
      {{40, t3}, {40, r_pos}},
      {{20, z_in}, {20, z_out}, {30, t1}},
      {{25, still}, {25, r_pos}, {25, t2}, {20, z_out}},
      {{40, t1}, {40, r_neg}, {40, t2}},
      {{30, r_neg}, {20, z_in}, {20, still}, {30, t3}},
  };
  std::vector<SynthSpec> suite;
  std::uint64_t seed = 11;
  for (const auto& regimes : layouts) {
    SynthSpec s;
    s.regimes = regimes;
    s.texture_seed = seed++;
    suite.push_back(std::move(s));
  }
  return suite;
}

SynthSpec static_spec(int frames, std::uint64_t seed) {
  SynthSpec s;
  s.regimes = {{frames, MotionParams::identity()}};
  s.texture_seed = seed;
  return s;
}

std::string texture_name(Texture t) { return t == Texture::Checkerboard ? "checkerboard" : "blocks"; }

Texture parse_texture(const std::string& name) {
  if (name == "blocks") return Texture::Blocks;
  if (name == "checkerboard") return Texture::Checkerboard;
  throw Error(ErrorCode::InvalidConfig, "unknown texture '" + name + "'");
}

}  // namespace stcdit
