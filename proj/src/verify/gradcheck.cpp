#include <random>

#include <fmt/format.h>

#include "stcdit/model.hpp"
#include "stcdit/verify.hpp"

namespace stcdit::verify {

namespace {

constexpr double kOpLimit = 1e-5;
constexpr double kModuleLimit = 1e-4;

using Fn = std::function<Tensor64(const Tensor64&)>;

// Loss = sum(f(x) * r) with a fixed random r, so ops whose plain sum is
// constant (softmax, layernorm) still get exercised.
Fn weighted(Fn f, const Tensor64& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Tensor64 r = randn<double>(f(x).shape(), rng);
  return [f = std::move(f), r](const Tensor64& v) { return sum(mul(f(v), r)); };
}

Check entry(const std::string& name, const Fn& loss, const Tensor64& x, double limit, std::size_t samples = 0) {
  const GradCheckResult g = grad_check(loss, x, 1e-5, samples, 99);
  Check c{name, g.max_rel_error < limit, g.max_rel_error, limit,
          fmt::format("{} coords, worst #{} analytic {:.6e} numeric {:.6e}", g.checked, g.worst_index, g.analytic,
                      g.numeric)};
  return c;
}

template <template <typename> class W>
void perturb(W<double>& w, std::mt19937_64& rng, double amount) {
  W<double>::each(w, [&](const auto&, Tensor64& t) { t = add(t, uniform<double>(t.shape(), -amount, amount, rng)); });
}

}  // namespace

std::vector<Check> gradcheck_suite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto rnd = [&](Shape s) { return uniform<double>(std::move(s), -1.0, 1.0, rng); };
  std::vector<Check> out;
  auto op = [&](const std::string& name, Fn f, const Tensor64& x) {
    out.push_back(entry("op." + name, weighted(std::move(f), x, seed + out.size()), x, kOpLimit));
  };

  const Tensor64 a = rnd({3, 4});
  const Tensor64 b = rnd({3, 4});
  op("add", [b](const Tensor64& x) { return add(x, b); }, a);
  op("sub.lhs", [b](const Tensor64& x) { return sub(x, b); }, a);
  op("sub.rhs", [a](const Tensor64& x) { return sub(a, x); }, b);
  op("mul", [b](const Tensor64& x) { return mul(x, b); }, a);
  op("mul.self", [](const Tensor64& x) { return mul(x, x); }, a);
  op("scale", [](const Tensor64& x) { return scale(x, 2.5); }, a);
  const Tensor64 bias = rnd({4});
  op("add_bias.x", [bias](const Tensor64& x) { return add_bias(x, bias); }, a);
  op("add_bias.b", [a](const Tensor64& x) { return add_bias(a, x); }, bias);
  op("sum", [](const Tensor64& x) { return scale(sum(x), 3.0); }, a);
  const Tensor64 m = rnd({4, 5});
  op("matmul.lhs", [m](const Tensor64& x) { return matmul(x, m); }, a);
  op("matmul.rhs", [a](const Tensor64& x) { return matmul(a, x); }, m);
  const Tensor64 lb = rnd({5});
  op("linear.x", [m, lb](const Tensor64& x) { return linear(x, m, lb); }, a);
  op("linear.w", [a, lb](const Tensor64& x) { return linear(a, x, lb); }, m);
  op("linear.b", [a, m](const Tensor64& x) { return linear(a, m, x); }, lb);
  op("transpose", [](const Tensor64& x) { return transpose(x); }, a);
  op("reshape", [](const Tensor64& x) { return reshape(x, Shape{2, 6}); }, a);
  op("concat", [b](const Tensor64& x) {
    const Tensor64 parts[3] = {x, b, x};
    return concat<double>(parts, 1);
  }, a);
  op("split", [](const Tensor64& x) {
    const std::size_t sizes[2] = {1, 2};
    const auto parts = split(x, 0, sizes);
    return mul(parts[1], parts[1]);
  }, a);
  op("take", [](const Tensor64& x) {
    const std::vector<std::size_t> idx = {11, 0, 5, 5, 3, 7};
    return take(x, idx, Shape{2, 3});
  }, a);
  op("silu", [](const Tensor64& x) { return silu(x); }, a);
  op("gelu", [](const Tensor64& x) { return gelu(x); }, a);
  op("softmax", [](const Tensor64& x) { return softmax_lastdim(x); }, a);
  const Tensor64 gain = rnd({4});
  op("layernorm.x", [gain, bias](const Tensor64& x) { return layernorm_lastdim(x, gain, bias); }, a);
  op("layernorm.gain", [a, bias](const Tensor64& x) { return layernorm_lastdim(a, x, bias); }, gain);
  op("layernorm.bias", [a, gain](const Tensor64& x) { return layernorm_lastdim(a, gain, x); }, bias);

  const Tensor64 v = rnd({3, 2, 6, 6});
  const Tensor64 dk = rnd({3, 3, 3});
  const Tensor64 db = rnd({3});
  op("dconv3x3.x", [dk, db](const Tensor64& x) { return dconv3x3(x, dk, db); }, v);
  op("dconv3x3.w", [v, db](const Tensor64& x) { return dconv3x3(v, x, db); }, dk);
  op("dconv3x3.b", [v, dk](const Tensor64& x) { return dconv3x3(v, dk, x); }, db);
  const Tensor64 pw = rnd({4, 3});
  const Tensor64 pb = rnd({4});
  op("pconv1x1.x", [pw, pb](const Tensor64& x) { return pconv1x1(x, pw, pb); }, v);
  op("pconv1x1.w", [v, pb](const Tensor64& x) { return pconv1x1(v, x, pb); }, pw);
  op("pconv1x1.b", [v, pw](const Tensor64& x) { return pconv1x1(v, pw, x); }, pb);
  const Tensor64 tw = rnd({4, 3, 2, 2});
  op("tconv2x2s2.x", [tw, pb](const Tensor64& x) { return tconv2x2s2(x, tw, pb); }, v);
  op("tconv2x2s2.w", [v, pb](const Tensor64& x) { return tconv2x2s2(v, x, pb); }, tw);
  op("tconv2x2s2.b", [v, tw](const Tensor64& x) { return tconv2x2s2(v, tw, x); }, pb);
  op("maxpool2", [](const Tensor64& x) { return maxpool2(x); }, v);
  const Tensor64 tokens = rnd({5, 16});
  std::vector<SpacetimeIndex> pos;
  for (int i = 0; i < 5; ++i) pos.push_back({i, 2 * i - 3, 7 - i});
  op("rope_apply", [pos](const Tensor64& x) { return rope_apply(x, pos); }, tokens);

  // Composed modules.
  AfrWeights<double> afr = AfrWeights<double>::init(4, 6, seed + 11);
  perturb(afr, rng, 0.5);
  const Tensor64 anchor = rnd({4, 1, 8, 8});
  out.push_back(entry("module.afr.input", weighted([afr](const Tensor64& x) { return afr_forward(x, afr); }, anchor, 5),
                      anchor, kModuleLimit));
  out.push_back(entry("module.afr.tconv_w", weighted([afr, anchor](const Tensor64& x) {
                        AfrWeights<double> w = afr;
                        w.tconv_w = x;
                        return afr_forward(anchor, w);
                      }, afr.tconv_w, 6), afr.tconv_w, kModuleLimit));

  AcfmWeights<double> acfm = AcfmWeights<double>::init(4, seed + 12);
  perturb(acfm, rng, 0.5);
  const Tensor64 feats = rnd({4, 5, 6, 6});
  const Tensor64 anchor_feats = rnd({4, 2, 6, 6});
  const std::vector<int> idx = {0, 3};
  out.push_back(entry("module.acfm.video", weighted([=](const Tensor64& x) {
                        return acfm_forward(x, anchor_feats, idx, acfm);
                      }, feats, 7), feats, kModuleLimit));
  out.push_back(entry("module.acfm.anchor", weighted([=](const Tensor64& x) {
                        return acfm_forward(feats, x, idx, acfm);
                      }, anchor_feats, 8), anchor_feats, kModuleLimit));
  out.push_back(entry("module.acfm.gate_w", weighted([=](const Tensor64& x) {
                        AcfmWeights<double> w = acfm;
                        w.gate_w = x;
                        return acfm_forward(feats, anchor_feats, idx, w);
                      }, acfm.gate_w, 9), acfm.gate_w, kModuleLimit));

  // One-block model, C=4, F'=3, H=W=8, two clips; loss is the plain sum.
  ModelConfig cfg;
  cfg.latent_channels = 4;
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.ffn_dim = 32;
  cfg.blocks = 1;
  RestorationWeights<double> model = RestorationWeights<float>::init(cfg, seed + 13).cast<double>();
  perturb(model.afr, rng, 0.3);
  for (auto& blk : model.blocks) perturb(blk, rng, 0.3);
  model.patch_w = add(model.patch_w, uniform<double>(model.patch_w.shape(), -0.3, 0.3, rng));
  model.anchor_w = add(model.anchor_w, uniform<double>(model.anchor_w.shape(), -0.3, 0.3, rng));
  model.head_w = add(model.head_w, uniform<double>(model.head_w.shape(), -0.3, 0.3, rng));
  const Tensor64 y = rnd({4, 3, 8, 8});
  const std::vector<std::size_t> lengths = {2, 1};
  out.push_back(entry("model.block1.latent", [=](const Tensor64& x) {
                        return sum(restoration_forward(x, lengths, model, cfg, 5));
                      }, y, kModuleLimit));
  out.push_back(entry("model.block1.self_attn_wq", [=](const Tensor64& x) {
                        RestorationWeights<double> w = model;
                        w.blocks[0].self_attn.wq = x;
                        return sum(restoration_forward(y, lengths, w, cfg, 5));
                      }, model.blocks[0].self_attn.wq, kModuleLimit));
  out.push_back(entry("model.block1.acfm_gate_w", [=](const Tensor64& x) {
                        RestorationWeights<double> w = model;
                        w.blocks[0].acfm.gate_w = x;
                        return sum(restoration_forward(y, lengths, w, cfg, 5));
                      }, model.blocks[0].acfm.gate_w, kModuleLimit));
  out.push_back(entry("model.block1.afr_pconv1_w", [=](const Tensor64& x) {
                        RestorationWeights<double> w = model;
                        w.afr.pconv1_w = x;
                        return sum(restoration_forward(y, lengths, w, cfg, 5));
                      }, model.afr.pconv1_w, kModuleLimit));
  out.push_back(entry("model.block1.latent.weighted", weighted([=](const Tensor64& x) {
                        return restoration_forward(x, lengths, model, cfg, 5);
                      }, y, 10), y, kModuleLimit));
  return out;
}

}  // namespace stcdit::verify
