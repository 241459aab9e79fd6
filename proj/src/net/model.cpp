#include "evlt/net/model.hpp"

#include <cmath>
#include <random>

#include "evlt/numgrid/ops.hpp"

namespace evlt::net {

using namespace numgrid;

const char* guidance_name(Guidance g) {
  switch (g) {
    case Guidance::full: return "full";
    case Guidance::unmasked: return "unmasked";
    case Guidance::none: return "none";
  }
  return "?";
}

Guidance parse_guidance(const std::string& s) {
  if (s == "full") return Guidance::full;
  if (s == "unmasked") return Guidance::unmasked;
  if (s == "none") return Guidance::none;
  throw ContractError("unknown guidance variant '" + s + "' (full, unmasked, none)");
}

void ModelConfig::validate() const {
  require(channels >= 1, "ModelConfig: channels must be >= 1");
  require(eift_modules >= 0, "ModelConfig: EIFT module count must be >= 0");
  require(frames >= 1, "ModelConfig: frames must be >= 1");
  require(patch >= 1 && kPoolGrid % patch == 0, "ModelConfig: 32 must be divisible by the patch size");
  require(heads >= 1 && (2 * channels) % heads == 0, "ModelConfig: 2C must be divisible by the head count");
}

namespace {

constexpr double kInitStd = 0.02;

template <typename T>
struct Init {
  ParamTree<T>& tree;
  std::mt19937_64 rng;

  Tensor<T> gaussian(Shape s) {
    std::normal_distribution<double> n(0.0, kInitStd);
    std::vector<T> v(shape_numel(s));
    for (auto& x : v) x = static_cast<T>(n(rng));
    return Tensor<T>(std::move(s), std::move(v));
  }
  void conv(const std::string& name, int out, int in, int k) {
    tree.add(name + ".weight", gaussian(Shape{std::size_t(out), std::size_t(in), std::size_t(k), std::size_t(k)}));
    tree.add(name + ".bias", Tensor<T>(Shape{std::size_t(out)}, T(0)));
  }
  void linear(const std::string& name, int in, int out, bool bias = true) {
    tree.add(name + ".weight", gaussian(Shape{std::size_t(in), std::size_t(out)}));
    if (bias) tree.add(name + ".bias", Tensor<T>(Shape{std::size_t(out)}, T(0)));
  }
  void norm(const std::string& name, int d) {
    tree.add(name + ".gamma", Tensor<T>(Shape{std::size_t(d)}, T(1)));
    tree.add(name + ".beta", Tensor<T>(Shape{std::size_t(d)}, T(0)));
  }
  void resblock(const std::string& name, int c) {
    conv(name + ".conv1", c, c, 3);
    conv(name + ".conv2", c, c, 3);
  }
};

template <typename T>
Tensor<T> conv(const Tensor<T>& x, const ParamTree<T>& p, const std::string& name, int stride = 1) {
  const Tensor<T>& w = p.at(name + ".weight");
  return conv2d(x, w, p.at(name + ".bias"), stride, static_cast<int>(w.dim(2)) / 2);
}

template <typename T>
Tensor<T> resblock(const Tensor<T>& x, const ParamTree<T>& p, const std::string& name) {
  return add(x, conv(relu(conv(x, p, name + ".conv1")), p, name + ".conv2"));
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const ParamTree<T>& p, const std::string& name) {
  const auto y = matmul(x, p.at(name + ".weight"));
  return p.contains(name + ".bias") ? add_bias(y, p.at(name + ".bias")) : y;
}

// Broadcasts an H x W 0/1 mask (optionally complemented) to [C, H, W].
template <typename T>
Tensor<T> mask_tensor(const std::vector<std::uint8_t>& m, std::size_t c, std::size_t h, std::size_t w, bool invert) {
  std::vector<T> v(c * h * w);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < h * w; ++i) v[k * h * w + i] = static_cast<T>(invert ? 1 - m[i] : m[i]);
  return Tensor<T>(Shape{c, h, w}, std::move(v));
}

void require_feature(const Shape& a, const Shape& b, const char* who) {
  require(a.size() == 3 && a == b,
          std::string(who) + ": features must share a [C, H, W] shape, got " + shape_str(a) + " and " + shape_str(b));
}

// [D, G, G] -> [m, p*p, D] tokens, patch-major.
template <typename T>
Tensor<T> to_patches(const Tensor<T>& x, std::size_t p) {
  const std::size_t d = x.dim(0), g = x.dim(1), n = g / p;
  auto t = reshape(x, Shape{d, n, p, n, p});
  t = permute(t, {1, 3, 2, 4, 0});
  return reshape(t, Shape{n * n, p * p, d});
}

template <typename T>
Tensor<T> from_patches(const Tensor<T>& x, std::size_t p, std::size_t g) {
  const std::size_t d = x.dim(2), n = g / p;
  auto t = reshape(x, Shape{n, n, p, p, d});
  t = permute(t, {4, 0, 2, 1, 3});
  return reshape(t, Shape{d, g, g});
}

// Multi-head self-attention over [m, L, D] token groups.
template <typename T>
Tensor<T> attention(const Tensor<T>& x, const ParamTree<T>& p, const std::string& name, std::size_t heads) {
  const std::size_t m = x.dim(0), L = x.dim(1), D = x.dim(2), dh = D / heads;
  const auto flat = reshape(x, Shape{m * L, D});
  auto split = [&](const Tensor<T>& t) {
    auto r = reshape(t, Shape{m, L, heads, dh});
    return reshape(permute(r, {0, 2, 1, 3}), Shape{m * heads, L, dh});
  };
  const auto q = split(linear(flat, p, name + ".q"));
  const auto k = split(linear(flat, p, name + ".k"));
  const auto v = split(linear(flat, p, name + ".v"));
  auto scores = mul_scalar(bmm(q, permute(k, {0, 2, 1})), static_cast<T>(1.0 / std::sqrt(double(dh))));
  auto ctx = bmm(softmax(scores, 2), v);
  ctx = reshape(permute(reshape(ctx, Shape{m, heads, L, dh}), {0, 2, 1, 3}), Shape{m * L, D});
  return reshape(linear(ctx, p, name + ".o"), Shape{m, L, D});
}

template <typename T>
Tensor<T> norm(const Tensor<T>& x, const ParamTree<T>& p, const std::string& name) {
  return layer_norm(x, p.at(name + ".gamma"), p.at(name + ".beta"));
}

}  // namespace

template <typename T>
void add_restoration_params(ParamTree<T>& params, const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Init<T> in{params, std::mt19937_64(seed)};
  const int c = cfg.channels, b = cfg.planes();
  in.conv("restore.enc0", c, b, 3);
  in.conv("restore.enc1", c, c, 3);
  in.conv("restore.enc2", 2 * c, c, 3);
  in.resblock("restore.res0", 2 * c);
  in.resblock("restore.res1", 2 * c);
  in.conv("restore.dec1", c, 2 * c, 3);
  in.conv("restore.dec0", c, c, 3);
  in.conv("restore.head_p", b, c, 3);
  in.conv("restore.head_v", b, c, 3);
}

template <typename T>
void add_enhancer_params(ParamTree<T>& params, const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Init<T> in{params, std::mt19937_64(seed ^ 0xA5A5A5A5DEADBEEFull)};
  const int c = cfg.channels, b = cfg.planes(), d = 2 * c;
  in.conv("enc_img", c, 3, 3);
  in.conv("enc_evt", c, b, 3);
  for (int i = 0; i < cfg.eift_modules; ++i)
    for (int blk = 0; blk < 2; ++blk) {
      const std::string pre = "eift." + std::to_string(i) + ".block" + std::to_string(blk);
      in.conv(pre + ".f1", c, c, 1);
      in.conv(pre + ".f2", c, c, 3);
      in.conv(pre + ".f3", c, c, 1);
      in.conv(pre + ".f4", c, c, 1);
      in.conv(pre + ".f5", c, c, 3);
      in.conv(pre + ".f6", c, c, 1);
    }
  in.norm("egdb.ln1", d);
  // A key bias shifts every score of a query equally and cannot change the
  // softmax, so keys have none.
  for (const char* h : {"q", "k", "v", "o"}) in.linear(std::string("egdb.attn.") + h, d, d, h[0] != 'k');
  in.norm("egdb.ln2", d);
  in.linear("egdb.ffn.fc1", d, 2 * d);
  in.linear("egdb.ffn.fc2", 2 * d, d);
  in.resblock("egdb.local.res0", c);
  in.resblock("egdb.local.res1", c);
  in.resblock("dec.res0", d);
  in.resblock("dec.res1", d);
  in.conv("dec.out", 3, d, 3);
}

template <typename T>
ParamTree<T> make_params(const ModelConfig& cfg, std::uint64_t seed) {
  ParamTree<T> p;
  add_restoration_params(p, cfg, seed);
  add_enhancer_params(p, cfg, seed);
  return p;
}

template <typename T>
Tensor<T> gate(const Tensor<T>& P, const Tensor<T>& V) {
  require(P.shape() == V.shape(), "gate: P and V shapes differ");
  std::vector<T> m(P.numel());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = P[i] >= T(0.5) ? T(1) : T(0);
  return mul(V, Tensor<T>(P.shape(), std::move(m)));
}

template <typename T>
RestorationOutput<T> restore_events(const Tensor<T>& E, const ParamTree<T>& p, const ModelConfig& cfg) {
  require(E.rank() == 3 && E.dim(0) == std::size_t(cfg.planes()),
          "restore_events: expected [" + std::to_string(cfg.planes()) + ", H, W], got " + shape_str(E.shape()));
  require(E.dim(1) % 4 == 0 && E.dim(2) % 4 == 0,
          "restore_events: H and W must be divisible by 4, got " + shape_str(E.shape()));
  const auto e0 = relu(conv(E, p, "restore.enc0"));
  const auto e1 = relu(conv(e0, p, "restore.enc1", 2));
  auto r = relu(conv(e1, p, "restore.enc2", 2));
  r = resblock(r, p, "restore.res0");
  r = resblock(r, p, "restore.res1");
  const auto d1 = add(relu(conv(upsample_nearest(r, 2), p, "restore.dec1")), e1);
  const auto d0 = add(relu(conv(upsample_nearest(d1, 2), p, "restore.dec0")), e0);
  RestorationOutput<T> out;
  out.P = sigmoid(conv(d0, p, "restore.head_p"));
  out.V = conv(d0, p, "restore.head_v");
  out.Er = gate(out.P, out.V);
  return out;
}

template <typename T>
Tensor<T> modulation_features(const Tensor<T>& mod, const ParamTree<T>& p, const std::string& prefix) {
  return relu(conv(mod, p, prefix + ".f2"));
}

template <typename T>
Tensor<T> cct_channel_map(const Tensor<T>& m2, const ParamTree<T>& p, const std::string& prefix) {
  const std::size_t c = m2.dim(0), hw = m2.dim(1) * m2.dim(2);
  const auto q = transpose(reshape(conv(m2, p, prefix + ".f3"), Shape{c, hw}));  // [HW, C]
  const auto k = reshape(conv(m2, p, prefix + ".f4"), Shape{c, hw});             // [C, HW]
  return softmax(matmul(k, q), 1);
}

template <typename T>
Tensor<T> cct(const Tensor<T>& main, const Tensor<T>& m2, const ParamTree<T>& p, const std::string& prefix) {
  require_feature(main.shape(), m2.shape(), "cct");
  const std::size_t c = main.dim(0), hw = main.dim(1) * main.dim(2);
  const auto map = cct_channel_map(m2, p, prefix);
  // X as [HW, C] is f1(main)^T * map; kept channel-major here.
  const auto f1 = reshape(conv(main, p, prefix + ".f1"), Shape{c, hw});
  return reshape(matmul(transpose(map), f1), main.shape());
}

template <typename T>
Tensor<T> ewp(const Tensor<T>& X, const Tensor<T>& m2, const ParamTree<T>& p, const std::string& prefix) {
  require_feature(X.shape(), m2.shape(), "ewp");
  return mul(sigmoid(conv(X, p, prefix + ".f5")), conv(m2, p, prefix + ".f6"));
}

template <typename T>
Tensor<T> eift_block(const Tensor<T>& main, const Tensor<T>& mod, const ParamTree<T>& p, const std::string& prefix) {
  require_feature(main.shape(), mod.shape(), "eift_block");
  const auto m2 = modulation_features(mod, p, prefix);
  return add(main, ewp(cct(main, m2, p, prefix), m2, p, prefix));
}

template <typename T>
FeaturePair<T> eift_module(const Tensor<T>& F_E, const Tensor<T>& F_I, const ParamTree<T>& p,
                           const std::string& prefix) {
  const auto e = eift_block(F_E, F_I, p, prefix + ".block0");
  const auto i = eift_block(F_I, e, p, prefix + ".block1");
  return {e, i};
}

template <typename T>
Tensor<T> egdb(const Tensor<T>& F_E, const Tensor<T>& F_I, const std::vector<std::uint8_t>& mask,
               const ParamTree<T>& p, const ModelConfig& cfg) {
  require_feature(F_E.shape(), F_I.shape(), "egdb");
  const std::size_t c = F_I.dim(0), h = F_I.dim(1), w = F_I.dim(2);
  const bool masked = !mask.empty();
  if (masked)
    require(mask.size() == h * w, "egdb: mask has " + std::to_string(mask.size()) + " values, features are " +
                                      std::to_string(h) + "x" + std::to_string(w));

  // Global branch on (events, image outside the mask).
  const auto img_global = masked ? mul(F_I, mask_tensor<T>(mask, c, h, w, true)) : F_I;
  auto g = adaptive_avg_pool2d(concat(std::vector<Tensor<T>>{F_E, img_global}, 0), kPoolGrid, kPoolGrid);
  const std::size_t patch = static_cast<std::size_t>(cfg.patch);
  auto tok = to_patches(g, patch);
  tok = add(tok, attention(norm(tok, p, "egdb.ln1"), p, "egdb.attn", static_cast<std::size_t>(cfg.heads)));
  {
    const std::size_t m = tok.dim(0), L = tok.dim(1), d = tok.dim(2);
    auto f = reshape(norm(tok, p, "egdb.ln2"), Shape{m * L, d});
    f = linear(relu(linear(f, p, "egdb.ffn.fc1")), p, "egdb.ffn.fc2");
    tok = add(tok, reshape(f, Shape{m, L, d}));
  }
  g = resize_bilinear(from_patches(tok, patch, kPoolGrid), h, w);
  const auto F_g = slice(g, 0, 0, c);

  // Local branch on the image inside the mask.
  auto F_l = masked ? mul(F_I, mask_tensor<T>(mask, c, h, w, false)) : F_I;
  F_l = resblock(F_l, p, "egdb.local.res0");
  F_l = resblock(F_l, p, "egdb.local.res1");
  return concat(std::vector<Tensor<T>>{F_g, F_l}, 0);
}

template <typename T>
EnhanceOutput<T> enhance(const Tensor<T>& low, const Tensor<T>& Er, const ParamTree<T>& p, const ModelConfig& cfg) {
  cfg.validate();
  require(low.rank() == 3 && low.dim(0) == 3, "enhance: low frame must be [3, H, W], got " + shape_str(low.shape()));
  require(Er.rank() == 3 && Er.dim(0) == std::size_t(cfg.planes()) && Er.dim(1) == low.dim(1) &&
              Er.dim(2) == low.dim(2),
          "enhance: Er " + shape_str(Er.shape()) + " does not match frame " + shape_str(low.shape()));
  const int h = static_cast<int>(low.dim(1)), w = static_cast<int>(low.dim(2));

  EnhanceOutput<T> out;
  const Tensor<T> events = cfg.guidance == Guidance::none ? Tensor<T>(Er.shape(), T(0)) : Er;
  auto F_I = conv(low, p, "enc_img");
  auto F_E = conv(events, p, "enc_evt");
  for (int i = 0; i < cfg.eift_modules; ++i) {
    auto pair = eift_module(F_E, F_I, p, "eift." + std::to_string(i));
    F_E = pair.events;
    F_I = pair.image;
  }
  std::vector<std::uint8_t> mask;
  if (cfg.guidance == Guidance::full) {
    out.mask = events::egdb_mask(tensor_to_voxels(Er, cfg.frames), h, w);
    mask = out.mask.values;
  } else {
    out.mask.height = h;
    out.mask.width = w;
    out.mask.source_height = h;
    out.mask.source_width = w;
    out.mask.values.assign(static_cast<std::size_t>(h) * w, 0);
  }
  auto f = egdb(F_E, F_I, mask, p, cfg);
  f = resblock(f, p, "dec.res0");
  f = resblock(f, p, "dec.res1");
  out.raw = conv(f, p, "dec.out");
  out.image = clamp(out.raw, T(0), T(1));
  return out;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  const std::size_t c = img.channels, h = img.height, w = img.width;
  std::vector<T> v(c * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) v[(k * h + y) * w + x] = static_cast<T>(img.data[(y * w + x) * c + k]);
  return Tensor<T>(Shape{c, h, w}, std::move(v));
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t) {
  require(t.rank() == 3, "tensor_to_image: expected [C, H, W]");
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
  Image img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) img.data[(y * w + x) * c + k] = static_cast<double>(t[(k * h + y) * w + x]);
  return img;
}

template <typename T>
Tensor<T> voxels_to_tensor(const events::VoxelGrid& g) {
  std::vector<T> v(g.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(g.values[i]);
  return Tensor<T>(Shape{std::size_t(g.planes()), std::size_t(g.height), std::size_t(g.width)}, std::move(v));
}

template <typename T>
events::VoxelGrid tensor_to_voxels(const Tensor<T>& t, int bins, double t0, double tn) {
  require(t.rank() == 3 && t.dim(0) == std::size_t(6 * bins),
          "tensor_to_voxels: expected [" + std::to_string(6 * bins) + ", H, W], got " + shape_str(t.shape()));
  events::VoxelGrid g(bins, static_cast<int>(t.dim(1)), static_cast<int>(t.dim(2)), t0, tn);
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = static_cast<double>(t[i]);
  return g;
}

#define EVLT_NET_INSTANTIATE(T)                                                                                  \
  template void add_restoration_params<T>(ParamTree<T>&, const ModelConfig&, std::uint64_t);                    \
  template void add_enhancer_params<T>(ParamTree<T>&, const ModelConfig&, std::uint64_t);                       \
  template ParamTree<T> make_params<T>(const ModelConfig&, std::uint64_t);                                      \
  template Tensor<T> gate<T>(const Tensor<T>&, const Tensor<T>&);                                               \
  template RestorationOutput<T> restore_events<T>(const Tensor<T>&, const ParamTree<T>&, const ModelConfig&);   \
  template Tensor<T> cct_channel_map<T>(const Tensor<T>&, const ParamTree<T>&, const std::string&);             \
  template Tensor<T> cct<T>(const Tensor<T>&, const Tensor<T>&, const ParamTree<T>&, const std::string&);       \
  template Tensor<T> ewp<T>(const Tensor<T>&, const Tensor<T>&, const ParamTree<T>&, const std::string&);       \
  template Tensor<T> modulation_features<T>(const Tensor<T>&, const ParamTree<T>&, const std::string&);         \
  template Tensor<T> eift_block<T>(const Tensor<T>&, const Tensor<T>&, const ParamTree<T>&, const std::string&); \
  template FeaturePair<T> eift_module<T>(const Tensor<T>&, const Tensor<T>&, const ParamTree<T>&,               \
                                         const std::string&);                                                   \
  template Tensor<T> egdb<T>(const Tensor<T>&, const Tensor<T>&, const std::vector<std::uint8_t>&,              \
                             const ParamTree<T>&, const ModelConfig&);                                          \
  template EnhanceOutput<T> enhance<T>(const Tensor<T>&, const Tensor<T>&, const ParamTree<T>&,                 \
                                       const ModelConfig&);                                                     \
  template Tensor<T> image_to_tensor<T>(const Image&);                                                          \
  template Image tensor_to_image<T>(const Tensor<T>&);                                                          \
  template Tensor<T> voxels_to_tensor<T>(const events::VoxelGrid&);                                             \
  template events::VoxelGrid tensor_to_voxels<T>(const Tensor<T>&, int, double, double);

EVLT_NET_INSTANTIATE(float)
EVLT_NET_INSTANTIATE(double)

}  // namespace evlt::net
