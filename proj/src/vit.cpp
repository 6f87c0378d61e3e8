#include "shapeseg/vit.hpp"

#include <cmath>

#include "shapeseg/error.hpp"
#include "shapeseg/ops.hpp"
#include "shapeseg/rng.hpp"

namespace shapeseg {
namespace {

constexpr double kLayerNormEps = 1e-6;

Tensor uniform(SplitMix64& rng, Shape shape, double bound) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v));
}

template <typename Block>
auto block_tensors(Block& b) {
  using Ptr = decltype(&b.ln1_gain);
  return std::vector<Ptr>{&b.ln1_gain, &b.ln1_bias, &b.qkv_weight, &b.qkv_bias, &b.proj_weight, &b.proj_bias,
          &b.ln2_gain, &b.ln2_bias, &b.fc1_weight, &b.fc1_bias, &b.fc2_weight, &b.fc2_bias};
}

constexpr const char* kBlockNames[] = {"ln1_gain", "ln1_bias", "qkv_weight", "qkv_bias",
                                       "proj_weight", "proj_bias", "ln2_gain", "ln2_bias",
                                       "fc1_weight", "fc1_bias", "fc2_weight", "fc2_bias"};

template <typename Weights>
auto all_tensors(Weights& w) {
  using Ptr = decltype(&w.patch_weight);
  std::vector<Ptr> out{&w.patch_weight, &w.patch_bias, &w.pos_embedding, &w.cls_token};
  for (auto& b : w.blocks)
    for (auto* t : block_tensors(b)) out.push_back(t);
  return out;
}

std::vector<std::string> all_names(std::size_t depth) {
  std::vector<std::string> out{"patch_weight", "patch_bias", "pos_embedding", "cls_token"};
  for (std::size_t i = 0; i < depth; ++i)
    for (const char* n : kBlockNames) out.push_back("block" + std::to_string(i) + "." + n);
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_row_bias(matmul(x, w), b); }

Tensor attention(const ViTBlock& blk, const Tensor& x, const ViTConfig& cfg, ViTTrace* trace) {
  const std::size_t d = cfg.embed_dim, dh = d / cfg.heads;
  const Tensor qkv = linear(x, blk.qkv_weight, blk.qkv_bias);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const Tensor q = narrow(qkv, 1, h * dh, dh);
    const Tensor k = narrow(qkv, 1, d + h * dh, dh);
    const Tensor v = narrow(qkv, 1, 2 * d + h * dh, dh);
    const Tensor att = softmax(mul_scalar(matmul(q, transpose(k)), scale), 1);
    if (trace) trace->attention.push_back(att);
    heads.push_back(matmul(att, v));
  }
  return linear(concat(heads, 1), blk.proj_weight, blk.proj_bias);
}

}  // namespace

std::size_t ViTConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::llround(mlp_ratio * static_cast<double>(embed_dim)));
}

void ViTConfig::validate() const {
  if (image_size == 0 || patch_size == 0 || embed_dim == 0 || depth == 0 || heads == 0)
    throw InvalidConfig("ViT sizes must be positive");
  if (image_size % patch_size != 0)
    throw InvalidConfig("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                        std::to_string(patch_size));
  if (embed_dim % heads != 0)
    throw InvalidConfig("embed_dim " + std::to_string(embed_dim) + " not divisible by heads " + std::to_string(heads));
  if (!(mlp_ratio > 0.0) || mlp_hidden() == 0) throw InvalidConfig("mlp_ratio must be positive");
}

std::vector<NamedArray> ViTWeights::arrays() const {
  const auto names = all_names(blocks.size());
  const auto tensors = all_tensors(*this);
  std::vector<NamedArray> out;
  out.reserve(tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const Tensor& t = *tensors[i];
    out.push_back({names[i], t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
  }
  return out;
}

ViTWeights init_vit(const ViTConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SplitMix64 rng(seed);
  const std::size_t d = cfg.embed_dim, pp = cfg.patch_size * cfg.patch_size, hid = cfg.mlp_hidden();
  const double emb_bound = 1.0 / std::sqrt(static_cast<double>(d));
  ViTWeights w;
  w.config = cfg;
  w.patch_weight = uniform(rng, {pp, d}, 1.0 / std::sqrt(static_cast<double>(pp)));
  w.patch_bias = uniform(rng, {d}, 1.0 / std::sqrt(static_cast<double>(pp)));
  w.pos_embedding = uniform(rng, {cfg.tokens(), d}, emb_bound);
  w.cls_token = uniform(rng, {1, d}, emb_bound);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    ViTBlock b;
    b.ln1_gain = Tensor::full({d}, 1.0);
    b.ln1_bias = Tensor::zeros({d});
    b.qkv_weight = uniform(rng, {d, 3 * d}, emb_bound);
    b.qkv_bias = uniform(rng, {3 * d}, emb_bound);
    b.proj_weight = uniform(rng, {d, d}, emb_bound);
    b.proj_bias = uniform(rng, {d}, emb_bound);
    b.ln2_gain = Tensor::full({d}, 1.0);
    b.ln2_bias = Tensor::zeros({d});
    b.fc1_weight = uniform(rng, {d, hid}, emb_bound);
    b.fc1_bias = uniform(rng, {hid}, emb_bound);
    const double hid_bound = 1.0 / std::sqrt(static_cast<double>(hid));
    b.fc2_weight = uniform(rng, {hid, d}, hid_bound);
    b.fc2_bias = uniform(rng, {d}, hid_bound);
    w.blocks.push_back(std::move(b));
  }
  return w;
}

Tensor patchify(const Tensor& image, std::size_t patch) {
  const auto& s = image.shape();
  if (!(s.size() == 2 || (s.size() == 3 && s[0] == 1)))
    throw ShapeMismatch("patchify expects H x W or 1 x H x W, got " + shape_string(s));
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (patch == 0 || h % patch || w % patch)
    throw ShapeMismatch("image " + shape_string(s) + " not divisible into " + std::to_string(patch) + "-pixel patches");
  const std::size_t ph = h / patch, pw = w / patch, pp = patch * patch;
  // index[t * pp + j] = source pixel of element j of token t
  std::vector<std::size_t> index(h * w);
  for (std::size_t ty = 0; ty < ph; ++ty)
    for (std::size_t tx = 0; tx < pw; ++tx)
      for (std::size_t y = 0; y < patch; ++y)
        for (std::size_t x = 0; x < patch; ++x)
          index[(ty * pw + tx) * pp + y * patch + x] = (ty * patch + y) * w + tx * patch + x;
  const auto src = image.data();
  std::vector<double> out(h * w);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[index[i]];
  return Tensor::make_result({ph * pw, pp}, std::move(out), {image}, [index = std::move(index)](detail::Node& o) {
    auto g = o.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += o.grad[i];
  });
}

Tensor vit_features(const ViTWeights& w, const Tensor& image, ViTTrace* trace) {
  const ViTConfig& cfg = w.config;
  const auto& s = image.shape();
  const std::size_t h = s.empty() ? 0 : s[s.size() - 1];
  if (image.numel() != cfg.image_size * cfg.image_size || h != cfg.image_size)
    throw ShapeMismatch("ViT expects a " + std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size) +
                        " image, got " + shape_string(s));

  Tensor x = linear(patchify(image, cfg.patch_size), w.patch_weight, w.patch_bias);
  x = concat({w.cls_token, x}, 0);
  if (cfg.use_positional_embedding) x = add(x, w.pos_embedding);
  for (const auto& blk : w.blocks) {
    x = add(x, attention(blk, layer_norm(x, blk.ln1_gain, blk.ln1_bias, kLayerNormEps), cfg, trace));
    const Tensor hidden = gelu(linear(layer_norm(x, blk.ln2_gain, blk.ln2_bias, kLayerNormEps), blk.fc1_weight,
                                      blk.fc1_bias));
    x = add(x, linear(hidden, blk.fc2_weight, blk.fc2_bias));
  }
  x = layer_norm(x, kLayerNormEps);
  if (cfg.pooling == Pooling::cls_token) return select(x, 0, 0);
  return mul_scalar(sum_axis(narrow(x, 0, 1, cfg.patches()), 0), 1.0 / static_cast<double>(cfg.patches()));
}

Tensor vit_features(const ViTWeights& w, const SignedDistanceMap& sdm) {
  if (!sdm.normalized) throw InvalidParam("ViT input SDM must be normalized");
  return vit_features(w, sdm.as_tensor());
}

void save_weights(const ViTWeights& w, const std::filesystem::path& path) {
  write_weight_file(path, w.arrays());
}

ViTWeights load_weights(const std::filesystem::path& path, const ViTConfig& cfg) {
  auto arrays = read_weight_file(path);
  ViTWeights w = init_vit(cfg, 0);
  expect_layout(arrays, w.arrays());
  auto tensors = all_tensors(w);
  for (std::size_t i = 0; i < tensors.size(); ++i)
    *tensors[i] = Tensor::from(arrays[i].shape, std::move(arrays[i].values));
  return w;
}

}  // namespace shapeseg
