#include "shapeseg/unet.hpp"

#include <cmath>

#include "shapeseg/error.hpp"
#include "shapeseg/ops.hpp"
#include "shapeseg/rng.hpp"

namespace shapeseg {
namespace {

ConvLayer make_conv(SplitMix64& rng, std::size_t in, std::size_t out, std::size_t k) {
  const double fan_in = static_cast<double>(in * k * k);
  const double bound = std::sqrt(6.0 / fan_in);
  std::vector<double> w(out * in * k * k);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return {Tensor::from({out, in, k, k}, std::move(w), true), Tensor::zeros({out}, true)};
}

Tensor conv_relu(const Tensor& x, const ConvLayer& l) { return relu(conv2d(x, l.weight, l.bias, 1, 1)); }

}  // namespace

void UNetConfig::validate() const {
  if (in_channels == 0 || base_width == 0 || depth == 0) throw InvalidConfig("U-Net sizes must be positive");
  if (n_classes < 2) throw InvalidConfig("n_classes must be >= 2 (background included)");
  if (n_classes > 255) throw InvalidConfig("n_classes must fit in a byte");
  if (depth > 16) throw InvalidConfig("U-Net depth too large");
}

std::vector<Tensor> UNetWeights::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::vector<NamedArray> UNetWeights::arrays() const {
  std::vector<NamedArray> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (const auto* t : {&layers[i].weight, &layers[i].bias}) {
      const char* kind = t == &layers[i].weight ? "weight" : "bias";
      out.push_back({"conv" + std::to_string(i) + "." + kind, t->shape(),
                     std::vector<double>(t->data().begin(), t->data().end())});
    }
  }
  return out;
}

UNetWeights build_unet(const UNetConfig& cfg) {
  cfg.validate();
  SplitMix64 rng(cfg.seed);
  UNetWeights w;
  w.config = cfg;
  std::size_t in = cfg.in_channels;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::size_t width = cfg.base_width << l;
    w.layers.push_back(make_conv(rng, in, width, 3));
    w.layers.push_back(make_conv(rng, width, width, 3));
    in = width;
  }
  const std::size_t bottom = cfg.base_width << cfg.depth;
  w.layers.push_back(make_conv(rng, in, bottom, 3));
  w.layers.push_back(make_conv(rng, bottom, bottom, 3));
  in = bottom;
  for (std::size_t l = cfg.depth; l-- > 0;) {
    const std::size_t width = cfg.base_width << l;
    w.layers.push_back(make_conv(rng, in + width, width, 3));
    w.layers.push_back(make_conv(rng, width, width, 3));
    in = width;
  }
  w.layers.push_back(make_conv(rng, in, cfg.n_classes, 1));
  return w;
}

Tensor unet_forward(const UNetWeights& w, const Tensor& images) {
  const UNetConfig& cfg = w.config;
  if (images.dim() != 4 || images.size(1) != cfg.in_channels)
    throw ShapeMismatch("U-Net expects B x " + std::to_string(cfg.in_channels) + " x H x W, got " +
                        shape_string(images.shape()));
  const std::size_t factor = std::size_t{1} << cfg.depth;
  if (images.size(2) % factor || images.size(3) % factor)
    throw InvalidConfig("input " + std::to_string(images.size(2)) + "x" + std::to_string(images.size(3)) +
                        " not divisible by 2^depth = " + std::to_string(factor));

  std::size_t li = 0;
  std::vector<Tensor> skips;
  Tensor x = images;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    x = conv_relu(x, w.layers[li++]);
    x = conv_relu(x, w.layers[li++]);
    skips.push_back(x);
    x = max_pool2x2(x);
  }
  x = conv_relu(x, w.layers[li++]);
  x = conv_relu(x, w.layers[li++]);
  for (std::size_t l = cfg.depth; l-- > 0;) {
    x = concat({upsample_nearest2x(x), skips[l]}, 1);
    x = conv_relu(x, w.layers[li++]);
    x = conv_relu(x, w.layers[li++]);
  }
  const ConvLayer& head = w.layers[li];
  return conv2d(x, head.weight, head.bias, 1, 0);
}

Tensor predict_probs(const UNetWeights& w, const Tensor& images) { return softmax(unet_forward(w, images), 1); }

std::size_t param_count(const UNetWeights& w) {
  std::size_t n = 0;
  for (const auto& l : w.layers) n += l.weight.numel() + l.bias.numel();
  return n;
}

void save_unet(const UNetWeights& w, const std::filesystem::path& path) { write_weight_file(path, w.arrays()); }

UNetWeights load_unet(const std::filesystem::path& path, const UNetConfig& cfg) {
  auto arrays = read_weight_file(path);
  UNetWeights w = build_unet(cfg);
  expect_layout(arrays, w.arrays());
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    w.layers[i].weight = Tensor::from(arrays[2 * i].shape, std::move(arrays[2 * i].values), true);
    w.layers[i].bias = Tensor::from(arrays[2 * i + 1].shape, std::move(arrays[2 * i + 1].values), true);
  }
  return w;
}

StepStats train_step(UNetWeights& w, const ViTWeights& vit, const Batch& batch, const LossConfig& loss,
                     OptimState& opt) {
  const std::size_t b = batch.images.size(0);
  if (batch.labels.size() != b) throw ShapeMismatch("batch has " + std::to_string(b) + " images but " +
                                                    std::to_string(batch.labels.size()) + " labels");
  const bool cached = !batch.label_features.empty();
  const auto params = w.parameters();
  zero_grads(params);

  const Tensor probs = predict_probs(w, batch.images);
  Tensor total;
  for (std::size_t i = 0; i < b; ++i) {
    const Tensor term = total_loss(select(probs, 0, i), batch.labels[i], vit, loss,
                                   cached ? &batch.label_features[i] : nullptr);
    total = total.defined() ? total + term : term;
  }
  total = total * (1.0 / static_cast<double>(b));
  total.backward();

  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) sq += g * g;
  optimizer_step(opt, params);
  return {total.item(), std::sqrt(sq)};
}

}  // namespace shapeseg
