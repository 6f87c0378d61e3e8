#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "shapeseg/losses.hpp"
#include "shapeseg/masks.hpp"
#include "shapeseg/optim.hpp"
#include "shapeseg/tensor.hpp"
#include "shapeseg/vit.hpp"
#include "shapeseg/weights_io.hpp"

namespace shapeseg {

struct UNetConfig {
  std::size_t in_channels = 1;
  std::size_t n_classes = 3;  // including background
  std::size_t base_width = 8;
  std::size_t depth = 2;  // encoder levels above the bottleneck
  std::uint64_t seed = 1;

  void validate() const;  // InvalidConfig
};

struct ConvLayer {
  Tensor weight;  // [Co x Ci x k x k]
  Tensor bias;    // [Co]
};

// Layer order: per encoder level two 3x3 convs, two bottleneck convs, per
// decoder level (deepest first) two 3x3 convs, then the 1x1 head.
struct UNetWeights {
  UNetConfig config;
  std::vector<ConvLayer> layers;

  std::vector<Tensor> parameters() const;
  std::vector<NamedArray> arrays() const;
};

UNetWeights build_unet(const UNetConfig& cfg);

// images [B x C x H x W] -> logits [B x n_classes x H x W]. Throws
// InvalidConfig when H or W is not divisible by 2^depth.
Tensor unet_forward(const UNetWeights& w, const Tensor& images);

std::size_t param_count(const UNetWeights& w);

void save_unet(const UNetWeights& w, const std::filesystem::path& path);
UNetWeights load_unet(const std::filesystem::path& path, const UNetConfig& cfg);

struct Batch {
  Tensor images;                 // [B x 1 x H x W]
  std::vector<LabelMap> labels;  // B maps
  // Optional per-sample label features for classes 1..K-1 (frozen encoder).
  std::vector<std::vector<Tensor>> label_features;
};

struct StepStats {
  double loss = 0.0;
  double grad_norm = 0.0;
};

// forward -> softmax -> batch mean of total_loss -> backward -> optimizer
// step on the U-Net parameters. The encoder is only read.
StepStats train_step(UNetWeights& w, const ViTWeights& vit, const Batch& batch, const LossConfig& loss,
                     OptimState& opt);

// Softmax class probabilities [B x K x H x W].
Tensor predict_probs(const UNetWeights& w, const Tensor& images);

}  // namespace shapeseg
