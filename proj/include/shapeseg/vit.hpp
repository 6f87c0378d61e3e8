#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shapeseg/sdm.hpp"
#include "shapeseg/tensor.hpp"
#include "shapeseg/weights_io.hpp"

namespace shapeseg {

enum class Pooling { cls_token, mean };

struct ViTConfig {
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 64;
  std::size_t depth = 4;
  std::size_t heads = 4;
  double mlp_ratio = 4.0;
  bool use_positional_embedding = true;
  Pooling pooling = Pooling::cls_token;

  void validate() const;  // InvalidConfig
  std::size_t patches() const { return (image_size / patch_size) * (image_size / patch_size); }
  std::size_t tokens() const { return patches() + 1; }
  std::size_t mlp_hidden() const;
};

struct ViTBlock {
  Tensor ln1_gain, ln1_bias;
  Tensor qkv_weight, qkv_bias;    // [D x 3D], [3D]
  Tensor proj_weight, proj_bias;  // [D x D], [D]
  Tensor ln2_gain, ln2_bias;
  Tensor fc1_weight, fc1_bias;    // [D x hidden]
  Tensor fc2_weight, fc2_bias;    // [hidden x D]
};

// Frozen encoder parameters. No tensor here ever requires a gradient; the
// input image may, so gradients flow through the encoder to it.
struct ViTWeights {
  ViTConfig config;
  Tensor patch_weight;   // [p*p x D]
  Tensor patch_bias;     // [D]
  Tensor pos_embedding;  // [tokens x D]
  Tensor cls_token;      // [1 x D]
  std::vector<ViTBlock> blocks;

  // Every parameter array in file order: patch_weight, patch_bias,
  // pos_embedding, cls_token, then 12 arrays per block.
  std::vector<NamedArray> arrays() const;
};

/// Seeded initialisation: linear weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// biases likewise, positional and class embeddings ~ U(+-1/sqrt(D)),
/// layer-norm gain 1 and bias 0.
ViTWeights init_vit(const ViTConfig& cfg, std::uint64_t seed);

/// [1 x H x W] or [H x W] -> [(H/p * W/p) x p*p], row-major patches each
/// flattened row-major.
Tensor patchify(const Tensor& image, std::size_t patch);

// Optional capture of per-block attention matrices ([tokens x tokens] per head).
struct ViTTrace {
  std::vector<Tensor> attention;
};

/// Feature vector [embed_dim] of a single-channel image. There is no
/// classification head: the pooled output of the final (parameter-free)
/// layer norm is the feature.
Tensor vit_features(const ViTWeights& w, const Tensor& image, ViTTrace* trace = nullptr);
Tensor vit_features(const ViTWeights& w, const SignedDistanceMap& sdm);

void save_weights(const ViTWeights& w, const std::filesystem::path& path);
ViTWeights load_weights(const std::filesystem::path& path, const ViTConfig& cfg);

}  // namespace shapeseg
