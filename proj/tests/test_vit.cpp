#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "shapeseg/error.hpp"
#include "shapeseg/ops.hpp"
#include "shapeseg/rng.hpp"
#include "shapeseg/vit.hpp"
#include "shapeseg/weights_io.hpp"

using namespace shapeseg;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("shapeseg_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Tensor random_image(std::size_t size, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> v(size * size);
  for (double& x : v) x = rng.uniform(-1, 1);
  return Tensor::from({1, size, size}, std::move(v));
}

ViTConfig small_config() {
  ViTConfig c;
  c.image_size = 16;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  return c;
}

bool same_arrays(const std::vector<NamedArray>& a, const std::vector<NamedArray>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || a[i].shape != b[i].shape || a[i].values != b[i].values) return false;
  return true;
}

}  // namespace

TEST_SUITE("vit") {

TEST_CASE("initialisation is a function of the seed") {
  ViTConfig c = small_config();
  CHECK(same_arrays(init_vit(c, 7).arrays(), init_vit(c, 7).arrays()));
  CHECK_FALSE(same_arrays(init_vit(c, 7).arrays(), init_vit(c, 8).arrays()));
}

TEST_CASE("parameter array count") {
  ViTConfig c;
  c.image_size = 64;
  c.patch_size = 8;
  c.embed_dim = 64;
  c.depth = 2;
  c.heads = 4;
  CHECK(init_vit(c, 1).arrays().size() == 4 + 2 * 12);
}

TEST_CASE("frozen parameters never require gradients") {
  for (const NamedArray& a : init_vit(small_config(), 3).arrays()) CHECK(!a.values.empty());
  ViTWeights w = init_vit(small_config(), 3);
  CHECK_FALSE(w.patch_weight.requires_grad());
  CHECK_FALSE(w.blocks[0].qkv_weight.requires_grad());
}

TEST_CASE("patchify a 4x4 image") {
  std::vector<double> v(16);
  for (std::size_t i = 0; i < 16; ++i) v[i] = static_cast<double>(i);
  Tensor p = patchify(Tensor::from({4, 4}, v), 2);
  CHECK(p.shape() == Shape{4, 4});
  CHECK(std::vector<double>(p.data().begin(), p.data().begin() + 4) == std::vector<double>{0, 1, 4, 5});
}

TEST_CASE("one patch covering the image") {
  Tensor img = random_image(4, 5);
  Tensor p = patchify(img, 4);
  CHECK(p.shape() == Shape{1, 16});
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) ==
        std::vector<double>(img.data().begin(), img.data().end()));
}

TEST_CASE("patch size must divide the image") {
  CHECK_THROWS_AS(patchify(Tensor::zeros({5, 5}), 2), ShapeMismatch);
}

TEST_CASE("feature length and determinism") {
  ViTWeights w = init_vit(small_config(), 11);
  Tensor img = random_image(16, 12);
  Tensor a = vit_features(w, img), b = vit_features(w, img);
  CHECK(a.numel() == 16);
  CHECK(std::vector<double>(a.data().begin(), a.data().end()) ==
        std::vector<double>(b.data().begin(), b.data().end()));
}

TEST_CASE("attention rows are distributions") {
  ViTWeights w = init_vit(small_config(), 13);
  ViTTrace trace;
  vit_features(w, random_image(16, 14), &trace);
  REQUIRE(!trace.attention.empty());
  const Tensor& att = trace.attention.front();
  const std::size_t t = small_config().tokens();
  for (std::size_t r = 0; r < t; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < t; ++c) s += att[r * t + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("mean pooling without positions ignores patch order") {
  ViTConfig c;
  c.image_size = 4;
  c.patch_size = 2;
  c.embed_dim = 8;
  c.depth = 2;
  c.heads = 2;
  c.use_positional_embedding = false;
  c.pooling = Pooling::mean;
  ViTWeights w = init_vit(c, 21);
  Tensor img = random_image(4, 22);
  // Swap patches (0,0) <-> (1,1) and (0,1) <-> (1,0).
  std::vector<double> moved(16);
  const std::size_t perm[4] = {3, 2, 1, 0};
  for (std::size_t t = 0; t < 4; ++t) {
    const std::size_t src = perm[t];
    for (std::size_t dy = 0; dy < 2; ++dy)
      for (std::size_t dx = 0; dx < 2; ++dx)
        moved[(t / 2 * 2 + dy) * 4 + t % 2 * 2 + dx] = img[(src / 2 * 2 + dy) * 4 + src % 2 * 2 + dx];
  }
  Tensor a = vit_features(w, img);
  Tensor b = vit_features(w, Tensor::from({1, 4, 4}, moved));
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::fabs(a[i] - b[i]) < 1e-9);
}

TEST_CASE("gradients reach the input image but not the weights") {
  ViTWeights w = init_vit(small_config(), 31);
  Tensor img = random_image(16, 32).clone(true);
  Tensor f = vit_features(w, img);
  sum(mul(f, f)).backward();
  REQUIRE(img.has_grad());
  double norm = 0;
  for (double g : img.grad()) norm += g * g;
  CHECK(norm > 0.0);
  CHECK_FALSE(w.patch_weight.has_grad());
}

TEST_CASE("weights round-trip through a file") {
  fs::path dir = scratch_dir("vit_io");
  ViTWeights w = init_vit(small_config(), 41);
  save_weights(w, dir / "vit.sslw");
  ViTWeights r = load_weights(dir / "vit.sslw", small_config());
  Tensor img = random_image(16, 42);
  Tensor a = vit_features(w, img), b = vit_features(r, img);
  CHECK(std::vector<double>(a.data().begin(), a.data().end()) ==
        std::vector<double>(b.data().begin(), b.data().end()));
}

TEST_CASE("truncated weight file is a format error") {
  fs::path dir = scratch_dir("vit_trunc");
  save_weights(init_vit(small_config(), 43), dir / "vit.sslw");
  const auto size = fs::file_size(dir / "vit.sslw");
  fs::resize_file(dir / "vit.sslw", size - 9);
  CHECK_THROWS_AS(load_weights(dir / "vit.sslw", small_config()), FormatError);
}

TEST_CASE("weight file for another configuration is a format error") {
  fs::path dir = scratch_dir("vit_mismatch");
  save_weights(init_vit(small_config(), 44), dir / "vit.sslw");
  ViTConfig other = small_config();
  other.embed_dim = 8;
  CHECK_THROWS_AS(load_weights(dir / "vit.sslw", other), FormatError);
}

TEST_CASE("bad magic and missing file") {
  fs::path dir = scratch_dir("vit_magic");
  std::ofstream(dir / "bad.sslw") << "SSLW2\n";
  CHECK_THROWS_AS(read_weight_file(dir / "bad.sslw"), FormatError);
  CHECK_THROWS_AS(read_weight_file(dir / "absent.sslw"), IoError);
}

TEST_CASE("configuration checks") {
  ViTConfig c = small_config();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = small_config();
  c.patch_size = 5;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
}

}  // TEST_SUITE
