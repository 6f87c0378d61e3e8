#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "shapeseg/losses.hpp"
#include "shapeseg/optim.hpp"
#include "shapeseg/phantom.hpp"
#include "shapeseg/unet.hpp"
#include "shapeseg/vit.hpp"

namespace shapeseg {

// Everything one experiment needs. The global seed drives the data, the split,
// the batch order and the U-Net initialisation; the encoder has its own seed
// so that it stays fixed while the experiment seed varies.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::uint64_t vit_seed = 7;
  std::size_t n_samples = 200;
  double train_frac = 0.7;
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  std::size_t eval_every = 250;
  std::size_t overlays = 8;
  std::string output_dir = "out";

  PhantomConfig phantom;
  ViTConfig vit;
  UNetConfig unet;
  LossConfig loss;  // loss.sdm holds the SDM settings
  OptimState optim;

  // Cross-module consistency (image sizes, divisibility) plus each module's
  // own validate(). Throws OutOfRange or the module's error.
  void validate() const;
};

struct ParsedConfig {
  ExperimentConfig config;
  std::set<std::string> keys;  // keys that appeared in the text
};

// "key = value" lines; '#' starts a comment; blank lines are ignored.
// Throws ParseError (unparseable line or value, with line number),
// UnknownKey, OutOfRange.
ParsedConfig parse_config_text(std::string_view text);
ParsedConfig parse_config(const std::filesystem::path& path);

// Every key with its resolved value, one "key = value" line each, in
// documentation order. parse_config_text(snapshot(c)) reproduces c.
std::string config_snapshot(const ExperimentConfig& cfg);

// Precedence: command-line value, then a "seed" line in the config text,
// then the SSL_SEED environment value, then the built-in default.
std::uint64_t resolve_seed(std::optional<std::uint64_t> cli, const ParsedConfig& parsed, const char* env_value);

struct ConfigKey {
  std::string name;
  std::string doc;
};
const std::vector<ConfigKey>& config_keys();

}  // namespace shapeseg
