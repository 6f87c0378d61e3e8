#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "shapeseg/config.hpp"
#include "shapeseg/metrics.hpp"
#include "shapeseg/phantom.hpp"
#include "shapeseg/unet.hpp"
#include "shapeseg/vit.hpp"

namespace shapeseg {

// Stream ids passed to derive_seed(cfg.seed, ...).
inline constexpr std::uint64_t kSplitStream = 0x5350;
inline constexpr std::uint64_t kOrderStream = 0x4f52;
inline constexpr std::uint64_t kUNetStream = 0x554e;

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

Dataset build_dataset(const ExperimentConfig& cfg);
ViTWeights build_encoder(const ExperimentConfig& cfg);
UNetConfig resolved_unet(const ExperimentConfig& cfg);

struct EvalRow {
  std::size_t step = 0;
  std::string split;
  MetricsSummary metrics;
  double loss = 0.0;
};

struct RunResult {
  std::vector<EvalRow> rows;
  UNetWeights weights;
  std::size_t param_count = 0;
  double final_loss = 0.0;  // training loss of the last step
};

// Metrics (argmax predictions) and mean loss over the given samples.
EvalRow evaluate_split(const UNetWeights& net, const ViTWeights& vit, const LossConfig& loss, const Dataset& data,
                       const std::vector<std::size_t>& indices, std::size_t step, const std::string& split);

// Trains from the seeded initialisation; evaluates the test split at step 0,
// every eval_every steps and after the last step.
RunResult train_run(const ExperimentConfig& cfg, const LossConfig& loss, const Dataset& data, const ViTWeights& vit,
                    const std::function<void(const EvalRow&)>& on_eval = {});

// 8 significant digits, never in exponent form.
std::string format_value(double v);
std::string metrics_csv(const std::vector<EvalRow>& rows);

// One cell of an ablation grid.
struct AblationCell {
  std::string id;     // short name, no commas
  std::string label;  // leading CSV fields of the row
  LossConfig loss;
};

struct Ablation {
  std::string name;    // file stem
  std::string header;  // leading CSV columns, e.g. "gamma,delta"
  std::vector<AblationCell> cells;
};

Ablation coeff_ablation(const LossConfig& base);
Ablation distance_ablation(const LossConfig& base);
Ablation combo_ablation(const LossConfig& base);

struct AblationOutput {
  std::string csv;       // header + one row per cell, grid order
  std::string runs_csv;  // cell,param_count,final_loss
};

// Cells run on up to `jobs` worker threads; rows are merged in grid order.
AblationOutput run_ablation(const ExperimentConfig& cfg, const Ablation& ab, std::size_t jobs, std::ostream* log);

// Subcommands. Each writes into out_dir and returns a process exit code.
int cmd_gen(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);
int cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);
int cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);
int cmd_ablate(const ExperimentConfig& cfg, const Ablation& ab, const std::filesystem::path& out_dir,
               std::size_t jobs, std::ostream& log);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace shapeseg
