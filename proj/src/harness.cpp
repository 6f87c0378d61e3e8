#include "shapeseg/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "shapeseg/error.hpp"
#include "shapeseg/netpbm.hpp"
#include "shapeseg/ops.hpp"
#include "shapeseg/rng.hpp"

namespace shapeseg {
namespace {

constexpr const char* kMetricsHeader = "step,split,dice,jaccard,miou,accuracy,loss\n";

Tensor stack_images(const Dataset& data, const std::vector<std::size_t>& idx) {
  const Shape& one = data.samples[idx.front()].image.shape();
  std::vector<double> values;
  values.reserve(idx.size() * shape_numel(one));
  for (auto i : idx) {
    const auto d = data.samples[i].image.data();
    values.insert(values.end(), d.begin(), d.end());
  }
  return Tensor::from({idx.size(), one[0], one[1], one[2]}, std::move(values));
}

std::vector<Tensor> class_features(const LabelMap& label, const ViTWeights& vit, const LossConfig& loss,
                                   std::size_t n_classes) {
  std::vector<Tensor> out;
  for (std::size_t c = 1; c < n_classes; ++c)
    out.push_back(label_features(label.mask_of(static_cast<std::uint8_t>(c)), vit, loss.sdm));
  return out;
}

std::string metric_fields(const MetricsSummary& m) {
  return format_value(m.dice) + "," + format_value(m.jaccard) + "," + format_value(m.miou) + "," +
         format_value(m.accuracy);
}

void log_line(std::ostream* log, const std::string& line) {
  static std::mutex mu;
  if (!log) return;
  std::lock_guard<std::mutex> lock(mu);
  *log << line << std::endl;
}

std::string eval_summary(const std::string& prefix, const EvalRow& r) {
  return prefix + "step " + std::to_string(r.step) + " " + r.split + " dice " + format_value(r.metrics.dice) +
         " loss " + format_value(r.loss);
}

}  // namespace

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string format_value(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  if (v == 0.0) return "0.00000000";
  int decimals = 7 - static_cast<int>(std::floor(std::log10(std::fabs(v))));
  decimals = std::max(decimals, 0);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

UNetConfig resolved_unet(const ExperimentConfig& cfg) {
  UNetConfig u = cfg.unet;
  u.seed = derive_seed(cfg.seed, kUNetStream);
  return u;
}

Dataset build_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  PhantomConfig pc = cfg.phantom;
  pc.seed = cfg.seed;
  Dataset d;
  d.samples.resize(cfg.n_samples);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < cfg.n_samples; ++i) d.samples[i] = gen_sample(pc, i);
  auto [train, test] = split_dataset(cfg.n_samples, cfg.train_frac, derive_seed(cfg.seed, kSplitStream));
  d.train = std::move(train);
  d.test = std::move(test);
  return d;
}

ViTWeights build_encoder(const ExperimentConfig& cfg) { return init_vit(cfg.vit, cfg.vit_seed); }

EvalRow evaluate_split(const UNetWeights& net, const ViTWeights& vit, const LossConfig& loss, const Dataset& data,
                       const std::vector<std::size_t>& indices, std::size_t step, const std::string& split) {
  constexpr std::size_t kChunk = 8;
  const std::size_t k = net.config.n_classes;
  EvalRow row;
  row.step = step;
  row.split = split;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                         indices.begin() + static_cast<std::ptrdiff_t>(
                                                               std::min(indices.size(), start + kChunk)));
    const Tensor probs = predict_probs(net, stack_images(data, chunk)).detach();
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const Tensor p = select(probs, 0, b);
      const LabelMap& gt = data.samples[chunk[b]].label;
      row.metrics.add(evaluate(confusion(argmax_classes(p), gt, k)));
      loss_sum += total_loss(p, gt, vit, loss).item();
    }
  }
  row.metrics = row.metrics.averaged();
  row.loss = indices.empty() ? 0.0 : loss_sum / static_cast<double>(indices.size());
  return row;
}

RunResult train_run(const ExperimentConfig& cfg, const LossConfig& loss, const Dataset& data, const ViTWeights& vit,
                    const std::function<void(const EvalRow&)>& on_eval) {
  loss.validate();
  RunResult out;
  out.weights = build_unet(resolved_unet(cfg));
  out.param_count = param_count(out.weights);
  const std::size_t k = out.weights.config.n_classes;

  // The encoder is frozen, so label-side features never change.
  std::vector<std::vector<Tensor>> features(data.samples.size());
  if (loss.uses_shape_term())
    for (auto i : data.train) features[i] = class_features(data.samples[i].label, vit, loss, k);

  OptimState opt;
  opt.kind = cfg.optim.kind;
  opt.learning_rate = cfg.optim.learning_rate;
  opt.beta1 = cfg.optim.beta1;
  opt.beta2 = cfg.optim.beta2;
  opt.eps = cfg.optim.eps;

  auto record = [&](std::size_t step) {
    out.rows.push_back(evaluate_split(out.weights, vit, loss, data, data.test, step, "test"));
    if (on_eval) on_eval(out.rows.back());
  };
  record(0);

  SplitMix64 rng(derive_seed(cfg.seed, kOrderStream));
  std::vector<std::size_t> order = data.train;
  std::size_t cursor = order.size();
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> idx;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    Batch batch;
    batch.images = stack_images(data, idx);
    for (auto i : idx) {
      batch.labels.push_back(data.samples[i].label);
      if (loss.uses_shape_term()) batch.label_features.push_back(features[i]);
    }
    out.final_loss = train_step(out.weights, vit, batch, loss, opt).loss;
    if (step % cfg.eval_every == 0 || step == cfg.steps) record(step);
  }
  return out;
}

std::string metrics_csv(const std::vector<EvalRow>& rows) {
  std::string s = kMetricsHeader;
  for (const auto& r : rows)
    s += std::to_string(r.step) + "," + r.split + "," + metric_fields(r.metrics) + "," + format_value(r.loss) + "\n";
  return s;
}

Ablation coeff_ablation(const LossConfig& base) {
  Ablation ab{"ablate_coeff", "gamma,delta", {}};
  const double grid[5][2] = {{0.1, 0.9}, {0.3, 0.7}, {0.5, 0.5}, {0.7, 0.3}, {0.9, 0.1}};
  for (const auto& g : grid) {
    LossConfig l = base;
    l.shape_sensitive = true;
    l.blend_gamma = g[0];
    l.blend_delta = g[1];
    ab.cells.push_back({"gamma" + format_value(g[0]) + "_delta" + format_value(g[1]),
                        format_value(g[0]) + "," + format_value(g[1]), l});
  }
  return ab;
}

Ablation distance_ablation(const LossConfig& base) {
  Ablation ab{"ablate_distance", "measure,mode", {}};
  for (auto m : {DistanceMeasure::cosine, DistanceMeasure::euclidean, DistanceMeasure::manhattan,
                 DistanceMeasure::jaccard, DistanceMeasure::hamming}) {
    LossConfig l = base;
    l.shape_sensitive = true;
    l.distance = m;
    const bool trainable = is_differentiable(m);
    l.sdm_gradient_mode = trainable ? SdmGradientMode::straight_through : SdmGradientMode::label_only;
    const std::string name(to_string(m));
    ab.cells.push_back({name, name + "," + (trainable ? "trainable" : "eval_only"), l});
  }
  return ab;
}

Ablation combo_ablation(const LossConfig& base) {
  Ablation ab{"ablate_combo", "combo_name", {}};
  LossConfig ce_dice = base;
  ce_dice.base = BaseLoss::ell;
  ce_dice.params.ell_alpha = 1.0;
  ce_dice.params.ell_beta = 1.0;
  ce_dice.shape_sensitive = false;
  ce_dice.blend_delta = 0.0;
  ab.cells.push_back({"ce_dice", "ce_dice", ce_dice});
  const std::pair<const char*, BaseLoss> shaped[] = {
      {"ft_ss", BaseLoss::focal_tversky}, {"combo_ss", BaseLoss::combo}, {"dice_ss", BaseLoss::dice}};
  for (const auto& [name, kind] : shaped) {
    LossConfig l = base;
    l.base = kind;
    l.shape_sensitive = true;
    ab.cells.push_back({name, name, l});
  }
  return ab;
}

AblationOutput run_ablation(const ExperimentConfig& cfg, const Ablation& ab, std::size_t jobs, std::ostream* log) {
  const Dataset data = build_dataset(cfg);
  const ViTWeights vit = build_encoder(cfg);
  const std::size_t n = ab.cells.size();
  std::vector<RunResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        const std::string prefix = ab.name + " [" + ab.cells[i].id + "] ";
        results[i] = train_run(cfg, ab.cells[i].loss, data, vit,
                               [&](const EvalRow& r) { log_line(log, eval_summary(prefix, r)); });
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, n));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  AblationOutput out;
  out.csv = ab.header + ",dice,jaccard,miou,accuracy\n";
  out.runs_csv = "cell,param_count,final_loss\n";
  for (std::size_t i = 0; i < n; ++i) {
    out.csv += ab.cells[i].label + "," + metric_fields(results[i].rows.back().metrics) + "\n";
    out.runs_csv += ab.cells[i].id + "," + std::to_string(results[i].param_count) + "," +
                    format_value(results[i].final_loss) + "\n";
  }
  return out;
}

int cmd_gen(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log) {
  const Dataset data = build_dataset(cfg);
  std::filesystem::create_directories(out_dir / "images");
  std::filesystem::create_directories(out_dir / "labels");
  std::string manifest;
  double fg = 0.0;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.pgm", i);
    const std::string image_rel = std::string("images/img_") + name;
    const std::string label_rel = std::string("labels/lbl_") + name;
    const Sample& s = data.samples[i];
    write_pgm(out_dir / image_rel, quantize(s.image.data(), s.label.cols, s.label.rows));
    write_pgm(out_dir / label_rel, label_image(s.label));
    manifest += std::to_string(i) + "\t" + image_rel + "\t" + label_rel + "\n";
    fg += foreground_fraction(s.label);
  }
  write_text(out_dir / "manifest.tsv", manifest);
  std::string split = "index\tsplit\n";
  for (auto i : data.train) split += std::to_string(i) + "\ttrain\n";
  for (auto i : data.test) split += std::to_string(i) + "\ttest\n";
  write_text(out_dir / "split.tsv", split);
  write_text(out_dir / "config.txt", config_snapshot(cfg));
  log << "wrote " << data.samples.size() << " samples to " << out_dir.string() << " (mean foreground fraction "
      << format_value(fg / static_cast<double>(data.samples.size())) << ")\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "config.txt", config_snapshot(cfg));
  const Dataset data = build_dataset(cfg);
  const ViTWeights vit = build_encoder(cfg);
  const RunResult run =
      train_run(cfg, cfg.loss, data, vit, [&](const EvalRow& r) { log_line(&log, eval_summary("", r)); });

  write_text(out_dir / "metrics.csv", metrics_csv(run.rows));
  save_unet(run.weights, out_dir / "unet.sslw");
  save_weights(vit, out_dir / "vit.sslw");
  const std::size_t n_overlays = std::min(cfg.overlays, data.test.size());
  if (n_overlays > 0) std::filesystem::create_directories(out_dir / "overlays");
  for (std::size_t j = 0; j < n_overlays; ++j) {
    const std::size_t i = data.test[j];
    const Sample& s = data.samples[i];
    const Tensor probs = predict_probs(run.weights, stack_images(data, {i})).detach();
    const LabelMap pred = argmax_classes(select(probs, 0, 0));
    char name[32];
    std::snprintf(name, sizeof name, "pred_%04zu.ppm", i);
    write_ppm(out_dir / "overlays" / name, overlay(quantize(s.image.data(), s.label.cols, s.label.rows), pred));
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text(out_dir / "run_info.txt", "param_count = " + std::to_string(run.param_count) +
                                           "\nfinal_train_loss = " + format_value(run.final_loss) +
                                           "\nwall_seconds = " + format_value(seconds) + "\n");
  log << "final test dice " << format_value(run.rows.back().metrics.dice) << ", " << run.param_count
      << " parameters, " << format_value(seconds) << " s\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log) {
  const Dataset data = build_dataset(cfg);
  const ViTWeights vit = build_encoder(cfg);
  const UNetWeights net = load_unet(out_dir / "unet.sslw", resolved_unet(cfg));
  std::vector<EvalRow> rows{evaluate_split(net, vit, cfg.loss, data, data.train, cfg.steps, "train"),
                            evaluate_split(net, vit, cfg.loss, data, data.test, cfg.steps, "test")};
  const std::string csv = metrics_csv(rows);
  write_text(out_dir / "eval.csv", csv);
  log << csv;
  return 0;
}

int cmd_ablate(const ExperimentConfig& cfg, const Ablation& ab, const std::filesystem::path& out_dir,
               std::size_t jobs, std::ostream& log) {
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "config.txt", config_snapshot(cfg));
  const AblationOutput res = run_ablation(cfg, ab, jobs, &log);
  write_text(out_dir / (ab.name + ".csv"), res.csv);
  write_text(out_dir / (ab.name + "_runs.csv"), res.runs_csv);
  log << res.csv;
  return 0;
}

}  // namespace shapeseg
