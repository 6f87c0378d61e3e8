#include "shapeseg/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "shapeseg/error.hpp"

namespace shapeseg {
namespace {

using Setter = std::function<void(ExperimentConfig&, const std::string&, std::size_t line)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Field {
  ConfigKey key;
  Setter set;
  Getter get;
};

struct Range {
  double lo, hi;
  bool lo_open = false, hi_open = false;

  bool contains(double v) const {
    return (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
  }
  std::string describe() const {
    std::ostringstream os;
    os << (lo_open ? '(' : '[') << lo << ", " << hi << (hi_open ? ')' : ']');
    return os.str();
  }
};

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_real(const std::string& key, const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw ParseError(line, key + ": '" + s + "' is not a number");
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& s, std::size_t line) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc::result_out_of_range) throw OutOfRange("line " + std::to_string(line) + ": " + key + " too large");
  if (ec != std::errc() || end != s.data() + s.size())
    throw ParseError(line, key + ": '" + s + "' is not a non-negative integer");
  return v;
}

void check_range(const std::string& key, double v, const Range& r, std::size_t line) {
  if (!r.contains(v))
    throw OutOfRange("line " + std::to_string(line) + ": " + key + " = " + format_real(v) + " outside " + r.describe());
}

template <typename Ref>
Field real(std::string name, std::string doc, Ref ref, Range r) {
  Field f{{name, std::move(doc)}, nullptr, nullptr};
  f.set = [name, ref, r](ExperimentConfig& c, const std::string& s, std::size_t line) {
    const double v = to_real(name, s, line);
    check_range(name, v, r, line);
    ref(c) = v;
  };
  f.get = [ref](const ExperimentConfig& c) { return format_real(ref(c)); };
  return f;
}

template <typename Ref>
Field integer(std::string name, std::string doc, Ref ref, std::uint64_t lo, std::uint64_t hi) {
  Field f{{name, std::move(doc)}, nullptr, nullptr};
  f.set = [name, ref, lo, hi](ExperimentConfig& c, const std::string& s, std::size_t line) {
    const std::uint64_t v = to_uint(name, s, line);
    if (v < lo || v > hi)
      throw OutOfRange("line " + std::to_string(line) + ": " + name + " = " + s + " outside [" + std::to_string(lo) +
                       ", " + std::to_string(hi) + "]");
    ref(c) = static_cast<std::remove_reference_t<decltype(ref(c))>>(v);
  };
  f.get = [ref](const ExperimentConfig& c) { return std::to_string(ref(c)); };
  return f;
}

template <typename Ref>
Field boolean(std::string name, std::string doc, Ref ref) {
  Field f{{name, std::move(doc)}, nullptr, nullptr};
  f.set = [name, ref](ExperimentConfig& c, const std::string& s, std::size_t line) {
    if (s == "true") {
      ref(c) = true;
    } else if (s == "false") {
      ref(c) = false;
    } else {
      throw ParseError(line, name + ": expected true or false, got '" + s + "'");
    }
  };
  f.get = [ref](const ExperimentConfig& c) { return std::string(ref(c) ? "true" : "false"); };
  return f;
}

// Enumerations go through the library's own name tables.
template <typename Ref, typename Parse, typename Print>
Field choice(std::string name, std::string doc, Ref ref, Parse parse, Print print) {
  Field f{{name, std::move(doc)}, nullptr, nullptr};
  f.set = [name, ref, parse](ExperimentConfig& c, const std::string& s, std::size_t line) {
    try {
      ref(c) = parse(s);
    } catch (const Error& e) {
      throw ParseError(line, name + ": " + e.what());
    }
  };
  f.get = [ref, print](const ExperimentConfig& c) { return std::string(print(ref(c))); };
  return f;
}

Pooling parse_pooling(std::string_view s) {
  if (s == "cls") return Pooling::cls_token;
  if (s == "mean") return Pooling::mean;
  throw InvalidParam("unknown pooling '" + std::string(s) + "' (cls, mean)");
}
std::string_view pooling_name(Pooling p) { return p == Pooling::cls_token ? "cls" : "mean"; }

OptimKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimKind::adam;
  if (s == "sgd") return OptimKind::sgd;
  throw InvalidParam("unknown optimizer '" + std::string(s) + "' (adam, sgd)");
}
std::string_view optimizer_name(OptimKind k) { return k == OptimKind::adam ? "adam" : "sgd"; }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

Field weights_field() {
  Field f{{"class_weights", "per-class weights w_y for weighted cross-entropy, comma separated, class 0 first"},
          nullptr, nullptr};
  f.set = [](ExperimentConfig& c, const std::string& s, std::size_t line) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (true) {
      const auto comma = s.find(',', pos);
      const std::string item = trim(std::string_view(s).substr(pos, comma == std::string::npos ? s.npos : comma - pos));
      const double v = to_real("class_weights", item, line);
      check_range("class_weights", v, {0.0, 1e6, true}, line);
      out.push_back(v);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    c.loss.params.class_weights = std::move(out);
  };
  f.get = [](const ExperimentConfig& c) {
    std::string s;
    for (std::size_t i = 0; i < c.loss.params.class_weights.size(); ++i)
      s += (i ? "," : "") + format_real(c.loss.params.class_weights[i]);
    return s;
  };
  return f;
}

#define REF(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    constexpr std::uint64_t kU64Max = std::numeric_limits<std::uint64_t>::max();
    std::vector<Field> t;
    // run
    t.push_back(integer("seed", "global seed: data, split, batch order, U-Net init", REF(seed), 0, kU64Max));
    t.push_back(integer("vit_seed", "seed of the frozen encoder weights", REF(vit_seed), 0, kU64Max));
    t.push_back(integer("n_samples", "number of generated samples", REF(n_samples), 2, 1000000));
    t.push_back(real("train_frac", "fraction of samples used for training", REF(train_frac), {0.0, 1.0, true, true}));
    t.push_back(integer("steps", "optimizer steps", REF(steps), 0, 100000000));
    t.push_back(integer("batch_size", "samples per step", REF(batch_size), 1, 4096));
    t.push_back(integer("eval_every", "steps between test-split evaluations", REF(eval_every), 1, 100000000));
    t.push_back(integer("overlays", "prediction overlays written after training", REF(overlays), 0, 8));
    {
      Field f{{"output_dir", "directory for run artifacts"}, nullptr, nullptr};
      f.set = [](ExperimentConfig& c, const std::string& s, std::size_t line) {
        if (s.empty()) throw ParseError(line, "output_dir must not be empty");
        c.output_dir = s;
      };
      f.get = [](const ExperimentConfig& c) { return c.output_dir; };
      t.push_back(std::move(f));
    }
    // optimizer
    t.push_back(choice("optimizer", "adam or sgd", REF(optim.kind), parse_optimizer, optimizer_name));
    t.push_back(real("learning_rate", "step size", REF(optim.learning_rate), {0.0, 10.0, true}));
    t.push_back(real("adam_beta1", "Adam first-moment decay", REF(optim.beta1), {0.0, 1.0, false, true}));
    t.push_back(real("adam_beta2", "Adam second-moment decay", REF(optim.beta2), {0.0, 1.0, false, true}));
    t.push_back(real("adam_eps", "Adam denominator offset", REF(optim.eps), {0.0, 1.0, true}));
    // phantom
    t.push_back(integer("image_size", "side of the square synthetic images", REF(phantom.image_size), 8, 1024));
    t.push_back(integer("catheters_min", "fewest catheter curves per image", REF(phantom.catheter_min), 0, 16));
    t.push_back(integer("catheters_max", "most catheter curves per image", REF(phantom.catheter_max), 0, 16));
    t.push_back(integer("guidewires_min", "fewest guidewire curves per image", REF(phantom.guidewire_min), 0, 16));
    t.push_back(integer("guidewires_max", "most guidewire curves per image", REF(phantom.guidewire_max), 0, 16));
    t.push_back(real("catheter_width_min", "narrowest catheter, px", REF(phantom.catheter_width_min), {1.0, 32.0}));
    t.push_back(real("catheter_width_max", "widest catheter, px", REF(phantom.catheter_width_max), {1.0, 32.0}));
    t.push_back(real("guidewire_width_min", "narrowest guidewire, px", REF(phantom.guidewire_width_min), {1.0, 32.0}));
    t.push_back(real("guidewire_width_max", "widest guidewire, px", REF(phantom.guidewire_width_max), {1.0, 32.0}));
    t.push_back(real("contrast_min", "weakest curve darkening", REF(phantom.contrast_min), {0.0, 1.0}));
    t.push_back(real("contrast_max", "strongest curve darkening", REF(phantom.contrast_max), {0.0, 1.0}));
    t.push_back(real("noise_amplitude", "half-width of the uniform pixel noise", REF(phantom.noise_amplitude), {0.0, 0.5}));
    // encoder
    t.push_back(integer("vit_image_size", "encoder input side", REF(vit.image_size), 1, 1024));
    t.push_back(integer("vit_patch_size", "encoder patch side", REF(vit.patch_size), 1, 1024));
    t.push_back(integer("vit_embed_dim", "encoder token width", REF(vit.embed_dim), 1, 4096));
    t.push_back(integer("vit_depth", "encoder blocks", REF(vit.depth), 1, 64));
    t.push_back(integer("vit_heads", "attention heads", REF(vit.heads), 1, 64));
    t.push_back(real("vit_mlp_ratio", "MLP hidden width over token width", REF(vit.mlp_ratio), {0.0, 16.0, true}));
    t.push_back(boolean("vit_pos_embedding", "add positional embeddings to the tokens", REF(vit.use_positional_embedding)));
    t.push_back(choice("vit_pooling", "cls or mean (mean over patch tokens)", REF(vit.pooling), parse_pooling, pooling_name));
    // segmentation network
    t.push_back(integer("unet_base_width", "channels of the first U-Net level", REF(unet.base_width), 1, 256));
    t.push_back(integer("unet_depth", "U-Net pooling levels", REF(unet.depth), 1, 8));
    // signed distance maps
    t.push_back(real("sdm_threshold", "probability above which a pixel is foreground", REF(loss.sdm.threshold),
                     {0.0, 1.0, true, true}));
    t.push_back(boolean("sdm_normalize", "divide by the image diagonal and clamp to [-1, 1]", REF(loss.sdm.normalize)));
    t.push_back(real("sdm_degenerate_fill", "value everywhere when a map has no boundary",
                     REF(loss.sdm.degenerate_fill), {0.0, 1.0, true}));
    // loss
    t.push_back(choice("loss_base", "dice, bce, wce, balanced_ce, focal, tversky, focal_tversky, combo, ell, hd",
                       REF(loss.base), parse_base_loss, [](BaseLoss v) { return to_string(v); }));
    t.push_back(boolean("shape_sensitive", "add the shape-sensitive term", REF(loss.shape_sensitive)));
    t.push_back(real("blend_gamma", "weight of the base loss", REF(loss.blend_gamma), {0.0, 100.0}));
    t.push_back(real("blend_delta", "weight of the shape-sensitive term", REF(loss.blend_delta), {0.0, 100.0}));
    t.push_back(choice("distance", "cosine, euclidean, manhattan, jaccard, hamming", REF(loss.distance),
                       parse_distance_measure, [](DistanceMeasure v) { return to_string(v); }));
    t.push_back(choice("sdm_gradient_mode", "straight_through or label_only", REF(loss.sdm_gradient_mode),
                       parse_gradient_mode, [](SdmGradientMode v) { return to_string(v); }));
    t.push_back(real("st_gain", "slope of the straight-through surrogate, px per unit probability",
                     REF(loss.st_gain), {0.0, 1e6}));
    t.push_back(boolean("combo_verbatim", "use alpha*wce - (1-alpha)*dice for combo", REF(loss.combo_verbatim)));
    t.push_back(real("focal_gamma", "focal loss focusing exponent", REF(loss.params.focal_gamma), {0.0, 100.0}));
    t.push_back(weights_field());
    t.push_back(real("balance_beta", "balanced cross-entropy foreground weight", REF(loss.params.balance_beta),
                     {0.0, 1.0, true, true}));
    t.push_back(real("tversky_alpha", "Tversky false-negative weight", REF(loss.params.tversky_alpha), {0.0, 100.0}));
    t.push_back(real("tversky_beta", "Tversky false-positive weight", REF(loss.params.tversky_beta), {0.0, 100.0}));
    t.push_back(real("focal_tversky_gamma", "focal Tversky exponent", REF(loss.params.focal_tversky_gamma),
                     {0.0, 100.0, true}));
    t.push_back(real("combo_alpha", "combo cross-entropy weight", REF(loss.params.combo_alpha), {0.0, 1.0}));
    t.push_back(real("ell_alpha", "ELL Dice weight", REF(loss.params.ell_alpha), {0.0, 100.0}));
    t.push_back(real("ell_beta", "ELL cross-entropy weight", REF(loss.params.ell_beta), {0.0, 100.0}));
    return t;
  }();
  return table;
}

#undef REF

const Field* find_field(std::string_view name) {
  for (const auto& f : fields())
    if (f.key.name == name) return &f;
  return nullptr;
}

}  // namespace

void ExperimentConfig::validate() const {
  phantom.validate();
  vit.validate();
  unet.validate();
  loss.validate();
  if (phantom.image_size != vit.image_size)
    throw OutOfRange("image_size " + std::to_string(phantom.image_size) + " must equal vit_image_size " +
                     std::to_string(vit.image_size));
  const std::size_t factor = std::size_t{1} << unet.depth;
  if (phantom.image_size % factor)
    throw OutOfRange("image_size must be divisible by 2^unet_depth = " + std::to_string(factor));
  if (loss.params.class_weights.size() < unet.n_classes)
    throw OutOfRange("class_weights needs one entry per class (" + std::to_string(unet.n_classes) + ")");
  const auto n_train = static_cast<std::size_t>(static_cast<double>(n_samples) * train_frac + 1e-9);
  if (n_train == 0 || n_train == n_samples)
    throw OutOfRange("train_frac leaves an empty train or test split for n_samples = " + std::to_string(n_samples));
}

ParsedConfig parse_config_text(std::string_view text) {
  ParsedConfig out;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected 'key = value', got '" + line + "'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ParseError(line_no, "missing key before '='");
    const Field* f = find_field(key);
    if (!f) throw UnknownKey("line " + std::to_string(line_no) + ": '" + key + "'");
    if (value.empty()) throw ParseError(line_no, key + ": missing value");
    f->set(out.config, value, line_no);
    out.keys.insert(key);
  }
  return out;
}

ParsedConfig parse_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_snapshot(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key.name + " = " + f.get(cfg) + "\n";
  return out;
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> cli, const ParsedConfig& parsed, const char* env_value) {
  if (cli) return *cli;
  if (parsed.keys.count("seed")) return parsed.config.seed;
  if (env_value && *env_value) {
    const std::string s(env_value);
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size())
      throw InvalidConfig("SSL_SEED='" + s + "' is not a non-negative integer");
    return v;
  }
  return ExperimentConfig{}.seed;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

}  // namespace shapeseg
