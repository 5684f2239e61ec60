#include "multirc/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "multirc/errors.hpp"

namespace multirc {
namespace {

struct KeyDef {
  const char* key;
  const char* fallback;
};

// Registry order is the order of the effective-config echo.
constexpr KeyDef kKeys[] = {
    {"data.train", ""},
    {"data.test", ""},
    {"synth.seed", "7"},
    {"synth.length", "4096"},
    {"synth.train_length", "4096"},
    {"synth.channels", "3"},
    {"synth.periods", "16,24,32"},
    {"synth.amplitude", "1"},
    {"synth.noise", "0.1"},
    {"synth.events", "6"},
    {"synth.anomaly_min", "12"},
    {"synth.anomaly_max", "24"},
    {"synth.anomaly_strength", "3"},
    {"synth.precursor_length", "0"},
    {"synth.precursor_type", "drift"},
    {"synth.precursor_strength", "1"},
    {"synth.warmup", "128"},
    {"window.task", "detection"},
    {"window.lookback", "32"},
    {"window.lookforward", "4"},
    {"window.stride", "1"},
    {"model.d_model", "32"},
    {"model.heads", "4"},
    {"model.blocks", "3"},
    {"model.ff_width", "64"},
    {"model.base_patch", "2"},
    {"model.scales", "3"},
    {"model.dropout", "0.1"},
    {"model.share_scales", "false"},
    {"train.seed", "0"},
    {"train.lr", "1e-5"},
    {"train.max_epochs", "100"},
    {"train.patience", "3"},
    {"train.batch_size", "4"},
    {"train.stride", "8"},
    {"train.valid_ratio", "0.8"},
    {"train.valid_seed", "24301"},
    {"train.multi_scale", "true"},
    {"train.adaptive_mask", "true"},
    {"train.reconstruction", "true"},
    {"train.contrastive", "true"},
    {"train.generation", "true"},
    {"mask.orientation", "trailing"},
    {"mask.top_k", "3"},
    {"mask.history_windows", "4"},
    {"mask.inference", "auto"},
    {"loss.lambda_con", "1"},
    {"loss.lambda_rec", "1"},
    {"loss.normalize_reps", "true"},
    {"loss.reaction_weight", "2"},
    {"loss.point_same_view", "true"},
    {"negatives.strategy", "random"},
    {"negatives.ratio", "0.5"},
    {"negatives.intensity", "0.5"},
    {"negatives.shift", "0"},
    {"negatives.compress_factor", "2"},
    {"score.use_dist", "true"},
    {"score.channel_reduce", "mean"},
    {"score.threshold", "quantile"},
    {"score.anomaly_ratio", "0.01"},
    {"score.value", "0"},
    {"score.batch_windows", "64"},
    {"output.dir", "run"},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& def : kKeys) k.emplace_back(def.key);
    return k;
  }();
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& def : kKeys) values_[def.key] = def.fallback;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = trim(value);
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

RunConfig RunConfig::parse(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside of a section");
    const std::string key = section + "." + trim(line.substr(0, eq));
    if (!cfg.values_.count(key)) throw ConfigError(where + ": unknown config key '" + key + "'");
    cfg.set(key, line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  return parse(in, path.string());
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  std::string section;
  for (const auto& key : config_keys()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << values_.at(key) << '\n';
  }
  return out.str();
}

namespace {

std::uint64_t as_u64(const RunConfig& cfg, const std::string& key) {
  const auto& v = cfg.get(key);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t as_size(const RunConfig& cfg, const std::string& key) { return static_cast<std::size_t>(as_u64(cfg, key)); }

double parse_number(const std::string& v, const std::string& key) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

double as_double(const RunConfig& cfg, const std::string& key) { return parse_number(cfg.get(key), key); }

bool as_bool(const RunConfig& cfg, const std::string& key) {
  const auto& v = cfg.get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<double> as_doubles(const RunConfig& cfg, const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split_list(cfg.get(key))) out.push_back(parse_number(item, key));
  if (out.empty()) throw ConfigError("config key '" + key + "' expects a non-empty list");
  return out;
}

}  // namespace

SynthScenario RunConfig::synth() const {
  SynthScenario sc;
  sc.length = as_size(*this, "synth.length");
  sc.channels = as_size(*this, "synth.channels");
  sc.periods = as_doubles(*this, "synth.periods");
  sc.amplitude = as_double(*this, "synth.amplitude");
  sc.noise = as_double(*this, "synth.noise");
  sc.events = as_size(*this, "synth.events");
  sc.anomaly_min_length = as_size(*this, "synth.anomaly_min");
  sc.anomaly_max_length = as_size(*this, "synth.anomaly_max");
  sc.anomaly_strength = as_double(*this, "synth.anomaly_strength");
  sc.precursor_length = as_size(*this, "synth.precursor_length");
  sc.precursor_type = parse_precursor_type(get("synth.precursor_type"));
  sc.precursor_strength = as_double(*this, "synth.precursor_strength");
  sc.warmup = as_size(*this, "synth.warmup");
  sc.validate();
  return sc;
}

std::uint64_t RunConfig::synth_seed() const { return as_u64(*this, "synth.seed"); }

std::size_t RunConfig::synth_train_length() const {
  const auto n = as_size(*this, "synth.train_length");
  if (n < 2) throw ConfigError("synth.train_length must be at least 2");
  return n;
}

WindowConfig RunConfig::window() const {
  WindowConfig w;
  w.task = parse_task(get("window.task"));
  w.lookback = as_size(*this, "window.lookback");
  w.lookforward = as_size(*this, "window.lookforward");
  w.stride = as_size(*this, "window.stride");
  const auto m = model();
  w.validate(m.patch_size(m.scales - 1));
  return w;
}

WindowConfig RunConfig::train_window() const {
  WindowConfig w = window();
  w.stride = as_size(*this, "train.stride");
  w.validate();
  return w;
}

ModelConfig RunConfig::model() const {
  ModelConfig m;
  m.window = as_size(*this, "window.lookback");
  m.d_model = as_size(*this, "model.d_model");
  m.heads = as_size(*this, "model.heads");
  m.blocks = as_size(*this, "model.blocks");
  m.ff_width = as_size(*this, "model.ff_width");
  m.base_patch = as_size(*this, "model.base_patch");
  m.scales = as_bool(*this, "train.multi_scale") ? as_size(*this, "model.scales") : 1;
  m.dropout = as_double(*this, "model.dropout");
  m.share_scales = as_bool(*this, "model.share_scales");
  m.validate();
  return m;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.lr = as_double(*this, "train.lr");
  t.max_epochs = as_size(*this, "train.max_epochs");
  t.patience = as_size(*this, "train.patience");
  t.batch_size = as_size(*this, "train.batch_size");
  t.seed = as_u64(*this, "train.seed");
  t.valid_seed = as_u64(*this, "train.valid_seed");
  t.ablations.multi_scale = as_bool(*this, "train.multi_scale");
  t.ablations.adaptive_mask = as_bool(*this, "train.adaptive_mask");
  t.ablations.reconstruction = as_bool(*this, "train.reconstruction");
  t.ablations.contrastive = as_bool(*this, "train.contrastive");
  t.ablations.generation = as_bool(*this, "train.generation");
  t.mask_orientation = parse_mask_orientation(get("mask.orientation"));
  t.periods.top_k = as_size(*this, "mask.top_k");
  t.periods.history_windows = as_size(*this, "mask.history_windows");
  t.loss.lambda_con = as_double(*this, "loss.lambda_con");
  t.loss.lambda_rec = as_double(*this, "loss.lambda_rec");
  t.loss.mode = parse_task(get("window.task"));
  t.loss.normalize_reps = as_bool(*this, "loss.normalize_reps");
  t.loss.reaction_weight = as_double(*this, "loss.reaction_weight");
  t.loss.point_same_view = as_bool(*this, "loss.point_same_view");
  const auto& strategy = get("negatives.strategy");
  if (strategy != "random") t.negatives.strategy = parse_negative_strategy(strategy);
  t.negatives.ratio = as_double(*this, "negatives.ratio");
  t.negatives.intensity = as_doubles(*this, "negatives.intensity");
  t.negatives.shift = as_size(*this, "negatives.shift");
  t.negatives.compress_factor = as_size(*this, "negatives.compress_factor");
  t.validate();
  if (t.negatives.intensity.size() != 1 && t.negatives.intensity.size() != model().scales) {
    throw ConfigError("negatives.intensity needs one value or one per scale");
  }
  return t;
}

double RunConfig::valid_ratio() const {
  const double r = as_double(*this, "train.valid_ratio");
  if (!(r > 0.0 && r < 1.0)) throw ConfigError("train.valid_ratio must lie strictly between 0 and 1");
  return r;
}

ScoreConfig RunConfig::score() const {
  ScoreConfig s;
  // Without the contrastive term the representations carry no trained
  // cross-scale signal, so that ablation scores by reconstruction alone.
  s.use_dist = as_bool(*this, "score.use_dist") && as_bool(*this, "train.contrastive");
  s.mask = parse_inference_mask(get("mask.inference"));
  s.channels = parse_channel_reduce(get("score.channel_reduce"));
  s.orientation = parse_mask_orientation(get("mask.orientation"));
  s.normalize_reps = as_bool(*this, "loss.normalize_reps");
  s.batch_windows = as_size(*this, "score.batch_windows");
  if (s.batch_windows == 0) throw ConfigError("score.batch_windows must be positive");
  return s;
}

ThresholdPolicy RunConfig::threshold() const {
  ThresholdPolicy p;
  const auto& kind = get("score.threshold");
  if (kind == "quantile") {
    p.kind = ThresholdKind::quantile;
  } else if (kind == "fixed") {
    p.kind = ThresholdKind::fixed;
  } else {
    throw ConfigError("score.threshold must be quantile or fixed, got '" + kind + "'");
  }
  const double ratio = as_double(*this, "score.anomaly_ratio");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("score.anomaly_ratio must lie strictly between 0 and 1");
  p.quantile = 1.0 - ratio;
  p.value = as_double(*this, "score.value");
  p.validate();
  return p;
}

std::filesystem::path RunConfig::output_dir() const {
  const auto& d = get("output.dir");
  if (d.empty()) throw ConfigError("output.dir must not be empty");
  return d;
}

std::filesystem::path RunConfig::train_path() const {
  const auto& p = get("data.train");
  return p.empty() ? output_dir() / "train.csv" : std::filesystem::path(p);
}

std::filesystem::path RunConfig::test_path() const {
  const auto& p = get("data.test");
  return p.empty() ? output_dir() / "test.csv" : std::filesystem::path(p);
}

void RunConfig::validate() const {
  synth();
  synth_seed();
  synth_train_length();
  window();
  train_window();
  model();
  train();
  valid_ratio();
  score();
  threshold();
  output_dir();
}

}  // namespace multirc
