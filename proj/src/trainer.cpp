#include "multirc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "multirc/errors.hpp"
#include "multirc/ops.hpp"

namespace multirc {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
  if (patience == 0) throw ConfigError("patience must be at least 1");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!ablations.reconstruction && !ablations.contrastive) {
    throw ConfigError("disabling both reconstruction and contrastive learning leaves nothing to train");
  }
  if (periods.top_k == 0) throw ConfigError("top_k must be positive");
  if (periods.history_windows < 2) throw ConfigError("at least two historical windows are needed");
  effective_loss().validate();
  negatives.validate();
}

LossConfig TrainConfig::effective_loss() const {
  LossConfig l = loss;
  if (!ablations.reconstruction) l.lambda_rec = 0.0;
  if (!ablations.contrastive) l.lambda_con = 0.0;
  return l;
}

WindowSet prepare_windows(const TimeSeries& series, const WindowConfig& cfg, const PeriodOptions& periods) {
  const WindowBatch batch = slide_windows(series, cfg);
  const std::size_t h = batch.lookback, c = batch.channels;
  WindowSet set;
  set.lookback = h;
  set.channels = c;
  set.end_times = batch.end_times;
  set.labels = batch.labels;
  set.values.resize(batch.size() * c * h);
  set.mean.resize(batch.size() * c);
  set.std.resize(batch.size() * c);
  set.periods.resize(batch.size() * c);

  std::vector<std::vector<double>> channels;
  for (std::size_t ch = 0; ch < c; ++ch) channels.push_back(series.channel(ch));
  const std::size_t history = periods.history_windows * h;
  for (std::size_t w = 0; w < batch.size(); ++w) {
    auto [norm, stats] = instance_normalize(std::span(batch.windows).subspan(w * h * c, h * c), h, c);
    const std::size_t end = batch.end_times[w] + 1;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t k = w * c + ch;
      for (std::size_t t = 0; t < h; ++t) set.values[k * h + t] = norm[t * c + ch];
      set.mean[k] = stats.mean[ch];
      set.std[k] = stats.std[ch];
      const std::size_t begin = end > history ? end - history : 0;
      set.periods[k] = dominant_periods_or_local(std::span(channels[ch]).subspan(begin, end - begin), h, periods);
    }
  }
  return set;
}

namespace {

void append_padded(std::vector<double>& dst, std::span<const double> x, std::size_t padded) {
  dst.insert(dst.end(), x.begin(), x.end());
  dst.insert(dst.end(), padded - x.size(), x.back());
}

}  // namespace

BatchInputs make_batch(const WindowSet& set, std::span<const std::size_t> window_ids, const ModelConfig& model_cfg,
                       const TrainConfig& cfg, Rng& rng) {
  const std::size_t h = set.lookback, c = set.channels;
  if (model_cfg.window != h) throw ShapeError("model window does not match the prepared windows");
  const std::size_t L = model_cfg.padded_window(), a = model_cfg.scales;
  const LossConfig loss = cfg.effective_loss();
  const bool negatives = cfg.ablations.generation && loss.lambda_con > 0.0;

  BatchInputs b;
  b.items = window_ids.size() * c;
  std::vector<double> target;
  target.reserve(b.items * h);
  b.weights.reserve(b.items * h);
  if (negatives) b.negatives.resize(a);
  for (std::size_t w : window_ids) {
    if (w >= set.windows()) throw DataError("window index out of range");
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t k = w * c + ch;
      const auto x = set.item(k);
      const std::size_t r = cfg.ablations.adaptive_mask ? sample_mask_length(set.periods[k], rng)
                                                        : static_cast<std::size_t>(rng.uniform_int(2, h));
      const MaskSpec mask = make_mask(h, r, cfg.mask_orientation);
      const auto xm = apply_mask(x, mask);
      target.insert(target.end(), x.begin(), x.end());
      const auto wts = reaction_weights(mask, loss.reaction_weight);
      b.weights.insert(b.weights.end(), wts.begin(), wts.end());
      append_padded(b.masked, xm, L);
      append_padded(b.clean, x, L);
      if (negatives) {
        auto neg = generate_window_negatives(std::span(b.clean).subspan(b.clean.size() - L), model_cfg.base_patch, a,
                                             cfg.negatives, rng);
        for (std::size_t p = 0; p < a; ++p)
          b.negatives[p].insert(b.negatives[p].end(), neg.scales[p].begin(), neg.scales[p].end());
      }
    }
  }
  b.target = Tensor({b.items, h}, std::move(target));
  return b;
}

namespace {

template <typename Fn>
auto guarded(const char* component, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError(std::string(component) + ": " + e.what());
  }
}

}  // namespace

StepOutput batch_loss(const MultiRCModel& model, const BatchInputs& batch, std::size_t channels,
                      const TrainConfig& cfg, const ForwardOptions& opts) {
  const ModelConfig& mc = model.config();
  const std::size_t a = mc.scales, B = batch.items, L = mc.padded_window();
  const LossConfig loss = cfg.effective_loss();
  const bool use_neg = !batch.negatives.empty();
  const bool use_clean = a == 1 && loss.lambda_con > 0.0;

  std::vector<Tensor> zm(a), zn, zc;
  guarded("encoder", [&] {
    for (std::size_t p = 0; p < a; ++p) {
      const std::size_t n = mc.patch_count(p), P = mc.patch_size(p);
      std::vector<double> stacked = batch.masked;
      std::size_t parts = 1;
      if (use_neg) {
        stacked.insert(stacked.end(), batch.negatives[p].begin(), batch.negatives[p].end());
        ++parts;
      }
      if (use_clean) {
        stacked.insert(stacked.end(), batch.clean.begin(), batch.clean.end());
        ++parts;
      }
      Tensor z = model.encode(p, model.embed(p, Tensor({parts * B * n, P}, std::move(stacked))), opts);
      if (parts == 1) {
        zm[p] = z;
        continue;
      }
      // The same parameters serve every branch; only the rows differ.
      zm[p] = ops::slice_rows(z, 0, B * n);
      std::size_t next = 1;
      if (use_neg) {
        zn.push_back(ops::slice_rows(z, next * B * n, (next + 1) * B * n));
        ++next;
      }
      if (use_clean) zc.push_back(ops::slice_rows(z, next * B * n, (next + 1) * B * n));
    }
    return 0;
  });

  StepOutput out;
  std::vector<Tensor> terms;
  if (loss.lambda_rec > 0.0) {
    Tensor rec = guarded("reconstruction loss", [&] {
      return reconstruction_loss(model.decode(zm, B), batch.target, batch.weights);
    });
    out.report.rec = rec.item();
    terms.push_back(ops::scale(rec, loss.lambda_rec));
  }
  if (loss.lambda_con > 0.0) {
    Tensor con = guarded("contrastive loss", [&] {
      std::vector<Tensor> views = use_clean ? std::vector<Tensor>{zm[0], zc[0]} : zm;
      std::vector<Tensor> negs = use_neg && use_clean ? std::vector<Tensor>{zn[0], zn[0]} : zn;
      std::vector<std::size_t> counts(views.size());
      for (std::size_t v = 0; v < views.size(); ++v) counts[v] = mc.patch_count(use_clean ? 0 : v);
      if (loss.mode == Task::detection) {
        for (std::size_t v = 0; v < views.size(); ++v) views[v] = upsample_reps(views[v], counts[v], L);
        for (std::size_t v = 0; v < negs.size(); ++v) negs[v] = upsample_reps(negs[v], counts[v], L);
        return point_contrastive(views, negs, L, loss.normalize_reps, loss.point_same_view);
      }
      for (std::size_t v = 0; v < views.size(); ++v) views[v] = pool_interval(views[v], counts[v], false);
      for (std::size_t v = 0; v < negs.size(); ++v) negs[v] = pool_interval(negs[v], counts[v], false);
      return interval_contrastive(views, negs, channels, loss.normalize_reps);
    });
    out.report.con = con.item();
    terms.push_back(ops::scale(con, loss.lambda_con));
  }
  out.total = terms.size() == 1 ? terms.front() : ops::add(terms[0], terms[1]);
  out.report.total = out.total.item();
  return out;
}

LossReport train_step(MultiRCModel& model, Adam& optimizer, const BatchInputs& batch, std::size_t channels,
                      const TrainConfig& cfg, Rng& dropout_rng) {
  optimizer.zero_grad();
  Tape tape;
  StepOutput out;
  {
    Tape::Scope scope(tape);
    ForwardOptions opts;
    opts.training = true;
    opts.dropout_rng = &dropout_rng;
    out = batch_loss(model, batch, channels, cfg, opts);
  }
  tape.backward(out.total);
  optimizer.step();
  return out.report;
}

double validation_loss(const MultiRCModel& model, const WindowSet& set, const TrainConfig& cfg) {
  if (set.windows() == 0) throw DataError("empty validation split");
  Rng rng(cfg.valid_seed);
  double total = 0.0;
  std::vector<std::size_t> ids;
  for (std::size_t start = 0; start < set.windows(); start += cfg.batch_size) {
    ids.clear();
    for (std::size_t w = start; w < std::min(start + cfg.batch_size, set.windows()); ++w) ids.push_back(w);
    const auto batch = make_batch(set, ids, model.config(), cfg, rng);
    total += batch_loss(model, batch, set.channels, cfg, {}).report.total * static_cast<double>(ids.size());
  }
  return total / static_cast<double>(set.windows());
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw ConfigError("patience must be at least 1");
}

bool EarlyStopping::update(double loss) {
  ++epochs_;
  if (loss < best_) {
    best_ = loss;
    best_epoch_ = epochs_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

std::string log_header() { return "epoch\tL_Rec\tL_Con\tL_total\tvalid_loss\tseconds"; }

std::string format_log_line(const EpochLog& log) {
  std::ostringstream out;
  out << log.epoch << '\t' << format_double(log.rec) << '\t' << format_double(log.con) << '\t'
      << format_double(log.total) << '\t' << format_double(log.valid) << '\t';
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", log.seconds);
  out << buf;
  return out.str();
}

TrainState fit(MultiRCModel& model, const WindowSet& train, const WindowSet& valid, const TrainConfig& cfg,
               const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.windows() == 0) throw DataError("empty training split");
  if (valid.windows() == 0) throw DataError("empty validation split");
  AdamOptions ao;
  ao.lr = cfg.lr;
  Adam optimizer(model.parameters(), ao);
  EarlyStopping stopper(cfg.patience);
  const Rng root(cfg.seed, 0x747261696eULL);
  TrainState state;
  auto best = snapshot_parameters(model);

  std::vector<std::size_t> order(train.windows());
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    Rng rng = root.split(epoch);
    Rng dropout_rng = rng.split(0xd0);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      const auto ids = std::span(order).subspan(start, end - start);
      const auto batch = make_batch(train, ids, model.config(), cfg, rng);
      const auto report = train_step(model, optimizer, batch, train.channels, cfg, dropout_rng);
      const double weight = static_cast<double>(ids.size());
      log.rec += report.rec * weight;
      log.con += report.con * weight;
      log.total += report.total * weight;
    }
    const double n = static_cast<double>(order.size());
    log.rec /= n;
    log.con /= n;
    log.total /= n;
    log.valid = validation_loss(model, valid, cfg);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (stopper.update(log.valid)) best = snapshot_parameters(model);
    state.history.push_back(log);
    state.epochs_run = epoch;
    if (on_epoch) on_epoch(log);
    if (stopper.should_stop()) break;
  }
  restore_parameters(model, best);
  state.best_epoch = stopper.best_epoch();
  state.best_valid = stopper.best_loss();
  return state;
}

}  // namespace multirc
