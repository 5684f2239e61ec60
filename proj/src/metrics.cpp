#include "multirc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "multirc/errors.hpp"
#include "multirc/pipeline.hpp"

namespace multirc {

double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

namespace {

void require_aligned(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size()) {
    throw DataError("prediction and truth lengths differ (" + std::to_string(pred.size()) + " vs " +
                    std::to_string(truth.size()) + ")");
  }
}

double ratio(std::size_t num, std::size_t den) { return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0; }

}  // namespace

ClassicReport classic_prf1(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  require_aligned(pred, truth);
  ClassicReport r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && truth[i]) ++r.tp;
    else if (pred[i]) ++r.fp;
    else if (truth[i]) ++r.fn;
    else ++r.tn;
  }
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

EventSet to_events(std::span<const std::uint8_t> labels) {
  EventSet out;
  for (std::size_t i = 0; i < labels.size();) {
    if (!labels[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < labels.size() && labels[j]) ++j;
    out.push_back({i, j});
    i = j;
  }
  return out;
}

std::vector<std::pair<double, double>> affiliation_zones(const EventSet& truth, std::size_t length) {
  std::vector<std::pair<double, double>> zones;
  double left = 0.0;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    const double right = j + 1 < truth.size()
                             ? 0.5 * static_cast<double>(truth[j].end + truth[j + 1].begin)
                             : static_cast<double>(length);
    zones.emplace_back(left, right);
    left = right;
  }
  return zones;
}

namespace {

struct Piece {
  double lo;
  double hi;
};

// Integral of a function that is linear between consecutive breakpoints.
// `eval(x, mid)` evaluates the branch selected by the sub-interval midpoint.
template <typename Eval>
double integrate(double lo, double hi, std::vector<double> breaks, Eval eval) {
  breaks.push_back(lo);
  breaks.push_back(hi);
  std::erase_if(breaks, [&](double x) { return x < lo || x > hi; });
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double u = breaks[k], v = breaks[k + 1], mid = 0.5 * (u + v);
    total += 0.5 * (v - u) * (eval(u, mid) + eval(v, mid));
  }
  return total;
}

// Mean over predicted points of P(dist(X, E) >= dist(x, E)), X uniform on the zone.
double zone_precision(const std::vector<Piece>& pred, double b, double e, double zl, double zr) {
  const double width = zr - zl;
  auto survival = [&](double d) { return (std::max(0.0, b - d - zl) + std::max(0.0, zr - e - d)) / width; };
  auto eval = [&](double x, double mid) {
    if (mid >= b && mid <= e) return 1.0;
    return survival(mid < b ? b - x : x - e);
  };
  const std::vector<double> breaks = {b, e, b + e - zr, b + e - zl};
  double integral = 0.0, measure = 0.0;
  for (const auto& p : pred) {
    integral += integrate(p.lo, p.hi, breaks, eval);
    measure += p.hi - p.lo;
  }
  return integral / measure;
}

// Mean over event points y of P(|X - y| >= dist(y, prediction)), X uniform on the zone.
double zone_recall(const std::vector<Piece>& pred, double b, double e, double zl, double zr) {
  const double width = zr - zl;
  std::vector<double> breaks;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    breaks.insert(breaks.end(), {pred[k].lo, pred[k].hi, 0.5 * (pred[k].lo + zl), 0.5 * (pred[k].hi + zr)});
    if (k + 1 < pred.size()) breaks.push_back(0.5 * (pred[k].hi + pred[k + 1].lo));
  }
  auto eval = [&](double y, double mid) {
    // Nearest predicted piece to the sub-interval, measured at its midpoint.
    double best = std::numeric_limits<double>::infinity();
    double anchor = 0.0;
    bool left = false;
    for (const auto& p : pred) {
      if (mid >= p.lo && mid <= p.hi) return 1.0;
      if (p.hi < mid && mid - p.hi < best) {
        best = mid - p.hi;
        anchor = p.hi;
        left = true;
      }
      if (p.lo > mid && p.lo - mid < best) {
        best = p.lo - mid;
        anchor = p.lo;
        left = false;
      }
    }
    if (left) return (std::max(0.0, anchor - zl) + std::max(0.0, zr - 2.0 * y + anchor)) / width;
    return (std::max(0.0, 2.0 * y - anchor - zl) + std::max(0.0, zr - anchor)) / width;
  };
  return integrate(b, e, breaks, eval) / (e - b);
}

}  // namespace

AffiliationReport affiliation_prf1(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  require_aligned(pred, truth);
  const EventSet events = to_events(truth);
  if (events.empty()) throw DataError("affiliation metrics need at least one ground-truth event");
  const EventSet predicted = to_events(pred);
  const auto zones = affiliation_zones(events, truth.size());

  AffiliationReport r;
  double p_sum = 0.0, r_sum = 0.0;
  std::size_t p_count = 0;
  for (std::size_t j = 0; j < events.size(); ++j) {
    const auto [zl, zr] = zones[j];
    std::vector<Piece> pieces;
    for (const auto& iv : predicted) {
      const double lo = std::max(static_cast<double>(iv.begin), zl);
      const double hi = std::min(static_cast<double>(iv.end), zr);
      if (hi > lo) pieces.push_back({lo, hi});
    }
    const double b = static_cast<double>(events[j].begin), e = static_cast<double>(events[j].end);
    if (pieces.empty()) {
      r.zone_precision.push_back(std::nullopt);
      r.zone_recall.push_back(0.0);
      ++r.zones_without_prediction;
      continue;
    }
    const double prec = zone_precision(pieces, b, e, zl, zr);
    const double rec = zone_recall(pieces, b, e, zl, zr);
    r.zone_precision.push_back(prec);
    r.zone_recall.push_back(rec);
    p_sum += prec;
    r_sum += rec;
    ++p_count;
  }
  r.precision_undefined = p_count == 0;
  r.precision = p_count ? p_sum / static_cast<double>(p_count) : 0.0;
  r.recall = r_sum / static_cast<double>(events.size());
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

std::vector<std::uint8_t> point_adjust(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  require_aligned(pred, truth);
  std::vector<std::uint8_t> out(pred.begin(), pred.end());
  for (const auto& ev : to_events(truth)) {
    const bool hit = std::any_of(pred.begin() + static_cast<std::ptrdiff_t>(ev.begin),
                                 pred.begin() + static_cast<std::ptrdiff_t>(ev.end), [](auto v) { return v != 0; });
    if (hit) std::fill(out.begin() + static_cast<std::ptrdiff_t>(ev.begin), out.begin() + static_cast<std::ptrdiff_t>(ev.end), 1);
  }
  return out;
}

PointAdjustReport point_adjust_demo(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  const auto adjusted = point_adjust(pred, truth);
  return {classic_prf1(pred, truth), classic_prf1(adjusted, truth)};
}

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size()) throw DataError("score and label lengths differ");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (truth[idx[k]]) {
        pos_rank_sum += rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("ROC-AUC needs both positive and negative labels");
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

namespace {

void classic_kv(std::ostream& out, const std::string& prefix, const ClassicReport& c) {
  out << prefix << "precision=" << format_double(c.precision) << '\n'
      << prefix << "recall=" << format_double(c.recall) << '\n'
      << prefix << "f1=" << format_double(c.f1) << '\n'
      << prefix << "tp=" << c.tp << '\n'
      << prefix << "fp=" << c.fp << '\n'
      << prefix << "fn=" << c.fn << '\n'
      << prefix << "tn=" << c.tn << '\n';
}

void classic_text(std::ostream& out, const std::string& title, const ClassicReport& c) {
  out << title << ": P=" << format_double(c.precision) << " R=" << format_double(c.recall)
      << " F1=" << format_double(c.f1) << " (TP=" << c.tp << " FP=" << c.fp << " FN=" << c.fn << " TN=" << c.tn
      << ")\n";
}

}  // namespace

void write_report_text(std::ostream& out, const EvalReport& report) {
  out << "task: " << report.task << '\n';
  if (report.threshold) out << "threshold: " << format_double(*report.threshold) << '\n';
  if (report.classic) classic_text(out, "classic", *report.classic);
  if (report.affiliation) {
    const auto& a = *report.affiliation;
    out << "affiliation: Aff-P=" << format_double(a.precision) << " Aff-R=" << format_double(a.recall)
        << " Aff-F1=" << format_double(a.f1) << " (zones=" << a.zone_recall.size()
        << ", without prediction=" << a.zones_without_prediction << ")\n";
    if (a.precision_undefined) out << "note: no predicted points; Aff-P undefined, reported as 0\n";
  }
  if (report.roc_auc) out << "roc_auc: " << format_double(*report.roc_auc) << '\n';
  if (report.point_adjust) {
    classic_text(out, "point-adjust (unadjusted)", report.point_adjust->unadjusted);
    classic_text(out, "point-adjust (adjusted, inflated)", report.point_adjust->adjusted);
  }
}

void write_report_kv(std::ostream& out, const EvalReport& report) {
  out << "task=" << report.task << '\n';
  if (report.threshold) out << "threshold=" << format_double(*report.threshold) << '\n';
  if (report.classic) classic_kv(out, "", *report.classic);
  if (report.affiliation) {
    const auto& a = *report.affiliation;
    out << "aff_precision=" << format_double(a.precision) << '\n'
        << "aff_recall=" << format_double(a.recall) << '\n'
        << "aff_f1=" << format_double(a.f1) << '\n'
        << "aff_zones=" << a.zone_recall.size() << '\n'
        << "aff_zones_without_prediction=" << a.zones_without_prediction << '\n'
        << "aff_precision_undefined=" << (a.precision_undefined ? 1 : 0) << '\n';
  }
  if (report.roc_auc) out << "roc_auc=" << format_double(*report.roc_auc) << '\n';
  if (report.point_adjust) {
    classic_kv(out, "pa_unadjusted_", report.point_adjust->unadjusted);
    classic_kv(out, "pa_adjusted_", report.point_adjust->adjusted);
  }
}

}  // namespace multirc
