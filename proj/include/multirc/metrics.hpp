#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace multirc {

struct ClassicReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Half-open index interval [begin, end).
struct Interval {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Interval&) const = default;
};

using EventSet = std::vector<Interval>;

struct AffiliationReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Per ground-truth zone; precision is empty where the zone holds no prediction.
  std::vector<std::optional<double>> zone_precision;
  std::vector<double> zone_recall;
  std::size_t zones_without_prediction = 0;
  /// No predicted point at all: precision is undefined and reported as 0.
  bool precision_undefined = false;
};

struct PointAdjustReport {
  ClassicReport unadjusted;
  ClassicReport adjusted;
};

double f1_score(double precision, double recall);

ClassicReport classic_prf1(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

EventSet to_events(std::span<const std::uint8_t> labels);

/// Affiliation zones: [0, T) split at the midpoints between consecutive events.
std::vector<std::pair<double, double>> affiliation_zones(const EventSet& truth, std::size_t length);

/// Affiliation precision/recall. Point i is the unit interval [i, i + 1);
/// every integral is evaluated in closed form.
AffiliationReport affiliation_prf1(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

/// Credits a whole ground-truth event once any of its points is predicted.
std::vector<std::uint8_t> point_adjust(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);
PointAdjustReport point_adjust_demo(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

/// ROC-AUC of real-valued scores (Mann-Whitney statistic, ties count half).
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> truth);

struct EvalReport {
  std::string task;
  std::optional<double> threshold;
  std::optional<ClassicReport> classic;
  std::optional<AffiliationReport> affiliation;
  std::optional<PointAdjustReport> point_adjust;
  std::optional<double> roc_auc;
};

void write_report_text(std::ostream& out, const EvalReport& report);
void write_report_kv(std::ostream& out, const EvalReport& report);

}  // namespace multirc
