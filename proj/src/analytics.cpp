#include "paza/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace paza {
namespace {

Ratio ratio(double num, double den) {
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

std::uint64_t monthly(double per_hour, double hours, double days) {
  return static_cast<std::uint64_t>(std::llround(per_hour * hours * days));
}

}  // namespace

ConfusionMetrics confusion_metrics(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
  const auto d = [](std::uint64_t v) { return static_cast<double>(v); };
  ConfusionMetrics m;
  m.precision = ratio(d(tp), d(tp + fp));
  m.recall = ratio(d(tp), d(tp + fn));
  m.specificity = ratio(d(tn), d(tn + fp));
  m.accuracy = ratio(d(tp + tn), d(tp + fp + tn + fn));
  if (m.precision && m.recall && (*m.precision + *m.recall) > 0.0) {
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

nlohmann::json ratio_json(const Ratio& r) {
  if (!r) return "undefined";
  return *r;
}

nlohmann::json to_json(const ConfusionMetrics& m) {
  return {{"precision", ratio_json(m.precision)},
          {"recall", ratio_json(m.recall)},
          {"specificity", ratio_json(m.specificity)},
          {"accuracy", ratio_json(m.accuracy)},
          {"f1", ratio_json(m.f1)}};
}

void CostParams::validate() const {
  for (double v : {gpu_usd_per_hr, hours_per_day, days_per_month, db_usd_month, network_usd_month}) {
    if (!(v >= 0.0)) throw std::invalid_argument("cost parameters must be non-negative");
  }
  if (!(stores_sharing >= 1.0)) throw std::invalid_argument("stores_sharing must be >= 1");
}

CostBreakdown cost_model(const CostParams& p) {
  p.validate();
  CostBreakdown b;
  b.vlm_per_store = p.gpu_usd_per_hr * p.hours_per_day * p.days_per_month / p.stores_sharing;
  b.db = p.db_usd_month;
  b.network = p.network_usd_month;
  b.total = b.vlm_per_store + b.db + b.network;
  return b;
}

CostRanges sum_cost_ranges(Range vlm, Range db, Range network) {
  return CostRanges{vlm, db, network, Range{vlm.low + db.low + network.low, vlm.high + db.high + network.high}};
}

std::string format_cost_table(const CostBreakdown& point, const CostRanges& ranges) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %12s %18s\n", "component", "this config", "typical range");
  out += line;
  auto row = [&](const char* name, double v, Range r) {
    std::snprintf(line, sizeof line, "%-22s %12.2f %8.2f - %7.2f\n", name, v, r.low, r.high);
    out += line;
  };
  row("detector+pose+track", 0.0, Range{0.0, 0.0});
  row("vlm inference", point.vlm_per_store, ranges.vlm);
  row("database", point.db, ranges.db);
  row("network/hosting", point.network, ranges.network);
  row("total", point.total, ranges.total);
  return out;
}

CallVolume call_volume_projection(double calls_per_hour_low, double calls_per_hour_high, double hours_per_day,
                                  double days) {
  return CallVolume{monthly(calls_per_hour_low, hours_per_day, days), monthly(calls_per_hour_high, hours_per_day, days)};
}

double RunStats::reduction_factor() const {
  return static_cast<double>(frames_processed) / static_cast<double>(std::max<std::uint64_t>(vlm_calls, 1));
}

std::uint64_t RunStats::alerts() const {
  std::uint64_t n = 0;
  for (const auto& [cat, c] : alerts_by_category) n += c;
  return n;
}

nlohmann::json to_json(const RunStats& s) {
  return {{"frames_processed", s.frames_processed},
          {"persons_tracked", s.persons_tracked},
          {"person_observations", s.person_observations},
          {"triggers_fired", s.triggers_fired},
          {"vlm_calls", s.vlm_calls},
          {"skips", s.skips},
          {"retries", s.retries},
          {"expired", s.expired},
          {"exhausted", s.exhausted},
          {"dropped", s.dropped},
          {"errors", s.errors},
          {"parse_errors", s.parse_errors},
          {"stale_events", s.stale_events},
          {"verdicts_by_category", s.verdicts_by_category},
          {"alerts_by_category", s.alerts_by_category},
          {"holds_by_reason", s.holds_by_reason},
          {"alerts", s.alerts()},
          {"reduction_factor", s.reduction_factor()}};
}

}  // namespace paza
