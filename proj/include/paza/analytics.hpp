// Confusion metrics, cost model and call-volume projections.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace paza {

// nullopt marks an undefined ratio (zero denominator), never 0.
using Ratio = std::optional<double>;

struct ConfusionMetrics {
  Ratio precision;
  Ratio recall;
  Ratio specificity;
  Ratio accuracy;
  Ratio f1;
};

ConfusionMetrics confusion_metrics(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn);

// "undefined" for nullopt.
nlohmann::json ratio_json(const Ratio& r);
nlohmann::json to_json(const ConfusionMetrics& m);

struct CostParams {
  double gpu_usd_per_hr = 0.40;
  double hours_per_day = 12.0;
  double days_per_month = 30.0;
  double stores_sharing = 10.0;
  double db_usd_month = 0.0;
  double network_usd_month = 0.0;

  void validate() const;
};

struct CostBreakdown {
  double vlm_per_store = 0.0;
  double db = 0.0;
  double network = 0.0;
  double total = 0.0;
};

CostBreakdown cost_model(const CostParams& p);

struct Range {
  double low = 0.0;
  double high = 0.0;
};

struct CostRanges {
  Range vlm;
  Range db;
  Range network;
  Range total;
};

CostRanges sum_cost_ranges(Range vlm, Range db, Range network);

// Plain-text per-component table.
std::string format_cost_table(const CostBreakdown& point, const CostRanges& ranges);

struct CallVolume {
  std::uint64_t low = 0;
  std::uint64_t high = 0;
};

CallVolume call_volume_projection(double calls_per_hour_low, double calls_per_hour_high, double hours_per_day,
                                  double days);

struct RunStats {
  std::uint64_t frames_processed = 0;
  std::uint64_t persons_tracked = 0;
  std::uint64_t person_observations = 0;
  std::uint64_t triggers_fired = 0;
  std::uint64_t vlm_calls = 0;
  std::uint64_t skips = 0;
  std::uint64_t retries = 0;
  std::uint64_t expired = 0;
  std::uint64_t exhausted = 0;
  std::uint64_t dropped = 0;
  std::uint64_t errors = 0;
  std::uint64_t parse_errors = 0;
  std::uint64_t stale_events = 0;
  std::map<std::string, std::uint64_t> verdicts_by_category;
  std::map<std::string, std::uint64_t> alerts_by_category;
  std::map<std::string, std::uint64_t> holds_by_reason;

  double reduction_factor() const;
  std::uint64_t alerts() const;
};

nlohmann::json to_json(const RunStats& s);

}  // namespace paza
