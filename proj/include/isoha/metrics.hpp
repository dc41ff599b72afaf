#pragma once

// Daily traffic aggregation and SLA arithmetic.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "isoha/fixed.hpp"
#include "isoha/iso8583.hpp"

namespace isoha::metrics {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::int64_t kSecondsPerDay = 86400;

struct DailyTrafficRecord {
  std::string date;
  std::uint64_t total = 0;
  std::uint64_t standard = 0;
  std::uint64_t nonstandard = 0;

  // Throws MetricsError on total == 0 or standard + nonstandard != total.
  void validate() const;
};

struct SlaReport {
  std::string date;
  std::uint64_t total = 0;
  std::uint64_t standard = 0;
  std::uint64_t nonstandard = 0;
  std::uint64_t days = 1;
  Fixed avg_tps;         // total / (86400 * days), 2 places
  Fixed error_rate_pct;  // 100 * nonstandard / total; 3 places below 1%, else 2
  Fixed sla_pct;         // 100 * standard / total, 2 places
};

// Percentage with the reporting precision: 3 places when below 1, else 2.
Fixed report_percent(std::uint64_t part, std::uint64_t total);

SlaReport compute_daily_report(const DailyTrafficRecord& r);

// Sums the records, then computes; avg_tps is over all the days covered.
SlaReport compute_period_report(const std::vector<DailyTrafficRecord>& records, std::string label);

struct PeriodComparison {
  SlaReport before;
  SlaReport after;
  Fixed sla_delta_pp;    // sla_after - sla_before, from exact ratios, 2 places
  Fixed error_delta_pp;  // error_before - error_after, same
};

PeriodComparison compare_periods(const std::vector<DailyTrafficRecord>& before,
                                 const std::vector<DailyTrafficRecord>& after);

// Feeds classify() verdicts into daily counters.
class TrafficCounter {
 public:
  void add(const iso8583::Verdict& verdict);
  void add_payload(std::string_view bytes, const iso8583::FieldDictionary& dict);
  DailyTrafficRecord record(std::string date) const;

 private:
  std::uint64_t standard_ = 0;
  std::uint64_t nonstandard_ = 0;
};

// `date,total,standard,nonstandard` lines; an optional header line and
// `#` comments are skipped. Every record is validated.
std::vector<DailyTrafficRecord> parse_traffic_csv(std::string_view text);
std::vector<DailyTrafficRecord> load_traffic_csv(const std::string& path);

std::string report_csv_header();
std::string to_csv(const std::vector<SlaReport>& reports);
std::string format_report(const SlaReport& r);
std::string format_comparison(const PeriodComparison& c);

// Writes daily.csv plus tps.dat, error.dat and sla.dat (`<index> <date> <value>`)
// into `out_dir`, creating it when missing. Returns the written paths.
std::vector<std::string> emit_report(const std::vector<SlaReport>& reports, const std::string& out_dir);

}  // namespace isoha::metrics
