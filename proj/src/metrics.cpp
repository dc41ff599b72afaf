#include "isoha/metrics.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace isoha::metrics {

namespace {

std::uint64_t parse_count(std::string_view field, int line_no) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw MetricsError("line " + std::to_string(line_no) + ": bad count '" + std::string(field) + "'");
  }
  return v;
}

std::string signed_str(const Fixed& f) { return (f.units > 0 ? "+" : "") + f.str(); }

SlaReport build(std::string label, std::uint64_t total, std::uint64_t standard, std::uint64_t nonstandard,
                std::uint64_t days) {
  SlaReport r;
  r.date = std::move(label);
  r.total = total;
  r.standard = standard;
  r.nonstandard = nonstandard;
  r.days = days;
  r.avg_tps = round_ratio(total, static_cast<__int128>(kSecondsPerDay) * days, 2);
  r.error_rate_pct = report_percent(nonstandard, total);
  r.sla_pct = round_ratio(static_cast<__int128>(standard) * 100, total, 2);
  return r;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw MetricsError("cannot write " + path.string());
  out << content;
  if (!out) throw MetricsError("write failed: " + path.string());
}

}  // namespace

void DailyTrafficRecord::validate() const {
  if (total == 0) throw MetricsError("record " + date + ": total must be >= 1");
  if (standard + nonstandard != total) {
    throw MetricsError("record " + date + ": standard + nonstandard != total");
  }
}

Fixed report_percent(std::uint64_t part, std::uint64_t total) {
  const __int128 num = static_cast<__int128>(part) * 100;
  return round_ratio(num, total, num < total ? 3 : 2);
}

SlaReport compute_daily_report(const DailyTrafficRecord& r) {
  r.validate();
  return build(r.date, r.total, r.standard, r.nonstandard, 1);
}

SlaReport compute_period_report(const std::vector<DailyTrafficRecord>& records, std::string label) {
  if (records.empty()) throw MetricsError("period " + label + " has no records");
  std::uint64_t total = 0, standard = 0, nonstandard = 0;
  for (const auto& r : records) {
    r.validate();
    total += r.total;
    standard += r.standard;
    nonstandard += r.nonstandard;
  }
  return build(std::move(label), total, standard, nonstandard, records.size());
}

PeriodComparison compare_periods(const std::vector<DailyTrafficRecord>& before,
                                 const std::vector<DailyTrafficRecord>& after) {
  PeriodComparison c;
  c.before = compute_period_report(before, "before");
  c.after = compute_period_report(after, "after");
  const __int128 tb = c.before.total, ta = c.after.total;
  // 100 * (sa/ta - sb/tb) and 100 * (nb/tb - na/ta) over the common denominator.
  c.sla_delta_pp = round_ratio(100 * (static_cast<__int128>(c.after.standard) * tb -
                                      static_cast<__int128>(c.before.standard) * ta),
                               ta * tb, 2);
  c.error_delta_pp = round_ratio(100 * (static_cast<__int128>(c.before.nonstandard) * ta -
                                        static_cast<__int128>(c.after.nonstandard) * tb),
                                 ta * tb, 2);
  return c;
}

void TrafficCounter::add(const iso8583::Verdict& verdict) {
  if (verdict.is_standard()) ++standard_;
  else ++nonstandard_;
}

void TrafficCounter::add_payload(std::string_view bytes, const iso8583::FieldDictionary& dict) {
  add(iso8583::classify(bytes, dict));
}

DailyTrafficRecord TrafficCounter::record(std::string date) const {
  return {std::move(date), standard_ + nonstandard_, standard_, nonstandard_};
}

std::vector<DailyTrafficRecord> parse_traffic_csv(std::string_view text) {
  std::vector<DailyTrafficRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("date,", 0) == 0) continue;
    std::vector<std::string_view> cols;
    std::string_view rest(line);
    for (;;) {
      auto comma = rest.find(',');
      cols.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cols.size() != 4) {
      throw MetricsError("line " + std::to_string(line_no) + ": expected date,total,standard,nonstandard");
    }
    DailyTrafficRecord r{std::string(cols[0]), parse_count(cols[1], line_no), parse_count(cols[2], line_no),
                         parse_count(cols[3], line_no)};
    try {
      r.validate();
    } catch (const MetricsError& e) {
      throw MetricsError("line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<DailyTrafficRecord> load_traffic_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MetricsError("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_traffic_csv(buf.str());
  } catch (const MetricsError& e) {
    throw MetricsError(path + ": " + e.what());
  }
}

std::string report_csv_header() { return "date,total,standard,nonstandard,avg_tps,error_rate_pct,sla_pct"; }

std::string to_csv(const std::vector<SlaReport>& reports) {
  std::ostringstream s;
  s << report_csv_header() << '\n';
  for (const auto& r : reports) {
    s << r.date << ',' << r.total << ',' << r.standard << ',' << r.nonstandard << ',' << r.avg_tps.str() << ','
      << r.error_rate_pct.str() << ',' << r.sla_pct.str() << '\n';
  }
  return s.str();
}

std::string format_report(const SlaReport& r) {
  return r.date + ": total=" + std::to_string(r.total) + " avg_tps=" + r.avg_tps.str() +
         " error=" + r.error_rate_pct.str() + "% sla=" + r.sla_pct.str() + "%";
}

std::string format_comparison(const PeriodComparison& c) {
  return format_report(c.before) + "\n" + format_report(c.after) + "\ndelta sla=" + signed_str(c.sla_delta_pp) +
         "pp error=" + signed_str(Fixed{-c.error_delta_pp.units, c.error_delta_pp.places}) + "pp";
}

std::vector<std::string> emit_report(const std::vector<SlaReport>& reports, const std::string& out_dir) {
  if (reports.empty()) throw MetricsError("nothing to report");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw MetricsError("cannot create " + out_dir + ": " + ec.message());

  std::string tps = "# index date avg_tps\n", err = "# index date error_rate_pct\n", sla = "# index date sla_pct\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const std::string prefix = std::to_string(i) + " " + r.date + " ";
    tps += prefix + r.avg_tps.str() + "\n";
    err += prefix + r.error_rate_pct.str() + "\n";
    sla += prefix + r.sla_pct.str() + "\n";
  }
  const fs::path dir(out_dir);
  std::vector<std::pair<fs::path, std::string>> files{
      {dir / "daily.csv", to_csv(reports)}, {dir / "tps.dat", tps}, {dir / "error.dat", err}, {dir / "sla.dat", sla}};
  std::vector<std::string> written;
  for (const auto& [path, content] : files) {
    write_file(path, content);
    written.push_back(path.string());
  }
  return written;
}

}  // namespace isoha::metrics
