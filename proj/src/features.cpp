#include "sohkit/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "sohkit/error.hpp"
#include "sohkit/kernels.hpp"
#include "sohkit/numfmt.hpp"

namespace sohkit {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Discharge-voltage slope windows for F6, F7, F8 (seconds).
constexpr std::array<std::pair<double, double>, 3> kSlopeWindows{{
    {50.0, 500.0}, {50.0, 1000.0}, {50.0, 1500.0}}};

FeatureValue ok(double v) { return {v, FeatureStatus::kOk}; }
FeatureValue not_computable(FeatureStatus s) { return {kNaN, s}; }

FeatureValue skew_feature(std::span<const double> x) {
  if (x.size() < 3) return not_computable(FeatureStatus::kTooFewSamples);
  const auto g1 = skewness(x);
  return g1 ? ok(*g1) : not_computable(FeatureStatus::kZeroVariance);
}

// Time at which a piecewise-linear signal crosses `level`, between samples
// k-1 and k.
double interpolate_crossing(double t0, double t1, double y0, double y1, double level) {
  if (y1 == y0) return t1;
  return t0 + (level - y0) / (y1 - y0) * (t1 - t0);
}

std::string feature_csv_header() {
  std::string h = "cycle_index";
  for (std::size_t i = 0; i < kFeatureCount; ++i) h += "," + feature_name(i);
  h += ",soh";
  return h;
}

}  // namespace

std::string feature_name(std::size_t index) { return "F" + std::to_string(index + 1); }

std::optional<std::size_t> feature_index(std::string_view name) {
  if (name.size() < 2 || name.front() != 'F') return std::nullopt;
  const auto n = parse_int(name.substr(1));
  if (!n || *n < 1 || *n > static_cast<int>(kFeatureCount)) return std::nullopt;
  if (name.substr(1).front() == '0') return std::nullopt;
  return static_cast<std::size_t>(*n - 1);
}

std::string_view to_string(FeatureStatus status) {
  switch (status) {
    case FeatureStatus::kOk:
      return "ok";
    case FeatureStatus::kFallback:
      return "fallback to record end";
    case FeatureStatus::kZeroVariance:
      return "zero variance";
    case FeatureStatus::kTooFewSamples:
      return "too few samples";
    case FeatureStatus::kOutOfRange:
      return "record ends before window";
    case FeatureStatus::kMissing:
      return "missing";
  }
  return "unknown";
}

std::vector<double> FeatureTable::column(std::size_t feature) const {
  std::vector<double> col;
  col.reserve(rows.size());
  for (const auto& r : rows) col.push_back(r.values[feature]);
  return col;
}

std::vector<int> FeatureTable::cycle_indices() const {
  std::vector<int> idx;
  idx.reserve(rows.size());
  for (const auto& r : rows) idx.push_back(r.cycle_index);
  return idx;
}

bool FeatureTable::column_complete(std::size_t feature) const {
  return std::all_of(rows.begin(), rows.end(),
                     [feature](const FeatureVector& r) { return r.computable(feature); });
}

double mean(std::span<const double> x) {
  if (x.empty()) throw PreconditionError("mean of an empty array");
  return kernels::sum(x) / static_cast<double>(x.size());
}

double population_variance(std::span<const double> x) {
  const double m = mean(x);
  return kernels::centered_power_sums(x, m).s2 / static_cast<double>(x.size());
}

double median(std::span<const double> x) {
  if (x.empty()) throw PreconditionError("median of an empty array");
  std::vector<double> v(x.begin(), x.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

std::optional<double> skewness(std::span<const double> x) {
  if (x.size() < 3) {
    throw PreconditionError("skewness needs at least 3 samples, got " + std::to_string(x.size()));
  }
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (*lo == *hi) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const auto sums = kernels::centered_power_sums(x, mean(x));
  const double m2 = sums.s2 / n;
  const double m3 = sums.s3 / n;
  if (m2 <= 0.0) return std::nullopt;
  return m3 / std::pow(m2, 1.5);
}

FeatureValue slope_between(const CycleRecord& rec, double t1, double t2) {
  if (!(t1 >= 0.0 && t2 > t1)) {
    throw PreconditionError("slope window must satisfy t2 > t1 >= 0, got [" + format_double(t1) +
                            ", " + format_double(t2) + "]");
  }
  if (rec.t.empty() || rec.t.back() < t1) return not_computable(FeatureStatus::kOutOfRange);

  const auto first = std::lower_bound(rec.t.begin(), rec.t.end(), t1);
  const auto last = std::upper_bound(rec.t.begin(), rec.t.end(), t2);
  const auto begin = static_cast<std::size_t>(first - rec.t.begin());
  const auto count = static_cast<std::size_t>(last - first);
  if (count < 2) return not_computable(FeatureStatus::kTooFewSamples);

  const std::span<const double> t(rec.t.data() + begin, count);
  const std::span<const double> v(rec.v_measured.data() + begin, count);
  const auto sums = kernels::centered_cross_sums(t, mean(t), v, mean(v));
  const double slope = sums.sxy / sums.sxx;
  const bool truncated = rec.t.back() < t2;
  return {slope, truncated ? FeatureStatus::kFallback : FeatureStatus::kOk};
}

CcCvTimes cc_cv_split(const CycleRecord& charge, double v_cut, double i_cut) {
  CcCvTimes out;
  const auto& t = charge.t;
  const auto& v = charge.v_measured;
  const auto& i = charge.i_measured;
  const std::size_t n = t.size();
  if (n == 0) return out;
  const double end = t.back();

  std::size_t k = 0;
  while (k < n && v[k] < v_cut) ++k;
  if (k == n) {
    out.t_cc = end;
    out.t_cv = 0.0;
    out.cc_fallback = true;
    out.cv_fallback = true;
    return out;
  }
  out.t_cc = (k == 0) ? t[0] : interpolate_crossing(t[k - 1], t[k], v[k - 1], v[k], v_cut);

  std::size_t j = k;
  while (j < n && std::abs(i[j]) > i_cut) ++j;
  if (j == n) {
    out.t_cv = end - out.t_cc;
    out.cv_fallback = true;
    return out;
  }
  double t_end_cv = out.t_cc;
  if (j > k || (j > 0 && std::abs(i[j - 1]) > i_cut)) {
    t_end_cv = std::max(out.t_cc, interpolate_crossing(t[j - 1], t[j], std::abs(i[j - 1]),
                                                       std::abs(i[j]), i_cut));
  }
  out.t_cv = t_end_cv - out.t_cc;
  return out;
}

FeatureVector extract_cycle_features(const CycleRecord& charge, const CycleRecord& discharge) {
  if (charge.phase != Phase::kCharge || discharge.phase != Phase::kDischarge) {
    throw PreconditionError("extract_cycle_features expects a (charge, discharge) pair");
  }
  if (charge.cycle_index != discharge.cycle_index) {
    throw PreconditionError("charge cycle " + std::to_string(charge.cycle_index) +
                            " paired with discharge cycle " +
                            std::to_string(discharge.cycle_index));
  }

  std::array<FeatureValue, kFeatureCount> f;
  const auto& dv = discharge.v_measured;
  const auto& dtemp = discharge.temp;
  const auto& ctemp = charge.temp;

  f[0] = ok(population_variance(discharge.i_measured));
  f[1] = ok(population_variance(dv));
  f[2] = ok(median(discharge.v_load));
  f[3] = skew_feature(dv);
  f[4] = skew_feature(discharge.v_load);
  for (std::size_t w = 0; w < kSlopeWindows.size(); ++w) {
    f[5 + w] = slope_between(discharge, kSlopeWindows[w].first, kSlopeWindows[w].second);
  }
  f[8] = ok(*std::max_element(dtemp.begin(), dtemp.end()));
  f[9] = ok(mean(dtemp));
  f[10] = ok(population_variance(dtemp));
  f[11] = skew_feature(dtemp);
  f[12] = ok(*std::min_element(dtemp.begin(), dtemp.end()));
  f[13] = ok(*std::max_element(ctemp.begin(), ctemp.end()));
  f[14] = ok(*std::min_element(ctemp.begin(), ctemp.end()));
  f[15] = ok(mean(ctemp));
  f[16] = skew_feature(ctemp);

  const CcCvTimes cc = cc_cv_split(charge);
  f[17] = {cc.t_cc, cc.cc_fallback ? FeatureStatus::kFallback : FeatureStatus::kOk};
  f[18] = {cc.t_cv, (cc.cc_fallback || cc.cv_fallback) ? FeatureStatus::kFallback
                                                        : FeatureStatus::kOk};
  f[19] = ok(discharge.duration());

  FeatureVector out;
  out.cycle_index = discharge.cycle_index;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    out.values[i] = f[i].value;
    out.status[i] = f[i].status;
  }
  return out;
}

FeatureTable extract_feature_table(const CellDataset& ds) {
  if (ds.cycles.empty()) {
    throw PreconditionError("extract_feature_table: dataset " + ds.cell_id + " has no cycles");
  }
  const SohSeries soh = compute_soh(ds);
  FeatureTable table;
  table.rows.reserve(ds.cycles.size());
  for (const auto& pair : ds.cycles) {
    table.rows.push_back(extract_cycle_features(pair.charge, pair.discharge));
  }
  table.soh = soh.soh;

  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const bool any = std::any_of(table.rows.begin(), table.rows.end(),
                                 [i](const FeatureVector& r) { return r.computable(i); });
    if (!any) {
      throw ValidationError("feature " + feature_name(i) + " is not computable on any cycle of " +
                            ds.cell_id + " (" + std::string(to_string(table.rows[0].status[i])) +
                            ")");
    }
  }
  return table;
}

FeatureTable slice_until(const FeatureTable& table, int last_cycle) {
  FeatureTable out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].cycle_index <= last_cycle) {
      out.rows.push_back(table.rows[r]);
      out.soh.push_back(table.soh[r]);
    }
  }
  return out;
}

void write_feature_csv(const FeatureTable& table, std::ostream& out) {
  out << feature_csv_header() << '\n';
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    out << row.cycle_index;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      out << ',';
      if (row.computable(i)) out << format_double(row.values[i]);
    }
    out << ',' << format_double(table.soh[r]) << '\n';
  }
}

void save_feature_csv(const FeatureTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_feature_csv(table, out);
  if (!out) throw IoError("write failed: " + path.string());
}

FeatureTable parse_feature_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(1, "empty input, expected header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != feature_csv_header()) throw ParseError(1, "unexpected feature table header");

  FeatureTable table;
  const std::size_t expected = kFeatureCount + 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != expected) {
      throw ParseError(line_no, "expected " + std::to_string(expected) + " fields, got " +
                                    std::to_string(fields.size()));
    }
    FeatureVector row;
    const auto cycle = parse_int(fields[0]);
    if (!cycle) throw ParseError(line_no, "bad cycle_index '" + std::string(fields[0]) + "'");
    row.cycle_index = *cycle;
    if (!table.rows.empty() && row.cycle_index <= table.rows.back().cycle_index) {
      throw ValidationError("cycle_index not strictly increasing at line " +
                            std::to_string(line_no));
    }
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      const std::string_view field = fields[i + 1];
      if (field.empty()) {
        row.values[i] = kNaN;
        row.status[i] = FeatureStatus::kMissing;
        continue;
      }
      const auto v = parse_double(field);
      if (!v || !std::isfinite(*v)) {
        throw ParseError(line_no, feature_name(i) + ": not a finite number '" +
                                      std::string(field) + "'");
      }
      row.values[i] = *v;
      row.status[i] = FeatureStatus::kOk;
    }
    const auto soh = parse_double(fields.back());
    if (!soh || !std::isfinite(*soh)) {
      throw ParseError(line_no, "soh: not a finite number '" + std::string(fields.back()) + "'");
    }
    table.rows.push_back(row);
    table.soh.push_back(*soh);
  }
  return table;
}

FeatureTable load_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return parse_feature_csv(in);
  } catch (const ParseError& e) {
    throw e.in_file(path.string());
  }
}

}  // namespace sohkit
