#include "sohkit/ingest.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <utility>

#include "sohkit/error.hpp"
#include "sohkit/numfmt.hpp"

namespace sohkit {
namespace {

constexpr std::size_t kFieldCount = 9;

std::string cycle_label(const CycleRecord& r) {
  return "cycle " + std::to_string(r.cycle_index) + " " + std::string(to_string(r.phase));
}

double require_number(std::string_view field, std::size_t line, std::string_view column) {
  const auto value = parse_double(field);
  if (!value) {
    throw ParseError(line, "column " + std::string(column) + ": not a number: '" +
                               std::string(field) + "'");
  }
  if (!std::isfinite(*value)) {
    throw ParseError(line, "column " + std::string(column) + ": non-finite value");
  }
  return *value;
}

// Per (cycle, phase) accumulation state while reading rows.
struct PendingRecord {
  CycleRecord record;
  std::size_t first_line = 0;
};

}  // namespace

std::string_view to_string(Phase phase) {
  return phase == Phase::kCharge ? "charge" : "discharge";
}

void validate(const CycleRecord& r) {
  const std::size_t n = r.t.size();
  if (n < 2) {
    throw ValidationError(cycle_label(r) + ": need at least 2 samples, got " + std::to_string(n));
  }
  if (r.v_measured.size() != n || r.i_measured.size() != n || r.temp.size() != n ||
      r.v_load.size() != n || r.i_load.size() != n) {
    throw ValidationError(cycle_label(r) + ": sample arrays differ in length");
  }
  if (r.t.front() != 0.0) {
    throw ValidationError(cycle_label(r) + ": t_s must start at 0, got " +
                          format_double(r.t.front()));
  }
  for (std::size_t k = 1; k < n; ++k) {
    if (!(r.t[k] > r.t[k - 1])) {
      throw ValidationError(cycle_label(r) + ": non-increasing t_s at sample " +
                            std::to_string(k) + " (" + format_double(r.t[k - 1]) + " -> " +
                            format_double(r.t[k]) + ")");
    }
  }
  if (r.phase == Phase::kDischarge) {
    if (!r.capacity_ah) {
      throw ValidationError("missing capacity, cycle " + std::to_string(r.cycle_index));
    }
    if (!(*r.capacity_ah > 0.0)) {
      throw ValidationError("non-positive capacity, cycle " + std::to_string(r.cycle_index));
    }
  } else if (r.capacity_ah) {
    throw ValidationError(cycle_label(r) + ": capacity given on a charge record");
  }
}

void validate(const CellDataset& ds) {
  int previous = 0;
  for (const auto& pair : ds.cycles) {
    if (pair.charge.phase != Phase::kCharge || pair.discharge.phase != Phase::kDischarge) {
      throw ValidationError("cycle " + std::to_string(pair.cycle_index()) +
                            ": pair must hold one charge and one discharge record");
    }
    if (pair.charge.cycle_index != pair.discharge.cycle_index) {
      throw ValidationError("pair mixes cycle " + std::to_string(pair.charge.cycle_index) +
                            " and " + std::to_string(pair.discharge.cycle_index));
    }
    if (pair.cycle_index() <= previous) {
      throw ValidationError("cycle_index not strictly increasing at cycle " +
                            std::to_string(pair.cycle_index()));
    }
    previous = pair.cycle_index();
    validate(pair.charge);
    validate(pair.discharge);
  }
}

CellDataset parse_cell_csv(std::istream& in, std::string cell_id) {
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw ParseError(1, "empty input, expected header");
  ++line_no;
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCellCsvHeader) {
    throw ParseError(1, "unexpected header '" + line + "'");
  }

  std::map<std::pair<int, Phase>, PendingRecord> groups;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    const auto fields = split_csv_line(line);
    if (fields.size() != kFieldCount) {
      throw ParseError(line_no, "expected " + std::to_string(kFieldCount) + " fields, got " +
                                    std::to_string(fields.size()));
    }
    const auto cycle = parse_int(fields[0]);
    if (!cycle || *cycle <= 0) {
      throw ParseError(line_no, "cycle_index must be a positive integer, got '" +
                                    std::string(fields[0]) + "'");
    }
    Phase phase;
    if (fields[1] == "charge") {
      phase = Phase::kCharge;
    } else if (fields[1] == "discharge") {
      phase = Phase::kDischarge;
    } else {
      throw ParseError(line_no, "unknown phase '" + std::string(fields[1]) + "'");
    }

    auto [it, inserted] = groups.try_emplace({*cycle, phase});
    PendingRecord& pending = it->second;
    CycleRecord& r = pending.record;
    if (inserted) {
      r.cycle_index = *cycle;
      r.phase = phase;
      pending.first_line = line_no;
    }

    const double t = require_number(fields[2], line_no, "t_s");
    if (!r.t.empty() && !(t > r.t.back())) {
      throw ValidationError("non-increasing t_s in " + cycle_label(r) + " at line " +
                            std::to_string(line_no));
    }
    r.t.push_back(t);
    r.v_measured.push_back(require_number(fields[3], line_no, "v_measured_V"));
    r.i_measured.push_back(require_number(fields[4], line_no, "i_measured_A"));
    r.temp.push_back(require_number(fields[5], line_no, "temp_C"));
    r.v_load.push_back(require_number(fields[6], line_no, "v_load_V"));
    r.i_load.push_back(require_number(fields[7], line_no, "i_load_A"));

    const std::string_view cap_field = fields[8];
    if (phase == Phase::kCharge) {
      if (!cap_field.empty()) {
        throw ValidationError("capacity given on charge row, cycle " + std::to_string(*cycle) +
                              " at line " + std::to_string(line_no));
      }
      continue;
    }
    if (cap_field.empty()) {
      throw ValidationError("missing capacity, cycle " + std::to_string(*cycle) + " at line " +
                            std::to_string(line_no));
    }
    const double cap = require_number(cap_field, line_no, "capacity_Ah");
    if (!r.capacity_ah) {
      r.capacity_ah = cap;
    } else if (*r.capacity_ah != cap) {
      throw ValidationError("inconsistent capacity within cycle " + std::to_string(*cycle) +
                            " at line " + std::to_string(line_no));
    }
  }

  CellDataset ds;
  ds.cell_id = std::move(cell_id);
  for (auto it = groups.begin(); it != groups.end();) {
    const int cycle = it->first.first;
    auto charge = groups.find({cycle, Phase::kCharge});
    auto discharge = groups.find({cycle, Phase::kDischarge});
    if (charge == groups.end()) {
      throw ValidationError("cycle " + std::to_string(cycle) + " has no charge phase");
    }
    if (discharge == groups.end()) {
      throw ValidationError("cycle " + std::to_string(cycle) + " has no discharge phase");
    }
    ds.cycles.push_back(
        CyclePair{std::move(charge->second.record), std::move(discharge->second.record)});
    it = std::next(discharge);
  }
  validate(ds);
  return ds;
}

CellDataset load_cell_csv(const std::filesystem::path& path, std::string cell_id) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  if (cell_id.empty()) cell_id = path.stem().string();
  try {
    return parse_cell_csv(in, std::move(cell_id));
  } catch (const ParseError& e) {
    throw e.in_file(path.string());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_cell_csv(const CellDataset& ds, std::ostream& out) {
  out << kCellCsvHeader << '\n';
  auto write_record = [&](const CycleRecord& r) {
    const std::string cap = r.capacity_ah ? format_double(*r.capacity_ah) : std::string();
    for (std::size_t k = 0; k < r.size(); ++k) {
      out << r.cycle_index << ',' << to_string(r.phase) << ',' << format_double(r.t[k]) << ','
          << format_double(r.v_measured[k]) << ',' << format_double(r.i_measured[k]) << ','
          << format_double(r.temp[k]) << ',' << format_double(r.v_load[k]) << ','
          << format_double(r.i_load[k]) << ',' << cap << '\n';
    }
  };
  for (const auto& pair : ds.cycles) {
    write_record(pair.charge);
    write_record(pair.discharge);
  }
}

void save_cell_csv(const CellDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_cell_csv(ds, out);
  if (!out) throw IoError("write failed: " + path.string());
}

SohSeries compute_soh(const CellDataset& ds) {
  if (ds.cycles.empty() || !ds.cycles.front().discharge.capacity_ah) {
    throw PreconditionError("compute_soh: dataset " + ds.cell_id +
                            " has no discharge cycle with capacity");
  }
  SohSeries s;
  s.initial_capacity_ah = *ds.cycles.front().discharge.capacity_ah;
  s.cycle_index.reserve(ds.cycles.size());
  s.soh.reserve(ds.cycles.size());
  for (const auto& pair : ds.cycles) {
    if (!pair.discharge.capacity_ah) {
      throw ValidationError("missing capacity, cycle " + std::to_string(pair.cycle_index()));
    }
    s.cycle_index.push_back(pair.cycle_index());
    s.soh.push_back(*pair.discharge.capacity_ah / s.initial_capacity_ah);
  }
  return s;
}

std::optional<int> eol_cycle(const SohSeries& series, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.2)) {
    throw PreconditionError("eol_cycle: threshold must lie in (0, 1.2), got " +
                            format_double(threshold));
  }
  for (std::size_t k = 0; k < series.soh.size(); ++k) {
    if (series.soh[k] < threshold) return series.cycle_index[k];
  }
  return std::nullopt;
}

}  // namespace sohkit
