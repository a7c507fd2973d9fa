#pragma once

// Canonical per-cycle telemetry CSV and the SOH/EOL series derived from it.
//
// Schema (header required, one file per cell):
//   cycle_index,phase,t_s,v_measured_V,i_measured_A,temp_C,v_load_V,i_load_A,capacity_Ah
// `phase` is `charge` or `discharge`; capacity_Ah is repeated on every
// discharge row and empty on charge rows.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sohkit {

enum class Phase { kCharge, kDischarge };

std::string_view to_string(Phase phase);

struct CycleRecord {
  int cycle_index = 0;
  Phase phase = Phase::kCharge;
  std::vector<double> t;  // seconds from phase start; t[0] == 0
  std::vector<double> v_measured;
  std::vector<double> i_measured;
  std::vector<double> temp;
  std::vector<double> v_load;
  std::vector<double> i_load;
  std::optional<double> capacity_ah;  // discharge only

  std::size_t size() const { return t.size(); }
  double duration() const { return t.empty() ? 0.0 : t.back(); }

  bool operator==(const CycleRecord&) const = default;
};

struct CyclePair {
  CycleRecord charge;
  CycleRecord discharge;

  int cycle_index() const { return discharge.cycle_index; }
  bool operator==(const CyclePair&) const = default;
};

struct CellDataset {
  std::string cell_id;
  std::vector<CyclePair> cycles;
  double nominal_capacity_ah = 2.0;

  bool operator==(const CellDataset&) const = default;
};

struct SohSeries {
  std::vector<int> cycle_index;
  std::vector<double> soh;
  double initial_capacity_ah = 0.0;

  std::size_t size() const { return soh.size(); }
};

inline constexpr std::string_view kCellCsvHeader =
    "cycle_index,phase,t_s,v_measured_V,i_measured_A,temp_C,v_load_V,i_load_A,capacity_Ah";

// Throws ValidationError when a record or dataset invariant does not hold.
void validate(const CycleRecord& record);
void validate(const CellDataset& dataset);

// Parse errors name the offending line; invariant violations raise
// ValidationError naming the cycle.
CellDataset parse_cell_csv(std::istream& in, std::string cell_id);
// cell_id defaults to the file stem ("B0005" for ".../B0005.csv").
CellDataset load_cell_csv(const std::filesystem::path& path, std::string cell_id = {});

// Shortest round-trip formatting, so parse(write(ds)) == ds bit for bit.
void write_cell_csv(const CellDataset& dataset, std::ostream& out);
void save_cell_csv(const CellDataset& dataset, const std::filesystem::path& path);

// soh[k] = capacity[k] / capacity[0].
SohSeries compute_soh(const CellDataset& dataset);

// First cycle whose SOH is strictly below `threshold`.
std::optional<int> eol_cycle(const SohSeries& series, double threshold = 0.8);

}  // namespace sohkit
