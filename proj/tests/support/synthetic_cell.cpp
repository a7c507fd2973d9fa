#include "synthetic_cell.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sohkit::testkit {
namespace {

std::vector<double> time_grid(double end, double dt) {
  std::vector<double> t;
  for (double s = 0.0; s < end - 1e-9; s += dt) t.push_back(s);
  t.push_back(end);
  return t;
}

double relative_capacity(const SyntheticCellOptions& o, int k) {
  const double age = k - 1;
  double rel = 1.0 - o.fade_per_cycle * age - o.fade_curvature * age * age;
  if (o.recovery_every > 0) {
    for (int e = o.recovery_every; e <= k; e += o.recovery_every) {
      rel += o.recovery_gain * std::exp(-(k - e) / 6.0);
    }
  }
  return rel;
}

}  // namespace

CellDataset make_synthetic_cell(const SyntheticCellOptions& o, const std::string& cell_id) {
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  auto noise = [&](double sd) { return o.noise * sd * unit(rng); };

  CellDataset ds;
  ds.cell_id = cell_id;
  for (int k = 1; k <= o.cycles; ++k) {
    double rel = relative_capacity(o, k);
    if (k > 1) rel += noise(0.002);
    const double wear = std::clamp(1.0 - rel, 0.0, 1.0);
    const double capacity = o.initial_capacity_ah * rel;
    const double resistance = 0.08 + 0.2 * wear;
    const double amb = o.ambient_c + noise(0.3);

    CycleRecord charge;
    charge.cycle_index = k;
    charge.phase = Phase::kCharge;
    const double t_cc = capacity * 0.85 * 3600.0 / 1.5 * (1.0 - 0.3 * wear);
    const double tau = 900.0 * (1.0 + 1.5 * wear);
    const double t_cv_end = t_cc + tau * std::log(1.5 / 0.02);
    const double t_end = t_cv_end + 3.0 * o.sample_dt_charge;
    for (double t : time_grid(t_end, o.sample_dt_charge)) {
      double v;
      double i;
      double temp;
      if (t < t_cc) {
        const double s = t / t_cc;
        v = std::min(3.6 + 0.45 * s + 0.15 * std::pow(s, 6) + noise(0.001), 4.199);
        i = 1.5 + noise(0.002);
        temp = amb + 1.0 + 3.0 * s + 2.0 * wear + noise(0.05);
      } else {
        const double u = t - t_cc;
        v = 4.2 + std::abs(noise(0.0005));
        i = std::max(1.5 * std::exp(-u / tau), 0.01) + noise(0.0005);
        temp = amb + 1.0 + (3.0 + 2.0 * wear) * std::exp(-u / 1800.0) + 2.0 * wear + noise(0.05);
      }
      charge.t.push_back(t);
      charge.v_measured.push_back(v);
      charge.i_measured.push_back(i);
      charge.temp.push_back(temp);
      charge.v_load.push_back(v + 0.1 + noise(0.002));
      charge.i_load.push_back(i + noise(0.001));
    }

    CycleRecord discharge;
    discharge.cycle_index = k;
    discharge.phase = Phase::kDischarge;
    discharge.capacity_ah = capacity;
    const double t_dis = capacity * 3600.0 / 2.0;
    for (double t : time_grid(t_dis, o.sample_dt_discharge)) {
      const double q = t / t_dis;
      const double ocv = 4.15 - 0.55 * q - 0.25 * std::pow(q, 6) - 0.45 * std::pow(q, 20);
      const double v = ocv - 2.0 * resistance + noise(0.002);
      discharge.t.push_back(t);
      discharge.v_measured.push_back(v);
      discharge.i_measured.push_back(-2.0 + noise(0.005));
      discharge.temp.push_back(amb + (6.0 + 8.0 * wear) * std::pow(q, 1.5) + noise(0.05));
      discharge.v_load.push_back(0.98 * v - 0.05 + noise(0.003));
      discharge.i_load.push_back(2.0 + noise(0.003));
    }

    ds.cycles.push_back({std::move(charge), std::move(discharge)});
  }
  return ds;
}

}  // namespace sohkit::testkit
