#pragma once

// Op counts, energy, TOPS/W, and MEM_S&N utilization from a simulation trace.
//
// Op convention: every selected engine slot of a dispatched row is a multiply
// plus an accumulate (2 ops); every neuron visited at a timestep barrier is a
// leak plus a threshold check (2 ops).

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "menage/error.hpp"
#include "menage/trace.hpp"

namespace menage {

struct EnergyModel {
  double neuron_power_w = 97e-9;
  double neuron_delay_s = 6.72e-9;
  double clock_hz = 103.2e6;
  double sram_read_j = 0.0;
  double controller_j_per_clock = 0.0;
  double c2c_j_per_op = 0.0;

  void validate() const {
    if (neuron_power_w < 0 || neuron_delay_s < 0 || sram_read_j < 0 ||
        controller_j_per_clock < 0 || c2c_j_per_op < 0) {
      fail(ErrorKind::kRange, "metrics", "energy model constants must be nonnegative");
    }
    if (!(clock_hz > 0.0)) fail(ErrorKind::kRange, "metrics", "clock_hz must be positive");
  }
};

struct EnergyBreakdown {
  double fire_j = 0.0;
  double controller_j = 0.0;
  double sram_j = 0.0;
  double c2c_j = 0.0;
  double total_j = 0.0;

  bool operator==(const EnergyBreakdown&) const = default;
};

struct ActivityCounts {
  std::uint64_t fires = 0;
  std::uint64_t core_clocks = 0;  // clocks summed over cores
  std::uint64_t sn_reads = 0;
  std::uint64_t c2c_ops = 0;
  std::uint64_t barrier_updates = 0;
};

inline ActivityCounts tally(const TraceLog& trace) {
  ActivityCounts c;
  for (const auto& r : trace.timesteps) {
    c.fires += r.fires;
    c.core_clocks += r.clocks;
    c.sn_reads += r.sn_rows_touched;
    c.c2c_ops += r.selected_slots;
    c.barrier_updates += r.occupied;
  }
  return c;
}

inline std::uint64_t count_ops(const TraceLog& trace) {
  const auto c = tally(trace);
  return 2 * c.c2c_ops + 2 * c.barrier_updates;
}

inline EnergyBreakdown energy_from_counts(const ActivityCounts& c, const EnergyModel& em) {
  em.validate();
  EnergyBreakdown e;
  e.fire_j = static_cast<double>(c.fires) * (em.neuron_power_w * em.neuron_delay_s);
  e.controller_j = static_cast<double>(c.core_clocks) * em.controller_j_per_clock;
  e.sram_j = static_cast<double>(c.sn_reads) * em.sram_read_j;
  e.c2c_j = static_cast<double>(c.c2c_ops) * em.c2c_j_per_op;
  e.total_j = e.fire_j + e.controller_j + e.sram_j + e.c2c_j;
  return e;
}

inline EnergyBreakdown compute_energy(const TraceLog& trace, const EnergyModel& em) {
  return energy_from_counts(tally(trace), em);
}

struct UtilizationPoint {
  std::uint32_t core = 0;
  std::uint32_t timestep = 0;
  double utilization = 0.0;

  bool operator==(const UtilizationPoint&) const = default;
};

// Fraction of each core's populated MEM_S&N rows read during each timestep.
// Cores with no populated rows report 0.
inline std::vector<UtilizationPoint> utilization_series(const TraceLog& trace,
                                                        const std::vector<std::size_t>& depths) {
  std::vector<UtilizationPoint> out;
  out.reserve(trace.timesteps.size());
  for (const auto& r : trace.timesteps) {
    if (r.core >= depths.size()) {
      fail(ErrorKind::kDimension, "metrics",
           "no MEM_S&N depth supplied for core " + std::to_string(r.core));
    }
    const auto depth = depths[r.core];
    const double u =
        depth == 0 ? 0.0 : static_cast<double>(r.sn_rows_touched) / static_cast<double>(depth);
    out.push_back({r.core, r.timestep, u});
  }
  return out;
}

struct RunReport {
  std::uint64_t total_ops = 0;
  std::uint64_t total_clocks = 0;
  std::uint64_t total_fires = 0;
  double wall_time_s = 0.0;
  EnergyBreakdown energy;
  double avg_power_w = 0.0;
  double tops_per_watt = 0.0;  // +inf when the run consumed no modeled energy
  std::vector<UtilizationPoint> util_series;

  bool operator==(const RunReport&) const = default;
};

inline RunReport build_report(const TraceLog& trace, const EnergyModel& em,
                              const std::vector<std::size_t>& depths) {
  em.validate();
  if (trace.total_clocks == 0) {
    fail(ErrorKind::kEmptyRun, "metrics", "trace covers zero clocks");
  }
  RunReport r;
  const auto counts = tally(trace);
  r.total_ops = count_ops(trace);
  r.total_clocks = trace.total_clocks;
  r.total_fires = counts.fires;
  r.wall_time_s = static_cast<double>(trace.total_clocks) / em.clock_hz;
  r.energy = energy_from_counts(counts, em);
  r.avg_power_w = r.energy.total_j / r.wall_time_s;
  const double ops_per_s = static_cast<double>(r.total_ops) / r.wall_time_s;
  r.tops_per_watt = r.avg_power_w > 0.0 ? ops_per_s / r.avg_power_w / 1e12
                                        : std::numeric_limits<double>::infinity();
  r.util_series = utilization_series(trace, depths);
  return r;
}

namespace detail {

inline std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace detail

inline std::string format_utilization_csv(const std::vector<UtilizationPoint>& series) {
  std::string out =
      "# utilization: fraction of populated MEM_S&N rows read in the timestep (0..1)\n"
      "core,timestep,utilization\n";
  for (const auto& p : series) {
    out += std::to_string(p.core) + "," + std::to_string(p.timestep) + "," +
           detail::fmt_double(p.utilization) + "\n";
  }
  return out;
}

inline std::string format_report_csv(const RunReport& r) {
  std::string out =
      "# units: energy in joules, time in seconds, power in watts, ops counted as 2 per "
      "synapse multiply-accumulate and 2 per neuron barrier update\n"
      "total_ops,total_clocks,total_fires,wall_time_s,fire_energy_j,controller_energy_j,"
      "sram_energy_j,c2c_energy_j,total_energy_j,avg_power_w,tops_per_watt\n";
  out += std::to_string(r.total_ops) + "," + std::to_string(r.total_clocks) + "," +
         std::to_string(r.total_fires) + "," + detail::fmt_double(r.wall_time_s) + "," +
         detail::fmt_double(r.energy.fire_j) + "," + detail::fmt_double(r.energy.controller_j) +
         "," + detail::fmt_double(r.energy.sram_j) + "," + detail::fmt_double(r.energy.c2c_j) +
         "," + detail::fmt_double(r.energy.total_j) + "," + detail::fmt_double(r.avg_power_w) +
         "," + detail::fmt_double(r.tops_per_watt) + "\n";
  return out;
}

}  // namespace menage
