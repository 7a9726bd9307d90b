#pragma once

// Clock-level behavioral simulation of a chain of neuromorphic cores, one
// core per layer.
//
// Each core owns an event FIFO (MEM_E), its memory image, and an M x N grid
// of virtual neurons. Every clock the controller either dispatches one
// MEM_S&N row, fetches one event from the FIFO, or polls an empty FIFO.
// Within a timestep:
//   1. every virtual neuron leaks once,
//   2. input spikes are queued on core 0,
//   3. for each layer in order, all cores are clocked until the layer's core
//      has drained its events, then that core's barrier evaluates
//      threshold/fire/reset and forwards spikes to the next core.
// Layers with several placement phases replay the timestep's events once per
// phase; capacitor voltages are swapped with a per-neuron backing store at
// phase boundaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "menage/analog.hpp"
#include "menage/error.hpp"
#include "menage/mapper.hpp"
#include "menage/mem_image.hpp"
#include "menage/snn_model.hpp"
#include "menage/trace.hpp"

namespace menage {

struct EventRecord {
  std::uint32_t source = 0;

  bool operator==(const EventRecord&) const = default;
};

struct SimConfig {
  double clock_hz = 103.2e6;
  std::size_t fifo_depth = 0;  // 0 selects twice the source-layer size
  double runaway_guard = 1e6;
  std::uint64_t clock_budget = 100'000'000;  // per timestep
  bool record_clocks = true;
  bool capture_membranes = false;
  C2CLadder ladder;
};

// Compiled inputs for one core.
struct CoreProgram {
  MemImage image;
  PhaseSchedule schedule;
  LIFParams lif;
  std::size_t dest_count = 0;
  std::size_t source_count = 0;
};

enum class ControllerMode { kIdle, kDispatching };

struct ControllerState {
  ControllerMode mode = ControllerMode::kIdle;
  std::uint32_t rows_left = 0;
  std::uint32_t cursor = 0;
};

struct CoreState {
  std::uint32_t index = 0;
  MemImage image;
  LIFParams lif;
  C2CLadder ladder;
  double runaway_guard = 1e6;
  std::size_t dest_count = 0;
  std::size_t source_count = 0;

  std::vector<std::vector<std::int64_t>> slot_owner;  // [phase][j*N+k] -> neuron or -1
  std::deque<EventRecord> mem_e;
  std::size_t fifo_capacity = 0;
  std::vector<EventRecord> arrivals;  // replayed for every phase
  std::vector<VirtualNeuronState> engines;
  std::vector<double> membrane;  // backing store for neurons of inactive phases
  std::uint32_t loaded_phase = 0;
  ControllerState controller;
  TimestepRecord stats;

  std::uint32_t phase_count() const { return static_cast<std::uint32_t>(slot_owner.size()); }

  bool drained() const {
    return controller.mode == ControllerMode::kIdle && mem_e.empty() &&
           (arrivals.empty() || loaded_phase + 1 == phase_count());
  }
};

namespace detail {

inline void save_phase(CoreState& core) {
  const auto& owner = core.slot_owner[core.loaded_phase];
  for (std::size_t s = 0; s < owner.size(); ++s) {
    if (owner[s] >= 0) core.membrane[static_cast<std::size_t>(owner[s])] = core.engines[s].v;
  }
}

inline void load_phase(CoreState& core, std::uint32_t phase) {
  const auto& owner = core.slot_owner[phase];
  for (std::size_t s = 0; s < owner.size(); ++s) {
    auto& vn = core.engines[s];
    if (owner[s] >= 0) {
      vn.v = core.membrane[static_cast<std::size_t>(owner[s])];
      vn.assigned_neuron = static_cast<std::uint32_t>(owner[s]);
    } else {
      vn.v = 0.0;
      vn.assigned_neuron.reset();
    }
  }
  core.loaded_phase = phase;
}

inline void switch_phase(CoreState& core, std::uint32_t phase) {
  if (phase == core.loaded_phase) return;
  save_phase(core);
  load_phase(core, phase);
}

}  // namespace detail

inline CoreState make_core(std::uint32_t index, CoreProgram program, const SimConfig& cfg) {
  const auto& l = program.image.layout;
  if (program.schedule.phases.size() != l.phases) {
    fail(ErrorKind::kLayoutMismatch, "core-sim",
         "core " + std::to_string(index) + ": schedule has " +
             std::to_string(program.schedule.phases.size()) + " phases, image expects " +
             std::to_string(l.phases));
  }
  if (program.image.e2a.size() < program.source_count) {
    fail(ErrorKind::kLayoutMismatch, "core-sim",
         "core " + std::to_string(index) + ": MEM_E2A shallower than the source layer");
  }
  program.lif.validate();
  cfg.ladder.validate();

  CoreState core;
  core.index = index;
  core.lif = program.lif;
  core.ladder = cfg.ladder;
  core.runaway_guard = cfg.runaway_guard;
  core.dest_count = program.dest_count;
  core.source_count = program.source_count;
  core.fifo_capacity = cfg.fifo_depth ? cfg.fifo_depth : 2 * program.source_count;
  const std::size_t slots = std::size_t{l.engines} * l.capacitors;
  core.slot_owner.assign(l.phases, std::vector<std::int64_t>(slots, -1));
  for (std::size_t p = 0; p < program.schedule.phases.size(); ++p) {
    for (const auto& pl : program.schedule.phases[p].placements) {
      if (pl.neuron >= program.dest_count || pl.engine >= l.engines ||
          pl.capacitor >= l.capacitors) {
        fail(ErrorKind::kRange, "core-sim",
             "core " + std::to_string(index) + ": placement of neuron " +
                 std::to_string(pl.neuron) + " is out of range");
      }
      core.slot_owner[p][std::size_t{pl.engine} * l.capacitors + pl.capacitor] = pl.neuron;
    }
  }
  core.image = std::move(program.image);
  core.engines.assign(slots, {});
  core.membrane.assign(core.dest_count, core.lif.vreset);
  detail::load_phase(core, 0);
  core.stats.core = index;
  core.stats.engine_accumulations.assign(l.engines, 0);
  return core;
}

inline void enqueue_event(CoreState& core, EventRecord ev) {
  if (ev.source >= core.source_count) {
    fail(ErrorKind::kRange, "core-sim",
         "core " + std::to_string(core.index) + ": event source " + std::to_string(ev.source) +
             " outside the " + std::to_string(core.source_count) + "-neuron source layer");
  }
  if (core.mem_e.size() >= core.fifo_capacity) {
    fail(ErrorKind::kFifoOverflow, "core-sim",
         "core " + std::to_string(core.index) + ": MEM_E full at " +
             std::to_string(core.fifo_capacity) + " events");
  }
  core.mem_e.push_back(ev);
  core.arrivals.push_back(ev);
  ++core.stats.events_in;
}

struct StepResult {
  ClockAction action = ClockAction::kPoll;
  std::uint32_t arg = 0;
};

// Advances one core by one clock.
inline StepResult controller_step(CoreState& core) {
  auto& ctl = core.controller;
  ++core.stats.clocks;
  if (ctl.mode == ControllerMode::kDispatching) {
    const auto& l = core.image.layout;
    const auto address = ctl.cursor;
    if (address >= core.image.sn.size()) {
      fail(ErrorKind::kDangling, "core-sim",
           "core " + std::to_string(core.index) + ": MEM_S&N address " + std::to_string(address) +
               " beyond depth " + std::to_string(core.image.sn.size()));
    }
    const auto& row = core.image.sn[address];
    for (std::uint32_t j = 0; j < l.engines; ++j) {
      const auto& s = row.slots[j];
      if (!s.select) continue;
      if (s.vn >= l.capacitors || s.waddr >= core.image.wmem[j].size()) {
        fail(ErrorKind::kDangling, "core-sim",
             "core " + std::to_string(core.index) + ": MEM_S&N row " + std::to_string(address) +
                 " engine " + std::to_string(j) + " points outside the engine");
      }
      const double contribution = c2c_multiply(core.ladder, core.image.wmem[j][s.waddr]);
      auto& vn = core.engines[std::size_t{j} * l.capacitors + s.vn];
      vn = lif_integrate(vn, contribution);
      if (!(std::abs(vn.v) < core.runaway_guard)) {
        fail(ErrorKind::kRunaway, "core-sim",
             "core " + std::to_string(core.index) + ": membrane voltage " + std::to_string(vn.v) +
                 " on engine " + std::to_string(j) + " capacitor " + std::to_string(s.vn));
      }
      ++core.stats.selected_slots;
      ++core.stats.engine_accumulations[j];
    }
    ++core.stats.sn_rows_touched;
    ++ctl.cursor;
    if (--ctl.rows_left == 0) ctl.mode = ControllerMode::kIdle;
    return {ClockAction::kDispatchRow, address};
  }

  for (;;) {
    if (core.mem_e.empty()) {
      if (!core.arrivals.empty() && core.loaded_phase + 1 < core.phase_count()) {
        detail::switch_phase(core, core.loaded_phase + 1);
        core.mem_e.assign(core.arrivals.begin(), core.arrivals.end());
        continue;
      }
      ++core.stats.polls;
      return {ClockAction::kPoll, 0};
    }
    const auto ev = core.mem_e.front();
    core.mem_e.pop_front();
    const auto& e2a = core.image.e2a[ev.source];
    if (e2a.count == 0) continue;
    const auto& split = core.image.phase_rows[ev.source];
    std::uint32_t offset = 0;
    for (std::uint32_t p = 0; p < core.loaded_phase; ++p) offset += split[p];
    const auto rows = split[core.loaded_phase];
    if (rows == 0) continue;
    if (offset + rows > e2a.count) {
      fail(ErrorKind::kDangling, "core-sim",
           "core " + std::to_string(core.index) + ": phase table for source " +
               std::to_string(ev.source) + " exceeds its MEM_E2A row count");
    }
    ctl.mode = ControllerMode::kDispatching;
    ctl.rows_left = rows;
    ctl.cursor = e2a.start + offset;
    ++core.stats.fetches;
    return {ClockAction::kFetch, ev.source};
  }
}

// Applies the per-timestep leak to every mapped neuron and resets counters.
inline void begin_timestep(CoreState& core, std::uint32_t timestep) {
  if (!core.drained() || !core.arrivals.empty()) {
    fail(ErrorKind::kState, "core-sim",
         "core " + std::to_string(core.index) + ": timestep opened with events pending");
  }
  core.stats = TimestepRecord{};
  core.stats.core = core.index;
  core.stats.timestep = timestep;
  core.stats.engine_accumulations.assign(core.image.layout.engines, 0);
  for (std::uint32_t p = 0; p < core.phase_count(); ++p) {
    detail::switch_phase(core, p);
    for (std::size_t s = 0; s < core.engines.size(); ++s) {
      if (core.slot_owner[p][s] >= 0) core.engines[s] = lif_leak(core.engines[s], core.lif);
    }
  }
  detail::switch_phase(core, 0);
}

// Threshold check and reset for every mapped neuron. Returns the fired
// neurons' global ids in ascending order.
inline std::vector<EventRecord> timestep_barrier(CoreState& core) {
  if (!core.drained()) {
    fail(ErrorKind::kState, "core-sim",
         "core " + std::to_string(core.index) + ": barrier reached with events pending");
  }
  std::vector<EventRecord> fired;
  for (std::uint32_t p = 0; p < core.phase_count(); ++p) {
    detail::switch_phase(core, p);
    for (std::size_t s = 0; s < core.engines.size(); ++s) {
      if (core.slot_owner[p][s] < 0) continue;
      const auto result = lif_fire_check(core.engines[s], core.lif);
      core.engines[s] = result.state;
      ++core.stats.occupied;
      if (result.fired) fired.push_back({static_cast<std::uint32_t>(core.slot_owner[p][s])});
    }
  }
  detail::switch_phase(core, 0);
  std::sort(fired.begin(), fired.end(),
            [](const EventRecord& a, const EventRecord& b) { return a.source < b.source; });
  core.stats.fires = fired.size();
  core.arrivals.clear();
  return fired;
}

// Membrane voltage of every destination neuron of the core.
inline std::vector<double> membrane_snapshot(CoreState& core) {
  detail::save_phase(core);
  return core.membrane;
}

struct ChainResult {
  SpikeGrid output;
  TraceLog trace;
  std::vector<std::vector<std::vector<double>>> membranes;  // [t][core][neuron]
};

inline ChainResult run_chain(std::vector<CoreProgram> programs, const SpikeGrid& stream,
                             const SimConfig& cfg = {}) {
  if (programs.empty()) fail(ErrorKind::kState, "core-sim", "no cores to simulate");
  if (!(cfg.clock_hz > 0.0)) fail(ErrorKind::kRange, "core-sim", "clock_hz must be positive");
  if (stream.cols() != programs.front().source_count) {
    fail(ErrorKind::kDimension, "core-sim",
         "stream width " + std::to_string(stream.cols()) + " differs from core 0 source layer " +
             std::to_string(programs.front().source_count));
  }
  for (std::size_t l = 1; l < programs.size(); ++l) {
    if (programs[l].source_count != programs[l - 1].dest_count) {
      fail(ErrorKind::kDimension, "core-sim",
           "core " + std::to_string(l) + " source layer does not match core " +
               std::to_string(l - 1) + " output");
    }
  }
  const std::size_t width = programs.back().dest_count;
  std::vector<CoreState> cores;
  cores.reserve(programs.size());
  for (std::size_t l = 0; l < programs.size(); ++l) {
    cores.push_back(make_core(static_cast<std::uint32_t>(l), std::move(programs[l]), cfg));
  }

  ChainResult result;
  result.output = SpikeGrid(stream.rows(), width, 0);
  result.trace.clock_hz = cfg.clock_hz;
  result.trace.cores = static_cast<std::uint32_t>(cores.size());
  std::uint64_t clock = 0;

  for (std::size_t t = 0; t < stream.rows(); ++t) {
    for (auto& core : cores) begin_timestep(core, static_cast<std::uint32_t>(t));
    for (std::size_t m = 0; m < stream.cols(); ++m) {
      if (stream(t, m)) enqueue_event(cores.front(), {static_cast<std::uint32_t>(m)});
    }
    std::uint64_t step_clocks = 0;
    for (std::size_t l = 0; l < cores.size(); ++l) {
      do {
        for (auto& core : cores) {
          const auto step = controller_step(core);
          if (cfg.record_clocks) result.trace.clocks.push_back({clock, core.index, step.action, step.arg});
        }
        ++clock;
        if (++step_clocks > cfg.clock_budget) {
          fail(ErrorKind::kDeadlock, "core-sim",
               "timestep " + std::to_string(t) + " did not drain within " +
                   std::to_string(cfg.clock_budget) + " clocks");
        }
      } while (!std::all_of(cores.begin(), cores.end(),
                            [](const CoreState& c) { return c.drained(); }));
      const auto fired = timestep_barrier(cores[l]);
      if (l + 1 < cores.size()) {
        for (const auto& ev : fired) enqueue_event(cores[l + 1], ev);
      } else {
        for (const auto& ev : fired) result.output(t, ev.source) = 1;
      }
    }
    for (const auto& core : cores) result.trace.timesteps.push_back(core.stats);
    if (cfg.capture_membranes) {
      auto& snap = result.membranes.emplace_back();
      for (auto& core : cores) snap.push_back(membrane_snapshot(core));
    }
  }
  result.trace.total_clocks = clock;
  return result;
}

}  // namespace menage
