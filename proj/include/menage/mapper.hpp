#pragma once

// Placement of destination neurons onto (neuron engine, capacitor) slots.
//
// Decision variable x[i][j][k] = 1 when destination neuron i occupies
// capacitor k of engine j. The solvers maximize the number of placed
// neurons subject to
//   * engine capacity:     sum_{i,k} x[i][j][k] <= N            for every j
//   * unique assignment:   sum_{j,k} x[i][j][k] <= 1            for every i
//   * slot exclusivity:    sum_i     x[i][j][k] <= 1            for every (j,k)
//   * fan-out:             sum_{i in S_m} sum_{j,k} x <= fanout_m for every m
// Neurons left unplaced are covered by further phases (schedule_phases).

#include <algorithm>
#include <compare>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "menage/error.hpp"
#include "menage/snn_model.hpp"

namespace menage {

struct MappingInstance {
  std::size_t dest_count = 0;    // N1
  std::size_t source_count = 0;  // N2
  std::size_t engines = 1;       // M
  std::size_t capacitors = 1;    // N
  std::vector<std::vector<std::uint32_t>> connections;  // S_m, ascending
  std::vector<std::size_t> fanout;                      // per source

  std::size_t slot_count() const { return engines * capacitors; }

  void validate() const {
    if (engines < 1 || capacitors < 1) {
      fail(ErrorKind::kRange, "mapper-ilp", "engine and capacitor counts must be >= 1");
    }
    if (connections.size() != source_count || fanout.size() != source_count) {
      fail(ErrorKind::kDimension, "mapper-ilp", "per-source tables do not match N2");
    }
    for (std::size_t m = 0; m < source_count; ++m) {
      for (auto i : connections[m]) {
        if (i >= dest_count) {
          fail(ErrorKind::kRange, "mapper-ilp",
               "source " + std::to_string(m) + " connects to out-of-range neuron " +
                   std::to_string(i));
        }
      }
    }
  }

  bool operator==(const MappingInstance&) const = default;
};

struct Placement {
  std::uint32_t neuron = 0;
  std::uint32_t engine = 0;
  std::uint32_t capacitor = 0;

  auto operator<=>(const Placement&) const = default;
};

struct Assignment {
  std::vector<Placement> placements;  // sorted by neuron
  std::size_t unassigned = 0;

  bool operator==(const Assignment&) const = default;
};

struct PhaseSchedule {
  std::vector<Assignment> phases;

  bool operator==(const PhaseSchedule&) const = default;
};

struct HardwareShape {
  std::size_t engines = 1;
  std::size_t capacitors = 1;
  std::optional<std::size_t> fanout;  // applied to every source; default N1
};

// S_m = { i : q[i][m] != 0 }.
inline MappingInstance build_instance(const QuantizedLayer& layer, const HardwareShape& hw) {
  MappingInstance inst;
  inst.dest_count = layer.rows();
  inst.source_count = layer.cols();
  inst.engines = hw.engines;
  inst.capacitors = hw.capacitors;
  inst.connections.resize(layer.cols());
  for (std::size_t i = 0; i < layer.rows(); ++i) {
    for (std::size_t m = 0; m < layer.cols(); ++m) {
      if (layer.qweights(i, m) != 0) inst.connections[m].push_back(static_cast<std::uint32_t>(i));
    }
  }
  inst.fanout.assign(layer.cols(), hw.fanout.value_or(layer.rows()));
  inst.validate();
  return inst;
}

// Sub-instance over the neurons flagged in `keep`; local index n corresponds
// to the n-th kept neuron in ascending order (returned in `index_map`).
inline MappingInstance restrict_instance(const MappingInstance& inst,
                                         const std::vector<bool>& keep,
                                         std::vector<std::uint32_t>* index_map = nullptr) {
  std::vector<std::int64_t> local(inst.dest_count, -1);
  std::vector<std::uint32_t> globals;
  for (std::size_t i = 0; i < inst.dest_count; ++i) {
    if (keep[i]) {
      local[i] = static_cast<std::int64_t>(globals.size());
      globals.push_back(static_cast<std::uint32_t>(i));
    }
  }
  MappingInstance sub = inst;
  sub.dest_count = globals.size();
  for (auto& s : sub.connections) {
    std::vector<std::uint32_t> kept;
    for (auto i : s) {
      if (local[i] >= 0) kept.push_back(static_cast<std::uint32_t>(local[i]));
    }
    s = std::move(kept);
  }
  if (index_map) *index_map = std::move(globals);
  return sub;
}

namespace detail {

// Sources that can actually bind: fanout_m < |S_m|. Others never constrain.
inline std::vector<std::uint32_t> binding_sources(const MappingInstance& inst) {
  std::vector<std::uint32_t> out;
  for (std::size_t m = 0; m < inst.source_count; ++m) {
    if (inst.fanout[m] < inst.connections[m].size()) out.push_back(static_cast<std::uint32_t>(m));
  }
  return out;
}

// Canonical slot order: engine 0 capacitors 0..N-1, then engine 1, ...
inline Assignment assign_in_slot_order(const MappingInstance& inst,
                                       const std::vector<std::uint32_t>& chosen) {
  Assignment a;
  for (std::size_t n = 0; n < chosen.size(); ++n) {
    a.placements.push_back({chosen[n], static_cast<std::uint32_t>(n / inst.capacitors),
                            static_cast<std::uint32_t>(n % inst.capacitors)});
  }
  a.unassigned = inst.dest_count - chosen.size();
  return a;
}

class BranchAndBound {
 public:
  BranchAndBound(const MappingInstance& inst, std::uint64_t node_limit)
      : inst_(inst), node_limit_(node_limit) {
    const auto binding = binding_sources(inst);
    budget_.reserve(binding.size());
    members_.resize(binding.size());
    sources_of_.resize(inst.dest_count);
    for (std::size_t b = 0; b < binding.size(); ++b) {
      const auto m = binding[b];
      budget_.push_back(static_cast<std::int64_t>(inst.fanout[m]));
      for (auto i : inst.connections[m]) {
        sources_of_[i].push_back(static_cast<std::uint32_t>(b));
        members_[b].push_back(i);
      }
    }
  }

  std::vector<std::uint32_t> solve() {
    root_bound_ = bound(0);
    search(0);
    return best_;
  }

 private:
  bool placeable(std::uint32_t i) const {
    for (auto b : sources_of_[i]) {
      if (budget_[b] <= 0) return false;
    }
    return true;
  }

  // Upper bound on the final number of placed neurons when the next
  // neuron to decide is `next`: current + min(free slots, candidates, and
  // per binding source, candidates outside S_m + its remaining budget).
  std::size_t bound(std::size_t next) const {
    const std::size_t free = inst_.slot_count() - chosen_.size();
    std::size_t extra = std::min(free, inst_.dest_count - next);
    if (!budget_.empty()) {
      std::size_t candidates = 0;
      for (std::size_t i = next; i < inst_.dest_count; ++i) {
        if (placeable(static_cast<std::uint32_t>(i))) ++candidates;
      }
      extra = std::min(extra, candidates);
      for (std::size_t b = 0; b < budget_.size(); ++b) {
        std::size_t inside = 0;
        for (auto i : members_[b]) {
          if (i >= next && placeable(i)) ++inside;
        }
        const auto cap = candidates - inside + static_cast<std::size_t>(std::max<std::int64_t>(budget_[b], 0));
        extra = std::min(extra, cap);
      }
    }
    return chosen_.size() + extra;
  }

  // Include-first depth-first search. Only strict improvements replace the
  // incumbent, so the first optimum found is the lexicographically smallest
  // neuron set of maximal size.
  void search(std::size_t next) {
    if (found_root_bound_) return;
    if (++nodes_ > node_limit_) {
      fail(ErrorKind::kSolverCap, "mapper-ilp",
           "branch-and-bound node limit reached; use solve_greedy for this instance");
    }
    if (chosen_.size() > best_.size()) best_ = chosen_;
    if (best_.size() == root_bound_) {
      found_root_bound_ = true;
      return;
    }
    if (next == inst_.dest_count || chosen_.size() == inst_.slot_count()) return;
    if (bound(next) <= best_.size()) return;

    const auto i = static_cast<std::uint32_t>(next);
    if (placeable(i)) {
      for (auto b : sources_of_[i]) --budget_[b];
      chosen_.push_back(i);
      search(next + 1);
      chosen_.pop_back();
      for (auto b : sources_of_[i]) ++budget_[b];
      if (found_root_bound_) return;
    }
    search(next + 1);
  }

  const MappingInstance& inst_;
  std::uint64_t node_limit_;
  std::vector<std::int64_t> budget_;
  std::vector<std::vector<std::uint32_t>> members_;
  std::vector<std::vector<std::uint32_t>> sources_of_;
  std::vector<std::uint32_t> chosen_;
  std::vector<std::uint32_t> best_;
  bool found_root_bound_ = false;
  std::size_t root_bound_ = 0;
  std::uint64_t nodes_ = 0;
};

}  // namespace detail

struct ExactSolverLimits {
  std::uint64_t max_variables = 1'000'000;  // N1 * M * N
  std::uint64_t max_nodes = 20'000'000;
};

// Branch and bound over neuron subsets. Engines and capacitors are
// interchangeable, so a neuron set is feasible iff it fits in M*N slots and
// respects every fan-out budget; the chosen set is then laid into slots in
// canonical order. Among optima the result is the lexicographically
// smallest (neuron, engine, capacitor) triple list.
inline Assignment solve_exact(const MappingInstance& inst, const ExactSolverLimits& limits = {}) {
  inst.validate();
  const auto vars = static_cast<std::uint64_t>(inst.dest_count) * inst.slot_count();
  if (vars > limits.max_variables) {
    fail(ErrorKind::kSolverCap, "mapper-ilp",
         std::to_string(vars) + " decision variables exceed the cap of " +
             std::to_string(limits.max_variables) + "; use solve_greedy");
  }
  if (inst.dest_count == 0) return {};
  detail::BranchAndBound bnb(inst, limits.max_nodes);
  return detail::assign_in_slot_order(inst, bnb.solve());
}

// Neurons by descending connection degree (ties by index), each into the
// least-loaded engine that still has a free capacitor.
inline Assignment solve_greedy(const MappingInstance& inst) {
  inst.validate();
  std::vector<std::size_t> degree(inst.dest_count, 0);
  std::vector<std::vector<std::uint32_t>> sources_of(inst.dest_count);
  for (std::size_t m = 0; m < inst.source_count; ++m) {
    for (auto i : inst.connections[m]) {
      ++degree[i];
      sources_of[i].push_back(static_cast<std::uint32_t>(m));
    }
  }
  std::vector<std::uint32_t> order(inst.dest_count);
  std::iota(order.begin(), order.end(), 0U);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return degree[a] > degree[b]; });

  std::vector<std::size_t> used(inst.source_count, 0);
  std::vector<std::size_t> load(inst.engines, 0);
  Assignment a;
  for (auto i : order) {
    const bool fits = std::all_of(sources_of[i].begin(), sources_of[i].end(),
                                  [&](std::uint32_t m) { return used[m] < inst.fanout[m]; });
    if (!fits) continue;
    std::optional<std::size_t> engine;
    for (std::size_t j = 0; j < inst.engines; ++j) {
      if (load[j] < inst.capacitors && (!engine || load[j] < load[*engine])) engine = j;
    }
    if (!engine) break;
    a.placements.push_back({i, static_cast<std::uint32_t>(*engine),
                            static_cast<std::uint32_t>(load[*engine])});
    ++load[*engine];
    for (auto m : sources_of[i]) ++used[m];
  }
  std::sort(a.placements.begin(), a.placements.end());
  a.unassigned = inst.dest_count - a.placements.size();
  return a;
}

// Exhaustive enumeration of every injective partial map from neurons to
// (engine, capacitor) slots. Returns the minimum unassigned count.
inline std::size_t brute_force_oracle(const MappingInstance& inst) {
  inst.validate();
  if (inst.dest_count > 10 || inst.slot_count() > 8) {
    fail(ErrorKind::kSolverCap, "mapper-ilp",
         "brute-force oracle limited to N1 <= 10 and M*N <= 8");
  }
  const std::size_t slots = inst.slot_count();
  std::vector<bool> slot_used(slots, false);
  std::vector<std::size_t> engine_load(inst.engines, 0);
  std::vector<std::size_t> source_load(inst.source_count, 0);
  std::vector<std::vector<std::uint32_t>> sources_of(inst.dest_count);
  for (std::size_t m = 0; m < inst.source_count; ++m) {
    for (auto i : inst.connections[m]) sources_of[i].push_back(static_cast<std::uint32_t>(m));
  }
  std::size_t best = inst.dest_count;

  auto recurse = [&](auto&& self, std::size_t i, std::size_t placed) -> void {
    if (i == inst.dest_count) {
      best = std::min(best, inst.dest_count - placed);
      return;
    }
    self(self, i + 1, placed);
    for (std::size_t s = 0; s < slots; ++s) {
      if (slot_used[s]) continue;
      const std::size_t j = s / inst.capacitors;
      if (engine_load[j] + 1 > inst.capacitors) continue;
      bool ok = true;
      for (auto m : sources_of[i]) ok = ok && source_load[m] + 1 <= inst.fanout[m];
      if (!ok) continue;
      slot_used[s] = true;
      ++engine_load[j];
      for (auto m : sources_of[i]) ++source_load[m];
      self(self, i + 1, placed + 1);
      for (auto m : sources_of[i]) --source_load[m];
      --engine_load[j];
      slot_used[s] = false;
    }
  };
  recurse(recurse, 0, 0);
  return best;
}

enum class Constraint { kRange, kEngineCapacity, kUniqueAssignment, kSlotExclusivity, kFanout };

inline const char* to_string(Constraint c) {
  switch (c) {
    case Constraint::kRange: return "range";
    case Constraint::kEngineCapacity: return "engine-capacity";
    case Constraint::kUniqueAssignment: return "unique-assignment";
    case Constraint::kSlotExclusivity: return "slot-exclusivity";
    case Constraint::kFanout: return "fan-out";
  }
  return "?";
}

struct Violation {
  Constraint constraint;
  std::size_t index;  // engine, neuron, slot (j*N+k) or source, per constraint
  std::string message;
};

inline std::vector<Violation> validate(const Assignment& a, const MappingInstance& inst) {
  std::vector<Violation> out;
  std::vector<std::size_t> per_neuron(inst.dest_count, 0);
  std::vector<std::size_t> per_engine(inst.engines, 0);
  std::vector<std::size_t> per_slot(inst.slot_count(), 0);
  std::vector<bool> placed(inst.dest_count, false);
  for (const auto& p : a.placements) {
    if (p.neuron >= inst.dest_count || p.engine >= inst.engines ||
        p.capacitor >= inst.capacitors) {
      out.push_back({Constraint::kRange, p.neuron,
                     "placement (" + std::to_string(p.neuron) + ", " + std::to_string(p.engine) +
                         ", " + std::to_string(p.capacitor) + ") is out of range"});
      continue;
    }
    ++per_neuron[p.neuron];
    ++per_engine[p.engine];
    ++per_slot[p.engine * inst.capacitors + p.capacitor];
    placed[p.neuron] = true;
  }
  for (std::size_t j = 0; j < inst.engines; ++j) {
    if (per_engine[j] > inst.capacitors) {
      out.push_back({Constraint::kEngineCapacity, j,
                     "engine-capacity: engine " + std::to_string(j) + " holds " +
                         std::to_string(per_engine[j]) + " neurons, capacity " +
                         std::to_string(inst.capacitors)});
    }
  }
  for (std::size_t i = 0; i < inst.dest_count; ++i) {
    if (per_neuron[i] > 1) {
      out.push_back({Constraint::kUniqueAssignment, i,
                     "unique-assignment: neuron " + std::to_string(i) + " placed " +
                         std::to_string(per_neuron[i]) + " times"});
    }
  }
  for (std::size_t s = 0; s < per_slot.size(); ++s) {
    if (per_slot[s] > 1) {
      out.push_back({Constraint::kSlotExclusivity, s,
                     "slot-exclusivity: engine " + std::to_string(s / inst.capacitors) +
                         " capacitor " + std::to_string(s % inst.capacitors) + " shared by " +
                         std::to_string(per_slot[s]) + " neurons"});
    }
  }
  for (std::size_t m = 0; m < inst.source_count; ++m) {
    std::size_t count = 0;
    for (auto i : inst.connections[m]) count += per_neuron[i];
    if (count > inst.fanout[m]) {
      out.push_back({Constraint::kFanout, m,
                     "fan-out: source " + std::to_string(m) + " drives " + std::to_string(count) +
                         " placed neurons, limit " + std::to_string(inst.fanout[m])});
    }
  }
  const auto placed_count = static_cast<std::size_t>(std::count(placed.begin(), placed.end(), true));
  if (a.unassigned != inst.dest_count - placed_count) {
    out.push_back({Constraint::kUniqueAssignment, a.unassigned,
                   "objective " + std::to_string(a.unassigned) + " does not match " +
                       std::to_string(inst.dest_count - placed_count) + " unplaced neurons"});
  }
  return out;
}

enum class Solver { kExact, kGreedy };

inline Assignment solve(const MappingInstance& inst, Solver solver,
                        const ExactSolverLimits& limits = {}) {
  return solver == Solver::kExact ? solve_exact(inst, limits) : solve_greedy(inst);
}

// Covers every destination neuron by solving the placement repeatedly on
// the neurons still unplaced. Placements in the result carry global ids.
inline PhaseSchedule schedule_phases(const MappingInstance& inst, Solver solver = Solver::kExact,
                                     const ExactSolverLimits& limits = {}) {
  inst.validate();
  for (std::size_t m = 0; m < inst.source_count; ++m) {
    if (inst.fanout[m] == 0 && !inst.connections[m].empty()) {
      fail(ErrorKind::kInfeasible, "mapper-ilp",
           "neuron " + std::to_string(inst.connections[m].front()) +
               " can never be placed: source " + std::to_string(m) + " has fan-out 0");
    }
  }
  PhaseSchedule schedule;
  std::vector<bool> remaining(inst.dest_count, true);
  std::size_t left = inst.dest_count;
  while (left > 0) {
    std::vector<std::uint32_t> globals;
    const auto sub = restrict_instance(inst, remaining, &globals);
    Assignment local = solve(sub, solver, limits);
    if (local.placements.empty()) {
      fail(ErrorKind::kInfeasible, "mapper-ilp",
           "no progress placing neuron " + std::to_string(globals.front()));
    }
    Assignment phase;
    for (const auto& p : local.placements) {
      const auto g = globals[p.neuron];
      phase.placements.push_back({g, p.engine, p.capacitor});
      remaining[g] = false;
    }
    std::sort(phase.placements.begin(), phase.placements.end());
    left -= phase.placements.size();
    phase.unassigned = left;
    schedule.phases.push_back(std::move(phase));
  }
  return schedule;
}

// ---------------------------------------------------------------------------
// Text dumps

inline std::string format_instance(const MappingInstance& inst) {
  std::ostringstream out;
  out << "instance N1=" << inst.dest_count << " N2=" << inst.source_count
      << " M=" << inst.engines << " N=" << inst.capacitors << '\n';
  for (std::size_t m = 0; m < inst.source_count; ++m) {
    out << "source " << m << " fanout=" << inst.fanout[m] << " :";
    for (auto i : inst.connections[m]) out << ' ' << i;
    out << '\n';
  }
  return out.str();
}

inline std::string format_assignment(const Assignment& a) {
  std::ostringstream out;
  out << "assignment placed=" << a.placements.size() << " unassigned=" << a.unassigned << '\n';
  for (const auto& p : a.placements) {
    out << "x " << p.neuron << ' ' << p.engine << ' ' << p.capacitor << '\n';
  }
  return out.str();
}

inline std::string format_schedule(const PhaseSchedule& s) {
  std::ostringstream out;
  out << "schedule phases=" << s.phases.size() << '\n';
  for (std::size_t p = 0; p < s.phases.size(); ++p) {
    out << "phase " << p << '\n' << format_assignment(s.phases[p]);
  }
  return out.str();
}

namespace detail {

inline std::size_t parse_kv(const std::string& token, const std::string& key, std::size_t line) {
  if (token.rfind(key + "=", 0) != 0) {
    fail(ErrorKind::kMalformed, "mapper-ilp",
         "line " + std::to_string(line) + ": expected " + key + "=<n>, got '" + token + "'");
  }
  try {
    return std::stoull(token.substr(key.size() + 1));
  } catch (const std::exception&) {
    fail(ErrorKind::kMalformed, "mapper-ilp",
         "line " + std::to_string(line) + ": bad number in '" + token + "'");
  }
}

}  // namespace detail

inline PhaseSchedule parse_schedule(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  PhaseSchedule s;
  std::size_t declared = 0;
  bool header = false;
  auto malformed = [&](const std::string& why) {
    fail(ErrorKind::kMalformed, "mapper-ilp", "line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "schedule") {
      std::string tok;
      ls >> tok;
      declared = detail::parse_kv(tok, "phases", line_no);
      header = true;
    } else if (word == "phase") {
      std::size_t p = 0;
      if (!(ls >> p) || p != s.phases.size()) malformed("phase index out of order");
      s.phases.emplace_back();
    } else if (word == "assignment") {
      if (s.phases.empty()) malformed("assignment before phase");
      std::string placed, unassigned;
      ls >> placed >> unassigned;
      detail::parse_kv(placed, "placed", line_no);
      s.phases.back().unassigned = detail::parse_kv(unassigned, "unassigned", line_no);
    } else if (word == "x") {
      if (s.phases.empty()) malformed("placement before phase");
      Placement p;
      if (!(ls >> p.neuron >> p.engine >> p.capacitor)) malformed("bad placement");
      s.phases.back().placements.push_back(p);
    } else {
      malformed("unknown record '" + word + "'");
    }
  }
  if (!header || declared != s.phases.size()) {
    fail(ErrorKind::kMalformed, "mapper-ilp", "schedule header does not match phase count");
  }
  return s;
}

}  // namespace menage
