#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "menage/mapper.hpp"
#include "test_support.hpp"

using namespace menage;
using menage::testing::make_qlayer;
using menage::testing::random_instance;

namespace {

MappingInstance plain(std::size_t n1, std::size_t m, std::size_t n) {
  MappingInstance inst;
  inst.dest_count = n1;
  inst.source_count = 1;
  inst.engines = m;
  inst.capacitors = n;
  inst.connections.resize(1);
  for (std::uint32_t i = 0; i < n1; ++i) inst.connections[0].push_back(i);
  inst.fanout = {n1};
  return inst;
}

// N1=4, M=2, N=2, one source reaching everything with fan-out 2.
MappingInstance fanout_example() {
  auto inst = plain(4, 2, 2);
  inst.fanout = {2};
  return inst;
}

std::size_t count_kind(const std::vector<Violation>& v, Constraint c) {
  return static_cast<std::size_t>(
      std::count_if(v.begin(), v.end(), [&](const Violation& x) { return x.constraint == c; }));
}

}  // namespace

TEST(BuildInstance, DenseColumns) {
  const auto inst = build_instance(make_qlayer(3, 2, {1, 2, 3, 4, 5, 6}), {2, 2, {}});
  EXPECT_EQ(inst.connections[0], (std::vector<std::uint32_t>{0, 1, 2}));
  EXPECT_EQ(inst.connections[1], (std::vector<std::uint32_t>{0, 1, 2}));
  EXPECT_EQ(inst.fanout, (std::vector<std::size_t>{3, 3}));
}

TEST(BuildInstance, PrunedColumnIsEmpty) {
  const auto inst = build_instance(make_qlayer(2, 2, {0, 1, 0, 1}), {1, 1, 1});
  EXPECT_TRUE(inst.connections[0].empty());
  EXPECT_EQ(inst.connections[1].size(), 2u);
  EXPECT_EQ(inst.fanout, (std::vector<std::size_t>{1, 1}));
}

TEST(BuildInstance, ColumnSizesMatchNonzeros) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> w(-2, 2);
  for (int trial = 0; trial < 30; ++trial) {
    QuantizedLayer l = make_qlayer(8, 8, {});
    l.qweights = Matrix<std::int8_t>(8, 8, 0);
    for (auto& q : l.qweights.data()) q = static_cast<std::int8_t>(w(rng));
    const auto inst = build_instance(l, {2, 2, {}});
    for (std::size_t m = 0; m < 8; ++m) {
      std::size_t nz = 0;
      for (std::size_t i = 0; i < 8; ++i) nz += l.qweights(i, m) != 0;
      EXPECT_EQ(inst.connections[m].size(), nz);
    }
  }
}

TEST(SolveExact, CapacitySuffices) {
  const auto a = solve_exact(plain(2, 1, 2));
  EXPECT_EQ(a.unassigned, 0u);
  EXPECT_TRUE(validate(a, plain(2, 1, 2)).empty());
}

TEST(SolveExact, Pigeonhole) {
  const auto inst = plain(3, 1, 2);
  const auto a = solve_exact(inst);
  EXPECT_EQ(a.unassigned, 1u);
  EXPECT_EQ(brute_force_oracle(inst), 1u);
}

TEST(SolveExact, FanoutLimitsPlacement) {
  const auto inst = fanout_example();
  const auto a = solve_exact(inst);
  EXPECT_EQ(a.unassigned, 2u);
  EXPECT_EQ(brute_force_oracle(inst), 2u);
  EXPECT_TRUE(validate(a, inst).empty());
}

TEST(SolveExact, EmptyInstance) {
  MappingInstance inst;
  inst.source_count = 0;
  EXPECT_EQ(solve_exact(inst), Assignment{});
  EXPECT_EQ(solve_greedy(inst), Assignment{});
}

TEST(SolveExact, VariableCap) {
  const auto inst = plain(100, 10, 10);
  EXPECT_THROW(solve_exact(inst, {1000, 100}), Error);
}

TEST(SolveGreedy, CapacityOnlyCasePlacesAll) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = random_instance(rng, 12, 5, 4, 4, 16);
    for (std::size_t m = 0; m < inst.source_count; ++m) inst.fanout[m] = inst.dest_count;
    if (inst.slot_count() < inst.dest_count) continue;
    EXPECT_EQ(solve_exact(inst).unassigned, 0u);
    EXPECT_EQ(solve_greedy(inst).unassigned, 0u);
  }
}

TEST(SolveGreedy, FanoutExampleFeasible) {
  const auto inst = fanout_example();
  const auto g = solve_greedy(inst);
  EXPECT_TRUE(validate(g, inst).empty());
  EXPECT_GE(g.unassigned, 2u);
}

TEST(Oracle, AgreesWithExactOnSmallInstances) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = random_instance(rng, 8, 4, 2, 4, 8);
    EXPECT_EQ(solve_exact(inst).unassigned, brute_force_oracle(inst)) << format_instance(inst);
  }
}

TEST(Oracle, RejectsLargeInstances) {
  EXPECT_THROW(brute_force_oracle(plain(11, 1, 1)), Error);
  EXPECT_THROW(brute_force_oracle(plain(3, 3, 3)), Error);
}

TEST(Solvers, AlwaysFeasible) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 1200; ++trial) {
    const auto inst = random_instance(rng, 24, 6, 6, 6, 36);
    const auto e = solve_exact(inst);
    const auto g = solve_greedy(inst);
    EXPECT_TRUE(validate(e, inst).empty()) << format_instance(inst);
    EXPECT_TRUE(validate(g, inst).empty()) << format_instance(inst);
    EXPECT_GE(g.unassigned, e.unassigned);
  }
}

TEST(SolveExact, MoreHardwareNeverHurts) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = random_instance(rng, 16, 5, 4, 4, 16);
    const auto base = solve_exact(inst).unassigned;
    auto more_m = inst;
    ++more_m.engines;
    auto more_n = inst;
    ++more_n.capacitors;
    EXPECT_LE(solve_exact(more_m).unassigned, base);
    EXPECT_LE(solve_exact(more_n).unassigned, base);
  }
}

TEST(SolveExact, Deterministic) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(rng, 20, 6, 5, 5, 25);
    EXPECT_EQ(format_assignment(solve_exact(inst)), format_assignment(solve_exact(inst)));
    EXPECT_EQ(format_assignment(solve_greedy(inst)), format_assignment(solve_greedy(inst)));
  }
}

TEST(SolveExact, LargeUnconstrainedLayerIsFast) {
  // Accel2-sized first layer: the free-slot bound closes the search at once.
  const auto inst = plain(1000, 20, 32);
  const auto a = solve_exact(inst);
  EXPECT_EQ(a.unassigned, 1000u - 640u);
}

TEST(Phases, PigeonholeSplit) {
  const auto s = schedule_phases(plain(5, 2, 2));
  ASSERT_EQ(s.phases.size(), 2u);
  EXPECT_EQ(s.phases[0].placements.size(), 4u);
  EXPECT_EQ(s.phases[1].placements.size(), 1u);
  EXPECT_EQ(s.phases[1].unassigned, 0u);
}

TEST(Phases, SinglePhaseWhenItFits) {
  for (std::size_t n1 = 1; n1 <= 6; ++n1) {
    EXPECT_EQ(schedule_phases(plain(n1, 2, 3)).phases.size(), 1u);
  }
}

TEST(Phases, PartitionDestinations) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = random_instance(rng, 20, 5, 3, 3, 9);
    for (auto& f : inst.fanout) f = std::max<std::size_t>(f, 1);
    for (auto solver : {Solver::kExact, Solver::kGreedy}) {
      const auto s = schedule_phases(inst, solver);
      std::multiset<std::uint32_t> seen;
      for (const auto& phase : s.phases) {
        // Each phase on its own is a valid placement of the full instance.
        auto as_full = phase;
        as_full.unassigned = inst.dest_count - phase.placements.size();
        EXPECT_TRUE(validate(as_full, inst).empty());
        for (const auto& p : phase.placements) seen.insert(p.neuron);
      }
      ASSERT_EQ(seen.size(), inst.dest_count);
      std::uint32_t expect = 0;
      for (auto i : seen) EXPECT_EQ(i, expect++);
    }
  }
}

TEST(Phases, ZeroFanoutIsInfeasible) {
  auto inst = plain(3, 2, 2);
  inst.fanout = {0};
  try {
    schedule_phases(inst);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInfeasible);
    EXPECT_NE(std::string(e.what()).find("neuron 0"), std::string::npos);
  }
}

TEST(Validate, EngineOverfull) {
  const auto inst = plain(3, 2, 2);
  Assignment a;
  a.placements = {{0, 0, 0}, {1, 0, 1}, {2, 0, 1}};
  const auto v = validate(a, inst);
  ASSERT_EQ(count_kind(v, Constraint::kEngineCapacity), 1u);
  const auto it = std::find_if(v.begin(), v.end(), [](const Violation& x) {
    return x.constraint == Constraint::kEngineCapacity;
  });
  EXPECT_EQ(it->index, 0u);
  EXPECT_NE(it->message.find("engine 0"), std::string::npos);
}

TEST(Validate, DoubleAssignment) {
  const auto inst = plain(3, 2, 2);
  Assignment a;
  a.placements = {{0, 0, 0}, {2, 0, 1}, {2, 1, 0}};
  a.unassigned = 1;
  const auto v = validate(a, inst);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].constraint, Constraint::kUniqueAssignment);
  EXPECT_EQ(v[0].index, 2u);
}

TEST(Validate, FanoutAndSlotSharing) {
  auto inst = fanout_example();
  Assignment a;
  a.placements = {{0, 0, 0}, {1, 0, 0}, {2, 1, 0}};
  a.unassigned = 1;
  const auto v = validate(a, inst);
  EXPECT_EQ(count_kind(v, Constraint::kSlotExclusivity), 1u);
  EXPECT_EQ(count_kind(v, Constraint::kFanout), 1u);
}

TEST(Dump, GoldenSchedule) {
  const auto s = schedule_phases(fanout_example());
  const std::string golden =
      "schedule phases=2\n"
      "phase 0\n"
      "assignment placed=2 unassigned=2\n"
      "x 0 0 0\n"
      "x 1 0 1\n"
      "phase 1\n"
      "assignment placed=2 unassigned=0\n"
      "x 2 0 0\n"
      "x 3 0 1\n";
  EXPECT_EQ(format_schedule(s), golden);
  EXPECT_EQ(parse_schedule(golden), s);
  EXPECT_EQ(format_instance(fanout_example()),
            "instance N1=4 N2=1 M=2 N=2\nsource 0 fanout=2 : 0 1 2 3\n");
}

TEST(Dump, MalformedScheduleReportsLine) {
  try {
    parse_schedule("schedule phases=1\nphase 0\nbogus\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMalformed);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}
