#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "menage/error.hpp"

namespace menage {

enum class ClockAction : std::uint8_t { kPoll, kFetch, kDispatchRow };

inline const char* to_string(ClockAction a) {
  switch (a) {
    case ClockAction::kPoll: return "poll";
    case ClockAction::kFetch: return "fetch";
    case ClockAction::kDispatchRow: return "dispatch_row";
  }
  return "?";
}

struct ClockRecord {
  std::uint64_t clock = 0;
  std::uint32_t core = 0;
  ClockAction action = ClockAction::kPoll;
  std::uint32_t arg = 0;  // source index for fetch, S&N address for dispatch_row

  bool operator==(const ClockRecord&) const = default;
};

struct TimestepRecord {
  std::uint32_t core = 0;
  std::uint32_t timestep = 0;
  std::uint64_t clocks = 0;          // clocks this core spent in the timestep
  std::uint64_t polls = 0;
  std::uint64_t fetches = 0;         // events whose phase row count was > 0
  std::uint64_t events_in = 0;
  std::uint64_t sn_rows_touched = 0;
  std::uint64_t selected_slots = 0;  // synapse multiplies
  std::uint64_t occupied = 0;        // neurons updated at the barrier
  std::uint64_t fires = 0;
  std::vector<std::uint64_t> engine_accumulations;

  bool operator==(const TimestepRecord&) const = default;
};

struct TraceLog {
  double clock_hz = 103.2e6;
  std::uint32_t cores = 0;
  std::uint64_t total_clocks = 0;  // global clock count (all cores step together)
  std::vector<ClockRecord> clocks;
  std::vector<TimestepRecord> timesteps;

  bool operator==(const TraceLog&) const = default;
};

// Line-delimited JSON: one meta record, then timestep records, then clock records.
inline std::string export_trace(const TraceLog& trace) {
  std::string out;
  nlohmann::ordered_json meta = {{"type", "meta"},
                                 {"clock_hz", trace.clock_hz},
                                 {"cores", trace.cores},
                                 {"total_clocks", trace.total_clocks}};
  out += meta.dump() + "\n";
  for (const auto& r : trace.timesteps) {
    nlohmann::ordered_json j = {{"type", "timestep"},
                                {"core", r.core},
                                {"t", r.timestep},
                                {"clocks", r.clocks},
                                {"polls", r.polls},
                                {"fetches", r.fetches},
                                {"events_in", r.events_in},
                                {"sn_rows_touched", r.sn_rows_touched},
                                {"selected_slots", r.selected_slots},
                                {"occupied", r.occupied},
                                {"fires", r.fires},
                                {"engine_acc", r.engine_accumulations}};
    out += j.dump() + "\n";
  }
  for (const auto& c : trace.clocks) {
    out += "{\"type\":\"clock\",\"clk\":" + std::to_string(c.clock) +
           ",\"core\":" + std::to_string(c.core) + ",\"action\":\"" + to_string(c.action) + "\"";
    if (c.action != ClockAction::kPoll) out += ",\"arg\":" + std::to_string(c.arg);
    out += "}\n";
  }
  return out;
}

inline TraceLog import_trace(const std::string& text) {
  TraceLog trace;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "meta") {
        trace.clock_hz = j.at("clock_hz").get<double>();
        trace.cores = j.at("cores").get<std::uint32_t>();
        trace.total_clocks = j.at("total_clocks").get<std::uint64_t>();
        have_meta = true;
      } else if (type == "timestep") {
        TimestepRecord r;
        r.core = j.at("core").get<std::uint32_t>();
        r.timestep = j.at("t").get<std::uint32_t>();
        r.clocks = j.at("clocks").get<std::uint64_t>();
        r.polls = j.at("polls").get<std::uint64_t>();
        r.fetches = j.at("fetches").get<std::uint64_t>();
        r.events_in = j.at("events_in").get<std::uint64_t>();
        r.sn_rows_touched = j.at("sn_rows_touched").get<std::uint64_t>();
        r.selected_slots = j.at("selected_slots").get<std::uint64_t>();
        r.occupied = j.at("occupied").get<std::uint64_t>();
        r.fires = j.at("fires").get<std::uint64_t>();
        r.engine_accumulations = j.at("engine_acc").get<std::vector<std::uint64_t>>();
        trace.timesteps.push_back(std::move(r));
      } else if (type == "clock") {
        ClockRecord c;
        c.clock = j.at("clk").get<std::uint64_t>();
        c.core = j.at("core").get<std::uint32_t>();
        const auto action = j.at("action").get<std::string>();
        if (action == "poll") {
          c.action = ClockAction::kPoll;
        } else if (action == "fetch") {
          c.action = ClockAction::kFetch;
        } else if (action == "dispatch_row") {
          c.action = ClockAction::kDispatchRow;
        } else {
          fail(ErrorKind::kMalformed, "core-sim",
               "trace line " + std::to_string(line_no) + ": unknown action " + action);
        }
        c.arg = j.value("arg", 0U);
        trace.clocks.push_back(c);
      } else {
        fail(ErrorKind::kMalformed, "core-sim",
             "trace line " + std::to_string(line_no) + ": unknown record type " + type);
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kMalformed, "core-sim",
           "trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_meta) fail(ErrorKind::kMalformed, "core-sim", "trace has no meta record");
  return trace;
}

}  // namespace menage
