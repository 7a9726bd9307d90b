#pragma once

// The compile -> simulate -> verify -> report flow behind the CLI, plus the
// artifact directory format:
//
//   <out>/compile.json              compile manifest
//   <out>/layer<l>/quantized.json   scale, LIF parameters, degenerate flag
//   <out>/layer<l>/qweights.bin     int8 weights, row-major
//   <out>/layer<l>/instance.txt     placement instance dump
//   <out>/layer<l>/schedule.txt     phase schedule dump
//   <out>/layer<l>/image/           memory image set (hex + layout.json)
//   <out>/sim/                      spikes, trace, report CSVs (simulate/report)
//   <out>/index.json                every file with its size and FNV-1a hash

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "menage/analog.hpp"
#include "menage/core_sim.hpp"
#include "menage/error.hpp"
#include "menage/mapper.hpp"
#include "menage/mem_image.hpp"
#include "menage/metrics.hpp"
#include "menage/reference.hpp"
#include "menage/snn_model.hpp"

namespace menage {

namespace fs = std::filesystem;

struct PipelineConfig {
  fs::path manifest;
  fs::path stream;
  fs::path out;

  std::size_t cores = 0;  // 0 accepts the manifest's layer count
  std::size_t engines = 10;
  std::size_t capacitors = 16;
  std::size_t fifo_depth = 0;
  MemoryConfig memory;
  std::optional<std::size_t> fanout;
  C2CLadder ladder;
  double clock_hz = 103.2e6;
  EnergyModel energy;

  double prune_ratio = 0.0;
  Solver solver = Solver::kExact;
  ExactSolverLimits limits;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  bool clock_trace = true;

  void validate() const {
    if (engines < 1 || capacitors < 1) {
      fail(ErrorKind::kRange, "cli", "engines and capacitors must be >= 1");
    }
    if (!(prune_ratio >= 0.0 && prune_ratio <= 1.0)) {
      fail(ErrorKind::kRange, "cli", "prune ratio must lie in [0, 1]");
    }
    if (jobs < 1) fail(ErrorKind::kRange, "cli", "--jobs must be >= 1");
    ladder.validate();
    energy.validate();
  }
};

inline Solver parse_solver(const std::string& name) {
  if (name == "exact") return Solver::kExact;
  if (name == "greedy") return Solver::kGreedy;
  fail(ErrorKind::kParse, "cli", "unknown solver '" + name + "' (expected exact or greedy)");
}

inline const char* solver_name(Solver s) { return s == Solver::kExact ? "exact" : "greedy"; }

// Reads a JSON config file. Relative paths are resolved against the file's
// directory.
inline PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cli", "cannot open config " + path.string());
  PipelineConfig cfg;
  try {
    const auto doc = nlohmann::json::parse(in);
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    if (doc.contains("manifest")) cfg.manifest = resolve(doc["manifest"].get<std::string>());
    if (doc.contains("stream")) cfg.stream = resolve(doc["stream"].get<std::string>());
    if (doc.contains("out")) cfg.out = resolve(doc["out"].get<std::string>());
    if (doc.contains("hardware")) {
      const auto& hw = doc["hardware"];
      cfg.cores = hw.value("cores", cfg.cores);
      cfg.engines = hw.value("engines", cfg.engines);
      cfg.capacitors = hw.value("capacitors", cfg.capacitors);
      cfg.fifo_depth = hw.value("fifo_depth", cfg.fifo_depth);
      if (hw.contains("e2a_depth")) cfg.memory.e2a_depth = hw["e2a_depth"].get<std::size_t>();
      if (hw.contains("sn_depth")) cfg.memory.sn_depth = hw["sn_depth"].get<std::size_t>();
      if (hw.contains("wmem_depth")) cfg.memory.wmem_depth = hw["wmem_depth"].get<std::size_t>();
      if (hw.contains("fanout")) cfg.fanout = hw["fanout"].get<std::size_t>();
      cfg.ladder.vref = hw.value("vref", cfg.ladder.vref);
      cfg.ladder.bits = hw.value("bits", cfg.ladder.bits);
      cfg.clock_hz = hw.value("clock_hz", cfg.clock_hz);
      cfg.energy.clock_hz = cfg.clock_hz;
    }
    if (doc.contains("energy")) {
      const auto& e = doc["energy"];
      cfg.energy.neuron_power_w = e.value("neuron_power_w", cfg.energy.neuron_power_w);
      cfg.energy.neuron_delay_s = e.value("neuron_delay_s", cfg.energy.neuron_delay_s);
      cfg.energy.sram_read_j = e.value("sram_read_j", cfg.energy.sram_read_j);
      cfg.energy.controller_j_per_clock =
          e.value("controller_j_per_clock", cfg.energy.controller_j_per_clock);
      cfg.energy.c2c_j_per_op = e.value("c2c_j_per_op", cfg.energy.c2c_j_per_op);
    }
    cfg.prune_ratio = doc.value("prune_ratio", cfg.prune_ratio);
    if (doc.contains("solver")) cfg.solver = parse_solver(doc["solver"].get<std::string>());
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.jobs = doc.value("jobs", cfg.jobs);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, "cli", path.string() + ": " + e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// File helpers

namespace detail {

inline void write_file(const fs::path& path, const std::string& bytes) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cli", "cannot write " + path.string());
  out << bytes;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cli", "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

inline fs::path layer_dir(const fs::path& out, std::size_t l) {
  return out / ("layer" + std::to_string(l));
}

}  // namespace detail

// Rewrites <dir>/index.json listing every other file, sorted by path.
inline void write_index(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir).generic_string();
    if (rel != "index.json") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& rel : files) {
    const auto bytes = detail::read_file(dir / rel);
    doc.push_back({{"path", rel}, {"bytes", bytes.size()}, {"fnv1a64", detail::hex64(detail::fnv1a(bytes))}});
  }
  detail::write_file(dir / "index.json", doc.dump(2) + "\n");
}

// Hash over every file (relative path + contents) in a directory tree.
inline std::string directory_digest(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), dir).generic_string());
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& rel : files) {
    acc += rel + '\0' + detail::hex64(detail::fnv1a(detail::read_file(dir / rel))) + '\n';
  }
  return detail::hex64(detail::fnv1a(acc));
}

// ---------------------------------------------------------------------------
// Compiled artifacts

struct CompiledLayer {
  QuantizedLayer layer;
  MappingInstance instance;
  PhaseSchedule schedule;
  MemImage image;
};

struct CompiledModel {
  std::size_t input_size = 0;
  std::size_t timesteps = 0;
  C2CLadder ladder;
  std::vector<CompiledLayer> layers;
};

inline CompiledLayer compile_layer(const LayerSpec& spec, const PipelineConfig& cfg) {
  CompiledLayer out;
  out.layer = quantize_symmetric(prune_l1(spec, cfg.prune_ratio));
  out.instance = build_instance(out.layer, {cfg.engines, cfg.capacitors, cfg.fanout});
  out.schedule = schedule_phases(out.instance, cfg.solver, cfg.limits);
  out.image = layout_from_schedule(out.schedule, out.layer, cfg.engines, cfg.capacitors, cfg.memory);
  return out;
}

inline CompiledModel compile_model(const ModelManifest& manifest, const PipelineConfig& cfg) {
  cfg.validate();
  if (cfg.cores != 0 && cfg.cores != manifest.layers.size()) {
    fail(ErrorKind::kDimension, "cli",
         "configuration declares " + std::to_string(cfg.cores) + " cores but the model has " +
             std::to_string(manifest.layers.size()) + " layers");
  }
  CompiledModel model;
  model.input_size = manifest.input_size;
  model.timesteps = manifest.timesteps;
  model.ladder = cfg.ladder;
  model.layers.resize(manifest.layers.size());
  const std::size_t n = manifest.layers.size();
  for (std::size_t begin = 0; begin < n; begin += cfg.jobs) {
    const std::size_t end = std::min(n, begin + cfg.jobs);
    if (cfg.jobs == 1) {
      model.layers[begin] = compile_layer(manifest.layers[begin], cfg);
      continue;
    }
    std::vector<std::future<CompiledLayer>> batch;
    for (std::size_t l = begin; l < end; ++l) {
      batch.push_back(std::async(std::launch::async, compile_layer,
                                 std::cref(manifest.layers[l]), std::cref(cfg)));
    }
    for (std::size_t l = begin; l < end; ++l) model.layers[l] = batch[l - begin].get();
  }
  return model;
}

inline void write_compiled(const CompiledModel& model, const PipelineConfig& cfg) {
  const auto& out = cfg.out;
  if (out.empty()) fail(ErrorKind::kParse, "cli", "no output directory given (--out)");
  fs::create_directories(out);
  nlohmann::ordered_json doc;
  doc["format"] = "menage-artifacts/1";
  doc["seed"] = cfg.seed;
  doc["prune_ratio"] = cfg.prune_ratio;
  doc["solver"] = solver_name(cfg.solver);
  doc["input_size"] = model.input_size;
  doc["timesteps"] = model.timesteps;
  doc["hardware"] = {{"cores", model.layers.size()},
                     {"engines", cfg.engines},
                     {"capacitors", cfg.capacitors},
                     {"fanout", cfg.fanout ? nlohmann::ordered_json(*cfg.fanout) : nlohmann::ordered_json(nullptr)},
                     {"vref", model.ladder.vref},
                     {"bits", model.ladder.bits},
                     {"clock_hz", cfg.clock_hz}};
  doc["layers"] = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& c = model.layers[l];
    const auto dir = detail::layer_dir(out, l);
    nlohmann::ordered_json q = {{"rows", c.layer.rows()},
                                {"cols", c.layer.cols()},
                                {"scale", c.layer.scale},
                                {"degenerate", c.layer.degenerate},
                                {"vth", c.layer.lif.vth},
                                {"vreset", c.layer.lif.vreset},
                                {"leak_lambda", c.layer.lif.leak_lambda}};
    detail::write_file(dir / "quantized.json", q.dump(2) + "\n");
    const auto& qw = c.layer.qweights.data();
    detail::write_file(dir / "qweights.bin",
                       std::string(reinterpret_cast<const char*>(qw.data()), qw.size()));
    detail::write_file(dir / "instance.txt", format_instance(c.instance));
    detail::write_file(dir / "schedule.txt", format_schedule(c.schedule));
    write_image(c.image, dir / "image");
    doc["layers"].push_back({{"index", l},
                             {"rows", c.layer.rows()},
                             {"cols", c.layer.cols()},
                             {"phases", c.schedule.phases.size()},
                             {"sn_populated", c.image.layout.sn_populated},
                             {"degenerate", c.layer.degenerate}});
  }
  detail::write_file(out / "compile.json", doc.dump(2) + "\n");
  write_index(out);
}

inline CompiledModel read_compiled(const fs::path& out) {
  CompiledModel model;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(detail::read_file(out / "compile.json"));
    model.input_size = doc.at("input_size").get<std::size_t>();
    model.timesteps = doc.at("timesteps").get<std::size_t>();
    model.ladder.vref = doc.at("hardware").at("vref").get<double>();
    model.ladder.bits = doc.at("hardware").at("bits").get<int>();
    const auto count = doc.at("layers").size();
    for (std::size_t l = 0; l < count; ++l) {
      const auto dir = detail::layer_dir(out, l);
      CompiledLayer c;
      const auto q = nlohmann::json::parse(detail::read_file(dir / "quantized.json"));
      const auto rows = q.at("rows").get<std::size_t>();
      const auto cols = q.at("cols").get<std::size_t>();
      c.layer.scale = q.at("scale").get<double>();
      c.layer.degenerate = q.at("degenerate").get<bool>();
      c.layer.lif = {q.at("vth").get<double>(), q.at("vreset").get<double>(),
                     q.at("leak_lambda").get<double>()};
      const auto bytes = detail::read_file(dir / "qweights.bin");
      if (bytes.size() != rows * cols) {
        fail(ErrorKind::kDimension, "cli", (dir / "qweights.bin").string() + " has wrong size");
      }
      std::vector<std::int8_t> w(bytes.size());
      std::transform(bytes.begin(), bytes.end(), w.begin(),
                     [](char b) { return static_cast<std::int8_t>(b); });
      c.layer.qweights = Matrix<std::int8_t>(rows, cols, std::move(w));
      c.layer.keep = Matrix<std::uint8_t>(rows, cols, 1);
      c.schedule = parse_schedule(detail::read_file(dir / "schedule.txt"));
      c.image = read_image(dir / "image");
      model.layers.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, "cli", (out / "compile.json").string() + ": " + e.what());
  }
  return model;
}

inline std::vector<CoreProgram> core_programs(const CompiledModel& model) {
  std::vector<CoreProgram> programs;
  for (const auto& c : model.layers) {
    programs.push_back({c.image, c.schedule, c.layer.lif, c.layer.rows(), c.layer.cols()});
  }
  return programs;
}

inline std::vector<std::size_t> populated_depths(const CompiledModel& model) {
  std::vector<std::size_t> d;
  for (const auto& c : model.layers) d.push_back(c.image.layout.sn_populated);
  return d;
}

inline std::vector<QuantizedLayer> quantized_layers(const CompiledModel& model) {
  std::vector<QuantizedLayer> layers;
  for (const auto& c : model.layers) layers.push_back(c.layer);
  return layers;
}

// ---------------------------------------------------------------------------
// Commands

inline CompiledModel cmd_compile(const PipelineConfig& cfg) {
  if (cfg.manifest.empty()) fail(ErrorKind::kParse, "cli", "no manifest given (--manifest)");
  const auto manifest = load_manifest(cfg.manifest);
  auto model = compile_model(manifest, cfg);
  write_compiled(model, cfg);
  return model;
}

inline SpikeGrid resolve_stream(const PipelineConfig& cfg, const CompiledModel& model) {
  fs::path path = cfg.stream;
  if (path.empty() && !cfg.manifest.empty()) {
    const auto manifest = load_manifest(cfg.manifest);
    if (!manifest.stream_path.empty()) path = cfg.manifest.parent_path() / manifest.stream_path;
  }
  if (path.empty()) fail(ErrorKind::kParse, "cli", "no spike stream given (--stream)");
  auto stream = load_spike_stream(path);
  if (stream.cols() != model.input_size || stream.rows() != model.timesteps) {
    fail(ErrorKind::kDimension, "cli",
         "spike stream is " + std::to_string(stream.rows()) + "x" + std::to_string(stream.cols()) +
             ", model expects " + std::to_string(model.timesteps) + "x" +
             std::to_string(model.input_size));
  }
  return stream;
}

inline SimConfig sim_config(const PipelineConfig& cfg, const CompiledModel& model) {
  SimConfig sim;
  sim.clock_hz = cfg.clock_hz;
  sim.fifo_depth = cfg.fifo_depth;
  sim.ladder = model.ladder;
  sim.record_clocks = cfg.clock_trace;
  return sim;
}

struct SimulateOutcome {
  ChainResult chain;
  RunReport report;
};

inline void write_report_files(const fs::path& sim_dir, const RunReport& report) {
  detail::write_file(sim_dir / "report.csv", format_report_csv(report));
  detail::write_file(sim_dir / "utilization.csv", format_utilization_csv(report.util_series));
}

inline SimulateOutcome cmd_simulate(const PipelineConfig& cfg) {
  cfg.validate();
  const auto model = read_compiled(cfg.out);
  const auto stream = resolve_stream(cfg, model);
  SimulateOutcome outcome;
  outcome.chain = run_chain(core_programs(model), stream, sim_config(cfg, model));
  auto em = cfg.energy;
  em.clock_hz = cfg.clock_hz;
  outcome.report = build_report(outcome.chain.trace, em, populated_depths(model));
  const auto sim_dir = cfg.out / "sim";
  detail::write_file(sim_dir / "output_spikes.txt", format_spike_text(outcome.chain.output));
  detail::write_file(sim_dir / "trace.jsonl", export_trace(outcome.chain.trace));
  write_report_files(sim_dir, outcome.report);
  write_index(cfg.out);
  return outcome;
}

struct Divergence {
  std::size_t timestep = 0;
  std::size_t neuron = 0;
  int simulated = 0;
  int reference = 0;
};

struct VerifyOutcome {
  bool pass = false;
  std::optional<Divergence> first;
  std::size_t mismatches = 0;
  std::string summary;
};

inline VerifyOutcome compare_grids(const SpikeGrid& simulated, const SpikeGrid& reference) {
  VerifyOutcome v;
  if (simulated.rows() != reference.rows() || simulated.cols() != reference.cols()) {
    v.summary = "FAIL: output grid shapes differ";
    return v;
  }
  for (std::size_t t = 0; t < simulated.rows(); ++t) {
    for (std::size_t i = 0; i < simulated.cols(); ++i) {
      if (simulated(t, i) != reference(t, i)) {
        if (!v.first) v.first = Divergence{t, i, simulated(t, i), reference(t, i)};
        ++v.mismatches;
      }
    }
  }
  v.pass = v.mismatches == 0;
  if (v.pass) {
    v.summary = "PASS: " + std::to_string(simulated.rows()) + "x" +
                std::to_string(simulated.cols()) + " output spike grid matches the reference";
  } else {
    v.summary = "FAIL: " + std::to_string(v.mismatches) +
                " differing spikes; first divergence at timestep " +
                std::to_string(v.first->timestep) + ", neuron " + std::to_string(v.first->neuron) +
                " (simulated " + std::to_string(v.first->simulated) + ", reference " +
                std::to_string(v.first->reference) + ")";
  }
  return v;
}

inline VerifyOutcome verify_model(const CompiledModel& model, const SpikeGrid& stream,
                                  const PipelineConfig& cfg) {
  auto sim = sim_config(cfg, model);
  sim.record_clocks = false;
  const auto chain = run_chain(core_programs(model), stream, sim);
  const auto ref = reference_trajectory(quantized_layers(model), stream, model.ladder);
  return compare_grids(chain.output, ref.output);
}

inline VerifyOutcome cmd_verify(const PipelineConfig& cfg) {
  cfg.validate();
  const auto model = read_compiled(cfg.out);
  return verify_model(model, resolve_stream(cfg, model), cfg);
}

// Recomputes the report CSVs from a stored trace, using the configured
// energy model.
inline RunReport cmd_report(const PipelineConfig& cfg) {
  cfg.validate();
  const auto model = read_compiled(cfg.out);
  const auto trace = import_trace(detail::read_file(cfg.out / "sim" / "trace.jsonl"));
  auto em = cfg.energy;
  em.clock_hz = cfg.clock_hz;
  const auto report = build_report(trace, em, populated_depths(model));
  write_report_files(cfg.out / "sim", report);
  write_index(cfg.out);
  return report;
}

struct SynthSpec {
  std::size_t input_size = 16;
  std::vector<std::size_t> widths{8, 4};
  std::size_t timesteps = 10;
  double density = 0.2;
  LIFParams lif{1.0, 0.0, 0.9};
  std::uint64_t seed = 0;
};

// Writes manifest.json, layer<l>.bin, and stream.txt into `dir`.
inline fs::path cmd_gen_synth(const SynthSpec& spec, const fs::path& dir) {
  if (spec.widths.empty()) fail(ErrorKind::kDimension, "cli", "synthetic model needs at least one layer");
  if (!(spec.density >= 0.0 && spec.density <= 1.0)) {
    fail(ErrorKind::kRange, "cli", "spike density must lie in [0, 1]");
  }
  spec.lif.validate();
  fs::create_directories(dir);
  auto manifest = make_synthetic_manifest(spec.input_size, spec.widths, spec.timesteps, spec.lif, spec.seed);
  manifest.stream_path = "stream.txt";
  const auto stream = make_random_stream(spec.timesteps, spec.input_size, spec.density,
                                         spec.seed ^ 0x9e3779b97f4a7c15ULL);
  detail::write_file(dir / "stream.txt", format_spike_text(stream));
  save_manifest(manifest, dir / "manifest.json");
  return dir / "manifest.json";
}

}  // namespace menage
