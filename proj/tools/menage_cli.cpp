// menage: compile, simulate, verify and report on spiking networks mapped to
// the mixed-signal event-driven accelerator model.
//
// Exit codes: 0 success, 1 verification failure, 2 input error, 3 internal error.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "menage/menage.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::string manifest;
  std::string stream;
  std::string out;
  std::uint64_t seed = 0;
  double prune_ratio = 0.0;
  std::string solver = "exact";
  std::size_t jobs = 1;
  std::size_t cores = 0;
  std::size_t engines = 0;
  std::size_t capacitors = 0;
  std::size_t fanout = 0;
  std::size_t fifo_depth = 0;
  bool no_clock_trace = false;
};

struct CommonOptions {
  CLI::Option* seed = nullptr;
  CLI::Option* prune = nullptr;
  CLI::Option* solver = nullptr;
  CLI::Option* jobs = nullptr;
  CLI::Option* cores = nullptr;
  CLI::Option* engines = nullptr;
  CLI::Option* capacitors = nullptr;
  CLI::Option* fanout = nullptr;
  CLI::Option* fifo = nullptr;
};

CommonOptions add_common(CLI::App* cmd, CommonFlags& f) {
  CommonOptions o;
  cmd->add_option("--config", f.config, "JSON pipeline configuration")->check(CLI::ExistingFile);
  cmd->add_option("--manifest", f.manifest, "model manifest (overrides config)");
  cmd->add_option("--stream", f.stream, "input spike stream (overrides config)");
  cmd->add_option("--out", f.out, "artifact directory (overrides config)");
  o.seed = cmd->add_option("--seed", f.seed, "seed recorded with the artifacts")->default_val(0);
  o.prune = cmd->add_option("--prune-ratio", f.prune_ratio, "unstructured L1 prune ratio in [0,1]");
  o.solver = cmd->add_option("--solver", f.solver, "placement solver")
                 ->check(CLI::IsMember({"exact", "greedy"}));
  o.jobs = cmd->add_option("--jobs", f.jobs, "parallel per-layer compiles");
  o.cores = cmd->add_option("--cores", f.cores, "expected core count (must equal layer count)");
  o.engines = cmd->add_option("--engines", f.engines, "neuron engines per core (M)");
  o.capacitors = cmd->add_option("--capacitors", f.capacitors, "virtual neurons per engine (N)");
  o.fanout = cmd->add_option("--fanout", f.fanout, "per-source fan-out limit");
  o.fifo = cmd->add_option("--fifo-depth", f.fifo_depth, "event FIFO depth (0 = 2x source layer)");
  cmd->add_flag("--no-clock-trace", f.no_clock_trace, "omit per-clock records from the trace");
  return o;
}

menage::PipelineConfig resolve(const CommonFlags& f, const CommonOptions& o) {
  menage::PipelineConfig cfg = f.config.empty() ? menage::PipelineConfig{}
                                                : menage::load_config(f.config);
  if (!f.manifest.empty()) cfg.manifest = f.manifest;
  if (!f.stream.empty()) cfg.stream = f.stream;
  if (!f.out.empty()) cfg.out = f.out;
  if (o.seed->count() || f.config.empty()) cfg.seed = f.seed;
  if (o.prune->count()) cfg.prune_ratio = f.prune_ratio;
  if (o.solver->count()) cfg.solver = menage::parse_solver(f.solver);
  if (o.jobs->count()) cfg.jobs = f.jobs;
  if (o.cores->count()) cfg.cores = f.cores;
  if (o.engines->count()) cfg.engines = f.engines;
  if (o.capacitors->count()) cfg.capacitors = f.capacitors;
  if (o.fanout->count()) cfg.fanout = f.fanout;
  if (o.fifo->count()) cfg.fifo_depth = f.fifo_depth;
  if (f.no_clock_trace) cfg.clock_trace = false;
  return cfg;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t n = 0; n < v.size(); ++n) s += (n ? "/" : "") + std::to_string(v[n]);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compile and simulate spiking networks on the MENAGE accelerator model"};
  app.require_subcommand(1);

  CommonFlags compile_f, simulate_f, verify_f, report_f;
  auto* compile = app.add_subcommand("compile", "prune, quantize, place and emit memory images");
  auto compile_o = add_common(compile, compile_f);
  auto* simulate = app.add_subcommand("simulate", "run the event-driven core chain");
  auto simulate_o = add_common(simulate, simulate_f);
  auto* verify = app.add_subcommand("verify", "compare the core chain against the dense reference");
  auto verify_o = add_common(verify, verify_f);
  auto* report = app.add_subcommand("report", "recompute energy and utilization from a trace");
  auto report_o = add_common(report, report_f);

  menage::SynthSpec synth;
  std::string synth_out;
  auto* gen = app.add_subcommand("gen-synth", "write a synthetic model, weights and spike stream");
  gen->add_option("--out", synth_out, "output directory")->required();
  gen->add_option("--input-size", synth.input_size, "input neurons")->default_val(synth.input_size);
  gen->add_option("--widths", synth.widths, "layer widths, e.g. 200,100,40,10")
      ->delimiter(',')
      ->default_str("8,4");
  gen->add_option("--timesteps", synth.timesteps, "timesteps")->default_val(synth.timesteps);
  gen->add_option("--density", synth.density, "input spike probability per step")
      ->default_val(synth.density);
  gen->add_option("--vth", synth.lif.vth, "threshold voltage")->default_val(synth.lif.vth);
  gen->add_option("--vreset", synth.lif.vreset, "reset voltage")->default_val(synth.lif.vreset);
  gen->add_option("--leak", synth.lif.leak_lambda, "per-timestep retention factor")
      ->default_val(synth.lif.leak_lambda);
  gen->add_option("--seed", synth.seed, "RNG seed")->default_val(0);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*compile) {
      const auto cfg = resolve(compile_f, compile_o);
      const auto model = menage::cmd_compile(cfg);
      std::vector<std::size_t> widths, phases;
      for (const auto& c : model.layers) {
        widths.push_back(c.layer.rows());
        phases.push_back(c.schedule.phases.size());
      }
      std::cout << "compiled " << model.layers.size() << " layers (" << join(widths)
                << "), phases per layer " << join(phases) << " -> " << cfg.out.string() << "\n";
    } else if (*simulate) {
      const auto cfg = resolve(simulate_f, simulate_o);
      const auto outcome = menage::cmd_simulate(cfg);
      std::cout << "simulated " << outcome.chain.output.rows() << " timesteps in "
                << outcome.report.total_clocks << " clocks, " << outcome.report.total_fires
                << " fires, " << outcome.report.total_ops << " ops -> "
                << (cfg.out / "sim").string() << "\n";
    } else if (*verify) {
      const auto cfg = resolve(verify_f, verify_o);
      const auto outcome = menage::cmd_verify(cfg);
      std::cout << outcome.summary << "\n";
      return outcome.pass ? 0 : 1;
    } else if (*report) {
      const auto cfg = resolve(report_f, report_o);
      std::cout << menage::format_report_csv(menage::cmd_report(cfg));
    } else if (*gen) {
      const auto path = menage::cmd_gen_synth(synth, synth_out);
      std::cout << "wrote " << path.string() << "\n";
    }
  } catch (const menage::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return menage::is_input_error(e.kind()) ? 2 : 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: cli: i/o error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
