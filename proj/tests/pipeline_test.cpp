#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "menage/menage.hpp"
#include "test_support.hpp"

using namespace menage;
namespace fs = std::filesystem;

namespace {

const fs::path kSamples = MENAGE_SAMPLES_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult cli(const std::string& args, const fs::path& workdir) {
  const auto log = workdir / "cli.log";
  const std::string cmd = std::string(MENAGE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

PipelineConfig sample_config(const fs::path& out) {
  auto cfg = load_config(kSamples / "tiny" / "config.json");
  cfg.out = out;
  return cfg;
}

// One strong synapse decides whether layer 1 ever fires.
fs::path write_decisive_model(const fs::path& dir) {
  nlohmann::json doc = {{"input_size", 3}, {"timesteps", 6}, {"stream", "stream.txt"}};
  doc["layers"] = {
      {{"rows", 2}, {"cols", 3}, {"vth", 0.4}, {"vreset", 0.0}, {"leak_lambda", 0.5},
       {"weights", {0.9, 0.9, 0.9, 0.9, 0.9, 0.9}}},
      {{"rows", 1}, {"cols", 2}, {"vth", 0.4}, {"vreset", 0.0}, {"leak_lambda", 0.5},
       {"weights", {1.0, 0.1}}}};
  spit(dir / "manifest.json", doc.dump(2));
  spit(dir / "stream.txt", "111\n111\n111\n111\n111\n111\n");
  return dir / "manifest.json";
}

}  // namespace

TEST(Config, LoadsSampleAndResolvesPaths) {
  const auto cfg = load_config(kSamples / "tiny" / "config.json");
  EXPECT_EQ(cfg.manifest, kSamples / "tiny" / "manifest.json");
  EXPECT_EQ(cfg.engines, 2u);
  EXPECT_EQ(cfg.cores, 2u);
  EXPECT_EQ(cfg.prune_ratio, 0.25);
  EXPECT_EQ(cfg.solver, Solver::kExact);
}

TEST(Config, BadSolverRejected) {
  const auto dir = menage::testing::scratch_dir();
  spit(dir / "c.json", R"({"solver": "simplex"})");
  EXPECT_THROW(load_config(dir / "c.json"), Error);
}

TEST(Compile, WritesArtifactTree) {
  const auto dir = menage::testing::scratch_dir();
  const auto model = cmd_compile(sample_config(dir));
  ASSERT_EQ(model.layers.size(), 2u);
  for (const char* f : {"compile.json", "index.json", "layer0/quantized.json", "layer0/qweights.bin",
                        "layer0/instance.txt", "layer0/schedule.txt", "layer1/image/sn.hex",
                        "layer1/image/layout.json", "layer1/image/wmem_1.hex"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto back = read_compiled(dir);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(back.layers[l].layer.qweights, model.layers[l].layer.qweights);
    EXPECT_EQ(back.layers[l].schedule, model.layers[l].schedule);
    EXPECT_EQ(back.layers[l].image, model.layers[l].image);
    EXPECT_EQ(resolve_connections(reconstruct_connectivity(back.layers[l].image),
                                  back.layers[l].schedule),
              quantized_connectivity(model.layers[l].layer));
  }
  const auto index = nlohmann::json::parse(slurp(dir / "index.json"));
  EXPECT_GE(index.size(), 10u);
}

TEST(Compile, CoreCountMustMatchLayers) {
  const auto dir = menage::testing::scratch_dir();
  auto cfg = sample_config(dir);
  cfg.cores = 3;
  try {
    cmd_compile(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
}

TEST(Compile, FullPruneGivesEmptyImages) {
  const auto dir = menage::testing::scratch_dir();
  auto cfg = sample_config(dir);
  cfg.prune_ratio = 1.0;
  const auto model = cmd_compile(cfg);
  for (const auto& c : model.layers) {
    EXPECT_TRUE(c.layer.degenerate);
    EXPECT_EQ(c.image.layout.sn_populated, 0u);
  }
  const auto sim = cmd_simulate(cfg);
  EXPECT_EQ(sim.report.total_fires, 0u);
  EXPECT_TRUE(cmd_verify(cfg).pass);
}

TEST(Compile, ParallelJobsGiveSameArtifacts) {
  const auto a = menage::testing::scratch_dir("_a");
  const auto b = menage::testing::scratch_dir("_b");
  const auto synth = menage::testing::scratch_dir("_synth");
  cmd_gen_synth({20, {12, 9, 7, 5}, 6, 0.3, {0.5, 0.0, 0.9}, 4}, synth);
  PipelineConfig cfg;
  cfg.manifest = synth / "manifest.json";
  cfg.engines = 3;
  cfg.capacitors = 2;
  cfg.out = a;
  cmd_compile(cfg);
  cfg.out = b;
  cfg.jobs = 3;
  cmd_compile(cfg);
  EXPECT_EQ(directory_digest(a), directory_digest(b));
}

TEST(Simulate, EmitsArtifactsAndMatchesReference) {
  const auto dir = menage::testing::scratch_dir();
  const auto cfg = sample_config(dir);
  cmd_compile(cfg);
  const auto sim = cmd_simulate(cfg);
  for (const char* f : {"sim/output_spikes.txt", "sim/trace.jsonl", "sim/report.csv",
                        "sim/utilization.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_EQ(parse_spike_text(slurp(dir / "sim/output_spikes.txt")), sim.chain.output);
  const auto verdict = cmd_verify(cfg);
  EXPECT_TRUE(verdict.pass) << verdict.summary;
  EXPECT_GT(sim.report.total_clocks, 0u);
}

TEST(Simulate, ZeroStream) {
  const auto dir = menage::testing::scratch_dir();
  auto cfg = sample_config(dir);
  spit(dir / "zeros.txt", "0000\n0000\n0000\n0000\n0000\n0000\n0000\n0000\n");
  cfg.stream = dir / "zeros.txt";
  cmd_compile(cfg);
  const auto sim = cmd_simulate(cfg);
  EXPECT_EQ(sim.report.total_fires, 0u);
  EXPECT_EQ(sim.chain.output, SpikeGrid(8, 2, 0));
  EXPECT_TRUE(cmd_verify(cfg).pass);
}

TEST(Simulate, StreamShapeChecked) {
  const auto dir = menage::testing::scratch_dir();
  auto cfg = sample_config(dir);
  spit(dir / "short.txt", "0000\n");
  cfg.stream = dir / "short.txt";
  cmd_compile(cfg);
  try {
    cmd_simulate(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
}

TEST(Simulate, RepeatRunsAreByteIdentical) {
  const auto a = menage::testing::scratch_dir("_a");
  const auto b = menage::testing::scratch_dir("_b");
  for (const auto& dir : {a, b}) {
    const auto cfg = sample_config(dir);
    cmd_compile(cfg);
    cmd_simulate(cfg);
  }
  EXPECT_EQ(slurp(a / "sim/trace.jsonl"), slurp(b / "sim/trace.jsonl"));
  EXPECT_EQ(directory_digest(a), directory_digest(b));
}

TEST(Report, RebuildsFromTrace) {
  const auto dir = menage::testing::scratch_dir();
  auto cfg = sample_config(dir);
  cmd_compile(cfg);
  const auto sim = cmd_simulate(cfg);
  const auto first = slurp(dir / "sim/report.csv");
  EXPECT_EQ(cmd_report(cfg), sim.report);
  EXPECT_EQ(slurp(dir / "sim/report.csv"), first);
  cfg.energy.controller_j_per_clock = 1e-12;
  const auto r = cmd_report(cfg);
  EXPECT_DOUBLE_EQ(r.energy.controller_j, 2.0 * static_cast<double>(sim.report.total_clocks) * 1e-12);
}

TEST(Verify, CorruptedWeightWordFails) {
  const auto dir = menage::testing::scratch_dir();
  PipelineConfig cfg;
  cfg.manifest = write_decisive_model(dir);
  cfg.out = dir / "out";
  cmd_compile(cfg);
  EXPECT_TRUE(cmd_verify(cfg).pass);

  const auto wmem = cfg.out / "layer1" / "image" / "wmem_0.hex";
  auto text = slurp(wmem);
  const auto at = text.find("\n7f\n");
  ASSERT_NE(at, std::string::npos) << text;
  text.replace(at + 1, 2, "00");
  spit(wmem, text);

  const auto verdict = cmd_verify(cfg);
  EXPECT_FALSE(verdict.pass);
  ASSERT_TRUE(verdict.first.has_value());
  EXPECT_EQ(verdict.first->timestep, 0u);
  EXPECT_EQ(verdict.first->neuron, 0u);
  EXPECT_NE(verdict.summary.find("first divergence at timestep 0, neuron 0"), std::string::npos);
}

TEST(Verify, GridComparison) {
  SpikeGrid a(2, 2, 0), b(2, 2, 0);
  EXPECT_TRUE(compare_grids(a, b).pass);
  b(1, 0) = 1;
  const auto v = compare_grids(a, b);
  EXPECT_FALSE(v.pass);
  EXPECT_EQ(v.mismatches, 1u);
  EXPECT_EQ(v.first->timestep, 1u);
  EXPECT_FALSE(compare_grids(a, SpikeGrid(2, 3, 0)).pass);
}

TEST(Cli, FullFlowWithExitCodes) {
  const auto dir = menage::testing::scratch_dir();
  const auto synth = dir / "synth";
  const auto out = dir / "out";
  auto r = cli("gen-synth --out " + synth.string() +
                   " --input-size 24 --widths 12,6 --timesteps 9 --density 0.3 --seed 5",
               dir);
  ASSERT_EQ(r.code, 0) << r.out;
  r = cli("compile --manifest " + (synth / "manifest.json").string() + " --out " + out.string() +
              " --engines 3 --capacitors 3 --prune-ratio 0.3 --solver greedy --jobs 2",
          dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("compiled 2 layers"), std::string::npos) << r.out;
  const auto compiled = nlohmann::json::parse(slurp(out / "compile.json"));
  EXPECT_EQ(compiled["solver"], "greedy");
  EXPECT_EQ(compiled["hardware"]["engines"], 3);

  r = cli("simulate --manifest " + (synth / "manifest.json").string() + " --out " + out.string(), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(out / "sim" / "trace.jsonl"));
  r = cli("verify --manifest " + (synth / "manifest.json").string() + " --out " + out.string(), dir);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  r = cli("report --out " + out.string(), dir);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("total_ops"), std::string::npos);
}

TEST(Cli, ConfigFileWithFlagOverride) {
  const auto dir = menage::testing::scratch_dir();
  const auto config = (kSamples / "tiny" / "config.json").string();
  auto r = cli("compile --config " + config + " --out " + dir.string() + " --capacitors 1", dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "compile.json"))["hardware"]["capacitors"], 1);
  r = cli("verify --config " + config + " --out " + dir.string(), dir);
  EXPECT_EQ(r.code, 0) << r.out;
}

TEST(Cli, VerifyFailureExitsOne) {
  const auto dir = menage::testing::scratch_dir();
  const auto manifest = write_decisive_model(dir);
  const auto out = dir / "out";
  ASSERT_EQ(cli("compile --manifest " + manifest.string() + " --out " + out.string(), dir).code, 0);
  const auto wmem = out / "layer1" / "image" / "wmem_0.hex";
  auto text = slurp(wmem);
  text.replace(text.find("\n7f\n") + 1, 2, "00");
  spit(wmem, text);
  const auto r = cli("verify --manifest " + manifest.string() + " --out " + out.string(), dir);
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, InputErrorsExitTwo) {
  const auto dir = menage::testing::scratch_dir();
  EXPECT_EQ(cli("compile --manifest " + (dir / "missing.json").string() + " --out " +
                    (dir / "o").string(),
                dir)
                .code,
            2);
  spit(dir / "bad.json", "{ not json");
  EXPECT_EQ(cli("compile --manifest " + (dir / "bad.json").string() + " --out " + (dir / "o").string(),
                dir)
                .code,
            2);
  EXPECT_EQ(cli("compile --manifest x --solver simplex", dir).code, 2);
  EXPECT_EQ(cli("bogus", dir).code, 2);
}

TEST(Cli, SameSeedSameArtifacts) {
  const auto dir = menage::testing::scratch_dir();
  for (const char* tag : {"a", "b"}) {
    const auto synth = dir / (std::string("synth_") + tag);
    const auto out = dir / (std::string("out_") + tag);
    ASSERT_EQ(cli("gen-synth --out " + synth.string() + " --widths 10,5 --seed 17", dir).code, 0);
    ASSERT_EQ(cli("compile --manifest " + (synth / "manifest.json").string() + " --out " +
                      out.string() + " --seed 17",
                  dir)
                  .code,
              0);
    ASSERT_EQ(cli("simulate --manifest " + (synth / "manifest.json").string() + " --out " +
                      out.string() + " --seed 17",
                  dir)
                  .code,
              0);
  }
  EXPECT_EQ(directory_digest(dir / "synth_a"), directory_digest(dir / "synth_b"));
  EXPECT_EQ(directory_digest(dir / "out_a"), directory_digest(dir / "out_b"));
}
