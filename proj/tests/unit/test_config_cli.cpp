#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "quads/cli.hpp"
#include "quads/config.hpp"
#include "quads/corpus.hpp"
#include "quads/error.hpp"
#include "quads/model_io.hpp"
#include "test_support.hpp"

using namespace quads;
namespace fs = std::filesystem;

namespace {

const char* kTinyIni = R"(
[corpus]
n_classes = 3
samples_per_class = 10
duration_s = 0.5
snr_db = 10

[mel]
n_mels = 20

[teacher]
conv = 3:10:2
ff = 12
epochs = 3

[student]
conv = 3:6:2
ff = 8
pretrain_epochs = 2

[schedule]
cycles = 1
distill_epochs = 2
quant_epochs = 1
final_quant_epochs = 1
lr_encoder = 0.003
lr_classifier = 0.003
batch_size = 8
)";

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "quads");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

// One prepared root shared by the pipeline tests.
struct Workspace {
  test::TempDir dir{"cli"};
  fs::path ini = dir.path / "tiny.ini";
  fs::path root = dir.path / "root";

  Workspace() {
    std::ofstream(ini) << kTinyIni;
    for (const char* sub : {"synth-data", "train-teacher"}) {
      const auto r = run_cli({"--config", ini.string(), "--run-dir", root.string(), sub});
      if (r.code != 0) throw std::runtime_error(std::string(sub) + ": " + r.err);
    }
  }
  std::vector<std::string> base() const { return {"--config", ini.string(), "--run-dir", root.string()}; }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

std::vector<std::string> with(std::vector<std::string> a, std::initializer_list<std::string> more) {
  a.insert(a.end(), more);
  return a;
}

}  // namespace

TEST(Config, RejectsUnknownKeysAndSections) {
  try {
    parse_config("[schedule]\nlearning_rate = 1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
  EXPECT_THROW(parse_config("[nonsense]\na = 1\n"), Error);
  EXPECT_THROW(parse_config("[schedule]\ncycles = many\n"), Error);
  EXPECT_THROW(parse_config("[schedule]\nbits = 17\n"), Error);
}

TEST(Config, IniRoundTrip) {
  auto cfg = parse_config(kTinyIni);
  set_config_value(cfg, "schedule.alpha", "0.25");
  set_config_value(cfg, "energy.per_mac", "4:0.5,32:2");
  const std::string ini = to_ini(cfg);
  EXPECT_EQ(to_ini(parse_config(ini)), ini);
  const auto back = parse_config(ini);
  EXPECT_EQ(back.schedule.alpha, 0.25);
  EXPECT_EQ(back.energy_table.at(32), 2.0);
  EXPECT_EQ(back.student.conv_layers, parse_conv_layers("3:6:2"));
  EXPECT_EQ(back.mel.n_mels, 20u);
  EXPECT_EQ(back.student.n_mels, 20u);
}

TEST(Config, ConvLayerSyntax) {
  const auto layers = parse_conv_layers("3:12:2,5:8:1");
  ASSERT_EQ(layers.size(), 2u);
  EXPECT_EQ(layers[1].kernel, 5u);
  EXPECT_EQ(format_conv_layers(layers), "3:12:2,5:8:1");
  EXPECT_THROW(parse_conv_layers("3:12"), Error);
  EXPECT_THROW(set_config_value(*std::make_unique<RunConfig>(), "schedule.nope", "1"), Error);
}

TEST(Config, ThirtyTwoBitsMeansNoCodebooks) {
  auto cfg = parse_config("[schedule]\nbits = 32\n");
  EXPECT_EQ(cfg.bits, 32);
  EXPECT_THROW(parse_strategy("qat"), Error);
  EXPECT_EQ(parse_strategy("quant-after"), Strategy::quant_after);
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"--bits", "5", "mct"}).code, 1);
  EXPECT_EQ(run_cli({"--no-such-flag", "mct"}).code, 1);
  EXPECT_EQ(run_cli({"--config", "/definitely/missing.ini", "mct"}).code, 1);
  EXPECT_EQ(run_cli({"--set", "schedule.bogus=1", "synth-data"}).code, 1);
  EXPECT_EQ(run_cli({"evaluate"}).code, 1);
}

TEST(Cli, MissingParentIsNamed) {
  const auto r = run_cli({"--run-dir", "/no/such/parent/root", "synth-data"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("/no/such/parent"), std::string::npos) << r.err;
}

TEST(Cli, SynthDataRefusesToOverwrite) {
  auto& w = workspace();
  const auto again = run_cli(with(w.base(), {"synth-data"}));
  EXPECT_EQ(again.code, 1);
  EXPECT_NE(again.err.find("--force"), std::string::npos) << again.err;
}

TEST(Cli, MctRunWritesArtifactsAndGammaLaw) {
  auto& w = workspace();
  const auto r = run_cli(with(w.base(), {"--bits", "4", "--seed", "3", "mct"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path dir = w.root / "runs" / "mct-b4-random-seed3";
  for (const char* f : {"model.qdsm", "model.qdsm.json", "history.csv", "resolved.ini"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto history = cli::read_history_csv(dir / "history.csv");
  auto cfg = load_config(w.ini);
  cfg.bits = 4;
  const auto gammas = expected_gamma_sequence(cfg.resolved_schedule());
  ASSERT_EQ(history.size(), gammas.size());
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    EXPECT_EQ(history[i].losses.gamma, gammas[i]);
    EXPECT_TRUE(history[i].losses.consistent());
  }
  const auto loaded = io::load_packed(dir / "model.qdsm");
  EXPECT_EQ(loaded.model.bit_length, 4);
  for (const auto& [id, cb] : loaded.model.codebooks)
    EXPECT_LE(distinct_values(loaded.model.base.parameter(id).value.data()), 16u);
  EXPECT_NE(slurp(w.root / "report.csv").find("mct,random,3,4,"), std::string::npos);
}

TEST(Cli, EvaluateIsRepeatableAndOrderFree) {
  auto& w = workspace();
  ASSERT_EQ(run_cli(with(w.base(), {"--bits", "8", "mct"})).code, 0);
  const fs::path model = w.root / "runs" / "mct-b8-random-seed0" / "model.qdsm";
  const auto a = run_cli(with(w.base(), {"evaluate", "--model", model.string()}));
  const auto b = run_cli(with(w.base(), {"evaluate", "--model", model.string()}));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);

  auto manifest = io::read_manifest(w.root / "corpus" / "test.csv");
  std::reverse(manifest.rows.begin(), manifest.rows.end());
  io::write_manifest(w.root / "corpus" / "test_reversed.csv", manifest.rows);
  auto cfg = load_config(w.ini);
  cfg.root = w.root;
  std::ostringstream sink;
  const auto forward = cli::cmd_evaluate(cfg, model, w.root / "corpus" / "test.csv", sink);
  const auto reversed = cli::cmd_evaluate(cfg, model, w.root / "corpus" / "test_reversed.csv", sink);
  EXPECT_EQ(forward.accuracy, reversed.accuracy);
  EXPECT_EQ(forward.macro_f1, reversed.macro_f1);
  EXPECT_EQ(forward.examples, manifest.rows.size());
}

TEST(Cli, FullPrecisionSizeFormula) {
  auto& w = workspace();
  auto cfg = load_config(w.ini);
  cfg.root = w.root;
  cfg.bits = 32;
  cfg.strategy = Strategy::distill;
  std::ostringstream sink;
  const auto row = cli::cmd_mct(cfg, true, sink);
  EXPECT_EQ(row.efficiency.bit_length, 32);
  EXPECT_EQ(row.efficiency.codebook_entries, 0u);
  EXPECT_DOUBLE_EQ(row.efficiency.size_mb_nominal,
                   static_cast<double>(row.efficiency.param_count) * 32 / 8 / 1048576);
}

TEST(Cli, RepeatedOverridesAllApply) {
  auto& w = workspace();
  const auto r = run_cli(with(w.base(), {"--set", "schedule.cycles=1", "--set", "schedule.alpha=0.75", "--strategy",
                                         "distill", "--seed", "9", "mct"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto resolved = load_config(w.root / "runs" / "distill-b32-random-seed9" / "resolved.ini");
  EXPECT_EQ(resolved.schedule.alpha, 0.75);
  EXPECT_EQ(resolved.schedule.cycles, 1);
}

TEST(Cli, DivergenceExitsTwo) {
  auto& w = workspace();
  const auto r = run_cli(with(w.base(), {"--set", "schedule.lr_encoder=1e300", "--set", "schedule.lr_classifier=1e300",
                                         "--strategy", "distill", "--seed", "11", "mct"}));
  EXPECT_EQ(r.code, 2) << r.err;
}
