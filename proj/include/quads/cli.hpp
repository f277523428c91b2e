#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "quads/config.hpp"
#include "quads/corpus.hpp"
#include "quads/metrics.hpp"
#include "quads/model_io.hpp"
#include "quads/trainer.hpp"

namespace quads::cli {

struct ReportRow {
  std::string strategy;
  std::string init;
  std::uint64_t seed = 0;
  EfficiencyReport efficiency;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

struct EvalSummary {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double gmacs = 0.0;
  double size_mb = 0.0;
  std::size_t examples = 0;
};

struct Dataset {
  std::vector<std::string> vocab;
  TrainData data;
  std::vector<io::Example> test;
};

Dataset load_dataset(const RunConfig& cfg);

// Creates dir (and nothing above it); throws naming the path when its parent
// is missing.
void ensure_dir(const std::filesystem::path& dir);

io::CorpusFiles cmd_synth_data(const RunConfig& cfg, bool force, std::ostream& out);
std::filesystem::path cmd_train_teacher(const RunConfig& cfg, bool force, std::ostream& out);
std::filesystem::path cmd_pretrain_student(const RunConfig& cfg, bool force, std::ostream& out);
ReportRow cmd_mct(const RunConfig& cfg, bool force, std::ostream& out);
std::vector<ReportRow> cmd_ablate(const RunConfig& cfg, bool force, std::ostream& out);
EvalSummary cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& model,
                         const std::filesystem::path& manifest, std::ostream& out);

// Directory of a single mct/distill/quant-after run.
std::filesystem::path run_dir(const RunConfig& cfg);
std::filesystem::path pretrained_path(const RunConfig& cfg);

EfficiencyReport efficiency_of(const QuantizedModel& model, std::size_t input_frames,
                               const std::map<int, double>& energy_table);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);
std::vector<EpochRecord> read_history_csv(const std::filesystem::path& path);

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  std::string label;
};
std::string scatter_svg(const std::vector<ScatterPoint>& points, const std::string& x_label,
                        const std::string& y_label);

// Full command line; returns the process exit code (0 ok, 1 user error,
// 2 numerical failure).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace quads::cli
