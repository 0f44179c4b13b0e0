#ifndef SDCN_CLI_HPP_
#define SDCN_CLI_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdcn/datasynth.hpp"
#include "sdcn/evaluate.hpp"
#include "sdcn/model.hpp"

// Command layer: one JSON run config drives synth, train, eval, gradcheck
// and ablate. Every output is a pure function of (config, dataset, seed).
namespace sdcn {

inline constexpr int kRunConfigVersion = 1;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;

// Reference mAP of the four ablation rows, carried as metadata.
inline constexpr double kReferenceMap[4] = {41.2, 41.3, 36.8, 48.3};

struct RunConfig {
  int version = kRunConfigVersion;
  std::uint64_t seed = 0;  // training seed; the scene has its own
  std::string output_dir = "runs/default";
  int train_images = 200;
  int test_images = 100;
  SceneSpec scene;
  NetConfig net;
  TrainConfig train;  // train.switches are the ablation switches
  EvalOptions eval;
  int ablation_seeds = 3;  // seeds seed, seed + 1, ...
  int checkpoint_every = 500;

  // Throws std::invalid_argument.
  void validate() const;
};

nlohmann::json run_config_to_json(const RunConfig& c);
// Missing keys keep their defaults; unknown keys and a missing or wrong
// version are rejected. The result is validated.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// output_dir, resolved against $SDCN_OUTPUT_ROOT when that is set and the
// directory is relative.
std::filesystem::path output_root(const RunConfig& c);

std::filesystem::path data_dir(const RunConfig& c);
std::filesystem::path train_dir(const RunConfig& c);

// Writes the dataset under data_dir and prints its digest.
int cmd_synth(const RunConfig& c, std::ostream& out);

struct TrainOptions {
  bool resume = false;
  std::optional<long> stop_after;  // iterations in this invocation
};

// Three-stage training on the dataset under data_dir. Writes checkpoint.bin,
// log.csv and config.json under train_dir. A checkpoint and its log rows are
// written together every checkpoint_every iterations. On divergence the last
// checkpoint is kept, DIVERGED records the error and the exit code is 2.
int cmd_train(const RunConfig& c, const TrainOptions& options, std::ostream& out);

// Test-split report (report.csv, report.json, error_modes.svg,
// detections.jsonl) written to report_dir.
int cmd_eval(const RunConfig& c, const std::filesystem::path& checkpoint,
             const std::filesystem::path& dataset_dir,
             const std::filesystem::path& report_dir, std::ostream& out);

// Runs the gradient suite; flip names a check whose gradient is negated.
int cmd_gradcheck(const std::string& flip, const std::vector<std::string>& only,
                  std::uint64_t seed, std::ostream& out);

struct AblationRow {
  int row = 0;
  Switches switches;
  std::uint64_t seed = 0;
  MetricsBundle metrics;
};

struct AblationResult {
  std::vector<AblationRow> runs;  // row-major: every seed of row 1, then row 2...
  int seeds = 0;
};

// Trains and evaluates the four rows for every seed on one dataset.
AblationResult run_ablation(const RunConfig& c, const Dataset& data,
                            std::ostream* progress = nullptr);

// Four rows, seed-averaged: row, switch columns, mAP (percent), mode-2
// frequency, pixel precision/recall of detection and segmentation, and the
// reference mAP.
std::string ablation_csv(const AblationResult& r);
// One line per (row, seed).
std::string ablation_seeds_csv(const AblationResult& r);
nlohmann::json ablation_json(const AblationResult& r);

// Writes ablation.csv, ablation_seeds.csv and ablation.json under
// output_root/ablate.
int cmd_ablate(const RunConfig& c, std::ostream& out);

// Full command line, argv[0] included. Messages go to out and err.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sdcn

#endif  // SDCN_CLI_HPP_
