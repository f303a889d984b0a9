#pragma once

#include "cyberv/loop.hpp"

#include <filesystem>
#include <istream>

namespace cyberv {

struct DatasetRecord {
  Task task;
  int sampled_frames = 0;
};

/// Reads line-delimited JSON task records. Errors name the line and field.
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path);
std::vector<DatasetRecord> parse_dataset(std::istream& in, const std::string& source = "<input>");

/// p_i = round(i * T / F) for i in [0, F).
std::vector<std::int64_t> uniform_sampling(std::int64_t total_frames, int frames);

/// Uniform positions shifted by u_i ~ U(-d*s/2, +d*s/2), s = T/F, then
/// rounded, clamped to [0, T-1], sorted and nudged apart so the result stays
/// strictly increasing. Reproducible for a given seed on every platform.
std::vector<std::int64_t> perturb_sampling(const VideoTimeline& timeline, int frames,
                                           double disturb_rate, std::uint64_t seed);

struct TaskOutcome {
  std::string task_id;
  std::optional<std::string> truth;
  std::optional<std::string> predicted;
  bool correct = false;
  int rounds_used = 0;
  int backend_calls = 0;
  std::optional<std::string> error;
  /// First-round drift, when one was measured.
  std::optional<DriftSignal> drift;
};

struct EvalReport {
  double accuracy = 0.0;
  int total = 0;
  int correct = 0;
  double mean_backend_calls = 0.0;
  std::map<int, int> rounds_histogram;
  std::vector<TaskOutcome> tasks;
};

bool operator==(const TaskOutcome& a, const TaskOutcome& b);
bool operator==(const EvalReport& a, const EvalReport& b);

/// Runs the loop for every record, at most `task_parallelism` tasks at once.
/// Per-task failures are recorded as incorrect outcomes with an error note.
/// Outcomes keep dataset order.
EvalReport evaluate(const std::vector<DatasetRecord>& dataset, const LoopConfig& cfg,
                    const Backend& backend, int task_parallelism = 1,
                    std::vector<LoopTrace>* traces = nullptr);

enum class ReportFormat { Json, Csv };

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
std::string report_csv(const EvalReport& report);

/// Wide per-segment drift table: task_id, video_0.., sub_0.. (for heatmaps).
std::string drift_csv(const std::vector<std::pair<std::string, DriftSignal>>& rows);

/// Writes the report; for CSV also writes `<stem>_drift.csv` beside it.
void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path);

/// The first round's base strategy alone, accepted unconditionally.
LoopConfig single_pass_config(const LoopConfig& cfg);

struct StabilityRow {
  double disturb_rate = 0.0;
  double baseline_accuracy = 0.0;
  double loop_accuracy = 0.0;
};

/// Re-samples every task's frames at each disturb rate and evaluates the
/// single-pass baseline and the full loop on the same perturbed inputs.
std::vector<StabilityRow> stability_sweep(const std::vector<DatasetRecord>& dataset,
                                          const LoopConfig& cfg, const Backend& backend,
                                          const std::vector<double>& disturb_rates,
                                          std::uint64_t seed, int task_parallelism = 1);

std::string stability_table(const std::vector<StabilityRow>& rows);

}  // namespace cyberv
