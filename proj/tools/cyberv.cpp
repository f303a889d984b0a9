// Command-line driver: run one task, evaluate a dataset, sweep frame
// disturbance, or inspect a saved trace.
//
// Exit codes: 0 success, 1 error (bad flags, invalid config, I/O), 2 the run
// finished without an answer.

#include "cyberv/config.hpp"
#include "cyberv/harness.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace cyberv;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNoAnswer = 2;

struct Options {
  std::string config;
  std::string dataset;
  std::string backend = "mock";
  std::string scenario;
  std::string endpoint;
  double timeout_s = 60.0;
  std::string out;
  std::string format = "json";
  std::string task;
  std::string trace;
  std::vector<double> disturb_rates{0.0, 0.2, 0.4, 0.6};
  std::uint64_t seed = 2024;
  int jobs = 1;

  // Config overrides; absent means "keep the file or default value".
  std::optional<int> n;
  std::optional<double> tau;
  std::optional<std::vector<double>> weights;
  std::optional<int> k_top;
  std::optional<int> max_keyframes;
  std::optional<int> dense_radius;
  std::optional<int> parallelism;
  std::optional<std::string> scoring;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + " is not valid JSON: " + e.what());
  }
}

// Overrides are written into the config document so that they pass through
// exactly the same validation as values read from a file.
LoopConfig build_config(const Options& o) {
  json doc = o.config.empty() ? json::object() : read_json_file(o.config);
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  if ((o.n || o.tau) && !doc.contains("rounds"))
    doc["rounds"] = to_json(default_config())["rounds"];
  if (o.n) {
    json& first = doc["rounds"].at(0);
    first["n"] = *o.n;
    first.erase("strategies");
  }
  if (o.tau) doc["rounds"].at(0)["tau"] = *o.tau;
  if (o.weights) doc["weights"] = *o.weights;
  if (o.k_top) doc["k_top"] = *o.k_top;
  if (o.max_keyframes) doc["max_keyframes"] = *o.max_keyframes;
  if (o.dense_radius) doc["dense_radius"] = *o.dense_radius;
  if (o.parallelism) doc["parallelism"] = *o.parallelism;
  if (o.scoring) doc["scoring"] = *o.scoring;
  return load_config_json(doc);
}

std::unique_ptr<Backend> build_backend(const Options& o) {
  BackendDescriptor d;
  d.timeout_s = o.timeout_s;
  if (o.backend == "http") {
    d.kind = BackendDescriptor::Kind::Remote;
    d.target = o.endpoint;
    if (d.target.empty())
      if (const char* env = std::getenv("CYBERV_ENDPOINT")) d.target = env;
    if (d.target.empty()) throw ConfigError("--backend http needs --endpoint or CYBERV_ENDPOINT");
  } else {
    d.kind = BackendDescriptor::Kind::Mock;
    d.target = o.scenario;
    if (d.target.empty() && !o.dataset.empty())
      d.target = (std::filesystem::path(o.dataset).parent_path() / "scenario.json").string();
    if (d.target.empty()) throw ConfigError("--backend mock needs --scenario");
  }
  return make_backend(d);
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

std::vector<DatasetRecord> require_dataset(const Options& o) {
  if (o.dataset.empty()) throw ConfigError("--dataset is required");
  return load_dataset(o.dataset);
}

int cmd_run(const Options& o) {
  const LoopConfig cfg = build_config(o);
  const auto data = require_dataset(o);
  const auto it = std::find_if(data.begin(), data.end(),
                               [&](const DatasetRecord& r) { return r.task.id == o.task; });
  if (it == data.end()) throw ValidationError("task '" + o.task + "' is not in " + o.dataset);
  const auto backend = build_backend(o);
  const LoopTrace trace = run(it->task, cfg, *backend);
  write_output(o.out, to_json(trace).dump(2) + "\n");
  std::cerr << o.task << ": answer " << trace.answer.value_or("<none>") << " after "
            << trace.rounds_used << " round(s), " << trace.backend_calls() << " backend calls\n";
  return trace.answer ? kExitOk : kExitNoAnswer;
}

int cmd_eval(const Options& o) {
  const LoopConfig cfg = build_config(o);
  const auto data = require_dataset(o);
  const auto backend = build_backend(o);
  const EvalReport report = evaluate(data, cfg, *backend, o.jobs);
  const auto format = o.format == "csv" ? ReportFormat::Csv : ReportFormat::Json;
  if (o.out.empty())
    std::cout << (format == ReportFormat::Csv ? report_csv(report) : to_json(report).dump(2) + "\n");
  else
    emit_report(report, format, o.out);
  std::cerr << "accuracy " << report.accuracy << " (" << report.correct << "/" << report.total
            << ")\n";
  return kExitOk;
}

int cmd_stability(const Options& o) {
  for (double d : o.disturb_rates)
    if (!(d >= 0.0 && d <= 1.0))
      throw ValidationError("disturb rate " + std::to_string(d) + " is outside [0,1]");
  const LoopConfig cfg = build_config(o);
  const auto data = require_dataset(o);
  const auto backend = build_backend(o);
  const auto rows = stability_sweep(data, cfg, *backend, o.disturb_rates, o.seed, o.jobs);
  write_output(o.out, stability_table(rows));
  return kExitOk;
}

std::string score_table(const LoopTrace& trace) {
  std::ostringstream os;
  os << "round,strategy_id,parsed";
  for (auto name : kTreeNames) os << ',' << name;
  os << ",aggregate\n";
  for (const auto& r : trace.rounds) {
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      const auto& rec = r.responses[r.scores[i].response];
      os << r.round << ',' << rec.strategy_id << ',' << rec.parsed.value_or("");
      for (Eigen::Index t = 0; t < r.scores[i].s.size(); ++t) os << ',' << r.scores[i].s(t);
      os << ',' << r.aggregates(static_cast<Eigen::Index>(i)) << '\n';
    }
  }
  return os.str();
}

int cmd_inspect(const Options& o) {
  if (o.trace.empty()) throw ConfigError("--trace is required");
  const LoopTrace trace = trace_from_json(read_json_file(o.trace));
  std::vector<std::pair<std::string, DriftSignal>> drift;
  for (const auto& r : trace.rounds)
    if (r.signals.drift) drift.emplace_back(trace.task_id, *r.signals.drift);
  if (drift.empty())
    std::cerr << "warning: trace for " << trace.task_id
              << " has no attention drift; emitting scores only\n";

  const std::string scores = score_table(trace);
  if (o.out.empty()) {
    std::cout << scores;
    if (!drift.empty()) std::cout << '\n' << drift_csv(drift);
    return kExitOk;
  }
  write_output(o.out, scores);
  if (!drift.empty()) {
    const std::filesystem::path p(o.out);
    write_output((p.parent_path() / (p.stem().string() + "_drift.csv")).string(), drift_csv(drift));
  }
  return kExitOk;
}

void add_common(CLI::App* app, Options& o, bool needs_dataset) {
  app->add_option("--config", o.config, "Loop config JSON (defaults apply when omitted)");
  if (needs_dataset) {
    app->add_option("--dataset", o.dataset, "Line-delimited JSON dataset")->required();
    app->add_option("--backend", o.backend, "Backend: mock or http")
        ->check(CLI::IsMember({"mock", "http"}));
    app->add_option("--scenario", o.scenario,
                    "Mock scenario file (default: scenario.json beside the dataset)");
    app->add_option("--endpoint", o.endpoint, "Remote base URL (env CYBERV_ENDPOINT)");
    app->add_option("--timeout", o.timeout_s, "Remote request timeout in seconds");
    app->add_option("--jobs", o.jobs, "Tasks evaluated concurrently")->check(CLI::PositiveNumber);
  }
  app->add_option("--out", o.out, "Output path (stdout when omitted)");
  app->add_option("--n", o.n, "First-round path count");
  app->add_option("--tau", o.tau, "First-round acceptance threshold");
  app->add_option("--weights", o.weights, "Five tree weights summing to 1")->delimiter(',');
  app->add_option("--k-top", o.k_top, "Segments taken per modality for key frames");
  app->add_option("--max-keyframes", o.max_keyframes, "Cap on injected key frames");
  app->add_option("--dense-radius", o.dense_radius, "Dense window radius in frames");
  app->add_option("--parallelism", o.parallelism, "Concurrent backend calls per round");
  app->add_option("--scoring", o.scoring, "score-forest or majority");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop test-time scaling over a multimodal model backend"};
  app.require_subcommand(1);
  Options o;

  auto* run_cmd = app.add_subcommand("run", "Run the loop on one task and write its trace");
  add_common(run_cmd, o, true);
  run_cmd->add_option("--task", o.task, "Task id")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate every task of a dataset");
  add_common(eval_cmd, o, true);
  eval_cmd->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"json", "csv"}));

  auto* stab_cmd = app.add_subcommand("stability", "Single pass vs loop under frame disturbance");
  add_common(stab_cmd, o, true);
  stab_cmd->add_option("--disturb-rates", o.disturb_rates, "Comma-separated rates in [0,1]")
      ->delimiter(',');
  stab_cmd->add_option("--seed", o.seed, "Perturbation seed");

  auto* inspect_cmd = app.add_subcommand("inspect", "Per-tree scores and drift table of a trace");
  inspect_cmd->add_option("--trace", o.trace, "Trace JSON written by run")->required();
  inspect_cmd->add_option("--out", o.out, "Scores CSV path; drift goes to <stem>_drift.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  try {
    if (*run_cmd) return cmd_run(o);
    if (*eval_cmd) return cmd_eval(o);
    if (*stab_cmd) return cmd_stability(o);
    return cmd_inspect(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}
