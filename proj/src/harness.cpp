#include "cyberv/harness.hpp"

#include "cyberv/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace cyberv {

using nlohmann::json;
using nlohmann::ordered_json;

// Dataset ----------------------------------------------------------------------

namespace {

[[noreturn]] void fail_line(const std::string& source, std::size_t line, const std::string& field,
                            const std::string& msg) {
  throw ValidationError(source + ":" + std::to_string(line) + ": field '" + field + "': " + msg);
}

DatasetRecord parse_record(const ordered_json& j, const std::string& source, std::size_t line) {
  auto need = [&](const char* field) -> const ordered_json& {
    auto it = j.find(field);
    if (it == j.end()) fail_line(source, line, field, "missing");
    return *it;
  };
  auto str = [&](const char* field) {
    const auto& v = need(field);
    if (!v.is_string()) fail_line(source, line, field, "must be a string");
    return v.get<std::string>();
  };
  auto num = [&](const char* field) {
    const auto& v = need(field);
    if (!v.is_number()) fail_line(source, line, field, "must be a number");
    return v.get<double>();
  };
  auto integer = [&](const char* field) {
    const auto& v = need(field);
    if (!v.is_number_integer()) fail_line(source, line, field, "must be an integer");
    return v.get<std::int64_t>();
  };

  if (!j.is_object()) fail_line(source, line, "<record>", "must be a JSON object");
  DatasetRecord rec;
  Task& t = rec.task;
  t.id = str("id");
  if (t.id.empty()) fail_line(source, line, "id", "must not be empty");
  t.question = str("question");

  const auto& choices = need("choices");
  if (!choices.is_object() || choices.empty())
    fail_line(source, line, "choices", "must be a non-empty object");
  for (auto it = choices.begin(); it != choices.end(); ++it) {
    if (!it->is_string()) fail_line(source, line, "choices", "texts must be strings");
    t.choices.labels.push_back(it.key());
    t.choices.texts.push_back(it->get<std::string>());
  }
  if (auto a = j.find("answer"); a != j.end() && !a->is_null()) {
    if (!a->is_string()) fail_line(source, line, "answer", "must be a string");
    t.ground_truth = a->get<std::string>();
    if (!t.choices.contains(*t.ground_truth))
      fail_line(source, line, "answer", "'" + *t.ground_truth + "' is not a choice label");
  }

  t.timeline.duration_s = num("duration_s");
  t.timeline.fps = num("fps");
  t.timeline.total_frames = integer("total_frames");
  rec.sampled_frames = static_cast<int>(integer("sampled_frames"));
  if (!(t.timeline.fps > 0.0)) fail_line(source, line, "fps", "must be positive");
  if (!(t.timeline.duration_s > 0.0)) fail_line(source, line, "duration_s", "must be positive");
  if (t.timeline.total_frames < 1) fail_line(source, line, "total_frames", "must be >= 1");
  if (rec.sampled_frames < 1 || rec.sampled_frames > t.timeline.total_frames)
    fail_line(source, line, "sampled_frames", "must lie in [1, total_frames]");
  t.timeline.sampled_indices = uniform_sampling(t.timeline.total_frames, rec.sampled_frames);

  if (auto subs = j.find("subtitles"); subs != j.end() && !subs->is_null()) {
    if (!subs->is_array()) fail_line(source, line, "subtitles", "must be an array");
    for (const auto& s : *subs) {
      if (!s.is_object() || !s.contains("start") || !s.contains("end") ||
          !s["start"].is_number() || !s["end"].is_number())
        fail_line(source, line, "subtitles", "entries need numeric start and end");
      SubtitleSegment seg;
      seg.start_s = s["start"].get<double>();
      seg.end_s = s["end"].get<double>();
      if (auto txt = s.find("text"); txt != s.end()) {
        if (!txt->is_string()) fail_line(source, line, "subtitles", "text must be a string");
        seg.text = txt->get<std::string>();
      }
      if (!(seg.start_s >= 0.0 && seg.start_s < seg.end_s))
        fail_line(source, line, "subtitles", "segment needs 0 <= start < end");
      t.subtitles.push_back(std::move(seg));
    }
    std::stable_sort(t.subtitles.begin(), t.subtitles.end(),
                     [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
    for (std::size_t i = 0; i < t.subtitles.size(); ++i) t.subtitles[i].index = static_cast<int>(i);
  }

  if (auto m = j.find("media_ref"); m != j.end() && !m->is_null()) {
    if (!m->is_string()) fail_line(source, line, "media_ref", "must be a string");
    t.media_ref = m->get<std::string>();
  }
  if (auto k = j.find("scenario_key"); k != j.end() && !k->is_null()) {
    if (!k->is_string()) fail_line(source, line, "scenario_key", "must be a string");
    t.scenario_key = k->get<std::string>();
  }
  try {
    validate(t);
  } catch (const ValidationError& e) {
    fail_line(source, line, "<record>", e.what());
  }
  return rec;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::vector<DatasetRecord> parse_dataset(std::istream& in, const std::string& source) {
  std::vector<DatasetRecord> out;
  std::set<std::string> ids;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const json::parse_error& e) {
      fail_line(source, n, "<record>", std::string("invalid JSON: ") + e.what());
    }
    DatasetRecord rec = parse_record(j, source, n);
    if (!ids.insert(rec.task.id).second)
      fail_line(source, n, "id", "duplicate id '" + rec.task.id + "'");
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset " + path.string());
  return parse_dataset(in, path.string());
}

std::vector<std::int64_t> uniform_sampling(std::int64_t total_frames, int frames) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(std::max(frames, 0)));
  const std::int64_t f = frames;
  for (std::int64_t i = 0; i < f; ++i) out[static_cast<std::size_t>(i)] =
      (2 * i * total_frames + f) / (2 * f);
  return out;
}

std::vector<std::int64_t> perturb_sampling(const VideoTimeline& timeline, int frames,
                                           double disturb_rate, std::uint64_t seed) {
  if (frames < 1) throw ValidationError("perturb_sampling needs at least one frame");
  if (!(disturb_rate >= 0.0 && disturb_rate <= 1.0))
    throw ValidationError("disturb rate must lie in [0,1]");
  const std::int64_t total = timeline.total_frames;
  if (frames > total) throw ValidationError("cannot sample more frames than the video has");

  std::vector<std::int64_t> out = uniform_sampling(total, frames);
  if (disturb_rate == 0.0) return out;

  const double stride = static_cast<double>(total) / frames;
  const double half_range = 0.5 * disturb_rate * stride;
  std::mt19937_64 gen(seed);
  for (auto& p : out) {
    const double unit = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    const double shifted = static_cast<double>(p) + (2.0 * unit - 1.0) * half_range;
    p = std::clamp<std::int64_t>(std::llround(shifted), 0, total - 1);
  }
  std::sort(out.begin(), out.end());
  // Collisions after rounding: push forward, then pull back from the end.
  for (std::size_t i = 1; i < out.size(); ++i) out[i] = std::max(out[i], out[i - 1] + 1);
  for (std::size_t i = out.size(); i-- > 0;) {
    const auto limit = total - static_cast<std::int64_t>(out.size() - i);
    if (out[i] > limit) out[i] = limit;
    if (i + 1 < out.size()) out[i] = std::min(out[i], out[i + 1] - 1);
  }
  return out;
}

// Evaluation -------------------------------------------------------------------

EvalReport evaluate(const std::vector<DatasetRecord>& dataset, const LoopConfig& cfg,
                    const Backend& backend, int task_parallelism, std::vector<LoopTrace>* traces) {
  if (dataset.empty()) throw ValidationError("cannot evaluate an empty dataset");
  for (const auto& r : dataset)
    if (!r.task.ground_truth) throw ValidationError("task '" + r.task.id + "' has no answer");

  std::vector<TaskOutcome> outcomes(dataset.size());
  std::vector<LoopTrace> local(dataset.size());
  parallel_for(dataset.size(), task_parallelism, [&](std::size_t i) {
    const Task& task = dataset[i].task;
    TaskOutcome& o = outcomes[i];
    o.task_id = task.id;
    o.truth = task.ground_truth;
    try {
      LoopTrace trace = run(task, cfg, backend);
      o.predicted = trace.answer;
      o.correct = trace.answer && trace.answer == task.ground_truth;
      o.rounds_used = trace.rounds_used;
      o.backend_calls = trace.backend_calls();
      if (!trace.rounds.empty()) o.drift = trace.rounds.front().signals.drift;
      for (const auto& r : trace.rounds)
        for (const auto& rec : r.responses)
          if (rec.error && !o.error) o.error = "backend: " + *rec.error;
      local[i] = std::move(trace);
    } catch (const std::exception& e) {
      o.error = e.what();
      o.correct = false;
      local[i].task_id = task.id;
    }
  });

  EvalReport report;
  report.tasks = std::move(outcomes);
  report.total = static_cast<int>(report.tasks.size());
  double calls = 0.0;
  for (const auto& o : report.tasks) {
    report.correct += o.correct ? 1 : 0;
    calls += o.backend_calls;
    ++report.rounds_histogram[o.rounds_used];
  }
  report.accuracy = static_cast<double>(report.correct) / report.total;
  report.mean_backend_calls = calls / report.total;
  if (traces) *traces = std::move(local);
  return report;
}

// Reports ------------------------------------------------------------------------

namespace {

json optional_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Shortest text that reads back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool same_drift(const std::optional<DriftSignal>& a, const std::optional<DriftSignal>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return a->video.size() == b->video.size() && a->video == b->video &&
         a->sub.size() == b->sub.size() && a->sub == b->sub &&
         a->base_strategy_id == b->base_strategy_id && a->cot_strategy_id == b->cot_strategy_id;
}

}  // namespace

bool operator==(const TaskOutcome& a, const TaskOutcome& b) {
  return a.task_id == b.task_id && a.truth == b.truth && a.predicted == b.predicted &&
         a.correct == b.correct && a.rounds_used == b.rounds_used &&
         a.backend_calls == b.backend_calls && a.error == b.error && same_drift(a.drift, b.drift);
}

bool operator==(const EvalReport& a, const EvalReport& b) {
  return a.accuracy == b.accuracy && a.total == b.total && a.correct == b.correct &&
         a.mean_backend_calls == b.mean_backend_calls &&
         a.rounds_histogram == b.rounds_histogram && a.tasks == b.tasks;
}

json to_json(const EvalReport& report) {
  json tasks = json::array();
  for (const auto& o : report.tasks) {
    tasks.push_back(json{{"task_id", o.task_id},
                         {"truth", optional_json(o.truth)},
                         {"predicted", optional_json(o.predicted)},
                         {"correct", o.correct},
                         {"rounds_used", o.rounds_used},
                         {"backend_calls", o.backend_calls},
                         {"error", optional_json(o.error)},
                         {"drift", o.drift ? to_json(*o.drift) : json(nullptr)}});
  }
  json hist = json::object();
  for (const auto& [rounds, count] : report.rounds_histogram) hist[std::to_string(rounds)] = count;
  return json{{"accuracy", report.accuracy},
              {"total", report.total},
              {"correct", report.correct},
              {"mean_backend_calls", report.mean_backend_calls},
              {"rounds_histogram", hist},
              {"tasks", tasks}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.total = j.at("total").get<int>();
  r.correct = j.at("correct").get<int>();
  r.mean_backend_calls = j.at("mean_backend_calls").get<double>();
  for (auto it = j.at("rounds_histogram").begin(); it != j.at("rounds_histogram").end(); ++it)
    r.rounds_histogram[std::stoi(it.key())] = it->get<int>();
  for (const auto& t : j.at("tasks")) {
    TaskOutcome o;
    o.task_id = t.at("task_id").get<std::string>();
    o.truth = optional_string(t, "truth");
    o.predicted = optional_string(t, "predicted");
    o.correct = t.at("correct").get<bool>();
    o.rounds_used = t.at("rounds_used").get<int>();
    o.backend_calls = t.at("backend_calls").get<int>();
    o.error = optional_string(t, "error");
    if (const json& d = t.at("drift"); !d.is_null()) {
      DriftSignal ds;
      ds.video = vector_from_json(d.at("video"));
      ds.sub = vector_from_json(d.at("sub"));
      ds.base_strategy_id = d.at("base_strategy_id").get<std::string>();
      ds.cot_strategy_id = d.at("cot_strategy_id").get<std::string>();
      o.drift = std::move(ds);
    }
    r.tasks.push_back(std::move(o));
  }
  return r;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "task_id,truth,predicted,correct,rounds_used,backend_calls,error\n";
  for (const auto& o : report.tasks)
    os << csv_field(o.task_id) << ',' << o.truth.value_or("") << ',' << o.predicted.value_or("")
       << ',' << (o.correct ? 1 : 0) << ',' << o.rounds_used << ',' << o.backend_calls << ','
       << csv_field(o.error.value_or("")) << '\n';
  return os.str();
}

std::string drift_csv(const std::vector<std::pair<std::string, DriftSignal>>& rows) {
  Eigen::Index k1 = 0, k2 = 0;
  for (const auto& [id, d] : rows) {
    k1 = std::max(k1, d.video.size());
    k2 = std::max(k2, d.sub.size());
  }
  std::ostringstream os;
  os << "task_id";
  for (Eigen::Index j = 0; j < k1; ++j) os << ",video_" << j;
  for (Eigen::Index j = 0; j < k2; ++j) os << ",sub_" << j;
  os << '\n';
  for (const auto& [id, d] : rows) {
    os << csv_field(id);
    for (Eigen::Index j = 0; j < k1; ++j) {
      os << ',';
      if (j < d.video.size()) os << format_double(d.video(j));
    }
    for (Eigen::Index j = 0; j < k2; ++j) {
      os << ',';
      if (j < d.sub.size()) os << format_double(d.sub(j));
    }
    os << '\n';
  }
  return os.str();
}

void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path) {
  auto write = [](const std::filesystem::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << body;
    if (!out) throw Error("failed writing " + p.string());
  };
  if (format == ReportFormat::Json) {
    write(path, to_json(report).dump(2) + "\n");
    return;
  }
  write(path, report_csv(report));
  std::vector<std::pair<std::string, DriftSignal>> rows;
  for (const auto& o : report.tasks)
    if (o.drift) rows.emplace_back(o.task_id, *o.drift);
  auto drift_path = path;
  drift_path.replace_filename(path.stem().string() + "_drift.csv");
  write(drift_path, drift_csv(rows));
}

// Stability ----------------------------------------------------------------------

LoopConfig single_pass_config(const LoopConfig& cfg) {
  LoopConfig out = cfg;
  RoundConfig r;
  r.n_paths = 1;
  r.tau = 0.0;
  r.feedback_enabled = false;
  for (const auto& s : cfg.rounds.front().strategies)
    if (s.kind == StrategyKind::Base) r.strategies.push_back(s);
  out.rounds = {r};
  validate(out);
  return out;
}

std::vector<StabilityRow> stability_sweep(const std::vector<DatasetRecord>& dataset,
                                          const LoopConfig& cfg, const Backend& backend,
                                          const std::vector<double>& disturb_rates,
                                          std::uint64_t seed, int task_parallelism) {
  for (double d : disturb_rates)
    if (!(d >= 0.0 && d <= 1.0)) throw ValidationError("disturb rate must lie in [0,1]");
  const LoopConfig baseline = single_pass_config(cfg);
  std::vector<StabilityRow> rows;
  for (double d : disturb_rates) {
    std::vector<DatasetRecord> perturbed = dataset;
    for (auto& rec : perturbed) {
      const std::uint64_t task_seed = seed ^ fnv1a(rec.task.id);
      rec.task.timeline.sampled_indices =
          perturb_sampling(rec.task.timeline, rec.sampled_frames, d, task_seed);
    }
    StabilityRow row;
    row.disturb_rate = d;
    row.baseline_accuracy = evaluate(perturbed, baseline, backend, task_parallelism).accuracy;
    row.loop_accuracy = evaluate(perturbed, cfg, backend, task_parallelism).accuracy;
    rows.push_back(row);
  }
  return rows;
}

std::string stability_table(const std::vector<StabilityRow>& rows) {
  std::ostringstream os;
  os << "disturb_rate,single_pass_accuracy,loop_accuracy\n";
  for (const auto& r : rows)
    os << format_double(r.disturb_rate) << ',' << format_double(r.baseline_accuracy) << ','
       << format_double(r.loop_accuracy) << '\n';
  return os.str();
}

}  // namespace cyberv
