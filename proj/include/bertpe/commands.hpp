// Copyright (c) 2026, The bertpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// The command implementations behind tools/bertpe_cli. Each command writes
// human-readable output to a stream and files under an output directory, and
// signals failure by exception: std::invalid_argument for bad input (exit 1),
// anything else for runtime failures (exit 2).

#pragma once

#include <bertpe/accounting.hpp>
#include <bertpe/gradcheck_suite.hpp>
#include <bertpe/manifest.hpp>
#include <bertpe/trainer.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bertpe {

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("error writing " + path.string());
}

inline double round1(double v) { return std::round(v * 10.0) / 10.0; }

}  // namespace detail

// ---- count ----------------------------------------------------------------

inline TableReport cmd_count(const std::vector<ExperimentSpec>& specs,
                             const std::filesystem::path& out_dir, std::ostream& out) {
  std::vector<CountRow> rows;
  for (const auto& s : specs) rows.push_back(s.count_row());
  TableReport report = table_report(rows);
  out << report.text;
  detail::write_text_file(out_dir / "count.csv", report.csv);
  return report;
}

// ---- run ------------------------------------------------------------------

struct ExperimentOutcome {
  ReportRow row;
  std::vector<LossRecord> history;
};

/// build -> freeze -> train -> evaluate for one experiment.
inline ExperimentOutcome run_experiment(const ExperimentSpec& spec) {
  Model model = build_model(spec.encoder, spec.head, spec.train.seed);
  apply_freeze_policy(model, spec.policy);
  const auto train_data = generate_dataset(spec.data);
  const auto eval_data = generate_dataset(spec.eval_data());

  const std::uint64_t trainable = model.params.trainable_count();
  const std::uint64_t expected = count(spec.encoder, spec.policy, spec.head).trainable;
  if (trainable != expected) {
    throw std::logic_error(spec.label + ": registry holds " + std::to_string(trainable) +
                           " trainable parameters, accounting expects " +
                           std::to_string(expected));
  }

  ExperimentOutcome o;
  TrainResult tr;
  try {
    tr = train(model, train_data, spec.train);
  } catch (const TrainingDiverged& e) {
    throw std::runtime_error(spec.label + ": " + e.what());
  }
  const EvalResult ev = evaluate(model, eval_data, spec.train);
  o.history = std::move(tr.history);
  ReportRow& r = o.row;
  r.label = spec.label;
  r.layers_trained = spec.policy.top_layers_trainable;
  r.adapter_size = spec.encoder.adapter ? spec.encoder.adapter->size : 0;
  r.trainable_params = trainable;
  r.em = detail::round1(Percent(ev.scores.exact_match).value());
  r.f1 = detail::round1(Percent(ev.scores.f1).value());
  r.train_seconds = tr.train_seconds;
  r.inference_seconds = ev.inference_seconds;
  r.efficiency_ratio = efficiency_ratio(Percent(*r.f1), trainable);
  return o;
}

struct RunOptions {
  std::filesystem::path out_dir = "out";
  bool parallel = false;
  std::optional<std::uint64_t> seed;  // overrides every experiment's seed
};

/// Runs every experiment whose label has no row in <out>/report.csv yet and
/// rewrites the report in manifest order after each one.
inline ReportTable cmd_run(std::vector<ExperimentSpec> specs, const RunOptions& options,
                           std::ostream& log) {
  if (options.seed) {
    for (auto& s : specs) s.train.seed = *options.seed;
  }
  const auto report_path = options.out_dir / "report.csv";
  std::map<std::string, ReportRow> done;
  if (std::filesystem::exists(report_path)) {
    std::ifstream in(report_path);
    for (auto& r : read_report_csv(in).rows) done.emplace(r.label, std::move(r));
  }

  auto flush = [&] {
    ReportTable t;
    t.with_efficiency = true;
    for (const auto& s : specs) {
      if (auto it = done.find(s.label); it != done.end()) t.rows.push_back(it->second);
    }
    std::ostringstream csv;
    write_report_csv(csv, t);
    detail::write_text_file(report_path, csv.str());
    return t;
  };

  auto record = [&](const ExperimentSpec& s, ExperimentOutcome o) {
    const std::filesystem::path dir =
        s.out_dir.empty() ? options.out_dir : std::filesystem::path(s.out_dir);
    std::ostringstream loss;
    write_loss_csv(loss, o.history);
    detail::write_text_file(dir / ("loss_" + s.label + ".csv"), loss.str());
    char line[160];
    std::snprintf(line, sizeof line, "%-16s trainable=%llu EM=%.1f F1=%.1f train=%.2fs infer=%.3fs\n",
                  s.label.c_str(), static_cast<unsigned long long>(o.row.trainable_params),
                  *o.row.em, *o.row.f1, *o.row.train_seconds, *o.row.inference_seconds);
    log << line << std::flush;
    done[s.label] = std::move(o.row);
    flush();
  };

  std::vector<const ExperimentSpec*> pending;
  for (const auto& s : specs) {
    if (done.contains(s.label)) {
      log << s.label << ": already in report, skipped\n";
    } else {
      pending.push_back(&s);
    }
  }

  if (options.parallel) {
    std::vector<std::future<ExperimentOutcome>> jobs;
    for (const auto* s : pending)
      jobs.push_back(std::async(std::launch::async, [s] { return run_experiment(*s); }));
    for (std::size_t i = 0; i < jobs.size(); ++i) record(*pending[i], jobs[i].get());
  } else {
    for (const auto* s : pending) record(*s, run_experiment(*s));
  }
  return flush();
}

// ---- gradcheck --------------------------------------------------------------

struct GradCheckSummary {
  std::vector<GradCheckResult> worst;  // one entry per case, worst seed
  bool all_passed = true;
};

inline GradCheckSummary cmd_gradcheck(const std::vector<GradCheckCase>& suite,
                                      std::uint64_t seed, std::size_t seeds,
                                      std::ostream& out, double tolerance = 1e-4) {
  if (seeds == 0) throw ValidationError("gradcheck: --seeds must be >= 1");
  GradCheckSummary summary;
  for (const auto& c : suite) {
    GradCheckResult worst;
    auto rank = [](const GradCheckResult& r) { return std::pair{!r.passed, r.max_rel_error}; };
    for (std::uint64_t s = seed; s < seed + seeds; ++s) {
      GradCheckResult r = run_gradcheck(c, s, tolerance);
      r.detail += " (seed " + std::to_string(s) + ")";
      if (s == seed || rank(r) > rank(worst)) worst = std::move(r);
    }
    char line[200];
    std::snprintf(line, sizeof line, "%s %-36s max_rel_error=%.3e  %s\n",
                  worst.passed ? "PASS" : "FAIL", worst.name.c_str(), worst.max_rel_error,
                  worst.detail.c_str());
    out << line;
    summary.all_passed = summary.all_passed && worst.passed;
    summary.worst.push_back(std::move(worst));
  }
  out << (summary.all_passed ? "all " : "FAILED: not all ") << suite.size()
      << " gradient checks passed over " << seeds << " seeds\n";
  return summary;
}

// ---- plotdata ---------------------------------------------------------------

struct PlotData {
  std::string train_time;       // label,train_seconds,f1
  std::string inference_time;   // label,inference_seconds,f1
  std::string trainable_count;  // label,trainable_params,f1 (ascending count)
};

inline PlotData cmd_plotdata(const std::vector<std::filesystem::path>& reports,
                             const std::filesystem::path& out_dir, std::ostream& out) {
  std::vector<ReportRow> rows;
  std::map<std::string, std::vector<std::string>> sources;
  for (const auto& path : reports) {
    std::ifstream in(path);
    if (!in) throw ValidationError("plotdata: cannot open " + path.string());
    ReportTable t;
    try {
      t = read_report_csv(in);
    } catch (const std::runtime_error& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
    for (auto& r : t.rows) {
      sources[r.label].push_back(path.string());
      rows.push_back(std::move(r));
    }
  }
  std::string dupes;
  for (const auto& [label, files] : sources) {
    if (files.size() > 1) dupes += (dupes.empty() ? "" : ", ") + label;
  }
  if (!dupes.empty()) throw ValidationError("plotdata: duplicate labels: " + dupes);
  for (const auto& r : rows) {
    if (!r.f1 || !r.train_seconds || !r.inference_seconds) {
      throw ValidationError("plotdata: row '" + r.label + "' has no run metrics");
    }
  }

  auto project = [&](const char* column, auto value_of) {
    std::string csv = std::string("label,") + column + ",f1\n";
    for (const auto& r : rows) csv += r.label + "," + value_of(r) + "," + detail::fmt(r.f1, "%.1f") + "\n";
    return csv;
  };
  PlotData d;
  d.train_time = project("train_seconds",
                         [](const ReportRow& r) { return detail::fmt(r.train_seconds, "%.3f"); });
  d.inference_time = project("inference_seconds", [](const ReportRow& r) {
    return detail::fmt(r.inference_seconds, "%.3f");
  });
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return a.trainable_params < b.trainable_params;
  });
  d.trainable_count = project("trainable_params", [](const ReportRow& r) {
    return std::to_string(r.trainable_params);
  });
  detail::write_text_file(out_dir / "fig1a_train_seconds_f1.csv", d.train_time);
  detail::write_text_file(out_dir / "fig1b_inference_seconds_f1.csv", d.inference_time);
  detail::write_text_file(out_dir / "fig1c_trainable_params_f1.csv", d.trainable_count);
  out << "wrote 3 plot tables with " << rows.size() << " rows each to " << out_dir.string()
      << '\n';
  return d;
}

// ---- generate-data ----------------------------------------------------------

inline std::vector<SpanExample> cmd_generate_data(const DatasetParams& params,
                                                  const std::filesystem::path& path,
                                                  std::ostream& out) {
  auto data = generate_dataset(params);
  std::ostringstream text;
  save_dataset(text, data);
  detail::write_text_file(path, text.str());
  std::size_t unanswerable = 0;
  for (const auto& ex : data) unanswerable += ex.gold.is_null() ? 1 : 0;
  out << "wrote " << data.size() << " examples (" << unanswerable << " unanswerable) to "
      << path.string() << '\n';
  return data;
}

}  // namespace bertpe
