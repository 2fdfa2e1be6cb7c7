#pragma once

// Desk-scale reproduction scripts: each one generates data, trains, evaluates and checks its
// thresholds by driving the command-line front end.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace scr {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;  // expected vs actual
};

struct ExperimentReport {
  std::string script;
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  bool passed() const;
};

struct ReproOptions {
  std::filesystem::path work_dir = "repro_work";
  unsigned threads = 1;
  std::ostream* log = nullptr;  // command output; null discards it
};

const std::vector<std::string>& experiment_names();
/// Throws InvalidArgument for an unknown script name.
ExperimentReport run_experiment(const std::string& name, const ReproOptions& options);

/// Writes <work_dir>/<script>/summary.txt and returns the same text.
std::string format_report(const ExperimentReport& report);

}  // namespace scr
