#pragma once

#include <filesystem>
#include <string>

#include "synmrc/harness.hpp"

namespace synmrc {

/// Writes into `dir`:
///   table.csv     one row per condition x split x seed plus an aggregate row
///   verdicts.csv  directional comparisons with the rows they cite
///   series.csv    plot-ready (x, mean F1) points
///   report.json   all of the above plus the run ids behind every aggregate
/// Nothing time-dependent is written, so a rerun reproduces the files.
void emit_reports(const ComparisonReport& report, const std::filesystem::path& dir);

std::string table_csv(const ComparisonReport& report);
std::string verdicts_csv(const ComparisonReport& report);
std::string series_csv(const ComparisonReport& report);
std::string report_json(const ComparisonReport& report);

/// Rebuilds a report from `dir/report.json`, reloading every run record from
/// `runs_dir`, so aggregates are recomputed from persisted runs.
ComparisonReport load_report(const std::filesystem::path& dir, const std::filesystem::path& runs_dir);

}  // namespace synmrc
