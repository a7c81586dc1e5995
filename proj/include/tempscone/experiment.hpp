#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tempscone/config.hpp"
#include "tempscone/metrics.hpp"
#include "tempscone/trainer.hpp"

namespace tempscone {

/// Outcome of one (method, seed) run.
struct CellResult {
  Method method = Method::TempSconeATC;
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> records;
  bool ok = false;
  std::string error;  // set when ok is false
};

/// Runs every (method, seed) cell of the spec, methods outer, seeds inner.
/// Cells are independent, so `jobs > 1` runs them on worker threads without
/// changing any result. Failures are captured per cell, not thrown.
std::vector<CellResult> run_cells(const ExperimentSpec& spec, int jobs = 1);

/// Long format: method, seed, then the metrics columns. One row per
/// successful cell and timestep.
std::string long_csv(const std::vector<CellResult>& cells);

/// Per method and timestep, the mean over successful seeds of every metric
/// column: method, t, num_seeds, then the remaining metrics columns.
std::string summary_csv(const std::vector<CellResult>& cells);

/// One JSON object per line, one line per timestep.
std::string records_jsonl(const CellResult& cell);

/// Writes `content` to a sibling temporary file, then renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Writes metrics.csv, summary.csv, config.ini and runs/*.jsonl under
/// spec.output_dir, honouring spec.emit. Returns the files written.
std::vector<std::filesystem::path> write_outputs(const ExperimentSpec& spec,
                                                 const std::vector<CellResult>& cells);

/// Runs the theory sweep and writes theory.csv under `out_dir`. Returns true
/// iff every property passed.
bool run_theory_sweep(const std::filesystem::path& out_dir, std::uint64_t seed,
                      std::string* table = nullptr);

}  // namespace tempscone
