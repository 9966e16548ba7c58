#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ropsig/detector.hpp"
#include "ropsig/harness.hpp"
#include "ropsig/workload.hpp"

namespace ropsig {

/// Exit codes shared by every subcommand.
inline constexpr int kExitClean = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitDetected = 2;

/// JSON spec documents use the field names of the spec structs. Missing
/// fields keep their defaults; unknown fields are rejected.
BenignSpec benign_spec_from_json(std::string_view json_text);
RopSpec rop_spec_from_json(std::string_view json_text);

int cmd_gen_normal(const BenignSpec& spec, std::ostream& out, std::ostream& err);
int cmd_gen_rop(const RopSpec& spec, std::ostream& out, std::ostream& err);

/// Interleaves the given trace files. `schedule` entries are "pid:count";
/// when empty, a round-robin schedule with `quantum` events is used.
int cmd_interleave(const std::vector<std::string>& trace_paths,
                   const std::vector<std::string>& schedule, std::size_t quantum,
                   std::ostream& out, std::ostream& err);

/// Writes the JSON report to `out`. Returns kExitClean, kExitDetected, or
/// kExitError.
int cmd_detect(const std::string& trace_path, const DetectorConfig& cfg,
               const SimOptions& opts, std::ostream& out, std::ostream& err);

/// One CSV row per labelled trace file in `corpus_dir`, sorted by file name.
int cmd_scatter(const std::string& corpus_dir, const DetectorConfig& cfg,
                const SimOptions& opts, std::ostream& out, std::ostream& err);

/// Runs the sweep and writes the per-row CSV to `rows_path` and the FP/FN
/// summary to `summary_path`.
int cmd_sweep(const std::string& spec_path, const std::string& rows_path,
              const std::string& summary_path, std::ostream& err);

}  // namespace ropsig
