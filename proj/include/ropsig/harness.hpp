#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ropsig/detector.hpp"
#include "ropsig/workload.hpp"

namespace ropsig {

enum class TraceLabel { Benign, Rop };

std::string_view to_string(TraceLabel label) noexcept;

/// Reads a `# label: benign|rop` comment from the leading comment block of
/// a trace file.
std::optional<TraceLabel> read_label(std::string_view text);

/// One point of the (smallest n_r, matching n_i) scatter.
struct ScatterPoint {
  std::string trace_id;
  TraceLabel label = TraceLabel::Benign;
  /// Absent when no interval closed on overflow.
  std::optional<std::uint64_t> min_n_r;
  std::optional<std::uint64_t> paired_n_i;
  std::size_t overflow_intervals = 0;
  bool detected = false;
};

/// Smallest n_r over overflow-closed intervals, ties broken by smaller n_i.
ScatterPoint scatter_point(std::string trace_id, TraceLabel label,
                           const DetectionReport& report);

/// min_n_r == t_m and paired_n_i <= t_i * t_m.
bool in_detection_region(const ScatterPoint& p, const DetectorConfig& cfg);

void write_scatter_csv(std::span<const ScatterPoint> points,
                       const DetectorConfig& cfg, std::ostream& out);

/// Quotes a CSV field when it contains a separator, quote, or newline.
std::string csv_field(std::string_view s);

/// The benign corpus used by the experiments: alternating long-gap traces
/// (bursts up to 10 mispredicts, unwind gaps 7..20) and tight-gap traces
/// (bursts up to 5 mispredicts, unwind gaps 0..3).
BenignSpec corpus_benign_spec(std::size_t index, std::uint64_t base_seed,
                              std::uint64_t total_instructions = 100'000);

/// A corpus ROP payload: gadget sizes 2..6 behind a short prologue.
RopSpec corpus_rop_spec(std::uint32_t chain_length, std::uint32_t alignment_offset,
                        std::uint64_t seed,
                        PrivilegeLevel region = PrivilegeLevel::User);

struct SweepSpec {
  std::vector<std::uint32_t> t_m_values{6};
  std::vector<std::uint32_t> t_i_values{6};
  std::vector<std::uint32_t> g_values{12};
  /// Empty means every offset in 0..t_m-1 for each t_m.
  std::vector<std::uint32_t> alignment_offsets;
  std::size_t benign_count = 20;
  std::uint64_t benign_instructions = 100'000;
  std::vector<std::uint64_t> seeds{1};
  std::size_t ras_capacity = 16;
  std::size_t threads = 0;  // 0 = hardware concurrency
};

/// Parses a JSON sweep spec; throws std::invalid_argument on bad input.
SweepSpec parse_sweep_spec(std::string_view json_text);

struct SweepRow {
  std::uint32_t t_m = 0;
  std::uint32_t t_i = 0;
  TraceLabel label = TraceLabel::Benign;
  std::uint32_t g = 0;  // 0 for benign rows
  std::size_t benign_id = 0;
  std::uint32_t alignment_offset = 0;
  std::uint64_t seed = 0;
  bool detected = false;
  std::optional<std::uint64_t> min_n_r;
  std::optional<std::uint64_t> paired_n_i;
  std::size_t interval_count = 0;
};

struct SweepSummaryRow {
  std::uint32_t t_m = 0;
  std::uint32_t t_i = 0;
  TraceLabel label = TraceLabel::Benign;
  std::uint32_t g = 0;
  std::size_t total = 0;
  /// False positives for benign cells, false negatives for ROP cells.
  std::size_t errors = 0;

  double rate() const { return total == 0 ? 0.0 : double(errors) / double(total); }
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepSummaryRow> summary;
};

/// Rows are sorted by (t_m, t_i, label, g, benign_id, offset, seed).
SweepResult run_sweep(const SweepSpec& spec);

std::vector<SweepSummaryRow> summarize(std::span<const SweepRow> rows);

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out);
void write_summary_csv(std::span<const SweepSummaryRow> rows, std::ostream& out);

}  // namespace ropsig
