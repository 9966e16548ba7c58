#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "ropsig/counters.hpp"
#include "ropsig/ras.hpp"
#include "ropsig/trace.hpp"

namespace ropsig {

/// Detection thresholds. t_m is the monitor interval length in mispredicted
/// returns; t_i is the assumed maximum gadget length in instructions.
struct DetectorConfig {
  std::uint32_t t_m = 6;
  std::uint32_t t_i = 6;
  /// Per-process accumulation across context switches. When false the
  /// counters keep running across switches and every process shares one
  /// interval stream.
  bool table_enabled = true;

  /// Throws std::invalid_argument if t_m or t_i is zero.
  void validate() const;
};

/// Microarchitectural simulation knobs, independent of the detection rule.
struct SimOptions {
  std::size_t ras_capacity = ReturnAddressStack::kDefaultCapacity;
  bool flush_ras_on_switch = false;
  std::uint32_t kernel_base = kDefaultKernelBase;
};

/// Both signature predicates over one complete interval:
/// n_r == t_m and n_i <= t_i * t_m.
constexpr bool signature_check(std::uint64_t n_i, std::uint64_t n_r,
                               const DetectorConfig& cfg) noexcept {
  return n_r == cfg.t_m &&
         n_i <= std::uint64_t{cfg.t_i} * std::uint64_t{cfg.t_m};
}

/// Lookup-table row: one byte per monitored event. Instruction and return
/// counts saturate at 255; the mispredicted-return count never exceeds t_m.
struct ProcessEntry {
  std::uint8_t n_i = 0;
  std::uint8_t n_r = 0;
  std::uint8_t n_m = 0;

  void accumulate(const CounterReading& r) noexcept {
    n_i = saturating_add(n_i, r.n_i);
    n_r = saturating_add(n_r, r.n_r);
    n_m = saturating_add(n_m, r.n_m);
  }

  CounterReading counts() const noexcept { return {n_i, n_r, n_m}; }

  /// A saturated n_i reads 255, so the instruction bound must stay below it
  /// for saturation to be indistinguishable from "too many".
  static bool supports(const DetectorConfig& cfg) noexcept {
    return std::uint64_t{cfg.t_i} * cfg.t_m < 255;
  }

 private:
  static std::uint8_t saturating_add(std::uint8_t a, std::uint64_t b) noexcept {
    return static_cast<std::uint8_t>(
        std::min<std::uint64_t>(std::uint64_t{a} + b, 255));
  }
};
static_assert(sizeof(ProcessEntry) == 3);

/// Unbounded counterpart of ProcessEntry, used to check that 8-bit
/// saturation never changes a verdict.
struct WideProcessEntry {
  CounterReading totals;

  void accumulate(const CounterReading& r) noexcept {
    totals.n_i += r.n_i;
    totals.n_r += r.n_r;
    totals.n_m += r.n_m;
  }

  CounterReading counts() const noexcept { return totals; }

  static bool supports(const DetectorConfig&) noexcept { return true; }
};

/// Per-process partial interval state carried across context switches.
template <class Entry>
class BasicProcessTable {
 public:
  /// Find-or-create the entry for `pid` and add `reading` into it.
  const Entry& accumulate(ProcessId pid, const CounterReading& reading) {
    auto& e = entries_[pid];
    e.accumulate(reading);
    return e;
  }

  const Entry* find(ProcessId pid) const {
    const auto it = entries_.find(pid);
    return it == entries_.end() ? nullptr : &it->second;
  }

  void erase(ProcessId pid) { entries_.erase(pid); }

  std::size_t size() const noexcept { return entries_.size(); }

  const std::map<ProcessId, Entry>& entries() const noexcept {
    return entries_;
  }

 private:
  std::map<ProcessId, Entry> entries_;
};

using ProcessTable = BasicProcessTable<ProcessEntry>;

enum class CloseReason { Overflow, Switch, EndOfTrace };

std::string_view to_string(CloseReason reason) noexcept;

struct IntervalRecord {
  ProcessId pid;
  std::uint64_t index = 0;  // 1-based, per process
  CounterReading counts;
  CloseReason closed_by = CloseReason::Overflow;

  friend bool operator==(const IntervalRecord&, const IntervalRecord&) = default;
};

struct RopDetected {
  ProcessId pid;
  PrivilegeLevel level = PrivilegeLevel::User;
  std::uint64_t interval_index = 0;
  std::uint64_t n_i = 0;
  std::uint64_t n_r = 0;
  Address trigger_pc;

  friend bool operator==(const RopDetected&, const RopDetected&) = default;
};

struct DetectionReport {
  /// Empty means the run was clean.
  std::vector<RopDetected> detections;
  std::vector<IntervalRecord> intervals;

  bool clean() const noexcept { return detections.empty(); }
};

/// Streaming detector. Feed events in trace order, then call finish().
///
/// Each counted event first updates the shared RAS, then the counter bank.
/// When the mispredicted-return counter overflows, the current process's
/// totals (bank plus any table residue) are checked against the signature.
/// A match terminates monitoring of that process; a miss discards the
/// interval and re-arms the bank with t_m. On a context switch the bank is
/// folded into the outgoing process's table entry and re-armed for the
/// incoming process with t_m minus whatever that process has already
/// accumulated.
template <class Entry>
class BasicDetector {
 public:
  BasicDetector(const DetectorConfig& cfg, const SimOptions& opts,
                ProcessId initial);

  void feed(const TraceEvent& ev);

  /// Exit-side bookkeeping for the current process, then entry-side
  /// bookkeeping for `next`.
  void handle_switch(ProcessId next);

  /// Closes open partial intervals (never checked) and returns the report.
  DetectionReport finish() &&;

  ProcessId current() const noexcept { return current_; }
  const CounterBank& bank() const noexcept { return bank_; }
  const BasicProcessTable<Entry>& table() const noexcept { return table_; }
  const ReturnAddressStack& ras() const noexcept { return ras_; }
  const DetectionReport& report() const noexcept { return report_; }
  bool terminated(ProcessId pid) const { return terminated_.contains(pid); }

 private:
  void count(Address pc, bool is_return, bool mispredicted);
  void on_overflow(Address trigger_pc);
  void close_interval(ProcessId pid, const CounterReading& counts,
                      CloseReason reason);
  std::uint64_t next_index(ProcessId pid) const;
  CounterReading totals_for(ProcessId pid) const;

  DetectorConfig cfg_;
  SimOptions opts_;
  ReturnAddressStack ras_;
  CounterBank bank_;
  BasicProcessTable<Entry> table_;
  ProcessId current_;
  Address last_mispredict_pc_;
  std::set<ProcessId> terminated_;
  std::map<ProcessId, std::uint64_t> closed_count_;
  DetectionReport report_;
};

extern template class BasicDetector<ProcessEntry>;
extern template class BasicDetector<WideProcessEntry>;

using Detector = BasicDetector<ProcessEntry>;
using WideDetector = BasicDetector<WideProcessEntry>;

/// Runs a whole trace with the 3-byte table entries.
DetectionReport run(const Trace& trace, const DetectorConfig& cfg = {},
                    const SimOptions& opts = {});

/// Same as run() but with unbounded table entries.
DetectionReport run_wide(const Trace& trace, const DetectorConfig& cfg = {},
                         const SimOptions& opts = {});

/// Machine-readable JSON rendering of a report.
void write_report_json(const DetectionReport& report, std::ostream& out);

}  // namespace ropsig
