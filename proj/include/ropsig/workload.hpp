#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ropsig/trace.hpp"

namespace ropsig {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform range of plain-instruction gaps placed before each return while a
/// recursion burst unwinds.
struct GapProfile {
  std::uint32_t min_gap = 0;
  std::uint32_t max_gap = 3;
};

struct BenignSpec {
  std::uint64_t total_instructions = 100'000;
  std::size_t ras_capacity = 16;
  std::uint32_t max_benign_mispredict_chain = 10;
  /// Lower bound for a burst's mispredicted-return count.
  std::uint32_t min_burst_chain = 1;
  std::uint32_t mispredict_burst_count = 0;
  GapProfile gap_profile{};
  /// Call nesting limit for ordinary code; clamped to ras_capacity.
  std::uint32_t max_call_depth = 6;
  ProcessId pid{1};
  std::uint64_t seed = 0;
};

struct RopSpec {
  /// G, the number of gadgets.
  std::uint32_t chain_length = 12;
  /// Explicit per-gadget instruction counts; drawn from
  /// [min_gadget_size, max_gadget_size] when empty.
  std::vector<std::uint32_t> gadget_sizes;
  std::uint32_t min_gadget_size = 2;
  std::uint32_t max_gadget_size = 6;
  /// Instructions of ordinary code before the payload.
  std::uint64_t prologue = 0;
  /// Mispredicted non-gadget returns emitted right before the chain; each is
  /// preceded by a correctly predicted call/return pair.
  std::uint32_t alignment_offset = 0;
  PrivilegeLevel address_region = PrivilegeLevel::User;
  ProcessId pid{1};
  std::uint64_t seed = 0;
};

/// A generated ROP trace plus the event index range [chain_begin, chain_end)
/// occupied by the gadgets.
struct RopLayout {
  Trace trace;
  std::size_t chain_begin = 0;
  std::size_t chain_end = 0;
};

struct InterleavePart {
  ProcessId pid;
  std::vector<TraceEvent> events;
  /// Gadget range within `events`, if this part carries a ROP chain.
  std::optional<std::pair<std::size_t, std::size_t>> chain;
};

struct Quantum {
  ProcessId pid;
  std::size_t events = 0;
};

struct InterleaveSpec {
  std::vector<InterleavePart> parts;
  std::vector<Quantum> schedule;
  /// Require some quantum boundary to fall strictly inside a chain.
  bool split_rop = false;
};

/// Matched call/return code plus recursion bursts of depth ras_capacity + k
/// whose unwind mispredicts exactly k consecutive returns. Throws
/// GenerationError for infeasible specs.
Trace gen_benign(const BenignSpec& spec);

Trace gen_rop(const RopSpec& spec);
RopLayout gen_rop_layout(const RopSpec& spec);

/// Multi-process trace with a Switch wherever the scheduled process changes.
Trace interleave(const InterleaveSpec& spec);

InterleavePart to_part(const Trace& trace);
InterleavePart to_part(const RopLayout& layout);

/// Cycles through parts in order, `quantum` events at a time.
std::vector<Quantum> round_robin_schedule(
    const std::vector<InterleavePart>& parts, std::size_t quantum);

/// Cuts the part owned by `rop_pid` into `pieces` quanta with at least one
/// cut strictly inside its chain, cuts every other part into `pieces`
/// chunks, and alternates them so benign work runs between chain pieces.
std::vector<Quantum> split_chain_schedule(
    const std::vector<InterleavePart>& parts, ProcessId rop_pid,
    std::size_t pieces, std::uint64_t seed);

}  // namespace ropsig
