#include "ropsig/workload.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "ropsig/ras.hpp"

namespace ropsig {

namespace {

constexpr Address kMainBase{0x08048000u};
constexpr Address kLibraryBase{0x08050000u};
constexpr std::uint32_t kFunctionStride = 0x400;
constexpr std::uint32_t kFunctionCount = 64;
constexpr Address kRecursiveBase{0x08070000u};
constexpr Address kHelperBase{0x08078000u};
constexpr Address kUserGadgetBase{0xb7e00000u};
constexpr Address kKernelGadgetBase{0xc1000000u};
constexpr std::uint32_t kGadgetSpan = 0x000fffff;
constexpr std::uint32_t kCallSize = 5;

using Rng = std::mt19937_64;

std::uint64_t uniform(Rng& rng, std::uint64_t lo, std::uint64_t hi) {
  return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
}

bool chance(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

struct Frame {
  Address base;
  std::uint32_t offset = 0;

  Address pc() const { return base + offset; }
};

/// Emits plausible straight-line code, calls, and returns into an event
/// vector while tracking the program's own call stack.
class CodeEmitter {
 public:
  CodeEmitter(Rng& rng, std::vector<TraceEvent>& out)
      : rng_(rng), out_(out), cur_{kMainBase, 0} {}

  std::uint64_t emitted() const { return emitted_; }

  void plain() {
    out_.push_back(PlainEvent{cur_.pc()});
    cur_.offset += static_cast<std::uint32_t>(uniform(rng_, 1, 4));
    ++emitted_;
  }

  void plains(std::uint64_t n) {
    for (std::uint64_t i = 0; i < n; ++i) plain();
  }

  void call(Frame callee) {
    const Address pc = cur_.pc();
    cur_.offset += kCallSize;
    stack_.push_back(cur_);
    out_.push_back(CallEvent{pc, callee.base, cur_.pc()});
    cur_ = callee;
    ++emitted_;
  }

  void ret() {
    const Address pc = cur_.pc();
    cur_ = stack_.back();
    stack_.pop_back();
    out_.push_back(ReturnEvent{pc, cur_.pc()});
    ++emitted_;
  }

  /// A return with nothing left on the program's stack, e.g. a longjmp-style
  /// transfer. Always mispredicted when the RAS is empty.
  void unmatched_ret(Address target) {
    out_.push_back(ReturnEvent{cur_.pc(), target});
    cur_ = Frame{target, 0};
    ++emitted_;
  }

  std::size_t depth() const { return stack_.size(); }

  Frame random_function() {
    const auto f = static_cast<std::uint32_t>(uniform(rng_, 0, kFunctionCount - 1));
    return Frame{kLibraryBase + f * kFunctionStride, 0};
  }

  /// Roughly `budget` instructions of properly nested calls and returns,
  /// never nesting deeper than `max_depth`. Returns to the starting depth.
  void matched_code(std::uint64_t budget, std::size_t max_depth) {
    const auto start_depth = depth();
    const auto start = emitted_;
    auto used = [&] { return emitted_ - start; };
    if (max_depth > 0 && budget >= 3) call(random_function());
    while (used() < budget || depth() > start_depth) {
      const auto open = depth() - start_depth;
      const auto remaining = budget > used() ? budget - used() : 0;
      if (open > 0 && (remaining <= open || chance(rng_, 0.22))) {
        ret();
      } else if (open < max_depth && remaining > open + 2 &&
                 chance(rng_, 0.25)) {
        call(random_function());
      } else {
        const auto run = std::min<std::uint64_t>(
            uniform(rng_, 1, 6), std::max<std::uint64_t>(remaining - open, 1));
        plains(run);
      }
    }
  }

  /// Recursion `depth` frames deep, then an unwind with a gap drawn from
  /// `gaps` before every return.
  void recursion_burst(std::size_t frames, const GapProfile& gaps) {
    for (std::size_t d = 0; d < frames; ++d) {
      plains(uniform(rng_, 0, 2));
      call(Frame{kRecursiveBase, 0});
    }
    plains(uniform(rng_, 1, 4));
    for (std::size_t d = 0; d < frames; ++d) {
      plains(uniform(rng_, gaps.min_gap, gaps.max_gap));
      ret();
    }
  }

  /// One call/return pair whose return is predicted.
  void separator() {
    call(Frame{kHelperBase, 0});
    plain();
    ret();
  }

 private:
  Rng& rng_;
  std::vector<TraceEvent>& out_;
  Frame cur_;
  std::vector<Frame> stack_;
  std::uint64_t emitted_ = 0;
};

std::uint64_t min_burst_cost(std::size_t frames, const GapProfile& gaps) {
  // calls + bottom + returns + gaps + trailing separator
  return 2 * frames + 1 + frames * gaps.min_gap + 3;
}

void check_benign_spec(const BenignSpec& spec) {
  if (spec.ras_capacity == 0) throw GenerationError("ras_capacity must be >= 1");
  if (spec.gap_profile.min_gap > spec.gap_profile.max_gap) {
    throw GenerationError("gap_profile min_gap > max_gap");
  }
  if (spec.mispredict_burst_count > 0) {
    if (spec.min_burst_chain == 0) {
      throw GenerationError("min_burst_chain must be >= 1");
    }
    if (spec.min_burst_chain > spec.max_benign_mispredict_chain) {
      throw GenerationError("min_burst_chain exceeds max_benign_mispredict_chain");
    }
  }
}

}  // namespace

Trace gen_benign(const BenignSpec& spec) {
  check_benign_spec(spec);
  Rng rng(spec.seed);

  std::vector<std::uint32_t> chains(spec.mispredict_burst_count);
  for (auto& k : chains) {
    k = static_cast<std::uint32_t>(uniform(rng, spec.min_burst_chain,
                                           spec.max_benign_mispredict_chain));
  }
  std::vector<std::uint64_t> min_costs;
  for (const auto k : chains) {
    min_costs.push_back(min_burst_cost(spec.ras_capacity + k, spec.gap_profile));
  }
  const auto reserved =
      std::accumulate(min_costs.begin(), min_costs.end(), std::uint64_t{0});
  if (reserved > spec.total_instructions) {
    throw GenerationError("total_instructions " +
                          std::to_string(spec.total_instructions) +
                          " too small for " + std::to_string(chains.size()) +
                          " bursts (needs at least " + std::to_string(reserved) +
                          ")");
  }

  Trace trace{spec.pid, {}};
  trace.events.reserve(spec.total_instructions + spec.total_instructions / 8);
  CodeEmitter code(rng, trace.events);
  const auto max_depth = std::min<std::size_t>(spec.max_call_depth, spec.ras_capacity);

  auto still_reserved = reserved;
  for (std::size_t j = 0; j < chains.size(); ++j) {
    const auto used = code.emitted() + still_reserved;
    const auto spare =
        spec.total_instructions > used ? spec.total_instructions - used : 0;
    const auto slots = chains.size() - j + 1;
    const auto filler = spare / slots;
    code.matched_code(uniform(rng, filler / 2, filler), max_depth);
    code.recursion_burst(spec.ras_capacity + chains[j], spec.gap_profile);
    code.separator();
    still_reserved -= min_costs[j];
  }
  if (code.emitted() < spec.total_instructions) {
    code.matched_code(spec.total_instructions - code.emitted(), max_depth);
  }

  const auto runs = mispredict_runs(replay_returns(trace, spec.ras_capacity));
  if (!std::equal(runs.begin(), runs.end(), chains.begin(), chains.end())) {
    throw std::logic_error("benign generator produced an unexpected misprediction pattern");
  }
  return trace;
}

RopLayout gen_rop_layout(const RopSpec& spec) {
  if (spec.chain_length == 0) throw GenerationError("chain_length must be >= 1");
  std::vector<std::uint32_t> sizes = spec.gadget_sizes;
  Rng rng(spec.seed);
  if (sizes.empty()) {
    if (spec.min_gadget_size == 0 || spec.min_gadget_size > spec.max_gadget_size) {
      throw GenerationError("invalid gadget size range");
    }
    sizes.resize(spec.chain_length);
    for (auto& s : sizes) {
      s = static_cast<std::uint32_t>(
          uniform(rng, spec.min_gadget_size, spec.max_gadget_size));
    }
  } else if (sizes.size() != spec.chain_length) {
    throw GenerationError("gadget_sizes has " + std::to_string(sizes.size()) +
                          " entries, chain_length is " +
                          std::to_string(spec.chain_length));
  }
  if (std::find(sizes.begin(), sizes.end(), 0u) != sizes.end()) {
    throw GenerationError("gadget size must be >= 1");
  }

  RopLayout layout;
  layout.trace.initial_process = spec.pid;
  auto& events = layout.trace.events;
  CodeEmitter code(rng, events);
  code.matched_code(spec.prologue, 4);

  for (std::uint32_t j = 0; j < spec.alignment_offset; ++j) {
    code.separator();
    code.unmatched_ret(kMainBase + static_cast<std::uint32_t>(uniform(rng, 0x100, 0x3000)));
  }

  const Address region = spec.address_region == PrivilegeLevel::Kernel
                             ? kKernelGadgetBase
                             : kUserGadgetBase;
  auto gadget_address = [&] {
    return region + static_cast<std::uint32_t>(uniform(rng, 0, kGadgetSpan));
  };

  layout.chain_begin = events.size();
  Address gadget = gadget_address();
  for (const auto size : sizes) {
    for (std::uint32_t k = 0; k + 1 < size; ++k) {
      events.push_back(PlainEvent{gadget + k});
    }
    const Address next = gadget_address();
    events.push_back(ReturnEvent{gadget + (size - 1), next});
    gadget = next;
  }
  layout.chain_end = events.size();

  // Every gadget return must mispredict, whatever capacity the RAS has.
  ReturnAddressStack ras(1);
  std::uint32_t chain_mispredicts = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (const auto* c = std::get_if<CallEvent>(&events[i])) {
      ras.on_call(c->return_addr);
    } else if (const auto* r = std::get_if<ReturnEvent>(&events[i])) {
      const auto o = ras.on_return(r->actual_target);
      if (i >= layout.chain_begin && o == PredictionOutcome::Mispredicted) {
        ++chain_mispredicts;
      }
    }
  }
  if (chain_mispredicts != spec.chain_length) {
    throw std::logic_error("ROP generator produced a predicted gadget return");
  }
  return layout;
}

Trace gen_rop(const RopSpec& spec) { return gen_rop_layout(spec).trace; }

InterleavePart to_part(const Trace& trace) {
  return InterleavePart{trace.initial_process, trace.events, std::nullopt};
}

InterleavePart to_part(const RopLayout& layout) {
  return InterleavePart{layout.trace.initial_process, layout.trace.events,
                        std::make_pair(layout.chain_begin, layout.chain_end)};
}

Trace interleave(const InterleaveSpec& spec) {
  std::map<ProcessId, const InterleavePart*> by_pid;
  for (const auto& part : spec.parts) {
    if (!by_pid.emplace(part.pid, &part).second) {
      throw GenerationError("duplicate part for pid " + std::to_string(part.pid.value));
    }
    for (const auto& ev : part.events) {
      if (std::holds_alternative<SwitchEvent>(ev)) {
        throw GenerationError("part for pid " + std::to_string(part.pid.value) +
                              " contains a context switch");
      }
    }
  }
  if (spec.schedule.empty()) throw GenerationError("empty schedule");

  std::map<ProcessId, std::size_t> cursor;
  std::map<ProcessId, std::vector<std::size_t>> cuts;
  Trace out{spec.schedule.front().pid, {}};
  std::optional<ProcessId> running;
  for (const auto& q : spec.schedule) {
    const auto it = by_pid.find(q.pid);
    if (it == by_pid.end()) {
      throw GenerationError("schedule names unknown pid " + std::to_string(q.pid.value));
    }
    if (q.events == 0) throw GenerationError("zero-length quantum");
    const auto& events = it->second->events;
    auto& pos = cursor[q.pid];
    if (pos + q.events > events.size()) {
      throw GenerationError("schedule overruns part for pid " + std::to_string(q.pid.value));
    }
    if (running && *running != q.pid) out.events.push_back(SwitchEvent{q.pid});
    running = q.pid;
    if (pos > 0) cuts[q.pid].push_back(pos);
    out.events.insert(out.events.end(), events.begin() + static_cast<std::ptrdiff_t>(pos),
                      events.begin() + static_cast<std::ptrdiff_t>(pos + q.events));
    pos += q.events;
  }
  for (const auto& part : spec.parts) {
    if (cursor[part.pid] != part.events.size()) {
      throw GenerationError("schedule does not cover part for pid " +
                            std::to_string(part.pid.value));
    }
  }

  if (spec.split_rop) {
    bool split = false;
    for (const auto& part : spec.parts) {
      if (!part.chain) continue;
      for (const auto c : cuts[part.pid]) {
        split = split || (c > part.chain->first && c < part.chain->second);
      }
    }
    if (!split) throw GenerationError("split_rop set but no chain is split by the schedule");
  }
  return out;
}

std::vector<Quantum> round_robin_schedule(const std::vector<InterleavePart>& parts,
                                          std::size_t quantum) {
  if (quantum == 0) throw GenerationError("quantum must be >= 1");
  std::vector<std::size_t> left;
  for (const auto& p : parts) left.push_back(p.events.size());
  std::vector<Quantum> schedule;
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (left[i] == 0) continue;
      const auto n = std::min(quantum, left[i]);
      schedule.push_back(Quantum{parts[i].pid, n});
      left[i] -= n;
      progress = true;
    }
  }
  return schedule;
}

std::vector<Quantum> split_chain_schedule(const std::vector<InterleavePart>& parts,
                                          ProcessId rop_pid, std::size_t pieces,
                                          std::uint64_t seed) {
  if (pieces < 2) throw GenerationError("a split needs at least 2 pieces");
  Rng rng(seed);

  auto chunk_sizes = [](std::size_t total, std::set<std::size_t> cut_set) {
    std::vector<std::size_t> sizes;
    std::size_t prev = 0;
    cut_set.insert(total);
    for (const auto c : cut_set) {
      sizes.push_back(c - prev);
      prev = c;
    }
    return sizes;
  };

  std::vector<std::vector<std::size_t>> chunks(parts.size());
  bool found = false;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& part = parts[i];
    const auto n = part.events.size();
    std::set<std::size_t> cut_set;
    if (part.pid == rop_pid) {
      found = true;
      if (!part.chain || part.chain->second - part.chain->first < 2) {
        throw GenerationError("ROP part has no splittable chain");
      }
      cut_set.insert(uniform(rng, part.chain->first + 1, part.chain->second - 1));
      if (n < pieces) throw GenerationError("ROP part too short for the requested pieces");
    }
    const auto target = std::min(pieces, n) - (n == 0 ? 0 : 1);
    while (n > 1 && cut_set.size() < target) cut_set.insert(uniform(rng, 1, n - 1));
    chunks[i] = n == 0 ? std::vector<std::size_t>{} : chunk_sizes(n, cut_set);
  }
  if (!found) throw GenerationError("no part for the ROP pid");

  std::vector<Quantum> schedule;
  for (std::size_t round = 0; round < pieces; ++round) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (round < chunks[i].size()) schedule.push_back(Quantum{parts[i].pid, chunks[i][round]});
    }
  }
  return schedule;
}

}  // namespace ropsig
