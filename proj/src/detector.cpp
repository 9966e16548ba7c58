#include "ropsig/detector.hpp"

#include <string>

namespace ropsig {

void DetectorConfig::validate() const {
  if (t_m == 0) throw std::invalid_argument("t_m must be >= 1");
  if (t_i == 0) throw std::invalid_argument("t_i must be >= 1");
}

std::string_view to_string(CloseReason reason) noexcept {
  switch (reason) {
    case CloseReason::Overflow:
      return "overflow";
    case CloseReason::Switch:
      return "switch";
    case CloseReason::EndOfTrace:
      return "end_of_trace";
  }
  return "?";
}

template <class Entry>
BasicDetector<Entry>::BasicDetector(const DetectorConfig& cfg,
                                    const SimOptions& opts, ProcessId initial)
    : cfg_(cfg),
      opts_(opts),
      ras_(opts.ras_capacity),
      bank_((cfg.validate(), cfg.t_m)),
      current_(initial) {
  if (!Entry::supports(cfg_)) {
    throw std::invalid_argument(
        "t_i * t_m = " + std::to_string(std::uint64_t{cfg_.t_i} * cfg_.t_m) +
        " does not fit the 8-bit table entry");
  }
}

template <class Entry>
void BasicDetector<Entry>::feed(const TraceEvent& ev) {
  if (const auto* sw = std::get_if<SwitchEvent>(&ev)) {
    handle_switch(sw->next);
    return;
  }
  // A terminated process no longer retires instructions.
  if (terminated(current_)) return;

  if (const auto* plain = std::get_if<PlainEvent>(&ev)) {
    count(plain->pc, false, false);
  } else if (const auto* call = std::get_if<CallEvent>(&ev)) {
    ras_.on_call(call->return_addr);
    count(call->pc, false, false);
  } else if (const auto* ret = std::get_if<ReturnEvent>(&ev)) {
    const auto outcome = ras_.on_return(ret->actual_target);
    count(ret->pc, true, outcome == PredictionOutcome::Mispredicted);
  }
}

template <class Entry>
void BasicDetector<Entry>::count(Address pc, bool is_return,
                                 bool mispredicted) {
  bank_.record(EventKind::Instr);
  if (is_return) bank_.record(EventKind::Ret);
  if (!mispredicted) return;
  last_mispredict_pc_ = pc;
  if (bank_.record(EventKind::MispredRet)) on_overflow(pc);
}

template <class Entry>
CounterReading BasicDetector<Entry>::totals_for(ProcessId pid) const {
  Entry total{};
  if (cfg_.table_enabled) {
    if (const auto* e = table_.find(pid)) total = *e;
  }
  total.accumulate(bank_.read());
  return total.counts();
}

template <class Entry>
void BasicDetector<Entry>::on_overflow(Address trigger_pc) {
  const auto totals = totals_for(current_);
  if (totals.n_m != cfg_.t_m) {
    throw std::logic_error("overflow with n_m != t_m");
  }
  const auto index = next_index(current_);
  close_interval(current_, totals, CloseReason::Overflow);
  if (signature_check(totals.n_i, totals.n_r, cfg_)) {
    report_.detections.push_back(
        RopDetected{current_, classify_address(trigger_pc, opts_.kernel_base),
                    index, totals.n_i, totals.n_r, trigger_pc});
    terminated_.insert(current_);
  }
  table_.erase(current_);
  bank_.reset(cfg_.t_m);
}

template <class Entry>
void BasicDetector<Entry>::handle_switch(ProcessId next) {
  if (opts_.flush_ras_on_switch) ras_.clear();

  if (!cfg_.table_enabled) {
    // Counters are not virtualized per process: the interval simply keeps
    // accumulating across the switch.
    current_ = next;
    return;
  }

  if (!terminated(current_)) {
    const auto& entry = table_.accumulate(current_, bank_.read());
    const auto c = entry.counts();
    if (c.n_m > cfg_.t_m) {
      throw std::logic_error("table entry n_m exceeds t_m");
    }
    if (c.n_m == cfg_.t_m) {
      // The sampling overflow normally closes the interval first, so this
      // path only runs if an overflow was missed.
      const auto index = next_index(current_);
      close_interval(current_, c, CloseReason::Switch);
      if (signature_check(c.n_i, c.n_r, cfg_)) {
        report_.detections.push_back(RopDetected{
            current_,
            classify_address(last_mispredict_pc_, opts_.kernel_base), index,
            c.n_i, c.n_r, last_mispredict_pc_});
        terminated_.insert(current_);
      }
      table_.erase(current_);
    }
  }

  current_ = next;
  std::uint64_t threshold = cfg_.t_m;
  if (const auto* e = table_.find(next)) threshold -= e->counts().n_m;
  bank_.reset(threshold);
}

template <class Entry>
DetectionReport BasicDetector<Entry>::finish() && {
  std::map<ProcessId, CounterReading> open;
  if (cfg_.table_enabled) {
    for (const auto& [pid, entry] : table_.entries()) {
      open[pid] = entry.counts();
    }
  }
  if (!terminated(current_)) open[current_] = totals_for(current_);
  for (const auto& [pid, counts] : open) {
    if (counts.n_i > 0 && !terminated(pid)) {
      close_interval(pid, counts, CloseReason::EndOfTrace);
    }
  }
  return std::move(report_);
}

template <class Entry>
void BasicDetector<Entry>::close_interval(ProcessId pid,
                                          const CounterReading& counts,
                                          CloseReason reason) {
  report_.intervals.push_back(
      IntervalRecord{pid, next_index(pid), counts, reason});
  ++closed_count_[pid];
}

template <class Entry>
std::uint64_t BasicDetector<Entry>::next_index(ProcessId pid) const {
  const auto it = closed_count_.find(pid);
  return (it == closed_count_.end() ? 0 : it->second) + 1;
}

template class BasicDetector<ProcessEntry>;
template class BasicDetector<WideProcessEntry>;

namespace {

template <class Entry>
DetectionReport run_impl(const Trace& trace, const DetectorConfig& cfg,
                         const SimOptions& opts) {
  BasicDetector<Entry> detector(cfg, opts, trace.initial_process);
  for (const auto& ev : trace.events) detector.feed(ev);
  return std::move(detector).finish();
}

}  // namespace

DetectionReport run(const Trace& trace, const DetectorConfig& cfg,
                    const SimOptions& opts) {
  return run_impl<ProcessEntry>(trace, cfg, opts);
}

DetectionReport run_wide(const Trace& trace, const DetectorConfig& cfg,
                         const SimOptions& opts) {
  return run_impl<WideProcessEntry>(trace, cfg, opts);
}

}  // namespace ropsig
