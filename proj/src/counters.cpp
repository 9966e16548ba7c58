#include "ropsig/counters.hpp"

namespace ropsig {

Counter Counter::sampling(std::uint64_t threshold) {
  if (threshold == 0) throw InvalidThreshold();
  return Counter{threshold};
}

bool Counter::increment() noexcept {
  ++raw_;
  if (threshold_ && !signalled_ && raw_ == *threshold_) {
    signalled_ = true;
    return true;
  }
  return false;
}

void Counter::reset(std::uint64_t new_threshold) {
  if (new_threshold == 0) throw InvalidThreshold();
  threshold_ = new_threshold;
  reset();
}

CounterBank::CounterBank(std::uint64_t threshold)
    : mispred_ret_(Counter::sampling(threshold)) {}

bool CounterBank::record(EventKind kind) noexcept {
  switch (kind) {
    case EventKind::Instr:
      return instr_.increment();
    case EventKind::Ret:
      return ret_.increment();
    case EventKind::MispredRet:
      return mispred_ret_.increment();
  }
  return false;
}

void CounterBank::reset(std::uint64_t new_threshold) {
  mispred_ret_.reset(new_threshold);
  instr_.reset();
  ret_.reset();
}

}  // namespace ropsig
