#include "ropsig/ras.hpp"

#include <stdexcept>

namespace ropsig {

ReturnAddressStack::ReturnAddressStack(std::size_t capacity)
    : slots_(capacity), top_(capacity == 0 ? 0 : capacity - 1) {
  if (capacity == 0) {
    throw std::invalid_argument("RAS capacity must be positive");
  }
}

void ReturnAddressStack::on_call(Address return_addr) {
  top_ = (top_ + 1) % slots_.size();
  slots_[top_] = return_addr;
  if (depth_ < slots_.size()) ++depth_;
}

PredictionOutcome ReturnAddressStack::on_return(Address actual_target) {
  if (depth_ == 0) return PredictionOutcome::Mispredicted;
  const Address predicted = slots_[top_];
  top_ = (top_ + slots_.size() - 1) % slots_.size();
  --depth_;
  return predicted == actual_target ? PredictionOutcome::Predicted
                                    : PredictionOutcome::Mispredicted;
}

std::optional<Address> ReturnAddressStack::top() const {
  if (depth_ == 0) return std::nullopt;
  return slots_[top_];
}

std::vector<Address> ReturnAddressStack::live_entries() const {
  std::vector<Address> out;
  out.reserve(depth_);
  auto idx = top_;
  for (std::size_t i = 0; i < depth_; ++i) {
    out.push_back(slots_[idx]);
    idx = (idx + slots_.size() - 1) % slots_.size();
  }
  return out;
}

std::vector<PredictionOutcome> replay_returns(const Trace& trace,
                                              std::size_t capacity) {
  ReturnAddressStack ras(capacity);
  std::vector<PredictionOutcome> outcomes;
  for (const auto& ev : trace.events) {
    if (const auto* call = std::get_if<CallEvent>(&ev)) {
      ras.on_call(call->return_addr);
    } else if (const auto* ret = std::get_if<ReturnEvent>(&ev)) {
      outcomes.push_back(ras.on_return(ret->actual_target));
    }
  }
  return outcomes;
}

std::vector<std::size_t> mispredict_runs(
    const std::vector<PredictionOutcome>& outcomes) {
  std::vector<std::size_t> runs;
  std::size_t current = 0;
  for (const auto o : outcomes) {
    if (o == PredictionOutcome::Mispredicted) {
      ++current;
    } else if (current > 0) {
      runs.push_back(current);
      current = 0;
    }
  }
  if (current > 0) runs.push_back(current);
  return runs;
}

}  // namespace ropsig
