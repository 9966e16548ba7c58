#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "ropsig/trace.hpp"

namespace ropsig {

enum class PredictionOutcome { Predicted, Mispredicted };

/// Return-address-stack predictor.
///
/// A circular buffer of return addresses. Calls push the address of the
/// instruction after the call; returns pop the top entry and compare it
/// with the architectural target. Pushing onto a full stack overwrites the
/// oldest live entry, so deep recursion loses its outermost return
/// addresses and those returns later underflow. A return on an empty stack
/// has no prediction and counts as mispredicted.
class ReturnAddressStack {
 public:
  static constexpr std::size_t kDefaultCapacity = 16;

  explicit ReturnAddressStack(std::size_t capacity = kDefaultCapacity);

  void on_call(Address return_addr);

  /// Pops whenever depth > 0, regardless of whether the prediction was right.
  PredictionOutcome on_return(Address actual_target);

  std::optional<Address> top() const;

  /// Live entries, most recent first.
  std::vector<Address> live_entries() const;

  std::size_t depth() const noexcept { return depth_; }
  std::size_t capacity() const noexcept { return slots_.size(); }

  void clear() noexcept { depth_ = 0; }

 private:
  std::vector<Address> slots_;
  std::size_t top_;
  std::size_t depth_ = 0;
};

/// Replays every call and return of a trace through one shared RAS, in
/// trace order and ignoring process attribution, and returns the outcome
/// of each return.
std::vector<PredictionOutcome> replay_returns(const Trace& trace,
                                              std::size_t capacity);

/// Lengths of the maximal runs of consecutive mispredicted returns. A
/// correctly predicted return ends a run; non-return events do not.
std::vector<std::size_t> mispredict_runs(
    const std::vector<PredictionOutcome>& outcomes);

}  // namespace ropsig
