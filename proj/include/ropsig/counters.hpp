#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>

namespace ropsig {

enum class EventKind { Instr, Ret, MispredRet };

/// (total instructions, returns, mispredicted returns).
struct CounterReading {
  std::uint64_t n_i = 0;
  std::uint64_t n_r = 0;
  std::uint64_t n_m = 0;

  friend constexpr bool operator==(const CounterReading&,
                                   const CounterReading&) = default;
};

class InvalidThreshold : public std::invalid_argument {
 public:
  InvalidThreshold() : std::invalid_argument("overflow threshold must be >= 1") {}
};

/// One hardware event counter. A counting-mode counter only aggregates; a
/// sampling-mode counter additionally signals an overflow on the increment
/// that brings it to its threshold, once per reset cycle. Overflow is
/// delivered synchronously with zero skid.
class Counter {
 public:
  static Counter counting() { return Counter{std::nullopt}; }
  static Counter sampling(std::uint64_t threshold);

  /// Returns true iff this increment raised the overflow signal.
  bool increment() noexcept;

  void reset() noexcept {
    raw_ = 0;
    signalled_ = false;
  }
  void reset(std::uint64_t new_threshold);

  std::uint64_t raw() const noexcept { return raw_; }
  bool sampling_mode() const noexcept { return threshold_.has_value(); }
  std::optional<std::uint64_t> threshold() const noexcept { return threshold_; }

 private:
  explicit Counter(std::optional<std::uint64_t> threshold)
      : threshold_(threshold) {}

  std::uint64_t raw_ = 0;
  std::optional<std::uint64_t> threshold_;
  bool signalled_ = false;
};

/// The three monitored counters: instructions and returns in counting mode,
/// mispredicted returns in sampling mode. The sampling counter's overflow
/// delimits monitor intervals.
class CounterBank {
 public:
  explicit CounterBank(std::uint64_t threshold);

  /// Increments the counter for `kind`; true iff the mispredicted-return
  /// counter just reached its threshold.
  bool record(EventKind kind) noexcept;

  /// Zeroes all counters and re-arms the sampling threshold.
  void reset(std::uint64_t new_threshold);

  CounterReading read() const noexcept {
    return {instr_.raw(), ret_.raw(), mispred_ret_.raw()};
  }

  std::uint64_t threshold() const noexcept { return *mispred_ret_.threshold(); }

 private:
  Counter instr_ = Counter::counting();
  Counter ret_ = Counter::counting();
  Counter mispred_ret_;
};

}  // namespace ropsig
