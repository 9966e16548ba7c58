#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ropsig {

/// 32-bit guest virtual address.
struct Address {
  std::uint32_t value = 0;

  friend constexpr auto operator<=>(Address, Address) = default;
};

constexpr Address operator+(Address a, std::uint32_t offset) noexcept {
  return Address{a.value + offset};
}

/// Identifies a simulated process for the lifetime of one trace. Stands in
/// for the page-table base register a hypervisor would key on.
struct ProcessId {
  std::uint32_t value = 0;

  friend constexpr auto operator<=>(ProcessId, ProcessId) = default;
};

enum class PrivilegeLevel { Kernel, User };

inline constexpr std::uint32_t kDefaultKernelBase = 0xc0000000u;

/// Kernel iff the address lies in [kernel_base, 0xffffffff].
constexpr PrivilegeLevel classify_address(
    Address addr, std::uint32_t kernel_base = kDefaultKernelBase) noexcept {
  return addr.value >= kernel_base ? PrivilegeLevel::Kernel
                                   : PrivilegeLevel::User;
}

std::string_view to_string(PrivilegeLevel level) noexcept;

struct PlainEvent {
  Address pc;
  friend constexpr bool operator==(const PlainEvent&,
                                   const PlainEvent&) = default;
};

struct CallEvent {
  Address pc;
  Address target;
  Address return_addr;
  friend constexpr bool operator==(const CallEvent&,
                                   const CallEvent&) = default;
};

struct ReturnEvent {
  Address pc;
  Address actual_target;
  friend constexpr bool operator==(const ReturnEvent&,
                                   const ReturnEvent&) = default;
};

struct SwitchEvent {
  ProcessId next;
  friend constexpr bool operator==(const SwitchEvent&,
                                   const SwitchEvent&) = default;
};

using TraceEvent = std::variant<PlainEvent, CallEvent, ReturnEvent, SwitchEvent>;

/// Retired-instruction contribution of an event: 1 for plain/call/return,
/// 0 for a context switch.
constexpr std::uint64_t instruction_count(const TraceEvent& ev) noexcept {
  return std::holds_alternative<SwitchEvent>(ev) ? 0 : 1;
}

struct Trace {
  ProcessId initial_process{};
  std::vector<TraceEvent> events;

  friend bool operator==(const Trace&, const Trace&) = default;
};

class TraceParseError : public std::runtime_error {
 public:
  TraceParseError(std::size_t line, const std::string& message);

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// 8-digit lowercase hex, no prefix.
std::string format_address(Address addr);

Trace parse_trace(std::istream& in);
Trace parse_trace(std::string_view text);

void serialize_trace(const Trace& trace, std::ostream& out);
std::string serialize_trace(const Trace& trace);

}  // namespace ropsig
