#include "ropsig/trace.hpp"

#include <charconv>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>

namespace ropsig {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    const auto next = line.find(' ', pos);
    const auto end = next == std::string_view::npos ? line.size() : next;
    if (end == pos) {
      // Repeated or leading separator.
      return {};
    }
    fields.push_back(line.substr(pos, end - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
    if (pos == line.size()) return {};  // trailing separator
  }
  return fields;
}

std::optional<Address> parse_hex_address(std::string_view field) {
  if (field.empty() || field.size() > 8) return std::nullopt;
  std::uint32_t value = 0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, value, 16);
  if (ec != std::errc{} || ptr != last) return std::nullopt;
  return Address{value};
}

std::optional<ProcessId> parse_pid(std::string_view field) {
  if (field.empty()) return std::nullopt;
  std::uint32_t value = 0;
  const auto* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), last, value, 10);
  if (ec != std::errc{} || ptr != last) return std::nullopt;
  return ProcessId{value};
}

class LineParser {
 public:
  explicit LineParser(std::size_t line_no) : line_no_(line_no) {}

  Address address(std::string_view field) const {
    if (auto a = parse_hex_address(field)) return *a;
    fail("bad address '" + std::string(field) + "'");
  }

  ProcessId pid(std::string_view field) const {
    if (auto p = parse_pid(field)) return *p;
    fail("bad process id '" + std::string(field) + "'");
  }

  void expect_arity(const std::vector<std::string_view>& fields,
                    std::size_t n) const {
    if (fields.size() != n) {
      fail("record '" + std::string(fields.front()) + "' expects " +
           std::to_string(n - 1) + " field(s), got " +
           std::to_string(fields.size() - 1));
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw TraceParseError(line_no_, msg);
  }

 private:
  std::size_t line_no_;
};

TraceEvent parse_event(const std::vector<std::string_view>& fields,
                       const LineParser& p) {
  const auto tag = fields.front();
  if (tag == "I") {
    p.expect_arity(fields, 2);
    return PlainEvent{p.address(fields[1])};
  }
  if (tag == "C") {
    p.expect_arity(fields, 4);
    return CallEvent{p.address(fields[1]), p.address(fields[2]),
                     p.address(fields[3])};
  }
  if (tag == "R") {
    p.expect_arity(fields, 3);
    return ReturnEvent{p.address(fields[1]), p.address(fields[2])};
  }
  if (tag == "X") {
    p.expect_arity(fields, 2);
    return SwitchEvent{p.pid(fields[1])};
  }
  if (tag == "P") p.fail("duplicate header");
  p.fail("unknown event tag '" + std::string(tag) + "'");
}

}  // namespace

TraceParseError::TraceParseError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message),
      line_(line) {}

std::string_view to_string(PrivilegeLevel level) noexcept {
  return level == PrivilegeLevel::Kernel ? "kernel" : "user";
}

std::string format_address(Address addr) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(8, '0');
  auto v = addr.value;
  for (int i = 7; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xfu];
    v >>= 4;
  }
  return out;
}

Trace parse_trace(std::istream& in) {
  Trace trace;
  bool have_header = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const LineParser p(line_no);
    const auto fields = split_fields(line);
    if (fields.empty()) p.fail("malformed record");
    if (!have_header) {
      if (fields.front() != "P") p.fail("expected 'P <pid>' header");
      p.expect_arity(fields, 2);
      trace.initial_process = p.pid(fields[1]);
      have_header = true;
      continue;
    }
    trace.events.push_back(parse_event(fields, p));
  }
  if (!have_header) throw TraceParseError(line_no + 1, "missing 'P' header");
  return trace;
}

Trace parse_trace(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_trace(in);
}

void serialize_trace(const Trace& trace, std::ostream& out) {
  out << "P " << trace.initial_process.value << '\n';
  for (const auto& ev : trace.events) {
    std::visit(
        [&out](const auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, PlainEvent>) {
            out << "I " << format_address(e.pc) << '\n';
          } else if constexpr (std::is_same_v<T, CallEvent>) {
            out << "C " << format_address(e.pc) << ' '
                << format_address(e.target) << ' '
                << format_address(e.return_addr) << '\n';
          } else if constexpr (std::is_same_v<T, ReturnEvent>) {
            out << "R " << format_address(e.pc) << ' '
                << format_address(e.actual_target) << '\n';
          } else {
            out << "X " << e.next.value << '\n';
          }
        },
        ev);
  }
}

std::string serialize_trace(const Trace& trace) {
  std::ostringstream out;
  serialize_trace(trace, out);
  return out.str();
}

}  // namespace ropsig
