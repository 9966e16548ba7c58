#include <random>
#include <sstream>

#include "doctest.h"
#include "ropsig/trace.hpp"
#include "ropsig/workload.hpp"
#include "support/random_corpus.hpp"

using namespace ropsig;

TEST_CASE("classify_address splits exactly at 0xc0000000") {
  CHECK(classify_address(Address{0xc0000000u}) == PrivilegeLevel::Kernel);
  CHECK(classify_address(Address{0x00000000u}) == PrivilegeLevel::User);
  CHECK(classify_address(Address{0xbfffffffu}) == PrivilegeLevel::User);
  CHECK(classify_address(Address{0xffffffffu}) == PrivilegeLevel::Kernel);

  std::mt19937_64 rng(7);
  for (int i = 0; i < 10000; ++i) {
    const Address a{static_cast<std::uint32_t>(rng())};
    const bool kernel = classify_address(a) == PrivilegeLevel::Kernel;
    CHECK(kernel == (a.value >= 0xc0000000u));
  }
}

TEST_CASE("classify_address honors a custom split") {
  CHECK(classify_address(Address{0x80000000u}, 0x80000000u) == PrivilegeLevel::Kernel);
  CHECK(classify_address(Address{0x7fffffffu}, 0x80000000u) == PrivilegeLevel::User);
}

TEST_CASE("instruction_count weights") {
  CHECK(instruction_count(PlainEvent{}) == 1);
  CHECK(instruction_count(CallEvent{}) == 1);
  CHECK(instruction_count(ReturnEvent{}) == 1);
  CHECK(instruction_count(SwitchEvent{}) == 0);
}

TEST_CASE("parse_trace examples") {
  SUBCASE("single plain event") {
    const auto t = parse_trace("P 1\nI 00001000\n");
    CHECK(t.initial_process == ProcessId{1});
    REQUIRE(t.events.size() == 1);
    CHECK(std::get<PlainEvent>(t.events[0]).pc == Address{0x1000});
  }
  SUBCASE("kernel-range return target") {
    const auto t = parse_trace("P 1\nR 00001004 c0001000\n");
    REQUIRE(t.events.size() == 1);
    const auto& r = std::get<ReturnEvent>(t.events[0]);
    CHECK(r.pc == Address{0x1004});
    CHECK(r.actual_target == Address{0xc0001000u});
    CHECK(classify_address(r.actual_target) == PrivilegeLevel::Kernel);
  }
  SUBCASE("all record kinds and comments") {
    const auto t = parse_trace(
        "# label: benign\nP 7\nC 00001000 00002000 00001005\n# mid comment\n"
        "R 00002003 00001005\nX 8\nI 00003000\n");
    CHECK(t.initial_process == ProcessId{7});
    REQUIRE(t.events.size() == 4);
    CHECK(std::get<CallEvent>(t.events[0]) ==
          CallEvent{Address{0x1000}, Address{0x2000}, Address{0x1005}});
    CHECK(std::get<SwitchEvent>(t.events[2]).next == ProcessId{8});
  }
}

TEST_CASE("parse_trace errors carry the line number") {
  auto line_of = [](std::string_view text) -> std::size_t {
    try {
      parse_trace(text);
    } catch (const TraceParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("P 1\nZ 0\n") == 2);
  CHECK(line_of("P 1\nI 00001000\nR 00001000\n") == 3);     // missing field
  CHECK(line_of("P 1\nI 0000100g\n") == 2);                 // bad hex
  CHECK(line_of("P 1\nI 100000000\n") == 2);                // 9 digits
  CHECK(line_of("P 1\nX -1\n") == 2);
  CHECK(line_of("I 00001000\n") == 1);                      // no header
  CHECK(line_of("P 1\nP 2\n") == 2);                        // duplicate header
  CHECK(line_of("P 1\nI  00001000\n") == 2);                // double space
  CHECK(line_of("") == 1);                                  // empty input
  CHECK_THROWS_AS(parse_trace("P 1\nC 1 2\n"), TraceParseError);
}

TEST_CASE("serialize_trace examples") {
  CHECK(serialize_trace(Trace{ProcessId{1}, {}}) == "P 1\n");
  CHECK(serialize_trace(Trace{ProcessId{1}, {SwitchEvent{ProcessId{2}}}}) == "P 1\nX 2\n");
  CHECK(serialize_trace(Trace{ProcessId{3},
                              {CallEvent{Address{0xabc}, Address{0xc0000000u}, Address{1}},
                               ReturnEvent{Address{0xffffffffu}, Address{0}}}}) ==
        "P 3\nC 00000abc c0000000 00000001\nR ffffffff 00000000\n");
}

TEST_CASE("10,000-event generated trace round-trips byte-identically") {
  BenignSpec spec;
  spec.total_instructions = 10'000;
  spec.mispredict_burst_count = 5;
  spec.seed = 42;
  const auto trace = gen_benign(spec);
  REQUIRE(trace.events.size() >= 10'000);
  const auto bytes = serialize_trace(trace);
  const auto reparsed = parse_trace(bytes);
  CHECK(reparsed == trace);
  CHECK(serialize_trace(reparsed) == bytes);
}

TEST_CASE("parse is the inverse of serialize on random traces") {
  std::mt19937_64 rng(1234);
  for (int i = 0; i < 200; ++i) {
    auto t = testing::fuzz_trace(rng, testing::pick(rng, 0, 300));
    t.initial_process = ProcessId{static_cast<std::uint32_t>(rng())};
    const auto text = serialize_trace(t);
    REQUIRE(parse_trace(text) == t);
    std::stringstream stream;
    serialize_trace(t, stream);
    CHECK(stream.str() == text);
  }
}
