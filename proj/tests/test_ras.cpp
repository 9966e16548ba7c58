#include <random>

#include "doctest.h"
#include "ropsig/ras.hpp"
#include "support/oracle.hpp"

using namespace ropsig;

namespace {
constexpr Address A{0xa0}, B{0xb0}, C{0xc0};
}

TEST_CASE("on_call") {
  SUBCASE("single push") {
    ReturnAddressStack ras;
    CHECK(ras.capacity() == 16);
    ras.on_call(Address{0x1004});
    CHECK(ras.depth() == 1);
    CHECK(ras.top() == Address{0x1004});
  }
  SUBCASE("overflow drops the oldest entry") {
    ReturnAddressStack ras(2);
    ras.on_call(A);
    ras.on_call(B);
    ras.on_call(C);
    CHECK(ras.depth() == 2);
    CHECK(ras.live_entries() == std::vector<Address>{C, B});
  }
  SUBCASE("push then pop predicts the pushed address") {
    ReturnAddressStack ras;
    ras.on_call(A);
    CHECK(ras.on_return(A) == PredictionOutcome::Predicted);
    CHECK(ras.depth() == 0);
  }
}

TEST_CASE("on_return") {
  SUBCASE("matched call/return") {
    ReturnAddressStack ras;
    ras.on_call(Address{0x1004});
    CHECK(ras.on_return(Address{0x1004}) == PredictionOutcome::Predicted);
  }
  SUBCASE("empty stack mispredicts and stays empty") {
    ReturnAddressStack ras;
    CHECK(ras.on_return(Address{0x2000}) == PredictionOutcome::Mispredicted);
    CHECK(ras.depth() == 0);
    CHECK_FALSE(ras.top().has_value());
  }
  SUBCASE("underflow after overwrite") {
    ReturnAddressStack ras(2);
    ras.on_call(A);
    ras.on_call(B);
    ras.on_call(C);
    CHECK(ras.on_return(C) == PredictionOutcome::Predicted);
    CHECK(ras.on_return(B) == PredictionOutcome::Predicted);
    CHECK(ras.on_return(A) == PredictionOutcome::Mispredicted);
  }
  SUBCASE("a wrong prediction still pops") {
    ReturnAddressStack ras;
    ras.on_call(A);
    ras.on_call(B);
    CHECK(ras.on_return(C) == PredictionOutcome::Mispredicted);
    CHECK(ras.depth() == 1);
    CHECK(ras.on_return(A) == PredictionOutcome::Predicted);
  }
}

TEST_CASE("zero capacity is rejected") {
  CHECK_THROWS_AS(ReturnAddressStack(0), std::invalid_argument);
}

TEST_CASE("circular RAS agrees with a deque reference on random operations") {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 200; ++round) {
    const std::size_t cap = 1 + rng() % 20;
    ReturnAddressStack ras(cap);
    testing::DequeRas ref(cap);
    for (int i = 0; i < 500; ++i) {
      const Address a{static_cast<std::uint32_t>(rng() % 8)};
      if (rng() % 2) {
        ras.on_call(a);
        ref.push(a);
      } else {
        const bool mis = ras.on_return(a) == PredictionOutcome::Mispredicted;
        REQUIRE(mis == ref.pop_mispredicts(a));
      }
      REQUIRE(ras.depth() <= cap);
    }
  }
}

TEST_CASE("mispredict_runs") {
  using P = PredictionOutcome;
  CHECK(mispredict_runs({}).empty());
  CHECK(mispredict_runs({P::Predicted, P::Predicted}).empty());
  CHECK(mispredict_runs({P::Mispredicted, P::Mispredicted, P::Predicted, P::Mispredicted}) ==
        std::vector<std::size_t>{2, 1});
}

TEST_CASE("replay_returns follows trace order") {
  const Trace t{ProcessId{1},
                {CallEvent{Address{1}, Address{2}, A}, PlainEvent{Address{2}},
                 ReturnEvent{Address{3}, A}, ReturnEvent{Address{4}, B}}};
  CHECK(replay_returns(t, 4) ==
        std::vector<PredictionOutcome>{PredictionOutcome::Predicted,
                                       PredictionOutcome::Mispredicted});
}
