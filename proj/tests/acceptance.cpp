// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// if any criterion fails.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <utility>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "ropsig/detector.hpp"
#include "ropsig/harness.hpp"
#include "ropsig/ras.hpp"
#include "ropsig/workload.hpp"
#include "support/oracle.hpp"
#include "support/random_corpus.hpp"

using namespace ropsig;

namespace {

constexpr std::uint64_t kBenignSeed = 2024;
constexpr std::size_t kBenignCount = 200;
constexpr std::size_t kRopCount = 30;

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  const auto workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

std::vector<Trace> benign_corpus() {
  std::vector<Trace> out(kBenignCount);
  parallel_for(kBenignCount, [&](std::size_t i) {
    out[i] = gen_benign(corpus_benign_spec(i, kBenignSeed));
  });
  return out;
}

struct RopCase {
  std::uint32_t g;
  std::uint32_t offset;
  Trace trace;
};

// G in 12..26, offsets cycling through 0..5.
std::vector<RopCase> rop_corpus() {
  std::vector<RopCase> out(kRopCount);
  parallel_for(kRopCount, [&](std::size_t i) {
    const auto g = static_cast<std::uint32_t>(12 + i % 15);
    const auto off = static_cast<std::uint32_t>(i % 6);
    out[i] = {g, off, gen_rop(corpus_rop_spec(g, off, 100 + i))};
  });
  return out;
}

std::size_t count_detected(const std::vector<Trace>& traces, const DetectorConfig& cfg) {
  std::atomic<std::size_t> hits{0};
  parallel_for(traces.size(), [&](std::size_t i) {
    if (!run(traces[i], cfg).clean()) ++hits;
  });
  return hits;
}

void criterion1(const std::vector<Trace>& benign, const std::vector<RopCase>& rop,
                double gen_seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  const DetectorConfig cfg{6, 6, true};
  const auto fp = count_detected(benign, cfg);
  std::size_t fn = 0;
  std::uint64_t min_events = ~0ull;
  for (const auto& b : benign) min_events = std::min<std::uint64_t>(min_events, b.events.size());
  for (const auto& r : rop) fn += run(r.trace, cfg).clean();
  const double secs =
      gen_seconds + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "t_m=6 t_i=6 FP=%zu/%zu FN=%zu/%zu (min benign events %llu, %.1fs incl. generation)",
                fp, benign.size(), fn, rop.size(),
                static_cast<unsigned long long>(min_events), secs);
  report(1, fp == 0 && fn == 0 && min_events >= 100'000 && secs < 60.0, buf);
}

void criterion2(const std::vector<Trace>& benign) {
  const DetectorConfig cfg{10, 6, true};
  const auto fp = count_detected(benign, cfg);

  constexpr std::uint32_t kMinG = 12, kMaxG = 25;
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  std::map<std::uint32_t, std::atomic<std::size_t>> misses;
  for (std::uint32_t g = kMinG; g <= kMaxG; ++g) misses[g] = 0;
  const std::size_t per_g = 10 * seeds.size();
  parallel_for((kMaxG - kMinG + 1) * per_g, [&](std::size_t i) {
    const auto g = static_cast<std::uint32_t>(kMinG + i / per_g);
    const auto off = static_cast<std::uint32_t>(i % 10);
    const auto seed = seeds[(i / 10) % seeds.size()];
    if (run(gen_rop(corpus_rop_spec(g, off, seed)), cfg).clean()) ++misses[g];
  });

  bool ok = fp == 0;
  std::string detail = "t_m=10 FP=" + std::to_string(fp) + "/" + std::to_string(benign.size()) +
                       "; FN per G over offsets 0..9 x 3 seeds:";
  for (std::uint32_t g = kMinG; g <= kMaxG; ++g) {
    const std::size_t m = misses[g];
    detail += " " + std::to_string(g) + ":" + std::to_string(m);
    if (g < 19 && m == 0) ok = false;
    if (g >= 20 && m != 0) ok = false;
  }
  report(2, ok, detail);
}

// Returns the criterion-6 line so it can be printed in order.
std::pair<bool, std::string> criteria3and6() {
  constexpr std::size_t kCases = 10'000;
  std::atomic<std::size_t> oracle_diff{0}, width_diff{0}, detections{0};
  std::array<std::atomic<std::size_t>, 4> per_kind{};
  parallel_for(kCases, [&](std::size_t i) {
    std::mt19937_64 rng(0x5eed0000 + i);
    const auto c = testing::random_case(rng, i);
    const auto got = run(c.trace, c.cfg, c.opts).detections;
    if (got != testing::oracle_verdicts(c.trace, c.cfg, c.opts)) ++oracle_diff;
    if (got != run_wide(c.trace, c.cfg, c.opts).detections) ++width_diff;
    if (!got.empty()) ++detections;
    ++per_kind[i % 4];
  });
  report(3, oracle_diff == 0,
         std::to_string(kCases) + " random traces (benign/rop/interleaved/fuzz " +
             std::to_string(per_kind[0]) + "/" + std::to_string(per_kind[1]) + "/" +
             std::to_string(per_kind[2]) + "/" + std::to_string(per_kind[3]) + ", " +
             std::to_string(detections) + " with verdicts), oracle divergences=" +
             std::to_string(oracle_diff));
  return {width_diff == 0,
         "8-bit saturating vs unbounded entries over the same " + std::to_string(kCases) +
             " traces, divergences=" + std::to_string(width_diff) +
             ", entry size=" + std::to_string(sizeof(ProcessEntry)) + " bytes"};
}

void criterion4() {
  constexpr std::size_t kRuns = 100;
  constexpr std::uint32_t kTm = 6;
  std::atomic<std::size_t> with_table{0}, without_table{0};
  parallel_for(kRuns, [&](std::size_t i) {
    std::mt19937_64 rng(0xc4000 + i);
    const ProcessId rop_pid{1};
    const auto layout = gen_rop_layout(corpus_rop_spec(
        2 * kTm, static_cast<std::uint32_t>(testing::pick(rng, 0, kTm - 1)), rng()));
    std::vector<InterleavePart> parts{to_part(layout)};
    const auto benign = testing::pick(rng, 1, 3);
    for (std::uint32_t p = 0; p < benign; ++p) {
      auto s = corpus_benign_spec(i * 4 + p, kBenignSeed + 1, 5'000);
      s.pid = ProcessId{2 + p};
      parts.push_back(to_part(gen_benign(s)));
    }
    InterleaveSpec spec;
    spec.parts = parts;
    spec.schedule = split_chain_schedule(parts, rop_pid, testing::pick(rng, 2, 4), rng());
    spec.split_rop = true;
    const auto trace = interleave(spec);

    auto caught = [&](bool table) {
      const auto r = run(trace, DetectorConfig{kTm, 6, table});
      return std::any_of(r.detections.begin(), r.detections.end(),
                         [&](const RopDetected& d) { return d.pid == rop_pid; });
    };
    with_table += caught(true);
    without_table += caught(false);
  });
  report(4, with_table == kRuns && without_table < kRuns,
         "G=12 split chains, t_m=6: table " + std::to_string(with_table) + "/" +
             std::to_string(kRuns) + ", no-table " + std::to_string(without_table) + "/" +
             std::to_string(kRuns));
}

void criterion5() {
  constexpr std::size_t kEach = 50;
  std::atomic<std::size_t> kernel_ok{0}, user_ok{0};
  parallel_for(2 * kEach, [&](std::size_t i) {
    const bool kernel = i < kEach;
    const auto region = kernel ? PrivilegeLevel::Kernel : PrivilegeLevel::User;
    const auto g = static_cast<std::uint32_t>(12 + i % 15);
    const auto r = run(gen_rop(corpus_rop_spec(g, static_cast<std::uint32_t>(i % 6), 500 + i, region)));
    if (r.detections.size() == 1 && r.detections[0].level == region) {
      ++(kernel ? kernel_ok : user_ok);
    }
  });
  report(5, kernel_ok == kEach && user_ok == kEach,
         "kernel-region " + std::to_string(kernel_ok) + "/" + std::to_string(kEach) +
             " classified Kernel, user-region " + std::to_string(user_ok) + "/" +
             std::to_string(kEach) + " classified User");
}

void criterion7() {
  constexpr std::size_t kSeeds = 1000;
  std::atomic<std::size_t> matched_ok{0}, recursion_ok{0}, chain_ok{0};
  parallel_for(kSeeds, [&](std::size_t seed) {
    std::mt19937_64 rng(0x7000 + seed);

    BenignSpec b;
    b.seed = rng();
    b.total_instructions = testing::pick(rng, 500, 5000);
    b.ras_capacity = testing::pick(rng, 1, 32);
    b.max_call_depth = static_cast<std::uint32_t>(testing::pick(rng, 1, 40));
    const auto outcomes = replay_returns(gen_benign(b), b.ras_capacity);
    if (std::count(outcomes.begin(), outcomes.end(), PredictionOutcome::Mispredicted) == 0) {
      ++matched_ok;
    }

    // Direct recursion of depth capacity + k, then a full unwind.
    const auto cap = testing::pick(rng, 1, 32);
    const auto k = testing::pick(rng, 0, 20);
    Trace rec{ProcessId{1}, {}};
    for (std::uint64_t d = 0; d < cap + k; ++d) {
      const Address ret{0x08048000u + 8u * static_cast<std::uint32_t>(d)};
      rec.events.push_back(CallEvent{Address{0x08040000u}, Address{0x08050000u}, ret});
    }
    for (std::uint64_t d = cap + k; d-- > 0;) {
      const Address ret{0x08048000u + 8u * static_cast<std::uint32_t>(d)};
      rec.events.push_back(ReturnEvent{Address{0x08050010u}, ret});
    }
    const auto rec_runs = mispredict_runs(replay_returns(rec, cap));
    const bool rec_exact = k == 0 ? rec_runs.empty() : rec_runs == std::vector<std::size_t>{k};
    // Same property through the generator's burst model.
    BenignSpec burst;
    burst.seed = rng();
    burst.total_instructions = 3000;
    burst.ras_capacity = cap;
    const auto kk = static_cast<std::uint32_t>(testing::pick(rng, 1, 10));
    burst.min_burst_chain = burst.max_benign_mispredict_chain = kk;
    burst.mispredict_burst_count = 1;
    const auto gen_runs = mispredict_runs(replay_returns(gen_benign(burst), cap));
    if (rec_exact && gen_runs == std::vector<std::size_t>{kk}) ++recursion_ok;

    RopSpec r;
    r.seed = rng();
    r.chain_length = static_cast<std::uint32_t>(testing::pick(rng, 1, 40));
    r.min_gadget_size = 1;
    r.max_gadget_size = 8;
    r.prologue = testing::pick(rng, 0, 300);
    const auto layout = gen_rop_layout(r);
    const auto runs = mispredict_runs(replay_returns(layout.trace, testing::pick(rng, 4, 32)));
    if (runs.size() == 1 && runs[0] == r.chain_length) ++chain_ok;
  });
  report(7, matched_ok == kSeeds && recursion_ok == kSeeds && chain_ok == kSeeds,
         "over " + std::to_string(kSeeds) + " seeds each: matched pairs " +
             std::to_string(matched_ok) + ", k-deep over-recursion " +
             std::to_string(recursion_ok) + ", G-gadget chains " + std::to_string(chain_ok));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto benign = benign_corpus();
  const auto rop = rop_corpus();
  const double gen_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  criterion1(benign, rop, gen_secs);
  criterion2(benign);
  const auto [width_ok, width_detail] = criteria3and6();
  criterion4();
  criterion5();
  report(6, width_ok, width_detail);
  criterion7();
  std::printf("EXCLUDED criterion 8: hypervisor and HPC runtime overheads need real hardware; "
              "not simulated\n");
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
