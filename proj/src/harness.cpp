#include "ropsig/harness.hpp"

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"

namespace ropsig {

std::string_view to_string(TraceLabel label) noexcept {
  return label == TraceLabel::Rop ? "rop" : "benign";
}

std::optional<TraceLabel> read_label(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() != '#') break;
    std::string_view rest(line);
    rest.remove_prefix(1);
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    constexpr std::string_view kKey = "label:";
    if (!rest.starts_with(kKey)) continue;
    rest.remove_prefix(kKey.size());
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    while (!rest.empty() && (rest.back() == ' ' || rest.back() == '\r')) rest.remove_suffix(1);
    if (rest == "rop") return TraceLabel::Rop;
    if (rest == "benign") return TraceLabel::Benign;
    return std::nullopt;
  }
  return std::nullopt;
}

ScatterPoint scatter_point(std::string trace_id, TraceLabel label,
                           const DetectionReport& report) {
  ScatterPoint p{std::move(trace_id), label, std::nullopt, std::nullopt, 0,
                 !report.clean()};
  for (const auto& iv : report.intervals) {
    if (iv.closed_by != CloseReason::Overflow) continue;
    ++p.overflow_intervals;
    const bool better = !p.min_n_r || iv.counts.n_r < *p.min_n_r ||
                        (iv.counts.n_r == *p.min_n_r && iv.counts.n_i < *p.paired_n_i);
    if (better) {
      p.min_n_r = iv.counts.n_r;
      p.paired_n_i = iv.counts.n_i;
    }
  }
  return p;
}

bool in_detection_region(const ScatterPoint& p, const DetectorConfig& cfg) {
  return p.min_n_r && signature_check(*p.paired_n_i, *p.min_n_r, cfg);
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

namespace {

std::string opt(const std::optional<std::uint64_t>& v) {
  return v ? std::to_string(*v) : std::string{};
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Runs fn(i) for i in [0, n) on a small pool.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (auto i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

void write_scatter_csv(std::span<const ScatterPoint> points,
                       const DetectorConfig& cfg, std::ostream& out) {
  out << "trace_id,label,min_n_r,paired_n_i,overflow_intervals,detected,in_region\n";
  for (const auto& p : points) {
    out << csv_field(p.trace_id) << ',' << to_string(p.label) << ','
        << opt(p.min_n_r) << ',' << opt(p.paired_n_i) << ','
        << p.overflow_intervals << ',' << (p.detected ? 1 : 0) << ','
        << (in_detection_region(p, cfg) ? 1 : 0) << '\n';
  }
}

BenignSpec corpus_benign_spec(std::size_t index, std::uint64_t base_seed,
                              std::uint64_t total_instructions) {
  BenignSpec spec;
  spec.total_instructions = total_instructions;
  spec.ras_capacity = 16;
  spec.seed = mix_seed(base_seed, index);
  spec.max_call_depth = 6;
  if (index % 2 == 0) {
    spec.gap_profile = {7, 20};
    spec.min_burst_chain = 4;
    spec.max_benign_mispredict_chain = 10;
    spec.mispredict_burst_count =
        static_cast<std::uint32_t>(std::max<std::uint64_t>(1, total_instructions / 5000));
  } else {
    spec.gap_profile = {0, 3};
    spec.min_burst_chain = 1;
    spec.max_benign_mispredict_chain = 5;
    spec.mispredict_burst_count =
        static_cast<std::uint32_t>(std::max<std::uint64_t>(1, total_instructions / 2500));
  }
  return spec;
}

RopSpec corpus_rop_spec(std::uint32_t chain_length, std::uint32_t alignment_offset,
                        std::uint64_t seed, PrivilegeLevel region) {
  RopSpec spec;
  spec.chain_length = chain_length;
  spec.min_gadget_size = 2;
  spec.max_gadget_size = 6;
  spec.alignment_offset = alignment_offset;
  spec.address_region = region;
  spec.seed = mix_seed(seed, (std::uint64_t{chain_length} << 32) | alignment_offset);
  spec.prologue = 50 + spec.seed % 250;
  return spec;
}

SweepSpec parse_sweep_spec(std::string_view json_text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("sweep spec is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("sweep spec must be a JSON object");

  SweepSpec spec;
  auto positive_list = [&](const json& v, const char* key) {
    if (!v.is_array() || v.empty()) {
      throw std::invalid_argument(std::string(key) + " must be a non-empty array");
    }
    std::vector<std::uint32_t> out;
    for (const auto& x : v) {
      if (!x.is_number_unsigned() || x.get<std::uint64_t>() == 0 ||
          x.get<std::uint64_t>() > 0xffffffffull) {
        throw std::invalid_argument(std::string(key) + " entries must be positive integers");
      }
      out.push_back(x.get<std::uint32_t>());
    }
    return out;
  };
  auto count = [&](const json& v, const char* key) {
    if (!v.is_number_unsigned()) {
      throw std::invalid_argument(std::string(key) + " must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
  };

  for (const auto& [key, value] : doc.items()) {
    if (key == "t_m_values") {
      spec.t_m_values = positive_list(value, "t_m_values");
    } else if (key == "t_i_values") {
      spec.t_i_values = positive_list(value, "t_i_values");
    } else if (key == "g_values") {
      spec.g_values = positive_list(value, "g_values");
    } else if (key == "alignment_offsets") {
      spec.alignment_offsets.clear();
      if (value.is_string() && value.get<std::string>() == "all") continue;
      if (!value.is_array()) {
        throw std::invalid_argument("alignment_offsets must be an array or \"all\"");
      }
      for (const auto& x : value) {
        if (!x.is_number_unsigned()) {
          throw std::invalid_argument("alignment_offsets entries must be non-negative integers");
        }
        spec.alignment_offsets.push_back(x.get<std::uint32_t>());
      }
    } else if (key == "benign_count") {
      spec.benign_count = count(value, "benign_count");
    } else if (key == "benign_instructions") {
      spec.benign_instructions = count(value, "benign_instructions");
    } else if (key == "seeds") {
      if (!value.is_array() || value.empty()) {
        throw std::invalid_argument("seeds must be a non-empty array");
      }
      spec.seeds.clear();
      for (const auto& x : value) spec.seeds.push_back(count(x, "seeds"));
    } else if (key == "ras_capacity") {
      spec.ras_capacity = count(value, "ras_capacity");
      if (spec.ras_capacity == 0) throw std::invalid_argument("ras_capacity must be >= 1");
    } else if (key == "threads") {
      spec.threads = count(value, "threads");
    } else {
      throw std::invalid_argument("unknown sweep spec field '" + key + "'");
    }
  }
  for (const auto t_m : spec.t_m_values) {
    for (const auto t_i : spec.t_i_values) {
      if (!ProcessEntry::supports(DetectorConfig{t_m, t_i, true})) {
        throw std::invalid_argument("t_i * t_m must be below 255");
      }
    }
  }
  return spec;
}

SweepResult run_sweep(const SweepSpec& spec) {
  struct Job {
    TraceLabel label;
    std::uint32_t g;
    std::size_t benign_id;
    std::uint32_t offset;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto seed : spec.seeds) {
    for (std::size_t id = 0; id < spec.benign_count; ++id) {
      jobs.push_back({TraceLabel::Benign, 0, id, 0, seed});
    }
  }
  std::vector<std::uint32_t> offsets = spec.alignment_offsets;
  if (offsets.empty()) {
    const auto max_tm = *std::max_element(spec.t_m_values.begin(), spec.t_m_values.end());
    for (std::uint32_t o = 0; o < max_tm; ++o) offsets.push_back(o);
  }
  for (const auto g : spec.g_values) {
    for (const auto o : offsets) {
      for (const auto seed : spec.seeds) jobs.push_back({TraceLabel::Rop, g, 0, o, seed});
    }
  }

  // Which (t_m, offset) pairs each ROP job participates in.
  auto offset_applies = [&](std::uint32_t t_m, std::uint32_t offset) {
    return !spec.alignment_offsets.empty() || offset < t_m;
  };

  std::vector<std::vector<SweepRow>> per_job(jobs.size());
  parallel_for(jobs.size(), spec.threads, [&](std::size_t j) {
    const auto& job = jobs[j];
    const Trace trace =
        job.label == TraceLabel::Benign
            ? gen_benign(corpus_benign_spec(job.benign_id, job.seed, spec.benign_instructions))
            : gen_rop(corpus_rop_spec(job.g, job.offset, job.seed));
    SimOptions opts;
    opts.ras_capacity = spec.ras_capacity;
    for (const auto t_m : spec.t_m_values) {
      if (job.label == TraceLabel::Rop && !offset_applies(t_m, job.offset)) continue;
      for (const auto t_i : spec.t_i_values) {
        const DetectorConfig cfg{t_m, t_i, true};
        const auto report = run(trace, cfg, opts);
        const auto p = scatter_point("", job.label, report);
        per_job[j].push_back(SweepRow{t_m, t_i, job.label, job.g, job.benign_id,
                                      job.offset, job.seed, p.detected, p.min_n_r,
                                      p.paired_n_i, p.overflow_intervals});
      }
    }
  });

  SweepResult result;
  for (auto& rows : per_job) {
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }
  std::sort(result.rows.begin(), result.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.t_m, a.t_i, a.label, a.g, a.benign_id, a.alignment_offset, a.seed) <
           std::tie(b.t_m, b.t_i, b.label, b.g, b.benign_id, b.alignment_offset, b.seed);
  });
  result.summary = summarize(result.rows);
  return result;
}

std::vector<SweepSummaryRow> summarize(std::span<const SweepRow> rows) {
  std::map<std::tuple<std::uint32_t, std::uint32_t, TraceLabel, std::uint32_t>,
           SweepSummaryRow>
      cells;
  for (const auto& r : rows) {
    auto& cell = cells[{r.t_m, r.t_i, r.label, r.g}];
    cell.t_m = r.t_m;
    cell.t_i = r.t_i;
    cell.label = r.label;
    cell.g = r.g;
    ++cell.total;
    const bool wrong = r.label == TraceLabel::Benign ? r.detected : !r.detected;
    if (wrong) ++cell.errors;
  }
  std::vector<SweepSummaryRow> out;
  for (const auto& [key, cell] : cells) out.push_back(cell);
  return out;
}

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out) {
  out << "t_m,t_i,label,g,benign_id,alignment_offset,seed,detected,min_n_r,"
         "paired_n_i,interval_count\n";
  for (const auto& r : rows) {
    const bool rop = r.label == TraceLabel::Rop;
    out << r.t_m << ',' << r.t_i << ',' << to_string(r.label) << ','
        << (rop ? std::to_string(r.g) : "") << ','
        << (rop ? "" : std::to_string(r.benign_id)) << ',' << r.alignment_offset << ','
        << r.seed << ',' << (r.detected ? 1 : 0) << ',' << opt(r.min_n_r) << ','
        << opt(r.paired_n_i) << ',' << r.interval_count << '\n';
  }
}

void write_summary_csv(std::span<const SweepSummaryRow> rows, std::ostream& out) {
  out << "t_m,t_i,label,g,total,misclassified,metric,rate\n";
  for (const auto& r : rows) {
    const bool rop = r.label == TraceLabel::Rop;
    std::ostringstream rate;
    rate.precision(6);
    rate << std::fixed << r.rate();
    out << r.t_m << ',' << r.t_i << ',' << to_string(r.label) << ','
        << (rop ? std::to_string(r.g) : "") << ',' << r.total << ',' << r.errors << ','
        << (rop ? "fn" : "fp") << ',' << rate.str() << '\n';
  }
}

}  // namespace ropsig
