#include "ropsig/commands.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace ropsig {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json parse_object(std::string_view text, const char* what) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string(what) + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument(std::string(what) + " must be a JSON object");
  return doc;
}

template <class T>
T get_uint(const json& v, const std::string& key) {
  if (!v.is_number_unsigned() || v.get<std::uint64_t>() > std::numeric_limits<T>::max()) {
    throw std::invalid_argument(key + " must be a non-negative integer in range");
  }
  return static_cast<T>(v.get<std::uint64_t>());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_labelled(const Trace& trace, TraceLabel label, std::ostream& out) {
  out << "# label: " << to_string(label) << '\n';
  serialize_trace(trace, out);
}

}  // namespace

BenignSpec benign_spec_from_json(std::string_view json_text) {
  const auto doc = parse_object(json_text, "benign spec");
  BenignSpec spec;
  for (const auto& [key, v] : doc.items()) {
    if (key == "total_instructions") {
      spec.total_instructions = get_uint<std::uint64_t>(v, key);
    } else if (key == "ras_capacity") {
      spec.ras_capacity = get_uint<std::size_t>(v, key);
    } else if (key == "max_benign_mispredict_chain") {
      spec.max_benign_mispredict_chain = get_uint<std::uint32_t>(v, key);
    } else if (key == "min_burst_chain") {
      spec.min_burst_chain = get_uint<std::uint32_t>(v, key);
    } else if (key == "mispredict_burst_count") {
      spec.mispredict_burst_count = get_uint<std::uint32_t>(v, key);
    } else if (key == "gap_profile") {
      if (!v.is_object()) throw std::invalid_argument("gap_profile must be an object");
      for (const auto& [gk, gv] : v.items()) {
        if (gk == "min_gap") {
          spec.gap_profile.min_gap = get_uint<std::uint32_t>(gv, gk);
        } else if (gk == "max_gap") {
          spec.gap_profile.max_gap = get_uint<std::uint32_t>(gv, gk);
        } else {
          throw std::invalid_argument("unknown gap_profile field '" + gk + "'");
        }
      }
    } else if (key == "max_call_depth") {
      spec.max_call_depth = get_uint<std::uint32_t>(v, key);
    } else if (key == "pid") {
      spec.pid = ProcessId{get_uint<std::uint32_t>(v, key)};
    } else if (key == "seed") {
      spec.seed = get_uint<std::uint64_t>(v, key);
    } else {
      throw std::invalid_argument("unknown benign spec field '" + key + "'");
    }
  }
  return spec;
}

RopSpec rop_spec_from_json(std::string_view json_text) {
  const auto doc = parse_object(json_text, "ROP spec");
  RopSpec spec;
  for (const auto& [key, v] : doc.items()) {
    if (key == "chain_length") {
      spec.chain_length = get_uint<std::uint32_t>(v, key);
    } else if (key == "gadget_sizes") {
      if (!v.is_array()) throw std::invalid_argument("gadget_sizes must be an array");
      spec.gadget_sizes.clear();
      for (const auto& s : v) spec.gadget_sizes.push_back(get_uint<std::uint32_t>(s, key));
    } else if (key == "min_gadget_size") {
      spec.min_gadget_size = get_uint<std::uint32_t>(v, key);
    } else if (key == "max_gadget_size") {
      spec.max_gadget_size = get_uint<std::uint32_t>(v, key);
    } else if (key == "prologue") {
      spec.prologue = get_uint<std::uint64_t>(v, key);
    } else if (key == "alignment_offset") {
      spec.alignment_offset = get_uint<std::uint32_t>(v, key);
    } else if (key == "address_region") {
      const auto region = v.is_string() ? v.get<std::string>() : std::string{};
      if (region == "kernel") {
        spec.address_region = PrivilegeLevel::Kernel;
      } else if (region == "user") {
        spec.address_region = PrivilegeLevel::User;
      } else {
        throw std::invalid_argument("address_region must be \"kernel\" or \"user\"");
      }
    } else if (key == "pid") {
      spec.pid = ProcessId{get_uint<std::uint32_t>(v, key)};
    } else if (key == "seed") {
      spec.seed = get_uint<std::uint64_t>(v, key);
    } else {
      throw std::invalid_argument("unknown ROP spec field '" + key + "'");
    }
  }
  return spec;
}

int cmd_gen_normal(const BenignSpec& spec, std::ostream& out, std::ostream& err) {
  try {
    write_labelled(gen_benign(spec), TraceLabel::Benign, out);
    return kExitClean;
  } catch (const std::exception& e) {
    err << "gen-normal: " << e.what() << '\n';
    return kExitError;
  }
}

int cmd_gen_rop(const RopSpec& spec, std::ostream& out, std::ostream& err) {
  try {
    write_labelled(gen_rop(spec), TraceLabel::Rop, out);
    return kExitClean;
  } catch (const std::exception& e) {
    err << "gen-rop: " << e.what() << '\n';
    return kExitError;
  }
}

int cmd_interleave(const std::vector<std::string>& trace_paths,
                   const std::vector<std::string>& schedule, std::size_t quantum,
                   std::ostream& out, std::ostream& err) {
  try {
    InterleaveSpec spec;
    TraceLabel label = TraceLabel::Benign;
    for (const auto& path : trace_paths) {
      const auto text = read_file(path);
      if (read_label(text) == TraceLabel::Rop) label = TraceLabel::Rop;
      spec.parts.push_back(to_part(parse_trace(text)));
    }
    if (schedule.empty()) {
      spec.schedule = round_robin_schedule(spec.parts, quantum);
    } else {
      for (const auto& item : schedule) {
        const auto colon = item.find(':');
        std::uint32_t pid = 0;
        std::size_t count = 0;
        const auto* end = item.data() + item.size();
        const bool ok =
            colon != std::string::npos &&
            std::from_chars(item.data(), item.data() + colon, pid).ptr == item.data() + colon &&
            std::from_chars(item.data() + colon + 1, end, count).ptr == end && colon + 1 < item.size();
        if (!ok) throw std::invalid_argument("bad schedule entry '" + item + "', want pid:count");
        spec.schedule.push_back(Quantum{ProcessId{pid}, count});
      }
    }
    write_labelled(interleave(spec), label, out);
    return kExitClean;
  } catch (const std::exception& e) {
    err << "interleave: " << e.what() << '\n';
    return kExitError;
  }
}

int cmd_detect(const std::string& trace_path, const DetectorConfig& cfg,
               const SimOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const auto trace = parse_trace(read_file(trace_path));
    const auto report = run(trace, cfg, opts);
    write_report_json(report, out);
    return report.clean() ? kExitClean : kExitDetected;
  } catch (const std::exception& e) {
    err << "detect: " << trace_path << ": " << e.what() << '\n';
    return kExitError;
  }
}

int cmd_scatter(const std::string& corpus_dir, const DetectorConfig& cfg,
                const SimOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(corpus_dir)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      err << "scatter: corpus '" << corpus_dir << "' is empty\n";
      return kExitError;
    }
    std::vector<ScatterPoint> points;
    for (const auto& path : files) {
      const auto text = read_file(path.string());
      const auto label = read_label(text);
      if (!label) {
        err << "scatter: " << path.string() << ": missing '# label: benign|rop' line\n";
        return kExitError;
      }
      const auto report = run(parse_trace(text), cfg, opts);
      points.push_back(scatter_point(path.filename().string(), *label, report));
    }
    write_scatter_csv(points, cfg, out);
    return kExitClean;
  } catch (const std::exception& e) {
    err << "scatter: " << e.what() << '\n';
    return kExitError;
  }
}

int cmd_sweep(const std::string& spec_path, const std::string& rows_path,
              const std::string& summary_path, std::ostream& err) {
  try {
    const auto spec = parse_sweep_spec(read_file(spec_path));
    const auto result = run_sweep(spec);
    std::ofstream rows(rows_path);
    std::ofstream summary(summary_path);
    if (!rows || !summary) {
      err << "sweep: cannot open output files\n";
      return kExitError;
    }
    write_sweep_csv(result.rows, rows);
    write_summary_csv(result.summary, summary);
    return kExitClean;
  } catch (const std::exception& e) {
    err << "sweep: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace ropsig
