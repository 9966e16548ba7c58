// Command-line front end: trace generation, detection, and experiment sweeps.

#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ropsig/commands.hpp"

namespace {

using namespace ropsig;

struct DetectFlags {
  std::uint32_t t_m = 6;
  std::uint32_t t_i = 6;
  std::size_t ras_capacity = ReturnAddressStack::kDefaultCapacity;
  bool no_table = false;
  bool flush_ras = false;

  void add_to(CLI::App* app) {
    app->add_option("--tm", t_m, "Monitor interval T_M (mispredicted returns)")
        ->check(CLI::PositiveNumber);
    app->add_option("--ti", t_i, "Maximum gadget size T_I (instructions)")
        ->check(CLI::PositiveNumber);
    app->add_option("--ras-capacity", ras_capacity, "Return address stack entries")
        ->check(CLI::PositiveNumber);
    app->add_flag("--no-table", no_table, "Disable per-process accumulation");
    app->add_flag("--flush-ras-on-switch", flush_ras, "Clear the RAS at every context switch");
  }

  DetectorConfig config() const { return DetectorConfig{t_m, t_i, !no_table}; }
  SimOptions options() const {
    SimOptions o;
    o.ras_capacity = ras_capacity;
    o.flush_ras_on_switch = flush_ras;
    return o;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Runs `body` against --out (or stdout).
template <class Body>
int with_output(const std::string& out_path, Body&& body) {
  if (out_path.empty()) return body(std::cout);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) {
    std::cerr << "cannot write '" << out_path << "'\n";
    return kExitError;
  }
  return body(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate return-address-stack mispredictions and detect ROP payloads "
               "from hardware event counts"};
  app.require_subcommand(1);

  std::string out_path;
  std::uint64_t seed = 0;

  // gen-normal
  auto* gen_normal = app.add_subcommand("gen-normal", "Generate a benign trace");
  BenignSpec benign;
  std::string benign_spec_path;
  gen_normal->add_option("--spec", benign_spec_path, "JSON BenignSpec file")
      ->check(CLI::ExistingFile);
  auto* b_instr = gen_normal->add_option("--instructions", benign.total_instructions,
                                         "Target instruction count");
  auto* b_bursts = gen_normal->add_option("--bursts", benign.mispredict_burst_count,
                                          "Number of recursion bursts");
  auto* b_max = gen_normal->add_option("--max-chain", benign.max_benign_mispredict_chain,
                                       "Longest mispredicted-return run per burst");
  auto* b_min = gen_normal->add_option("--min-chain", benign.min_burst_chain,
                                       "Shortest mispredicted-return run per burst");
  auto* b_gmin = gen_normal->add_option("--gap-min", benign.gap_profile.min_gap,
                                        "Minimum unwind gap");
  auto* b_gmax = gen_normal->add_option("--gap-max", benign.gap_profile.max_gap,
                                        "Maximum unwind gap");
  auto* b_ras = gen_normal->add_option("--ras-capacity", benign.ras_capacity,
                                       "RAS capacity the bursts overflow");
  std::uint32_t benign_pid = 1;
  auto* b_pid = gen_normal->add_option("--pid", benign_pid, "Process id");
  auto* b_seed = gen_normal->add_option("--seed", seed, "RNG seed");
  gen_normal->add_option("--out", out_path, "Output path (default stdout)");

  // gen-rop
  auto* gen_rop_cmd = app.add_subcommand("gen-rop", "Generate a ROP payload trace");
  RopSpec rop;
  std::string rop_spec_path;
  std::string region = "user";
  std::uint32_t rop_pid = 1;
  gen_rop_cmd->add_option("--spec", rop_spec_path, "JSON RopSpec file")
      ->check(CLI::ExistingFile);
  auto* r_g = gen_rop_cmd->add_option("-g,--chain-length", rop.chain_length,
                                      "Number of gadgets G")
                  ->check(CLI::PositiveNumber);
  auto* r_sizes = gen_rop_cmd->add_option("--gadget-sizes", rop.gadget_sizes,
                                          "Explicit per-gadget sizes")
                      ->delimiter(',');
  auto* r_smin = gen_rop_cmd->add_option("--gadget-min", rop.min_gadget_size,
                                         "Minimum drawn gadget size");
  auto* r_smax = gen_rop_cmd->add_option("--gadget-max", rop.max_gadget_size,
                                         "Maximum drawn gadget size");
  auto* r_pro = gen_rop_cmd->add_option("--prologue", rop.prologue,
                                        "Benign instructions before the payload");
  auto* r_off = gen_rop_cmd->add_option("--offset", rop.alignment_offset,
                                        "Mispredicted returns inserted before the chain");
  auto* r_region = gen_rop_cmd->add_option("--region", region, "Gadget address region")
                       ->check(CLI::IsMember({"user", "kernel"}));
  auto* r_pid = gen_rop_cmd->add_option("--pid", rop_pid, "Process id");
  auto* r_seed = gen_rop_cmd->add_option("--seed", seed, "RNG seed");
  gen_rop_cmd->add_option("--out", out_path, "Output path (default stdout)");

  // interleave
  auto* inter = app.add_subcommand("interleave", "Interleave single-process traces");
  std::vector<std::string> inputs;
  std::vector<std::string> schedule;
  std::size_t quantum = 50;
  inter->add_option("traces", inputs, "Input trace files")->required()->check(CLI::ExistingFile);
  inter->add_option("--quantum", quantum, "Round-robin quantum in events")
      ->check(CLI::PositiveNumber);
  inter->add_option("--schedule", schedule, "Explicit pid:count quanta")->delimiter(',');
  inter->add_option("--out", out_path, "Output path (default stdout)");

  // detect
  auto* detect = app.add_subcommand("detect", "Run the detector on a trace");
  std::string trace_path;
  DetectFlags detect_flags;
  detect->add_option("trace", trace_path, "Trace file")->required();
  detect_flags.add_to(detect);
  detect->add_option("--out", out_path, "Report path (default stdout)");

  // scatter
  auto* scatter = app.add_subcommand("scatter", "Per-trace (min n_r, n_i) points as CSV");
  std::string corpus_dir;
  DetectFlags scatter_flags;
  scatter->add_option("corpus", corpus_dir, "Directory of labelled traces")->required();
  scatter_flags.add_to(scatter);
  scatter->add_option("--out", out_path, "CSV path (default stdout)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Parameter sweep over generated corpora");
  std::string sweep_spec;
  std::string summary_path;
  sweep->add_option("spec", sweep_spec, "JSON SweepSpec file")->required();
  sweep->add_option("--out", out_path, "Per-row CSV path")->required();
  sweep->add_option("--summary", summary_path, "Summary CSV path (default <out>.summary.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitClean : kExitError;
  }

  try {
    if (*gen_normal) {
      if (!benign_spec_path.empty()) {
        BenignSpec from_file = benign_spec_from_json(slurp(benign_spec_path));
        if (*b_instr) from_file.total_instructions = benign.total_instructions;
        if (*b_bursts) from_file.mispredict_burst_count = benign.mispredict_burst_count;
        if (*b_max) from_file.max_benign_mispredict_chain = benign.max_benign_mispredict_chain;
        if (*b_min) from_file.min_burst_chain = benign.min_burst_chain;
        if (*b_gmin) from_file.gap_profile.min_gap = benign.gap_profile.min_gap;
        if (*b_gmax) from_file.gap_profile.max_gap = benign.gap_profile.max_gap;
        if (*b_ras) from_file.ras_capacity = benign.ras_capacity;
        if (*b_pid) from_file.pid = ProcessId{benign_pid};
        if (*b_seed) from_file.seed = seed;
        benign = from_file;
      } else {
        benign.pid = ProcessId{benign_pid};
        benign.seed = seed;
      }
      return with_output(out_path, [&](std::ostream& os) {
        return cmd_gen_normal(benign, os, std::cerr);
      });
    }
    if (*gen_rop_cmd) {
      const auto level = region == "kernel" ? PrivilegeLevel::Kernel : PrivilegeLevel::User;
      if (!rop_spec_path.empty()) {
        RopSpec from_file = rop_spec_from_json(slurp(rop_spec_path));
        if (*r_g) from_file.chain_length = rop.chain_length;
        if (*r_sizes) from_file.gadget_sizes = rop.gadget_sizes;
        if (*r_smin) from_file.min_gadget_size = rop.min_gadget_size;
        if (*r_smax) from_file.max_gadget_size = rop.max_gadget_size;
        if (*r_pro) from_file.prologue = rop.prologue;
        if (*r_off) from_file.alignment_offset = rop.alignment_offset;
        if (*r_region) from_file.address_region = level;
        if (*r_pid) from_file.pid = ProcessId{rop_pid};
        if (*r_seed) from_file.seed = seed;
        rop = from_file;
      } else {
        rop.address_region = level;
        rop.pid = ProcessId{rop_pid};
        rop.seed = seed;
      }
      return with_output(out_path, [&](std::ostream& os) {
        return cmd_gen_rop(rop, os, std::cerr);
      });
    }
    if (*inter) {
      return with_output(out_path, [&](std::ostream& os) {
        return cmd_interleave(inputs, schedule, quantum, os, std::cerr);
      });
    }
    if (*detect) {
      return with_output(out_path, [&](std::ostream& os) {
        return cmd_detect(trace_path, detect_flags.config(), detect_flags.options(), os,
                          std::cerr);
      });
    }
    if (*scatter) {
      return with_output(out_path, [&](std::ostream& os) {
        return cmd_scatter(corpus_dir, scatter_flags.config(), scatter_flags.options(), os,
                           std::cerr);
      });
    }
    if (*sweep) {
      if (summary_path.empty()) summary_path = out_path + ".summary.csv";
      return cmd_sweep(sweep_spec, out_path, summary_path, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
