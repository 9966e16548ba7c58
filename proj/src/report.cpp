#include <ostream>

#include "json.hpp"
#include "ropsig/detector.hpp"

namespace ropsig {

void write_report_json(const DetectionReport& report, std::ostream& out) {
  using nlohmann::ordered_json;

  ordered_json verdicts = ordered_json::array();
  for (const auto& d : report.detections) {
    verdicts.push_back({
        {"verdict", "rop_detected"},
        {"pid", d.pid.value},
        {"level", to_string(d.level)},
        {"interval_index", d.interval_index},
        {"n_i", d.n_i},
        {"n_r", d.n_r},
        {"trigger_pc", format_address(d.trigger_pc)},
    });
  }

  ordered_json intervals = ordered_json::array();
  for (const auto& iv : report.intervals) {
    intervals.push_back({
        {"pid", iv.pid.value},
        {"interval_index", iv.index},
        {"n_i", iv.counts.n_i},
        {"n_r", iv.counts.n_r},
        {"n_m", iv.counts.n_m},
        {"closed_by", to_string(iv.closed_by)},
    });
  }

  ordered_json doc = {
      {"verdict", report.clean() ? "clean" : "rop_detected"},
      {"verdicts", std::move(verdicts)},
      {"intervals", std::move(intervals)},
  };
  out << doc.dump(2) << '\n';
}

}  // namespace ropsig
