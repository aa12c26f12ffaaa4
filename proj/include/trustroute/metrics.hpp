#pragma once

// Per-episode metrics rows and their CSV form.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace trustroute {

struct MetricsRow {
  std::string run_id;
  std::string algorithm;
  std::uint64_t seed = 0;
  std::uint64_t episode = 0;
  double reward = 0.0;
  double mean_delay_s = 0.0;
  double mean_e2e_delay_s = 0.0;
  double throughput_bps = 0.0;
  double mean_queue = 0.0;
  double energy_j = 0.0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t undelivered = 0;
  std::int64_t detection_steps = -1;  // slot all compromised nodes were flagged; -1 if not yet
  std::uint64_t malicious_detected = 0;
  std::uint64_t commits = 0;
  std::uint64_t consensus_messages = 0;
  std::uint64_t flagged = 0;
  double epsilon = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

const std::string& metrics_header();

// Comma separated, fixed column order, 9 significant digits, '\n' endings.
void write_metrics(std::ostream& os, const std::vector<MetricsRow>& rows);
void write_metrics_file(const std::string& path, const std::vector<MetricsRow>& rows);

// Throws ParseError on a wrong header or malformed row.
std::vector<MetricsRow> read_metrics(std::istream& is);

}  // namespace trustroute
