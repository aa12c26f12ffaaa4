#include "trustroute/metrics.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "trustroute/core.hpp"
#include "trustroute/format.hpp"

namespace trustroute {

const std::string& metrics_header() {
  static const std::string h =
      "run_id,algorithm,seed,episode,reward,mean_delay_s,mean_e2e_delay_s,throughput_bps,mean_queue,energy_j,"
      "delivered,dropped,undelivered,detection_steps,malicious_detected,commits,"
      "consensus_messages,flagged,epsilon";
  return h;
}

void write_metrics(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << metrics_header() << '\n';
  for (const auto& r : rows) {
    os << r.run_id << ',' << r.algorithm << ',' << r.seed << ',' << r.episode << ','
       << format_double(r.reward) << ',' << format_double(r.mean_delay_s) << ','
       << format_double(r.mean_e2e_delay_s) << ','
       << format_double(r.throughput_bps) << ',' << format_double(r.mean_queue) << ','
       << format_double(r.energy_j) << ',' << r.delivered << ',' << r.dropped << ','
       << r.undelivered << ',' << r.detection_steps << ',' << r.malicious_detected << ','
       << r.commits << ',' << r.consensus_messages << ',' << r.flagged << ','
       << format_double(r.epsilon) << '\n';
  }
}

void write_metrics_file(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_metrics(out, rows);
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

namespace {

template <class T>
T parse_int(const std::string& s, std::size_t line) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError("metrics line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<MetricsRow> read_metrics(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != metrics_header()) {
    throw ParseError("metrics header mismatch");
  }
  std::vector<MetricsRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 19) {
      throw ParseError("metrics line " + std::to_string(lineno) + ": expected 19 fields, got " +
                       std::to_string(f.size()));
    }
    MetricsRow r;
    r.run_id = f[0];
    r.algorithm = f[1];
    r.seed = parse_int<std::uint64_t>(f[2], lineno);
    r.episode = parse_int<std::uint64_t>(f[3], lineno);
    r.reward = parse_double(f[4]);
    r.mean_delay_s = parse_double(f[5]);
    r.mean_e2e_delay_s = parse_double(f[6]);
    r.throughput_bps = parse_double(f[7]);
    r.mean_queue = parse_double(f[8]);
    r.energy_j = parse_double(f[9]);
    r.delivered = parse_int<std::uint64_t>(f[10], lineno);
    r.dropped = parse_int<std::uint64_t>(f[11], lineno);
    r.undelivered = parse_int<std::uint64_t>(f[12], lineno);
    r.detection_steps = parse_int<std::int64_t>(f[13], lineno);
    r.malicious_detected = parse_int<std::uint64_t>(f[14], lineno);
    r.commits = parse_int<std::uint64_t>(f[15], lineno);
    r.consensus_messages = parse_int<std::uint64_t>(f[16], lineno);
    r.flagged = parse_int<std::uint64_t>(f[17], lineno);
    r.epsilon = parse_double(f[18]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace trustroute
