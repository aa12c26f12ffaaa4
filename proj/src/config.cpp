#include "trustroute/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"

namespace trustroute {

using json = nlohmann::ordered_json;

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Maddqn: return "MADDQN";
    case Algorithm::Madqn: return "MADQN";
    case Algorithm::MaddqnNoBtmm: return "MADDQN-noBTMM";
    case Algorithm::Oracle: return "oracle";
    case Algorithm::Random: return "random";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& s) {
  for (auto a : {Algorithm::Maddqn, Algorithm::Madqn, Algorithm::MaddqnNoBtmm, Algorithm::Oracle,
                 Algorithm::Random}) {
    if (s == to_string(a)) return a;
  }
  throw ValidationError("algorithm must be one of MADDQN, MADQN, MADDQN-noBTMM, oracle, random; got '" +
                        s + "'");
}

namespace {

const char* to_string(DemandMode m) { return m == DemandMode::Batch ? "batch" : "stream"; }
const char* to_string(WeightDenominator d) {
  return d == WeightDenominator::Corrected ? "corrected" : "printed";
}

[[noreturn]] void type_error(const std::string& path, const char* want) {
  throw ParseError("field '" + path + "' must be " + want);
}

// --- reading -----------------------------------------------------------------

void read_value(const json& j, const std::string& path, double& out) {
  if (!j.is_number()) type_error(path, "a number");
  out = j.get<double>();
}

void read_value(const json& j, const std::string& path, std::uint64_t& out) {
  if (!j.is_number_integer() || (!j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
    type_error(path, "a non-negative integer");
  }
  out = j.get<std::uint64_t>();
}

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size_t fields read through the uint64 overload");

void read_value(const json& j, const std::string& path, Slot& out) {
  std::uint64_t v = 0;
  read_value(j, path, v);
  if (v > 0xFFFFFFFFULL) type_error(path, "below 2^32");
  out = static_cast<Slot>(v);
}

void read_value(const json& j, const std::string& path, bool& out) {
  if (!j.is_boolean()) type_error(path, "true or false");
  out = j.get<bool>();
}

void read_value(const json& j, const std::string& path, std::string& out) {
  if (!j.is_string()) type_error(path, "a string");
  out = j.get<std::string>();
}

void read_value(const json& j, const std::string& path, Algorithm& out) {
  std::string s;
  read_value(j, path, s);
  out = parse_algorithm(s);
}

void read_value(const json& j, const std::string& path, WeightScheme& out) {
  std::string s;
  read_value(j, path, s);
  try {
    out = parse_weight_scheme(s);
  } catch (const Error&) {
    throw ValidationError(path + " must be adaptive, average or random; got '" + s + "'");
  }
}

void read_value(const json& j, const std::string& path, WeightDenominator& out) {
  std::string s;
  read_value(j, path, s);
  if (s == "corrected") {
    out = WeightDenominator::Corrected;
  } else if (s == "printed") {
    out = WeightDenominator::Printed;
  } else {
    throw ValidationError(path + " must be corrected or printed; got '" + s + "'");
  }
}

void read_value(const json& j, const std::string& path, DemandMode& out) {
  std::string s;
  read_value(j, path, s);
  if (s == "batch") {
    out = DemandMode::Batch;
  } else if (s == "stream") {
    out = DemandMode::Stream;
  } else {
    throw ValidationError(path + " must be batch or stream; got '" + s + "'");
  }
}

void read_value(const json& j, const std::string& path, DropCharge& out) {
  std::string s;
  read_value(j, path, s);
  if (s == "remaining_hops") {
    out = DropCharge::RemainingHops;
  } else if (s == "horizon") {
    out = DropCharge::Horizon;
  } else {
    throw ValidationError(path + " must be remaining_hops or horizon; got '" + s + "'");
  }
}

void read_value(const json& j, const std::string& path, Vec3& out) {
  if (!j.is_array() || j.size() != 3) type_error(path, "an [x, y, z] array");
  read_value(j[0], path + "[0]", out.x);
  read_value(j[1], path + "[1]", out.y);
  read_value(j[2], path + "[2]", out.z);
}

void read_value(const json& j, const std::string& path, DemandSpec& out) {
  if (!j.is_object()) type_error(path, "an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string p = path + "." + it.key();
    if (it.key() == "source") {
      std::uint64_t v = 0;
      read_value(it.value(), p, v);
      out.source = static_cast<NodeId>(v);
    } else if (it.key() == "destination") {
      std::uint64_t v = 0;
      read_value(it.value(), p, v);
      out.destination = static_cast<NodeId>(v);
    } else if (it.key() == "bits") {
      read_value(it.value(), p, out.bits);
    } else {
      throw ParseError("unknown field '" + p + "'");
    }
  }
}

template <class T>
void read_value(const json& j, const std::string& path, std::vector<T>& out) {
  if (!j.is_array()) type_error(path, "an array");
  std::vector<T> v(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) read_value(j[k], path + "[" + std::to_string(k) + "]", v[k]);
  out = std::move(v);
}

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) type_error(path_.empty() ? "<root>" : path_, "an object");
  }

  template <class T>
  void field(const char* key, T& out) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) read_value(*it, join(key), out);
  }

  template <class Fn>
  void section(const char* key, Fn fn) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      Reader sub(*it, join(key));
      fn(sub);
      sub.finish();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ParseError("unknown field '" + join(it.key()) + "'");
    }
  }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// --- writing -----------------------------------------------------------------

json write_value(double v) { return v; }
json write_value(std::uint64_t v) { return v; }
json write_value(std::uint32_t v) { return v; }
json write_value(bool v) { return v; }
json write_value(const std::string& v) { return v; }
json write_value(Algorithm v) { return to_string(v); }
json write_value(WeightScheme v) { return to_string(v); }
json write_value(WeightDenominator v) { return to_string(v); }
json write_value(DemandMode v) { return to_string(v); }
json write_value(DropCharge v) {
  return v == DropCharge::RemainingHops ? "remaining_hops" : "horizon";
}
json write_value(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
json write_value(const DemandSpec& d) {
  return json{{"source", d.source}, {"destination", d.destination}, {"bits", d.bits}};
}
template <class T>
json write_value(const std::vector<T>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back(write_value(x));
  return a;
}

class Writer {
 public:
  explicit Writer(json& j) : j_(j) { j_ = json::object(); }

  template <class T>
  void field(const char* key, T& v) {
    j_[key] = write_value(v);
  }

  template <class Fn>
  void section(const char* key, Fn fn) {
    json sub;
    Writer w(sub);
    fn(w);
    j_[key] = std::move(sub);
  }

 private:
  json& j_;
};

// One field list drives both directions.
template <class V>
void visit(V& v, ExperimentConfig& c) {
  v.field("run_id", c.run_id);
  v.field("algorithm", c.algorithm);
  v.field("seeds", c.seeds);
  v.field("episodes", c.episodes);
  v.field("output_dir", c.output_dir);
  v.field("nodes", c.world.nodes);
  v.field("fixed_positions", c.world.fixed_positions);
  v.section("slot", [&](V& s) {
    auto& sc = c.world.slot;
    s.field("tau", sc.tau);
    s.field("horizon", sc.horizon);
    s.field("d_max", sc.d_max);
    s.field("d_min", sc.d_min);
    s.field("q", sc.q);
    s.field("speed", sc.speed);
    s.section("arena", [&](V& a) {
      a.field("x_max", sc.arena.x_max);
      a.field("y_max", sc.arena.y_max);
      a.field("z_min", sc.arena.z_min);
      a.field("z_max", sc.arena.z_max);
    });
  });
  v.section("traffic", [&](V& t) {
    auto& tp = c.world.traffic;
    t.field("mode", c.world.demand_mode);
    t.field("demands", c.world.demands);
    t.field("demands_per_slot", c.world.demands_per_slot);
    t.field("fixed_demands", c.world.fixed_demands);
    t.field("size_min_bits", tp.size_min_bits);
    t.field("size_max_bits", tp.size_max_bits);
    t.field("c_max", tp.c_max);
    t.field("t_one_max", tp.t_one_max);
    t.field("reinject_on_isolation", tp.reinject_on_isolation);
    t.field("max_hops_per_slot", tp.max_hops_per_slot);
    t.field("drop_charge", tp.drop_charge);
  });
  v.section("channel", [&](V& s) {
    auto& ch = c.world.channel;
    s.field("path_loss_exponent", ch.path_loss_exponent);
    s.field("carrier_hz", ch.carrier_hz);
    s.field("light_speed", ch.light_speed);
    s.field("noise_power_w", ch.noise_power_w);
    s.field("bandwidth_hz", ch.bandwidth_hz);
    s.field("tx_power_w", ch.tx_power_w);
  });
  v.section("energy", [&](V& s) {
    auto& e = c.world.energy;
    s.field("e_elec", e.e_elec);
    s.field("xi_fs", e.xi_fs);
    s.field("mass", e.mass);
    s.field("gravity", e.gravity);
    s.field("p_blade", e.p_blade);
    s.field("p_induced", e.p_induced);
    s.field("u_tip", e.u_tip);
    s.field("v0", e.v0);
    s.field("drag_ratio", e.drag_ratio);
    s.field("air_density", e.air_density);
    s.field("rotor_solidity", e.rotor_solidity);
    s.field("rotor_area", e.rotor_area);
    s.field("beta", e.beta);
    s.field("e_max", e.e_max);
  });
  v.section("attack", [&](V& s) {
    auto& a = c.world.attack;
    s.field("f", a.f);
    s.field("p1", a.p1);
    s.field("p2", a.p2);
    s.field("trigger_slot", a.trigger_slot);
  });
  v.section("trust", [&](V& s) {
    auto& t = c.world.trust;
    s.field("scheme", t.scheme);
    s.field("threshold", t.threshold);
    s.field("initial", t.initial);
    s.field("psi0_cap", t.psi0_cap);
    s.field("denominator", t.denominator);
  });
  v.section("consensus", [&](V& s) {
    auto& k = c.world.consensus;
    s.field("n", k.n);
    s.field("rotation_period", k.rotation_period);
    s.field("drop_probability", k.drop_probability);
    s.field("max_txs_per_block", k.max_txs_per_block);
    s.field("range_limited", k.range_limited);
  });
  v.section("rl", [&](V& s) {
    auto& h = c.marl.hyper;
    s.field("alpha", h.alpha);
    s.field("gamma", h.gamma);
    s.field("eps_start", h.eps_start);
    s.field("eps_end", h.eps_end);
    s.field("eps_decay_fraction", h.eps_decay_fraction);
    s.field("target_sync", h.target_sync);
    s.field("batch", h.batch);
    s.field("buffer_capacity", h.buffer_capacity);
    s.field("hidden", h.hidden);
    s.field("obs_destination", c.marl.obs_destination);
    s.field("share_parameters", c.marl.share_parameters);
  });
  v.section("trust_bench", [&](V& s) {
    auto& b = c.trust_bench;
    s.field("p1_values", b.p1_values);
    s.field("p2_values", b.p2_values);
    s.field("schemes", b.schemes);
    s.field("seeds", b.seeds);
    s.field("horizon", b.horizon);
    s.field("demands_per_slot", b.demands_per_slot);
  });
  v.section("consensus_bench", [&](V& s) {
    auto& b = c.consensus_bench;
    s.field("n_values", b.n_values);
    s.field("trials", b.trials);
    s.field("rounds", b.rounds);
    s.field("drop_probability", b.drop_probability);
  });
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace

void ExperimentConfig::validate() const {
  require(!run_id.empty() && run_id.find_first_of(",\r\n") == std::string::npos,
          "run_id must be non-empty without commas or line breaks");
  require(!seeds.empty(), "seeds must list at least one seed");
  require(episodes >= 1, "episodes must be >= 1");
  world_for(*this).validate();
  marl.hyper.validate();

  const auto& ch = world.channel;
  require(ch.path_loss_exponent > 0.0, "channel.path_loss_exponent must be > 0");
  require(ch.carrier_hz > 0.0, "channel.carrier_hz must be > 0");
  require(ch.light_speed > 0.0, "channel.light_speed must be > 0");
  require(ch.noise_power_w > 0.0, "channel.noise_power_w must be > 0");
  require(ch.bandwidth_hz > 0.0, "channel.bandwidth_hz must be > 0");
  require(ch.tx_power_w > 0.0, "channel.tx_power_w must be > 0");
  const auto& e = world.energy;
  for (auto [v, name] : {std::pair{e.e_elec, "energy.e_elec"}, {e.xi_fs, "energy.xi_fs"},
                         {e.mass, "energy.mass"}, {e.gravity, "energy.gravity"},
                         {e.u_tip, "energy.u_tip"}, {e.v0, "energy.v0"},
                         {e.air_density, "energy.air_density"}, {e.rotor_area, "energy.rotor_area"},
                         {e.e_max, "energy.e_max"}}) {
    require(v > 0.0, std::string(name) + " must be > 0");
  }
  require(e.p_blade >= 0.0 && e.p_induced >= 0.0, "energy hover powers must be >= 0");
  require(e.drag_ratio >= 0.0 && e.rotor_solidity >= 0.0, "energy rotor coefficients must be >= 0");
  require(e.beta > 0.0 && e.beta <= 1.0, "energy.beta must lie in (0, 1]");

  for (double p : trust_bench.p1_values) require(p >= 0.0 && p <= 1.0, "trust_bench.p1_values must lie in [0, 1]");
  for (double p : trust_bench.p2_values) require(p >= 0.0 && p <= 1.0, "trust_bench.p2_values must lie in [0, 1]");
  require(!trust_bench.schemes.empty(), "trust_bench.schemes must not be empty");
  require(trust_bench.seeds >= 1, "trust_bench.seeds must be >= 1");
  require(trust_bench.horizon >= 1, "trust_bench.horizon must be >= 1");
  require(trust_bench.demands_per_slot >= 0.0, "trust_bench.demands_per_slot must be >= 0");
  for (auto n : consensus_bench.n_values) require(n >= 1, "consensus_bench.n_values must be >= 1");
  require(consensus_bench.trials >= 1, "consensus_bench.trials must be >= 1");
  require(consensus_bench.rounds >= 1, "consensus_bench.rounds must be >= 1");
  require(consensus_bench.drop_probability >= 0.0 && consensus_bench.drop_probability < 1.0,
          "consensus_bench.drop_probability must lie in [0, 1)");
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // Convert the byte offset into line:column.
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                     ": malformed JSON");
  }
  ExperimentConfig cfg;
  Reader r(j, "");
  visit(r, cfg);
  r.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
  json j;
  Writer w(j);
  ExperimentConfig copy = cfg;
  visit(w, copy);
  return j.dump(2) + "\n";
}

WorldConfig world_for(const ExperimentConfig& cfg) {
  WorldConfig w = cfg.world;
  w.btmm = cfg.algorithm != Algorithm::MaddqnNoBtmm;
  return w;
}

MarlConfig marl_for(const ExperimentConfig& cfg) {
  MarlConfig m = cfg.marl;
  m.rule = cfg.algorithm == Algorithm::Madqn ? TargetRule::Dqn : TargetRule::DoubleDqn;
  m.total_episodes = cfg.episodes;
  return m;
}

}  // namespace trustroute
