#include "trustroute/channel.hpp"

#include <cmath>
#include <numeric>

namespace trustroute::channel {

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double path_loss(double distance_m, const ChannelParams& p) {
  if (!(distance_m > 0.0)) {
    throw DomainError("path loss needs a positive distance, got " + std::to_string(distance_m));
  }
  const double k = 4.0 * kPi * p.carrier_hz / p.light_speed;
  return std::pow(distance_m, p.path_loss_exponent) * k * k;
}

double snr(double distance_m, const ChannelParams& p) {
  return p.tx_power_w / (p.noise_power_w * path_loss(distance_m, p));
}

double link_rate(double distance_m, const ChannelParams& p) {
  return p.bandwidth_hz * std::log2(1.0 + snr(distance_m, p));
}

bool check_link_capacity(std::span<const double> demand_bits, double rate_bps, double tau_s) {
  const double total = std::accumulate(demand_bits.begin(), demand_bits.end(), 0.0);
  return total <= tau_s * rate_bps;
}

double receive_energy(double bits, const EnergyParams& ep) { return bits * ep.e_elec; }

double transmit_energy(double bits, double distance_m, const EnergyParams& ep) {
  return bits * (ep.e_elec + ep.xi_fs * distance_m * distance_m);
}

double comm_energy(std::span<const double> received_bits, std::span<const Transmission> transmitted,
                   const EnergyParams& ep) {
  double e = 0.0;
  for (double bits : received_bits) e += receive_energy(bits, ep);
  for (const auto& t : transmitted) e += transmit_energy(t.bits, t.distance_m, ep);
  return e;
}

double hover_power(double speed, const EnergyParams& ep) {
  if (speed < 0.0) throw DomainError("speed must be non-negative");
  const double v2 = speed * speed;
  const double v4 = v2 * v2;
  const double v0_4 = std::pow(ep.v0, 4);
  const double blade = ep.p_blade * (1.0 + 3.0 * v2 / (ep.u_tip * ep.u_tip));
  const double radicand = std::sqrt(1.0 + v4 / (4.0 * v0_4)) - v2 / (2.0 * v0_4);
  if (radicand < 0.0) {
    throw DomainError("induced-power radicand negative at speed " + std::to_string(speed));
  }
  const double induced = ep.p_induced * std::sqrt(radicand);
  const double parasite =
      0.5 * ep.drag_ratio * ep.air_density * ep.rotor_solidity * ep.rotor_area * v2 * speed;
  return blade + induced + parasite;
}

MobilityEnergy mobility_energy(double speed_start, double speed_end, double delta_z, double tau,
                               const EnergyParams& ep) {
  if (!(tau > 0.0)) throw DomainError("slot length must be positive");
  MobilityEnergy e;
  e.propulsion = hover_power(speed_end, ep) * tau;
  e.kinetic = 0.5 * ep.mass * (speed_end * speed_end - speed_start * speed_start);
  e.potential = ep.gravity * ep.mass * delta_z;
  return e;
}

bool check_energy_budget(double consumed_j, const EnergyParams& ep) {
  return consumed_j <= ep.beta * ep.e_max;
}

}  // namespace trustroute::channel
