#pragma once

// Link budget and per-slot energy accounting.

#include <span>
#include <utility>

#include "trustroute/core.hpp"

namespace trustroute::channel {

struct ChannelParams {
  double path_loss_exponent = 2.0;
  double carrier_hz = 2.4e9;
  double light_speed = 3.0e8;
  double noise_power_w = 1e-14;  // -110 dBm
  double bandwidth_hz = 2.0e6;
  double tx_power_w = 0.1;
};

struct EnergyParams {
  double e_elec = 1.5e-4;    // J/bit
  double xi_fs = 2.5e-8;     // J/(bit m^2)
  double mass = 2.0;         // kg
  double gravity = 9.8;      // m/s^2
  double p_blade = 9.1827;   // W
  double p_induced = 11.5274;  // W
  double u_tip = 60.0;       // m/s
  double v0 = 2.4868;        // m/s, mean rotor induced velocity in hover
  double drag_ratio = 0.5017;
  double air_density = 1.205;  // kg/m^3
  double rotor_solidity = 0.0832;
  double rotor_area = 0.2827;  // m^2
  double beta = 0.7;
  double e_max = 5000.0;     // J per slot
};

double dbm_to_watts(double dbm);

// Linear free-space loss d^theta * (4 pi f / c)^2.
double path_loss(double distance_m, const ChannelParams& p);

double snr(double distance_m, const ChannelParams& p);

// Shannon rate in bit/s.
double link_rate(double distance_m, const ChannelParams& p);

// Aggregate demand volume on one link within one slot must fit in tau * rate.
bool check_link_capacity(std::span<const double> demand_bits, double rate_bps, double tau_s);

struct Transmission {
  double bits = 0.0;
  double distance_m = 0.0;
};

double receive_energy(double bits, const EnergyParams& ep);
double transmit_energy(double bits, double distance_m, const EnergyParams& ep);
double comm_energy(std::span<const double> received_bits, std::span<const Transmission> transmitted,
                   const EnergyParams& ep);

// Rotary-wing propulsion power at forward speed v.
double hover_power(double speed, const EnergyParams& ep);

struct MobilityEnergy {
  double propulsion = 0.0;
  double kinetic = 0.0;  // signed
  double potential = 0.0;  // signed

  double total() const { return propulsion + kinetic + potential; }
};

// Constant speed within the slot, so the propulsion integral is P(v) * tau.
MobilityEnergy mobility_energy(double speed_start, double speed_end, double delta_z, double tau,
                               const EnergyParams& ep);

bool check_energy_budget(double consumed_j, const EnergyParams& ep);

}  // namespace trustroute::channel
