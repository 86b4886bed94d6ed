#pragma once

// Physical constants (CODATA 2018) and unit helpers.
//
// Internal convention: SI units with *angular* frequencies (rad/s)
// everywhere. All I/O surfaces (CLI, config files, exported tables)
// speak ordinary frequency in Hz; conversion happens at the boundary.

#include <numbers>

namespace nwtwin::constants {

inline constexpr double hbar = 1.054571817e-34;   // J s
inline constexpr double k_boltzmann = 1.380649e-23; // J/K
inline constexpr double speed_of_light = 299792458.0; // m/s
inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

} // namespace nwtwin::constants

namespace nwtwin {

// Hz -> rad/s
inline constexpr double angular(double hz) { return constants::two_pi * hz; }
// rad/s -> Hz
inline constexpr double ordinary(double rad_per_s) { return rad_per_s / constants::two_pi; }

} // namespace nwtwin
