#pragma once

#include <numbers>

// Internal convention: angular frequencies in rad/s, times in seconds.
// Anything user-facing is in ordinary frequency (Hz, kHz, MHz).
namespace polcpmg::units {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr double mhz(double nu) { return kTwoPi * nu * 1e6; }
constexpr double khz(double nu) { return kTwoPi * nu * 1e3; }
constexpr double to_mhz(double omega) { return omega / kTwoPi / 1e6; }
constexpr double to_khz(double omega) { return omega / kTwoPi / 1e3; }

constexpr double ns(double t) { return t * 1e-9; }
constexpr double us(double t) { return t * 1e-6; }
constexpr double to_ns(double t) { return t * 1e9; }
constexpr double to_us(double t) { return t * 1e6; }

constexpr double deg(double a) { return a * kPi / 180.0; }
constexpr double to_deg(double a) { return a * 180.0 / kPi; }

}  // namespace polcpmg::units
