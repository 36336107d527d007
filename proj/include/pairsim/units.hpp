#pragma once

// Unit conversions used at the configuration boundary. Everything past the
// boundary is SI: meters, watts, hertz, seconds. Losses are positive dB.

#include <cmath>
#include <numbers>

namespace pairsim {

inline constexpr double speed_of_light = 299792458.0; // m/s

/// Power transmittance of a loss given in dB: 10^(-loss/10).
inline double db_to_linear(double loss_db)
{
    return std::pow(10.0, -loss_db / 10.0);
}

inline double linear_to_db(double transmittance)
{
    return -10.0 * std::log10(transmittance);
}

/// Power attenuation coefficient in nepers: alpha_dB * ln(10) / 10.
/// Works for any length unit; the result is per the same unit.
inline double db_to_neper(double alpha_db)
{
    return alpha_db * std::numbers::ln10 / 10.0;
}

inline double neper_to_db(double alpha_np)
{
    return alpha_np * 10.0 / std::numbers::ln10;
}

namespace units {

inline constexpr double cm = 1e-2;
inline constexpr double nm = 1e-9;
inline constexpr double ps = 1e-12;
inline constexpr double ns = 1e-9;
inline constexpr double us = 1e-6;
inline constexpr double mw = 1e-3;
inline constexpr double khz = 1e3;
inline constexpr double mhz = 1e6;
inline constexpr double ghz = 1e9;
inline constexpr double thz = 1e12;

// dB/cm -> dB/m
inline constexpr double db_per_cm = 100.0;

} // namespace units

inline double wavelength_to_frequency(double wavelength_m)
{
    return speed_of_light / wavelength_m;
}

} // namespace pairsim
