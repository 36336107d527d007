#pragma once

// Arrayed-waveguide-grating demultiplexer. Channels are addressed by a signed
// offset k from the center channel; channel k is centered at
// center_frequency + k * channel_spacing.

#include <cstdlib>
#include <string>

#include "pairsim/errors.hpp"
#include "pairsim/spectrum.hpp"
#include "pairsim/units.hpp"

namespace pairsim {

struct AwgSpec {
    int channel_count = 16;
    double channel_spacing = 200.0 * units::ghz;
    double passband_3db = 80.0 * units::ghz;
    double insertion_loss_db = 7.7;
    double center_frequency = 0.0; // aligned to the pump channel
    PassbandShape passband_shape = PassbandShape::gaussian;

    double peak_transmittance() const { return db_to_linear(insertion_loss_db); }

    /// Default pair generation band: +-4 channel spacings around the pump.
    double default_generation_band() const { return 8.0 * channel_spacing; }

    void validate() const
    {
        detail::require(channel_count >= 1, "awg: channel_count must be >= 1");
        detail::require(channel_spacing > 0.0, "awg: channel_spacing must be positive");
        detail::require(passband_3db > 0.0, "awg: passband_3db must be positive");
        detail::require(passband_3db < channel_spacing, "awg: passband_3db must be below channel_spacing");
        detail::require(insertion_loss_db >= 0.0, "awg: insertion_loss_db must be non-negative");
        detail::require(center_frequency > 0.0, "awg: center_frequency must be positive");
    }

    bool has_channel(int k) const { return 2 * std::abs(k) <= channel_count; }
};

inline Passband channel_passband(const AwgSpec& awg, int channel)
{
    if (!awg.has_channel(channel)) {
        throw config_error("awg: channel offset " + std::to_string(channel) + " outside +-" +
                           std::to_string(awg.channel_count / 2));
    }
    return Passband{awg.center_frequency + channel * awg.channel_spacing, awg.passband_3db,
                    awg.peak_transmittance(), awg.passband_shape};
}

inline double channel_transmission(const AwgSpec& awg, int channel, double nu)
{
    return channel_passband(awg, channel).transmission(nu);
}

/// Fraction of pairs, flat over `generation_band` and perfectly
/// anti-correlated about `pump_frequency`, whose signal exits channel ch_s and
/// idler exits ch_i. Insertion losses included.
inline double pair_transmittance(const AwgSpec& awg, int ch_s, int ch_i, double pump_frequency,
                                 double generation_band)
{
    detail::require(generation_band > 0.0, "awg: generation_band must be positive");
    return anticorrelated_overlap(channel_passband(awg, ch_s), channel_passband(awg, ch_i), pump_frequency,
                                  generation_band) /
           generation_band;
}

/// Equivalent rectangular bandwidth seen by pairs, insertion losses factored
/// out (they belong to the chain transmittance).
inline double effective_pair_bandwidth(const AwgSpec& awg, int ch_s, int ch_i, double pump_frequency,
                                       double generation_band)
{
    const double peak = awg.peak_transmittance();
    return pair_transmittance(awg, ch_s, ch_i, pump_frequency, generation_band) * generation_band /
           (peak * peak);
}

inline double effective_pair_bandwidth(const AwgSpec& awg, int ch_s, int ch_i, double pump_frequency)
{
    return effective_pair_bandwidth(awg, ch_s, ch_i, pump_frequency, awg.default_generation_band());
}

} // namespace pairsim
