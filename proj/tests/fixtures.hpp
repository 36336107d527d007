#pragma once

#include "pairsim/chainmodel.hpp"
#include "pairsim/units.hpp"

namespace fixtures {

using namespace pairsim;

inline PumpConfig pump_at_peak(double peak_w)
{
    PumpConfig p;
    p.average_power = peak_w * p.duty_cycle();
    return p;
}

inline DetectorConfig detector(double qe, double dark_hz, double dead_s)
{
    DetectorConfig d;
    d.quantum_efficiency = qe;
    d.dark_rate = dark_hz;
    d.dead_time = dead_s;
    return d;
}

// Two-section waveguide with mirrored 120 GHz filters, as in the cascaded
// Si/SiOx devices.
inline ExperimentChain waveguide_chain(double l_si_cm, double l_siox_cm, double noise_n1 = 0.2)
{
    const double nu_p = PumpConfig{}.frequency();
    ExperimentChain c;
    c.coupling_loss_db = 1.0;
    c.segments = {WaveguideSegment::nonlinear(l_si_cm * units::cm, 2.0 * units::db_per_cm, 161.0),
                  WaveguideSegment::passive(l_siox_cm * units::cm, 1.8 * units::db_per_cm)};
    FilterPairDemux f;
    f.signal = {nu_p + 598 * units::ghz, 120 * units::ghz, 0.0, PassbandShape::rectangular};
    f.idler = {nu_p - 598 * units::ghz, 120 * units::ghz, 0.0, PassbandShape::rectangular};
    c.demux = f;
    FilterSpec post;
    post.insertion_loss_db = 3.8;
    c.post_filters = {{post}, {post}};
    c.detectors = {detector(0.21, 2.1e3, 10 * units::us), detector(0.21, 2.1e3, 10 * units::us)};
    c.noise = {{0.0, noise_n1}, {0.0, noise_n1}};
    return c;
}

inline ExperimentChain awg_chain(int signal_channel = 3, int idler_channel = -3, double awg_loss_db = 7.7,
                                 double dark_hz = 5.1e3)
{
    ExperimentChain c;
    c.coupling_loss_db = 1.0;
    c.segments = {WaveguideSegment::nonlinear(1.37 * units::cm, 2.0 * units::db_per_cm, 161.0)};
    AwgDemux a;
    a.awg.insertion_loss_db = awg_loss_db;
    a.signal_channel = signal_channel;
    a.idler_channel = idler_channel;
    c.demux = a;
    FilterSpec post;
    post.insertion_loss_db = 2.8;
    c.post_filters = {{post}, {post}};
    c.detectors = {detector(0.24, dark_hz, 10 * units::us), detector(0.24, dark_hz, 10 * units::us)};
    c.noise = {{0.0, 0.2}, {0.0, 0.2}};
    return c;
}

// Lossless single-segment chain with mirrored rectangular filters and no
// noise; the total channel efficiency sits entirely in the quantum
// efficiency. Returns the pump giving `mu_pair` pairs per pulse.
struct BareChain {
    ExperimentChain chain;
    PumpConfig pump;
};

inline BareChain bare_chain(double mu_pair, double efficiency, double dark_per_gate, double dead_s = 0.0)
{
    BareChain b;
    const double nu_p = b.pump.frequency();
    auto& c = b.chain;
    c.segments = {WaveguideSegment::nonlinear(1.0 * units::cm, 0.0, 100.0)};
    FilterPairDemux f;
    f.signal = {nu_p + 600 * units::ghz, 100 * units::ghz, 0.0, PassbandShape::rectangular};
    f.idler = {nu_p - 600 * units::ghz, 100 * units::ghz, 0.0, PassbandShape::rectangular};
    c.demux = f;
    const double dark_hz = dark_per_gate * b.pump.repetition_rate;
    c.detectors = {detector(efficiency, dark_hz, dead_s), detector(efficiency, dark_hz, dead_s)};
    const double a2 = sfwm_quadratic_coefficient(100 * units::ghz, b.pump.pulse_fwhm, c.segments[0]);
    b.pump.average_power = std::sqrt(mu_pair / a2) * b.pump.duty_cycle();
    return b;
}

} // namespace fixtures
