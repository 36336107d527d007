#pragma once

// Experiment chain (pump -> nonlinear waveguide -> passive waveguides ->
// demultiplexer -> filters -> gated threshold detectors) and its closed-form
// rate model.
//
// Reference points: mu' quantities (pair and singles) are photons per pulse at
// the output of the nonlinear segment. Channel efficiencies carry everything
// downstream of that point. Detector gate duty is kept separate and applied
// when converting per-active-gate probabilities into per-clock rates.

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pairsim/awg.hpp"
#include "pairsim/errors.hpp"
#include "pairsim/spectrum.hpp"
#include "pairsim/units.hpp"

namespace pairsim {

template <class T>
struct ChannelPair {
    T signal{};
    T idler{};
};

// ---------------------------------------------------------------------------
// Domain types

enum class SegmentKind { nonlinear, passive };

struct WaveguideSegment {
    SegmentKind kind = SegmentKind::passive;
    double length = 0.0;           // m
    double loss_db_per_m = 0.0;    // dB/m, >= 0
    double gamma = 0.0;            // 1/(W m), 0 for passive

    static WaveguideSegment nonlinear(double length, double loss_db_per_m, double gamma)
    {
        return {SegmentKind::nonlinear, length, loss_db_per_m, gamma};
    }
    static WaveguideSegment passive(double length, double loss_db_per_m)
    {
        return {SegmentKind::passive, length, loss_db_per_m, 0.0};
    }

    double attenuation_np() const { return db_to_neper(loss_db_per_m); }
    double transmittance() const { return db_to_linear(loss_db_per_m * length); }

    void validate() const
    {
        detail::require(length >= 0.0, "segment: length must be non-negative");
        detail::require(loss_db_per_m >= 0.0, "segment: propagation loss must be non-negative");
        detail::require(gamma >= 0.0, "segment: gamma must be non-negative");
        detail::require(kind == SegmentKind::nonlinear || gamma == 0.0, "segment: passive segment with gamma != 0");
    }
};

struct PumpConfig {
    double wavelength = 1551.1 * units::nm;
    double repetition_rate = 100.0 * units::mhz;
    double pulse_fwhm = 200.0 * units::ps;
    double average_power = 0.0; // W, coupled into the chip

    double frequency() const { return wavelength_to_frequency(wavelength); }
    double duty_cycle() const { return repetition_rate * pulse_fwhm; }

    // Zero average power is accepted so that dark-count-only configurations
    // can be evaluated.
    void validate() const
    {
        detail::require(wavelength > 0.0, "pump: wavelength must be positive");
        detail::require(repetition_rate > 0.0, "pump: repetition rate must be positive");
        detail::require(pulse_fwhm > 0.0, "pump: pulse FWHM must be positive");
        detail::require(average_power >= 0.0, "pump: average power must be non-negative");
        detail::require(duty_cycle() <= 1.0, "pump: duty cycle R*dt exceeds 1");
    }
};

struct FilterSpec {
    double center_frequency = 0.0;
    double bandwidth_3db = 0.0;
    double insertion_loss_db = 0.0;
    PassbandShape shape = PassbandShape::rectangular;

    double peak_transmittance() const { return db_to_linear(insertion_loss_db); }
    Passband passband() const { return {center_frequency, bandwidth_3db, peak_transmittance(), shape}; }

    void validate() const
    {
        detail::require(bandwidth_3db > 0.0, "filter: bandwidth must be positive");
        detail::require(insertion_loss_db >= 0.0, "filter: insertion loss must be non-negative");
        detail::require(center_frequency > 0.0, "filter: center frequency must be positive");
    }
};

struct DetectorConfig {
    double quantum_efficiency = 1.0;
    double gate_rate = 100.0 * units::mhz;
    double gate_width = 1.0 * units::ns;
    double dark_rate = 0.0; // free-running counts per second
    double dead_time = 0.0;

    double dark_probability() const { return dark_rate / gate_rate; }
    long long dead_gates() const { return std::llround(dead_time * gate_rate); }

    void validate() const
    {
        detail::require(quantum_efficiency >= 0.0 && quantum_efficiency <= 1.0,
                        "detector: quantum efficiency must lie in [0,1]");
        detail::require(gate_rate > 0.0, "detector: gate rate must be positive");
        detail::require(gate_width > 0.0, "detector: gate width must be positive");
        detail::require(dark_rate >= 0.0, "detector: dark rate must be non-negative");
        detail::require(dark_probability() < 1.0, "detector: dark probability per gate must be below 1");
        detail::require(dead_time >= 0.0, "detector: dead time must be non-negative");
    }
};

/// Signal/idler band-pass filters acting as the demultiplexer. A zero
/// generation band selects the automatic band covering both passbands.
struct FilterPairDemux {
    FilterSpec signal;
    FilterSpec idler;
    double generation_band = 0.0;
};

struct AwgDemux {
    AwgSpec awg;
    int signal_channel = 3;
    int idler_channel = -3;
    double generation_band = 0.0; // 0 -> awg.default_generation_band()
};

using Demux = std::variant<FilterPairDemux, AwgDemux>;

/// Noise photons per pulse at the nonlinear-segment output: n0 + n1 * P_p.
struct NoiseCoefficients {
    double n0 = 0.0;
    double n1 = 0.0; // per watt of peak power
};

struct ExperimentChain {
    double coupling_loss_db = 0.0; // per facet; only the output facet acts on photons
    std::vector<WaveguideSegment> segments;
    Demux demux;
    ChannelPair<std::vector<FilterSpec>> post_filters;
    ChannelPair<DetectorConfig> detectors;
    ChannelPair<NoiseCoefficients> noise;

    std::size_t nonlinear_index() const
    {
        std::size_t found = segments.size();
        for (std::size_t k = 0; k < segments.size(); ++k) {
            if (segments[k].kind == SegmentKind::nonlinear) {
                if (found != segments.size()) throw config_error("chain: more than one nonlinear segment");
                found = k;
            }
        }
        if (found == segments.size()) throw config_error("chain: no nonlinear segment");
        return found;
    }

    const WaveguideSegment& nonlinear_segment() const { return segments[nonlinear_index()]; }

    void validate() const
    {
        detail::require(coupling_loss_db >= 0.0, "chain: coupling loss must be non-negative");
        for (const auto& s : segments) s.validate();
        (void)nonlinear_index();
        if (const auto* f = std::get_if<FilterPairDemux>(&demux)) {
            f->signal.validate();
            f->idler.validate();
            detail::require(f->generation_band >= 0.0, "demux: generation band must be non-negative");
        } else {
            const auto& a = std::get<AwgDemux>(demux);
            AwgSpec awg = a.awg;
            if (awg.center_frequency == 0.0) awg.center_frequency = 1.0; // pump-aligned, resolved later
            awg.validate();
            detail::require(a.awg.has_channel(a.signal_channel), "demux: signal channel out of range");
            detail::require(a.awg.has_channel(a.idler_channel), "demux: idler channel out of range");
            detail::require(a.signal_channel != a.idler_channel, "demux: signal and idler share a channel");
            detail::require(a.generation_band >= 0.0, "demux: generation band must be non-negative");
        }
        for (const auto* list : {&post_filters.signal, &post_filters.idler}) {
            for (const auto& f : *list) {
                detail::require(f.insertion_loss_db >= 0.0, "post filter: insertion loss must be non-negative");
            }
        }
        detectors.signal.validate();
        detectors.idler.validate();
        for (const auto* n : {&noise.signal, &noise.idler}) {
            detail::require(n->n0 >= 0.0 && n->n1 >= 0.0, "noise: coefficients must be non-negative");
        }
    }
};

// ---------------------------------------------------------------------------
// Closed-form building blocks

/// Loss-weighted interaction length (1 - exp(-a L)) / a with a in nepers/m.
/// Falls back to the series L - a L^2 / 2 when a L < 1e-6.
inline double effective_length(double loss_db_per_m, double length)
{
    const double a = db_to_neper(loss_db_per_m);
    const double x = a * length;
    if (x < 1e-6) return length - 0.5 * a * length * length;
    return -std::expm1(-x) / a;
}

/// P_p = P / (R dt).
inline double peak_power(const PumpConfig& pump)
{
    const double duty = pump.duty_cycle();
    if (!(duty > 0.0)) throw config_error("pump: duty cycle R*dt must be positive");
    return pump.average_power / duty;
}

/// Pairs per pulse at the nonlinear-segment output inside `bandwidth`:
/// bandwidth * dt * (gamma P_p L_eff)^2 * eta_seg^2.
inline double pair_generation_rate(double peak_power_w, double pulse_fwhm, const WaveguideSegment& seg,
                                   double bandwidth)
{
    const double gpl = seg.gamma * peak_power_w * effective_length(seg.loss_db_per_m, seg.length);
    const double eta = seg.transmittance();
    return bandwidth * pulse_fwhm * gpl * gpl * eta * eta;
}

inline double pair_generation_rate(const PumpConfig& pump, const WaveguideSegment& seg, double bandwidth)
{
    if (seg.kind != SegmentKind::nonlinear) throw config_error("pair_generation_rate: segment is passive");
    return pair_generation_rate(peak_power(pump), pump.pulse_fwhm, seg, bandwidth);
}

/// Quadratic SFWM coefficient a2 in mu' = a2 * P_p^2 for a given bandwidth.
inline double sfwm_quadratic_coefficient(double bandwidth, double pulse_fwhm, const WaveguideSegment& seg)
{
    return pair_generation_rate(1.0, pulse_fwhm, seg, bandwidth);
}

/// Pump transmittance of passive segments placed before the nonlinear one.
inline double upstream_pump_transmittance(const ExperimentChain& chain)
{
    double t = 1.0;
    const std::size_t nl = chain.nonlinear_index();
    for (std::size_t k = 0; k < nl; ++k) t *= chain.segments[k].transmittance();
    return t;
}

/// Peak power inside the nonlinear segment.
inline double coupled_peak_power(const ExperimentChain& chain, const PumpConfig& pump)
{
    return peak_power(pump) * upstream_pump_transmittance(chain);
}

/// Spectral quantities of the demultiplexer at a given pump frequency.
struct DemuxSpectra {
    ChannelPair<Passband> passbands;
    double generation_band = 0.0;
    double pair_bandwidth = 0.0;             // overlap / (peak_s peak_i), Hz
    ChannelPair<double> single_bandwidth;    // (1/peak) integral of T, Hz
};

inline DemuxSpectra demux_spectra(const ExperimentChain& chain, double pump_frequency)
{
    DemuxSpectra out;
    if (const auto* f = std::get_if<FilterPairDemux>(&chain.demux)) {
        out.passbands = {f->signal.passband(), f->idler.passband()};
        double band = f->generation_band;
        if (band == 0.0) {
            double reach = 0.0;
            for (const auto* p : {&out.passbands.signal, &out.passbands.idler}) {
                reach = std::max(reach, std::abs(p->center - pump_frequency) + 4.0 * p->width_3db);
            }
            band = 2.0 * reach;
        }
        out.generation_band = band;
    } else {
        const auto& a = std::get<AwgDemux>(chain.demux);
        AwgSpec awg = a.awg;
        if (awg.center_frequency == 0.0) awg.center_frequency = pump_frequency;
        out.passbands = {channel_passband(awg, a.signal_channel), channel_passband(awg, a.idler_channel)};
        out.generation_band = a.generation_band > 0.0 ? a.generation_band : awg.default_generation_band();
    }
    const auto& s = out.passbands.signal;
    const auto& i = out.passbands.idler;
    out.pair_bandwidth =
        anticorrelated_overlap(s, i, pump_frequency, out.generation_band) / (s.peak * i.peak);
    out.single_bandwidth = {band_limited_bandwidth(s, pump_frequency, out.generation_band),
                            band_limited_bandwidth(i, pump_frequency, out.generation_band)};
    return out;
}

/// Optical transmittance from the nonlinear-segment output to each detector
/// input: output facet, downstream passive segments, demux channel peak and
/// post filters. Excludes quantum efficiency and gate duty.
inline ChannelPair<double> chain_transmittances(const ExperimentChain& chain)
{
    double common = db_to_linear(chain.coupling_loss_db);
    const std::size_t nl = chain.nonlinear_index();
    for (std::size_t k = nl + 1; k < chain.segments.size(); ++k) common *= chain.segments[k].transmittance();

    ChannelPair<double> demux_peak;
    if (const auto* f = std::get_if<FilterPairDemux>(&chain.demux)) {
        demux_peak = {f->signal.peak_transmittance(), f->idler.peak_transmittance()};
    } else {
        const double p = std::get<AwgDemux>(chain.demux).awg.peak_transmittance();
        demux_peak = {p, p};
    }

    auto post = [](const std::vector<FilterSpec>& list) {
        double t = 1.0;
        for (const auto& f : list) t *= f.peak_transmittance();
        return t;
    };
    return {common * demux_peak.signal * post(chain.post_filters.signal),
            common * demux_peak.idler * post(chain.post_filters.idler)};
}

/// Optical transmittance times quantum efficiency, per channel.
inline ChannelPair<double> detection_efficiencies(const ExperimentChain& chain)
{
    const auto t = chain_transmittances(chain);
    return {t.signal * chain.detectors.signal.quantum_efficiency, t.idler * chain.detectors.idler.quantum_efficiency};
}

/// mu_c': pairs per pulse at the nonlinear output with signal and idler inside
/// their respective demux channels.
inline double chain_pair_rate(const ExperimentChain& chain, const PumpConfig& pump)
{
    const auto spectra = demux_spectra(chain, pump.frequency());
    return pair_generation_rate(coupled_peak_power(chain, pump), pump.pulse_fwhm, chain.nonlinear_segment(),
                                spectra.pair_bandwidth);
}

/// Photons per pulse at the nonlinear output inside each channel: the SFWM
/// term over the channel bandwidth plus n1 * P_p + n0.
inline ChannelPair<double> singles_rate(const ExperimentChain& chain, const PumpConfig& pump)
{
    const auto spectra = demux_spectra(chain, pump.frequency());
    const double pp = coupled_peak_power(chain, pump);
    const auto& seg = chain.nonlinear_segment();
    auto one = [&](double bw, const NoiseCoefficients& n) {
        return pair_generation_rate(pp, pump.pulse_fwhm, seg, bw) + n.n1 * pp + n.n0;
    };
    return {one(spectra.single_bandwidth.signal, chain.noise.signal),
            one(spectra.single_bandwidth.idler, chain.noise.idler)};
}

// ---------------------------------------------------------------------------
// Detection

/// Fraction of gates a detector is armed, given the click probability of an
/// armed gate and D = round(dead_time * gate_rate) dead gates per click:
/// renewal steady state 1 / (1 + p D).
inline double gate_duty(double p_click, double dead_time, double gate_rate)
{
    detail::require(p_click >= 0.0 && p_click <= 1.0, "gate_duty: p_click must lie in [0,1]");
    const double dead = static_cast<double>(std::llround(dead_time * gate_rate));
    return 1.0 / (1.0 + p_click * dead);
}

/// Gate duty from an observed click probability per clock cycle (clicks
/// divided by all gates, as a counter reports them). The armed-gate click
/// probability is observed / eta, so eta solves eta = 1 / (1 + (r/eta) D);
/// iterated to relative 1e-12.
inline double gate_duty_from_observed(double clicks_per_clock, double dead_time, double gate_rate)
{
    detail::require(clicks_per_clock >= 0.0 && clicks_per_clock <= 1.0,
                    "gate_duty_from_observed: click fraction must lie in [0,1]");
    const double dead = static_cast<double>(std::llround(dead_time * gate_rate));
    if (clicks_per_clock * dead >= 1.0) {
        throw numerical_error("gate_duty_from_observed: click rate incompatible with dead time");
    }
    double eta = 1.0;
    for (int it = 0; it < 100000; ++it) {
        const double next = 1.0 / (1.0 + (clicks_per_clock / eta) * dead);
        if (std::abs(next - eta) <= 1e-12 * next) return next;
        eta = next;
    }
    throw numerical_error("gate_duty_from_observed: fixed point did not converge");
}

/// Threshold-detector click probability for an armed gate with Poisson photon
/// arrivals of mean eta * mu and dark probability p_dark:
/// 1 - (1 - p_dark) exp(-eta mu).
inline double click_probability(double eta, double mu, double p_dark)
{
    detail::require(eta >= 0.0 && eta <= 1.0, "click_probability: efficiency must lie in [0,1]");
    detail::require(mu >= 0.0, "click_probability: mean photon number must be non-negative");
    detail::require(p_dark >= 0.0 && p_dark < 1.0, "click_probability: dark probability must lie in [0,1)");
    return -std::expm1(std::log1p(-p_dark) - eta * mu);
}

/// Small-mean linearization eta * mu + p_dark.
inline double click_probability_linear(double eta, double mu, double p_dark)
{
    const double p = eta * mu + p_dark;
    if (p > 1.0) throw numerical_error("click_probability_linear: probability exceeds 1");
    return p;
}

inline ChannelPair<double> click_probabilities(const ExperimentChain& chain, const PumpConfig& pump)
{
    const auto eff = detection_efficiencies(chain);
    const auto mu = singles_rate(chain, pump);
    return {click_probability(eff.signal, mu.signal, chain.detectors.signal.dark_probability()),
            click_probability(eff.idler, mu.idler, chain.detectors.idler.dark_probability())};
}

struct RatePrediction {
    double mu_pair_generated = 0.0; // mu_c' at nonlinear output
    double mu_pair_out = 0.0;       // mu_c' eta_s eta_i (optical)
    double mu_signal = 0.0;         // mu_s'
    double mu_idler = 0.0;          // mu_i'
    double pair_bandwidth = 0.0;
    ChannelPair<double> transmittance;   // optical
    ChannelPair<double> efficiency;      // optical x QE
    double p_click_signal = 0.0;         // per armed gate
    double p_click_idler = 0.0;
    double p_joint = 0.0;                // same-gate joint click
    double p_coincidence = 0.0;          // p_joint - p_accidental (true pairs)
    double p_accidental = 0.0;           // p_s p_i (offset gate)
    std::optional<double> car;           // p_joint / p_accidental
    ChannelPair<double> gate_duty{1.0, 1.0};
    double repetition_rate = 0.0;

    double singles_rate_signal() const { return repetition_rate * gate_duty.signal * p_click_signal; }
    double singles_rate_idler() const { return repetition_rate * gate_duty.idler * p_click_idler; }
    double coincidence_rate() const { return repetition_rate * gate_duty.signal * gate_duty.idler * p_joint; }
    double accidental_rate() const
    {
        return repetition_rate * gate_duty.signal * gate_duty.idler * p_accidental;
    }
};

namespace detail {

struct JointClicks {
    double p_s;
    double p_i;
    double p_joint;
    double excess;
};

// Exact threshold-detector probabilities for Poisson pair and noise
// statistics: m_s, m_i are mean detected photons per channel, m_b the mean
// number of pairs with both photons detected.
inline JointClicks joint_clicks(double m_s, double m_i, double m_b, double pd_s, double pd_i)
{
    const double ln_idle_s = std::log1p(-pd_s) - m_s;
    const double ln_idle_i = std::log1p(-pd_i) - m_i;
    const double p_s = -std::expm1(ln_idle_s);
    const double p_i = -std::expm1(ln_idle_i);
    // P(both) = 1 - P(s idle) - P(i idle) + P(both idle), rearranged so the
    // true-pair excess over p_s p_i is computed without cancellation.
    const double excess = std::exp(ln_idle_s + ln_idle_i) * std::expm1(m_b);
    const double p_joint = p_s * p_i + excess;
    return {p_s, p_i, p_joint, excess};
}

} // namespace detail

/// Full analytic prediction for a chain. CAR is undefined (nullopt) when
/// either channel never clicks.
inline RatePrediction predict(const ExperimentChain& chain, const PumpConfig& pump)
{
    chain.validate();
    pump.validate();
    const auto& det = chain.detectors;
    detail::require(std::abs(det.signal.gate_rate - pump.repetition_rate) <= 1e-9 * pump.repetition_rate &&
                        std::abs(det.idler.gate_rate - pump.repetition_rate) <= 1e-9 * pump.repetition_rate,
                    "chain: detectors must be gated at the pump repetition rate");

    RatePrediction out;
    out.repetition_rate = pump.repetition_rate;
    const auto spectra = demux_spectra(chain, pump.frequency());
    out.pair_bandwidth = spectra.pair_bandwidth;
    out.mu_pair_generated = pair_generation_rate(coupled_peak_power(chain, pump), pump.pulse_fwhm,
                                                 chain.nonlinear_segment(), spectra.pair_bandwidth);
    out.transmittance = chain_transmittances(chain);
    out.efficiency = detection_efficiencies(chain);
    out.mu_pair_out = out.mu_pair_generated * out.transmittance.signal * out.transmittance.idler;
    const auto mu = singles_rate(chain, pump);
    out.mu_signal = mu.signal;
    out.mu_idler = mu.idler;

    const double m_s = out.efficiency.signal * mu.signal;
    const double m_i = out.efficiency.idler * mu.idler;
    const double m_b = out.efficiency.signal * out.efficiency.idler * out.mu_pair_generated;
    const auto jc = detail::joint_clicks(m_s, m_i, m_b, det.signal.dark_probability(), det.idler.dark_probability());
    out.p_click_signal = jc.p_s;
    out.p_click_idler = jc.p_i;
    out.p_joint = jc.p_joint;
    out.p_accidental = jc.p_s * jc.p_i;
    out.p_coincidence = jc.excess;
    if (out.p_accidental > 0.0) out.car = jc.p_joint / out.p_accidental;

    out.gate_duty = {gate_duty(jc.p_s, det.signal.dead_time, det.signal.gate_rate),
                     gate_duty(jc.p_i, det.idler.dead_time, det.idler.gate_rate)};
    return out;
}

/// Coincidence-to-accidental ratio. Throws when either click probability is
/// zero.
inline double car_estimate(const ExperimentChain& chain, const PumpConfig& pump)
{
    const auto pred = predict(chain, pump);
    if (!pred.car) throw numerical_error("car_estimate: a channel never clicks, CAR undefined");
    return *pred.car;
}

/// Linearized CAR: eta_s eta_i mu_c' / ((eta_s mu_s' + p_ds)(eta_i mu_i' + p_di)) + 1.
inline double car_linearized(double eta_s, double eta_i, double mu_pair, double mu_s, double mu_i, double pd_s,
                             double pd_i)
{
    const double den = (eta_s * mu_s + pd_s) * (eta_i * mu_i + pd_i);
    if (!(den > 0.0)) throw numerical_error("car_linearized: zero accidental probability");
    return eta_s * eta_i * mu_pair / den + 1.0;
}

struct PairRateEstimate {
    double mu = 0.0;
    bool non_physical = false; // D_c < D_ca
};

/// mu_c = (D_c - D_ca) / (R eta_s eta_i). A negative net count is returned as
/// is and flagged rather than clamped.
inline PairRateEstimate pair_rate_from_counts(double coincidence_rate, double accidental_rate,
                                              double repetition_rate, double eta_s, double eta_i)
{
    detail::require(coincidence_rate >= 0.0 && accidental_rate >= 0.0, "pair_rate_from_counts: negative rate");
    detail::require(repetition_rate > 0.0, "pair_rate_from_counts: repetition rate must be positive");
    detail::require(eta_s > 0.0 && eta_i > 0.0, "pair_rate_from_counts: efficiencies must be positive");
    const double mu = (coincidence_rate - accidental_rate) / (repetition_rate * eta_s * eta_i);
    return {mu, coincidence_rate < accidental_rate};
}

} // namespace pairsim
