#pragma once

// Per-pulse Monte Carlo of the experiment chain, counting what a
// time-interval analyzer would: singles, same-gate coincidences and
// offset-gate accidentals, with threshold detectors, dark counts and dead time.
//
// Pulses are split into fixed-size blocks with seeds derived from
// (seed, block index). Within a block only pulses where something fires are
// visited (geometric skipping); per-pulse causes are then drawn conditioned
// on at least one of them firing. Dead time is applied afterwards in a single
// sequential pass over all fired gates, so results do not depend on how many
// threads generated the blocks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pairsim/chainmodel.hpp"
#include "pairsim/errors.hpp"
#include "pairsim/rng.hpp"

namespace pairsim {

enum class PairStatistics { poisson, thermal_multimode };

struct TrialConfig {
    std::uint64_t n_pulses = 1'000'000;
    std::uint64_t seed = 1;
    std::uint64_t accidental_offset = 1;
    bool dead_time_enabled = true;
    PairStatistics pair_statistics = PairStatistics::poisson;
    double mode_count = 24.0; // thermal_multimode only
    unsigned threads = 1;

    void validate() const
    {
        detail::require(n_pulses >= 1, "trial: n_pulses must be >= 1");
        detail::require(accidental_offset >= 1, "trial: accidental_offset must be >= 1");
        detail::require(accidental_offset < n_pulses, "trial: accidental_offset must be below n_pulses");
        detail::require(pair_statistics == PairStatistics::poisson || mode_count >= 1.0,
                        "trial: thermal mode count must be >= 1");
        detail::require(threads >= 1, "trial: threads must be >= 1");
    }
};

struct CountSummary {
    std::uint64_t n_pulses = 0;
    std::uint64_t singles_signal = 0;
    std::uint64_t singles_idler = 0;
    std::uint64_t coincidences = 0;       // D_c, same gate
    std::uint64_t accidentals = 0;        // D_ca, signal at t, idler at t + offset
    std::uint64_t accidental_windows = 0; // n_pulses - offset
    std::uint64_t active_gates_signal = 0;
    std::uint64_t active_gates_idler = 0;
    double repetition_rate = 0.0;
    std::vector<std::string> warnings;

    double per_second(std::uint64_t count) const
    {
        return static_cast<double>(count) * repetition_rate / static_cast<double>(n_pulses);
    }

    /// Binomial standard error of a count out of n_pulses trials.
    double count_error(std::uint64_t count) const
    {
        const double c = static_cast<double>(count);
        return std::sqrt(c * (1.0 - c / static_cast<double>(n_pulses)));
    }

    std::optional<double> car() const
    {
        if (accidentals == 0) return std::nullopt;
        return static_cast<double>(coincidences) / static_cast<double>(accidentals);
    }

    /// Poisson error propagation for D_c / D_ca.
    std::optional<double> car_error() const
    {
        if (accidentals == 0 || coincidences == 0) return std::nullopt;
        const double c = static_cast<double>(coincidences);
        const double a = static_cast<double>(accidentals);
        return (c / a) * std::sqrt(1.0 / c + 1.0 / a);
    }

    bool operator==(const CountSummary&) const = default;
};

/// Fraction of gates each detector was armed.
inline ChannelPair<double> measured_gate_duty(const CountSummary& summary)
{
    const double n = static_cast<double>(summary.n_pulses);
    return {static_cast<double>(summary.active_gates_signal) / n,
            static_cast<double>(summary.active_gates_idler) / n};
}

namespace detail {

inline constexpr std::uint64_t mc_block_size = 1ULL << 20;

struct GateEvent {
    std::uint64_t gate;
    std::uint8_t fire; // bit 0 signal, bit 1 idler
};

struct ChannelPlan {
    Passband band;               // centered at detuning from the pump
    double efficiency_after_band; // downstream optics x QE, demux peak excluded
    double p_background;          // dark or noise photon, per gate
    long long dead_gates;
};

struct Interval {
    double lo;
    double hi;
};

struct SimulationPlan {
    ChannelPlan signal;
    ChannelPlan idler;
    std::vector<Interval> support; // upper-photon detuning ranges where pairs matter
    std::vector<double> support_cumulative;
    double mean_pairs = 0.0;       // per pulse over the support
    double p_any_pair = 0.0;
    PairStatistics statistics = PairStatistics::poisson;
    double mode_count = 1.0;
    std::vector<std::string> warnings;
};

inline SimulationPlan make_plan(const ExperimentChain& chain, const PumpConfig& pump, const TrialConfig& trial)
{
    const auto pred = predict(chain, pump); // validates
    const double nu_p = pump.frequency();
    const auto spectra = demux_spectra(chain, nu_p);
    const double pp = coupled_peak_power(chain, pump);
    const double density = pair_generation_rate(pp, pump.pulse_fwhm, chain.nonlinear_segment(), 1.0);

    SimulationPlan plan;
    plan.statistics = trial.pair_statistics;
    plan.mode_count = trial.mode_count;

    auto channel = [&](const Passband& band, double efficiency, const NoiseCoefficients& noise,
                       const DetectorConfig& det) {
        Passband shifted = band;
        shifted.center -= nu_p;
        const double noise_mean = efficiency * (noise.n0 + noise.n1 * pp);
        if (noise_mean > 1.0) plan.warnings.push_back("detected noise photons per pulse exceed 1");
        return ChannelPlan{shifted, band.peak > 0.0 ? efficiency / band.peak : 0.0,
                           -std::expm1(std::log1p(-det.dark_probability()) - noise_mean),
                           trial.dead_time_enabled ? det.dead_gates() : 0};
    };
    plan.signal = channel(spectra.passbands.signal, pred.efficiency.signal, chain.noise.signal,
                          chain.detectors.signal);
    plan.idler = channel(spectra.passbands.idler, pred.efficiency.idler, chain.noise.idler, chain.detectors.idler);

    // Each pair is labelled by its upper photon's detuning d >= 0; its partner
    // sits at -d. Only d where either photon can reach a channel matters.
    const double half_band = 0.5 * spectra.generation_band;
    std::vector<Interval> raw;
    for (const auto* ch : {&plan.signal, &plan.idler}) {
        const double c = std::abs(ch->band.center);
        const double h = ch->band.half_support();
        const double lo = std::max(0.0, c - h);
        const double hi = std::min(half_band, c + h);
        if (hi > lo) raw.push_back({lo, hi});
    }
    std::sort(raw.begin(), raw.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    for (const auto& iv : raw) {
        if (!plan.support.empty() && iv.lo <= plan.support.back().hi) {
            plan.support.back().hi = std::max(plan.support.back().hi, iv.hi);
        } else {
            plan.support.push_back(iv);
        }
    }
    double measure = 0.0;
    for (const auto& iv : plan.support) {
        measure += iv.hi - iv.lo;
        plan.support_cumulative.push_back(measure);
    }
    plan.mean_pairs = density * measure;
    if (plan.mean_pairs > 1.0) plan.warnings.push_back("mean pairs per pulse exceed 1");

    if (plan.statistics == PairStatistics::poisson) {
        plan.p_any_pair = -std::expm1(-plan.mean_pairs);
    } else {
        const double m = plan.mode_count;
        plan.p_any_pair = -std::expm1(-m * std::log1p(plan.mean_pairs / m));
    }
    return plan;
}

// Pair count conditioned on at least one pair, by inverse CDF from k = 1.
inline std::uint64_t sample_pairs_at_least_one(Rng& rng, const SimulationPlan& plan)
{
    const double mu = plan.mean_pairs;
    const double u = rng.uniform() * plan.p_any_pair;
    double pk = 0.0;
    double ratio = 0.0; // p(k+1) = p(k) * ratio * (k + m) / (k + 1), m = 1 for Poisson
    double m = 1.0;
    if (plan.statistics == PairStatistics::poisson) {
        pk = mu * std::exp(-mu);
        ratio = mu;
    } else {
        m = plan.mode_count;
        const double r = (mu / m) / (1.0 + mu / m);
        pk = std::exp(-m * std::log1p(mu / m)) * m * r;
        ratio = r;
    }
    double cdf = pk;
    std::uint64_t k = 1;
    while (cdf < u && k < 100000) {
        if (plan.statistics == PairStatistics::poisson) {
            pk *= ratio / static_cast<double>(k + 1);
        } else {
            pk *= ratio * (static_cast<double>(k) + m) / static_cast<double>(k + 1);
        }
        cdf += pk;
        ++k;
        if (pk == 0.0) break;
    }
    return k;
}

inline double sample_detuning(Rng& rng, const SimulationPlan& plan)
{
    const double total = plan.support_cumulative.back();
    const double x = rng.uniform() * total;
    std::size_t j = 0;
    while (j + 1 < plan.support.size() && x >= plan.support_cumulative[j]) ++j;
    const double before = j == 0 ? 0.0 : plan.support_cumulative[j - 1];
    return std::min(plan.support[j].lo + (x - before), plan.support[j].hi);
}

// Routes one photon at detuning d: bit 0 -> signal detector, bit 1 -> idler.
inline std::uint8_t route_photon(Rng& rng, const SimulationPlan& plan, double d)
{
    const double u = rng.uniform();
    // Neither channel can exceed its peak.
    const double bound = plan.signal.band.peak * plan.signal.efficiency_after_band +
                         plan.idler.band.peak * plan.idler.efficiency_after_band;
    if (u >= bound && bound <= 1.0) return 0;
    const double a_s = plan.signal.band.transmission(d) * plan.signal.efficiency_after_band;
    const double a_i = plan.idler.band.transmission(d) * plan.idler.efficiency_after_band;
    if (a_s + a_i > 1.0 + 1e-12) throw numerical_error("simulate: channel transmissions sum above 1");
    if (u < a_s) return 1;
    if (u < a_s + a_i) return 2;
    return 0;
}

inline std::vector<GateEvent> generate_block(const SimulationPlan& plan, std::uint64_t seed, std::uint64_t block,
                                             std::uint64_t begin, std::uint64_t end)
{
    std::vector<GateEvent> events;
    Rng rng(derive_seed(seed, block));
    const double a = plan.signal.p_background;
    const double b = plan.idler.p_background;
    const double c = plan.support.empty() ? 0.0 : plan.p_any_pair;
    const double q = -std::expm1(std::log1p(-a) + std::log1p(-b) + std::log1p(-c));
    if (!(q > 0.0)) return events;
    const double q_bc = -std::expm1(std::log1p(-b) + std::log1p(-c));

    std::uint64_t gate = begin;
    for (;;) {
        const std::uint64_t gap = rng.geometric(q);
        if (gap >= end - gate) break;
        gate += gap;

        // Draw (bg_s, bg_i, pairs >= 1) conditioned on at least one firing.
        bool bg_s = false;
        bool bg_i = false;
        bool pairs = false;
        if (rng.uniform() * q < a) {
            bg_s = true;
            bg_i = rng.bernoulli(b);
            pairs = rng.bernoulli(c);
        } else if (rng.uniform() * q_bc < b) {
            bg_i = true;
            pairs = rng.bernoulli(c);
        } else {
            pairs = true;
        }

        std::uint8_t fire = static_cast<std::uint8_t>((bg_s ? 1 : 0) | (bg_i ? 2 : 0));
        if (pairs) {
            const std::uint64_t n = sample_pairs_at_least_one(rng, plan);
            for (std::uint64_t k = 0; k < n; ++k) {
                const double d = sample_detuning(rng, plan);
                fire |= route_photon(rng, plan, d);
                fire |= route_photon(rng, plan, -d);
            }
        }
        if (fire != 0) events.push_back({gate, fire});
        ++gate;
        if (gate >= end) break;
    }
    return events;
}

// Sequential dead-time and coincidence bookkeeping over ordered events.
class CountScanner {
public:
    CountScanner(const SimulationPlan& plan, const TrialConfig& trial)
        : dead_s_(plan.signal.dead_gates), dead_i_(plan.idler.dead_gates), n_(trial.n_pulses),
          offset_(trial.accidental_offset)
    {
    }

    void consume(const std::vector<GateEvent>& events)
    {
        for (const auto& e : events) {
            const bool click_s = (e.fire & 1) && e.gate >= armed_s_;
            const bool click_i = (e.fire & 2) && e.gate >= armed_i_;
            if (click_s) {
                ++summary_.singles_signal;
                if (dead_s_ > 0) {
                    armed_s_ = e.gate + 1 + static_cast<std::uint64_t>(dead_s_);
                    dead_total_s_ += std::min<std::uint64_t>(dead_s_, n_ - 1 - e.gate);
                }
            }
            if (click_i) {
                ++summary_.singles_idler;
                if (dead_i_ > 0) {
                    armed_i_ = e.gate + 1 + static_cast<std::uint64_t>(dead_i_);
                    dead_total_i_ += std::min<std::uint64_t>(dead_i_, n_ - 1 - e.gate);
                }
            }
            if (click_s && click_i) ++summary_.coincidences;
            while (!recent_s_.empty() && recent_s_.front() + offset_ < e.gate) recent_s_.pop_front();
            if (click_i && e.gate >= offset_ && !recent_s_.empty() && recent_s_.front() + offset_ == e.gate) {
                ++summary_.accidentals;
            }
            if (click_s) recent_s_.push_back(e.gate);
        }
    }

    CountSummary finish(double repetition_rate)
    {
        summary_.n_pulses = n_;
        summary_.accidental_windows = n_ - offset_;
        summary_.active_gates_signal = n_ - dead_total_s_;
        summary_.active_gates_idler = n_ - dead_total_i_;
        summary_.repetition_rate = repetition_rate;
        return summary_;
    }

private:
    long long dead_s_;
    long long dead_i_;
    std::uint64_t n_;
    std::uint64_t offset_;
    std::uint64_t armed_s_ = 0;
    std::uint64_t armed_i_ = 0;
    std::uint64_t dead_total_s_ = 0;
    std::uint64_t dead_total_i_ = 0;
    std::deque<std::uint64_t> recent_s_;
    CountSummary summary_;
};

} // namespace detail

/// Simulates trial.n_pulses pump pulses through the chain. Deterministic in
/// (chain, pump, trial.seed) and independent of trial.threads.
inline CountSummary simulate(const ExperimentChain& chain, const PumpConfig& pump, const TrialConfig& trial)
{
    trial.validate();
    const auto plan = detail::make_plan(chain, pump, trial);

    const std::uint64_t n = trial.n_pulses;
    const std::uint64_t block = detail::mc_block_size;
    const std::uint64_t n_blocks = (n + block - 1) / block;
    const std::uint64_t chunk = static_cast<std::uint64_t>(trial.threads) * 4;

    detail::CountScanner scanner(plan, trial);
    std::vector<std::vector<detail::GateEvent>> buffers;
    for (std::uint64_t first = 0; first < n_blocks; first += chunk) {
        const std::uint64_t last = std::min(n_blocks, first + chunk);
        buffers.assign(last - first, {});
        auto work = [&](unsigned tid) {
            for (std::uint64_t b = first + tid; b < last; b += trial.threads) {
                buffers[b - first] = detail::generate_block(plan, trial.seed, b, b * block, std::min(n, (b + 1) * block));
            }
        };
        if (trial.threads == 1) {
            work(0);
        } else {
            std::vector<std::jthread> pool;
            std::exception_ptr error;
            std::mutex error_mutex;
            for (unsigned t = 0; t < trial.threads; ++t) {
                pool.emplace_back([&, t] {
                    try {
                        work(t);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                });
            }
            pool.clear();
            if (error) std::rethrow_exception(error);
        }
        for (const auto& events : buffers) scanner.consume(events);
    }
    auto summary = scanner.finish(pump.repetition_rate);
    summary.warnings = plan.warnings;
    return summary;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepVariable { l_si, l_siox, peak_power, awg_loss, dark_rate };

inline const char* to_string(SweepVariable v)
{
    switch (v) {
    case SweepVariable::l_si: return "l_si";
    case SweepVariable::l_siox: return "l_siox";
    case SweepVariable::peak_power: return "pp";
    case SweepVariable::awg_loss: return "awg_loss";
    case SweepVariable::dark_rate: return "dark";
    }
    return "?";
}

struct Scenario {
    ExperimentChain chain;
    PumpConfig pump;
};

/// Returns `base` with one variable replaced. SI units: lengths in m, peak
/// power in W, AWG loss in dB, dark rate in Hz (both detectors).
inline Scenario with_value(Scenario base, SweepVariable var, double value)
{
    auto& chain = base.chain;
    switch (var) {
    case SweepVariable::l_si:
        chain.segments[chain.nonlinear_index()].length = value;
        break;
    case SweepVariable::l_siox: {
        const std::size_t nl = chain.nonlinear_index();
        if (nl + 1 >= chain.segments.size()) throw config_error("sweep l_siox: no passive segment after the nonlinear one");
        chain.segments[nl + 1].length = value;
        break;
    }
    case SweepVariable::peak_power:
        base.pump.average_power = value * base.pump.duty_cycle();
        break;
    case SweepVariable::awg_loss: {
        auto* awg = std::get_if<AwgDemux>(&chain.demux);
        if (!awg) throw config_error("sweep awg_loss: chain has no AWG demultiplexer");
        awg->awg.insertion_loss_db = value;
        break;
    }
    case SweepVariable::dark_rate:
        chain.detectors.signal.dark_rate = value;
        chain.detectors.idler.dark_rate = value;
        break;
    }
    return base;
}

struct SweepPoint {
    double value = 0.0;
    std::uint64_t seed = 0;
    CountSummary counts;
};

/// One independent simulation per grid value; point k uses
/// derive_seed(trial.seed, k).
inline std::vector<SweepPoint> sweep(const Scenario& base, SweepVariable var, std::span<const double> grid,
                                     const TrialConfig& trial)
{
    detail::require(!grid.empty(), "sweep: empty grid");
    std::vector<SweepPoint> out;
    out.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto sc = with_value(base, var, grid[k]);
        TrialConfig t = trial;
        t.seed = derive_seed(trial.seed, k);
        out.push_back({grid[k], t.seed, simulate(sc.chain, sc.pump, t)});
    }
    return out;
}

} // namespace pairsim
