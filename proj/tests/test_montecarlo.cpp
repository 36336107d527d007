#include <catch_amalgamated.hpp>

#include "fixtures.hpp"
#include "pairsim/montecarlo.hpp"

#include <cmath>
#include <set>
#include <vector>

using namespace pairsim;
using Catch::Approx;

namespace {

TrialConfig trial(std::uint64_t n, std::uint64_t seed = 7)
{
    TrialConfig t;
    t.n_pulses = n;
    t.seed = seed;
    return t;
}

// |observed - expected| in binomial standard errors.
double z_score(std::uint64_t observed, double n, double p)
{
    const double mean = n * p;
    return std::abs(static_cast<double>(observed) - mean) / std::sqrt(n * p * (1 - p));
}

} // namespace

TEST_CASE("seed derivation", "[rng]") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t m = 0; m < 4; ++m) {
        for (std::uint64_t k = 0; k < 256; ++k) seen.insert(derive_seed(m, k));
    }
    CHECK(seen.size() == 4 * 256);
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}

TEST_CASE("rng draws", "[rng]") {
    Rng rng(3);
    double sum = 0.0;
    double geo = 0.0;
    const int n = 200000;
    for (int k = 0; k < n; ++k) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
        geo += static_cast<double>(rng.geometric(0.2));
    }
    CHECK(sum / n == Approx(0.5).margin(4 * std::sqrt(1.0 / 12 / n)));
    // Mean failures before success: (1 - q) / q = 4, sd sqrt(1-q)/q.
    CHECK(geo / n == Approx(4.0).margin(4 * std::sqrt(0.8) / 0.2 / std::sqrt(n)));
    CHECK(rng.geometric(1.0) == 0);
}

TEST_CASE("simulation is deterministic across runs and thread counts", "[montecarlo]") {
    const auto chain = fixtures::waveguide_chain(1.37, 0.94);
    const auto pump = fixtures::pump_at_peak(0.037);
    auto t = trial(5'000'000);
    const auto a = simulate(chain, pump, t);
    const auto b = simulate(chain, pump, t);
    t.threads = 3;
    const auto c = simulate(chain, pump, t);
    t.threads = 8;
    const auto d = simulate(chain, pump, t);
    CHECK(a == b);
    CHECK(a == c);
    CHECK(a == d);
    t.seed = 8;
    CHECK_FALSE(simulate(chain, pump, t) == a);
}

TEST_CASE("singles follow the thinned Poisson click probability", "[montecarlo]") {
    const auto bare = fixtures::bare_chain(0.05, 0.3, 1e-4);
    const auto s = simulate(bare.chain, bare.pump, trial(2'000'000));
    const auto pred = predict(bare.chain, bare.pump);
    CHECK(z_score(s.singles_signal, 2e6, pred.p_click_signal) < 4.0);
    CHECK(z_score(s.singles_idler, 2e6, pred.p_click_idler) < 4.0);
    CHECK(z_score(s.coincidences, 2e6, pred.p_joint) < 4.0);
    CHECK(z_score(s.accidentals, 2e6 - 1, pred.p_accidental) < 4.0);
    CHECK(s.active_gates_signal == s.n_pulses);
}

TEST_CASE("thermal statistics with many modes approach Poisson", "[montecarlo]") {
    const auto bare = fixtures::bare_chain(0.1, 0.5, 0.0);
    auto t = trial(2'000'000);
    t.pair_statistics = PairStatistics::thermal_multimode;
    t.mode_count = 1e7;
    const auto s = simulate(bare.chain, bare.pump, t);
    const auto pred = predict(bare.chain, bare.pump);
    CHECK(z_score(s.singles_signal, 2e6, pred.p_click_signal) < 4.0);
    CHECK(z_score(s.coincidences, 2e6, pred.p_joint) < 4.0);
}

TEST_CASE("single-mode thermal statistics bunch pairs", "[montecarlo]") {
    // With one mode the pair number is geometric, so multi-pair gates and
    // hence accidental-like coincidences rise relative to Poisson at the same
    // mean, while P(at least one pair) falls.
    const auto bare = fixtures::bare_chain(0.2, 1.0, 0.0);
    auto t = trial(1'000'000);
    const auto poisson = simulate(bare.chain, bare.pump, t);
    t.pair_statistics = PairStatistics::thermal_multimode;
    t.mode_count = 1.0;
    const auto thermal = simulate(bare.chain, bare.pump, t);
    const double p_any_thermal = 1.0 - 1.0 / 1.2;
    const double p_any_poisson = 1.0 - std::exp(-0.2);
    CHECK(z_score(thermal.coincidences, 1e6, p_any_thermal) < 4.0);
    CHECK(z_score(poisson.coincidences, 1e6, p_any_poisson) < 4.0);
}

TEST_CASE("dead time lowers counts monotonically", "[montecarlo][property]") {
    std::uint64_t prev = UINT64_MAX;
    for (double dead_us : {0.0, 0.1, 1.0, 10.0}) {
        const auto bare = fixtures::bare_chain(0.02, 0.5, 1e-4, dead_us * units::us);
        const auto s = simulate(bare.chain, bare.pump, trial(2'000'000));
        CHECK(s.singles_signal < prev);
        prev = s.singles_signal;
    }
}

TEST_CASE("accidental offset does not bias accidentals", "[montecarlo][property]") {
    const auto bare = fixtures::bare_chain(0.05, 0.4, 1e-3);
    const auto pred = predict(bare.chain, bare.pump);
    for (std::uint64_t off : {1ULL, 2ULL, 17ULL, 1000ULL}) {
        auto t = trial(2'000'000);
        t.accidental_offset = off;
        const auto s = simulate(bare.chain, bare.pump, t);
        CHECK(s.accidental_windows == 2'000'000 - off);
        CHECK(z_score(s.accidentals, static_cast<double>(s.accidental_windows), pred.p_accidental) < 4.0);
    }
}

TEST_CASE("measured gate duty matches the renewal formula", "[montecarlo]") {
    SECTION("p_click = 0.01, D = 1000") {
        const double mu = -std::log(1.0 - 0.01) / 0.5;
        const auto bare = fixtures::bare_chain(mu, 0.5, 0.0, 10 * units::us);
        const auto pred = predict(bare.chain, bare.pump);
        REQUIRE(pred.p_click_signal == Approx(0.01).epsilon(1e-12));
        const auto s = simulate(bare.chain, bare.pump, trial(100'000'000));
        const auto duty = measured_gate_duty(s);
        CHECK(duty.signal == Approx(0.0909).epsilon(0.02));
        CHECK(duty.signal == Approx(pred.gate_duty.signal).epsilon(0.02));
        CHECK(duty.idler == Approx(pred.gate_duty.idler).epsilon(0.02));
    }
    SECTION("dark counts only, 2.1e-5 per gate") {
        const auto bare = fixtures::bare_chain(0.0, 0.5, 2.1e-5, 10 * units::us);
        const auto s = simulate(bare.chain, bare.pump, trial(200'000'000));
        const auto duty = measured_gate_duty(s);
        CHECK(duty.signal == Approx(0.9794).epsilon(0.003));
        CHECK(duty.idler == Approx(1.0 / 1.021).epsilon(0.003));
    }
}

TEST_CASE("mismatched awg channels see no pair correlation", "[montecarlo]") {
    const auto chain = fixtures::awg_chain(3, -2);
    const auto s = simulate(chain, fixtures::pump_at_peak(0.06), trial(100'000'000));
    REQUIRE(s.car());
    CHECK(std::abs(*s.car() - 1.0) < 4.0 * *s.car_error());
}

TEST_CASE("overlapping channels that both claim a photon are rejected", "[montecarlo]") {
    auto bare = fixtures::bare_chain(0.05, 1.0, 0.0);
    auto& f = std::get<FilterPairDemux>(bare.chain.demux);
    f.idler.center_frequency = f.signal.center_frequency;
    CHECK_THROWS_AS(simulate(bare.chain, bare.pump, trial(1000)), numerical_error);
}

TEST_CASE("trial validation", "[montecarlo]") {
    const auto bare = fixtures::bare_chain(0.01, 0.5, 0.0);
    CHECK_THROWS_AS(simulate(bare.chain, bare.pump, trial(0)), config_error);
    auto t = trial(10);
    t.accidental_offset = 10;
    CHECK_THROWS_AS(simulate(bare.chain, bare.pump, t), config_error);
    t = trial(10);
    t.threads = 0;
    CHECK_THROWS_AS(simulate(bare.chain, bare.pump, t), config_error);
}

TEST_CASE("dark-only and zero-power runs", "[montecarlo]") {
    auto bare = fixtures::bare_chain(0.0, 0.5, 0.0);
    const auto s = simulate(bare.chain, bare.pump, trial(1'000'000));
    CHECK(s.singles_signal == 0);
    CHECK(s.coincidences == 0);
    CHECK_FALSE(s.car());
}

TEST_CASE("sweep assigns one derived seed per grid point", "[montecarlo]") {
    const Scenario base{fixtures::waveguide_chain(1.37, 0.94), fixtures::pump_at_peak(0.037)};
    const std::vector<double> grid{0.01, 0.02, 0.03};
    const auto pts = sweep(base, SweepVariable::peak_power, grid, trial(200'000, 11));
    REQUIRE(pts.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(pts[k].value == grid[k]);
        CHECK(pts[k].seed == derive_seed(11, k));
        auto t = trial(200'000, derive_seed(11, k));
        const auto sc = with_value(base, SweepVariable::peak_power, grid[k]);
        CHECK(pts[k].counts == simulate(sc.chain, sc.pump, t));
    }
    CHECK(pts[2].counts.singles_signal > pts[0].counts.singles_signal);
}

TEST_CASE("scenario edits", "[montecarlo]") {
    const Scenario base{fixtures::waveguide_chain(1.37, 0.94), fixtures::pump_at_peak(0.037)};
    CHECK(with_value(base, SweepVariable::l_si, 0.02).chain.segments[0].length == 0.02);
    CHECK(with_value(base, SweepVariable::l_siox, 0.03).chain.segments[1].length == 0.03);
    CHECK(peak_power(with_value(base, SweepVariable::peak_power, 0.05).pump) == Approx(0.05).epsilon(1e-14));
    CHECK(with_value(base, SweepVariable::dark_rate, 20.0).chain.detectors.idler.dark_rate == 20.0);
    CHECK_THROWS_AS(with_value(base, SweepVariable::awg_loss, 0.0), config_error);
    const Scenario awg{fixtures::awg_chain(), fixtures::pump_at_peak(0.037)};
    CHECK(std::get<AwgDemux>(with_value(awg, SweepVariable::awg_loss, 0.0).chain.demux).awg.insertion_loss_db == 0.0);
    CHECK_THROWS_AS(with_value(awg, SweepVariable::l_siox, 0.01), config_error);
}
