#include <catch_amalgamated.hpp>

#include "pairsim/awg.hpp"
#include "pairsim/spectrum.hpp"
#include "pairsim/units.hpp"

#include <cmath>
#include <limits>
#include <numbers>

using namespace pairsim;
using Catch::Approx;

namespace {

constexpr double ghz = units::ghz;
const double nu_p = wavelength_to_frequency(1551.1 * units::nm);

AwgSpec pump_aligned_awg()
{
    AwgSpec awg;
    awg.center_frequency = nu_p;
    return awg;
}

} // namespace

TEST_CASE("dB conversions", "[units]") {
    CHECK(db_to_linear(0.0) == 1.0);
    CHECK(db_to_linear(2.1) == Approx(0.616595001861482).epsilon(1e-14));
    CHECK(db_to_linear(7.7) == Approx(0.169824365246174).epsilon(1e-14));
    CHECK(db_to_linear(3.8) == Approx(0.416869383470335).epsilon(1e-14));
    CHECK(linear_to_db(db_to_linear(4.25)) == Approx(4.25).epsilon(1e-14));
    CHECK(neper_to_db(db_to_neper(200.0)) == Approx(200.0).epsilon(1e-14));
    CHECK(db_to_neper(10.0) == Approx(std::log(10.0)).epsilon(1e-15));
}

TEST_CASE("wavelength to frequency", "[units]") {
    CHECK(nu_p == Approx(193.28 * units::thz).epsilon(1e-4));
}

TEST_CASE("rectangular passband edges", "[spectrum]") {
    const Passband b{100 * ghz, 20 * ghz, 0.5, PassbandShape::rectangular};
    CHECK(b.transmission(100 * ghz) == 0.5);
    CHECK(b.transmission(109.9 * ghz) == 0.5);
    CHECK(b.transmission(110.1 * ghz) == 0.0);
    CHECK(b.transmission(89.9 * ghz) == 0.0);
}

TEST_CASE("gaussian passband is 3 dB down at the half width", "[spectrum]") {
    const Passband b{0.0, 80 * ghz, 1.0, PassbandShape::gaussian};
    CHECK(b.transmission(40 * ghz) == Approx(0.5).epsilon(1e-14));
    CHECK(b.transmission(-40 * ghz) == Approx(0.5).epsilon(1e-14));
    CHECK(b.transmission(200 * ghz) == Approx(std::pow(2.0, -25.0)).epsilon(1e-12));
    CHECK(b.transmission(b.half_support()) == Approx(1e-15).epsilon(1e-9));
}

TEST_CASE("band-limited bandwidth", "[spectrum]") {
    const double band = 1600 * ghz;
    SECTION("rectangular inside the band is exact") {
        const Passband b{nu_p + 598 * ghz, 120 * ghz, 0.3, PassbandShape::rectangular};
        CHECK(band_limited_bandwidth(b, nu_p, band) == Approx(120 * ghz).epsilon(1e-14));
    }
    SECTION("rectangular clipped by the band edge") {
        const Passband b{nu_p + 780 * ghz, 60 * ghz, 1.0, PassbandShape::rectangular};
        CHECK(band_limited_bandwidth(b, nu_p, band) == Approx(50 * ghz).epsilon(1e-12));
    }
    SECTION("gaussian equivalent noise bandwidth") {
        const Passband b{nu_p + 600 * ghz, 80 * ghz, 0.2, PassbandShape::gaussian};
        CHECK(band_limited_bandwidth(b, nu_p, band) == Approx(85.1573613871002 * ghz).epsilon(1e-10));
    }
    SECTION("gaussian centered on the band edge keeps half") {
        const Passband b{nu_p + 800 * ghz, 80 * ghz, 1.0, PassbandShape::gaussian};
        CHECK(band_limited_bandwidth(b, nu_p, band) == Approx(42.5786807772490 * ghz).epsilon(1e-10));
    }
}

TEST_CASE("anticorrelated overlap of mirrored filters", "[spectrum]") {
    const double band = 1600 * ghz;
    SECTION("rectangular") {
        const Passband s{nu_p + 598 * ghz, 120 * ghz, 1.0, PassbandShape::rectangular};
        const Passband i{nu_p - 598 * ghz, 120 * ghz, 1.0, PassbandShape::rectangular};
        CHECK(anticorrelated_overlap(s, i, nu_p, band) == Approx(120 * ghz).epsilon(1e-10));
    }
    SECTION("rectangular partially offset") {
        const Passband s{nu_p + 598 * ghz, 120 * ghz, 1.0, PassbandShape::rectangular};
        const Passband i{nu_p - 628 * ghz, 120 * ghz, 1.0, PassbandShape::rectangular};
        CHECK(anticorrelated_overlap(s, i, nu_p, band) == Approx(90 * ghz).epsilon(1e-10));
    }
    SECTION("gaussian closed form w sqrt(pi / (8 ln 2))") {
        const Passband s{nu_p + 600 * ghz, 80 * ghz, 1.0, PassbandShape::gaussian};
        const Passband i{nu_p - 600 * ghz, 80 * ghz, 1.0, PassbandShape::gaussian};
        const double closed = 80 * ghz * std::sqrt(std::numbers::pi / (8.0 * std::log(2.0)));
        CHECK(anticorrelated_overlap(s, i, nu_p, band) == Approx(closed).epsilon(1e-9));
        CHECK(anticorrelated_overlap(s, i, nu_p, band) == Approx(60.2153478231402 * ghz).epsilon(1e-9));
    }
    SECTION("disjoint") {
        const Passband s{nu_p + 598 * ghz, 120 * ghz, 1.0, PassbandShape::rectangular};
        const Passband i{nu_p - 398 * ghz, 120 * ghz, 1.0, PassbandShape::rectangular};
        CHECK(anticorrelated_overlap(s, i, nu_p, band) == 0.0);
    }
}

TEST_CASE("awg channel layout", "[awg]") {
    const auto awg = pump_aligned_awg();
    CHECK(channel_passband(awg, 3).center == Approx(nu_p + 600 * ghz));
    CHECK(channel_passband(awg, -3).center == Approx(nu_p - 600 * ghz));
    CHECK(channel_transmission(awg, 3, nu_p + 600 * ghz) == Approx(db_to_linear(7.7)));
    CHECK(channel_transmission(awg, 3, nu_p + 640 * ghz) == Approx(0.5 * db_to_linear(7.7)));
    CHECK(awg.has_channel(8));
    CHECK_FALSE(awg.has_channel(9));
    CHECK_THROWS_AS(channel_passband(awg, 9), config_error);
}

TEST_CASE("awg spec validation", "[awg]") {
    auto awg = pump_aligned_awg();
    CHECK_NOTHROW(awg.validate());
    awg.passband_3db = 250 * ghz;
    CHECK_THROWS_AS(awg.validate(), config_error);
    awg = pump_aligned_awg();
    awg.insertion_loss_db = -1.0;
    CHECK_THROWS_AS(awg.validate(), config_error);
    awg = pump_aligned_awg();
    awg.channel_count = 0;
    CHECK_THROWS_AS(awg.validate(), config_error);
}

TEST_CASE("awg effective pair bandwidth", "[awg]") {
    const auto awg = pump_aligned_awg();
    CHECK(effective_pair_bandwidth(awg, 3, -3, nu_p) == Approx(60.2153478231402 * ghz).epsilon(1e-9));
    CHECK(effective_pair_bandwidth(awg, 3, -2, nu_p) == Approx(0.0103951857366331 * ghz).epsilon(1e-6));
    const double ratio = effective_pair_bandwidth(awg, 3, -2, nu_p) / effective_pair_bandwidth(awg, 3, -3, nu_p);
    CHECK(ratio == Approx(std::pow(2.0, -12.5)).epsilon(1e-6));
}

TEST_CASE("awg reciprocity under signal/idler swap", "[awg]") {
    const auto awg = pump_aligned_awg();
    const double band = awg.default_generation_band();
    for (int s = -4; s <= 4; ++s) {
        for (int i = -4; i <= 4; ++i) {
            const double a = pair_transmittance(awg, s, i, nu_p, band);
            const double b = pair_transmittance(awg, i, s, nu_p, band);
            CHECK(a == Approx(b).epsilon(1e-9).margin(1e-300));
        }
    }
}

TEST_CASE("awg symmetric channel maximizes pair transmittance", "[awg]") {
    const auto awg = pump_aligned_awg();
    const double band = awg.default_generation_band();
    for (int s : {1, 2, 3, -3}) {
        int best = 0;
        double best_t = -1.0;
        for (int i = -4; i <= 4; ++i) {
            const double t = pair_transmittance(awg, s, i, nu_p, band);
            if (t > best_t) {
                best_t = t;
                best = i;
            }
        }
        CHECK(best == -s);
    }
}

TEST_CASE("awg rectangular passbands are exact", "[awg]") {
    auto awg = pump_aligned_awg();
    awg.passband_shape = PassbandShape::rectangular;
    CHECK(effective_pair_bandwidth(awg, 3, -3, nu_p) == Approx(80 * ghz).epsilon(1e-10));
    CHECK(effective_pair_bandwidth(awg, 3, -2, nu_p) == 0.0);
}

TEST_CASE("awg insertion loss factors out", "[awg]") {
    auto awg = pump_aligned_awg();
    const double band = awg.default_generation_band();
    awg.insertion_loss_db = 0.0;
    const double lossless = pair_transmittance(awg, 3, -3, nu_p, band);
    awg.insertion_loss_db = 7.7;
    const double lossy = pair_transmittance(awg, 3, -3, nu_p, band);
    CHECK(lossy / lossless == Approx(db_to_linear(15.4)).epsilon(1e-12));
    CHECK(effective_pair_bandwidth(awg, 3, -3, nu_p) * db_to_linear(15.4) / band == Approx(lossy).epsilon(1e-12));
}
