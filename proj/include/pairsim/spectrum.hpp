#pragma once

// Spectral passbands and the integrals the pair model needs: the band-limited
// single-channel bandwidth and the overlap of two passbands under a perfectly
// anti-correlated joint spectrum (nu_s + nu_i = 2 nu_p).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include "pairsim/errors.hpp"
#include "pairsim/units.hpp"

namespace pairsim {

enum class PassbandShape { rectangular, gaussian };

inline const char* to_string(PassbandShape shape)
{
    return shape == PassbandShape::gaussian ? "gaussian" : "rectangular";
}

/// A single transmission window. `center` is an absolute optical frequency.
/// The gaussian shape is normalized so T(center +- width_3db/2) = peak/2.
struct Passband {
    double center = 0.0;
    double width_3db = 0.0;
    double peak = 1.0;
    PassbandShape shape = PassbandShape::gaussian;

    double transmission(double nu) const
    {
        const double x = (nu - center) / (0.5 * width_3db);
        if (shape == PassbandShape::rectangular) {
            return std::abs(x) <= 1.0 ? peak : 0.0;
        }
        return peak * std::exp2(-x * x);
    }

    /// Half-width beyond which T/peak < 1e-15 (exactly zero for rectangles).
    double half_support() const
    {
        if (shape == PassbandShape::rectangular) return 0.5 * width_3db;
        return 0.5 * width_3db * std::sqrt(15.0 * std::numbers::ln10 / std::numbers::ln2);
    }
};

namespace detail {

inline void silence_gsl()
{
    static const bool once = [] {
        gsl_set_error_handler_off();
        return true;
    }();
    (void)once;
}

// (1/peak) * integral of T over [lo, hi], closed form.
inline double normalized_band_integral(const Passband& band, double lo, double hi)
{
    if (hi <= lo) return 0.0;
    const double half = 0.5 * band.width_3db;
    if (band.shape == PassbandShape::rectangular) {
        const double a = std::max(lo, band.center - half);
        const double b = std::min(hi, band.center + half);
        return std::max(0.0, b - a);
    }
    // T/peak = exp(-k (nu - c)^2), k = ln2 / half^2
    const double sqrt_k = std::sqrt(std::numbers::ln2) / half;
    const double scale = 0.5 * std::sqrt(std::numbers::pi) / sqrt_k;
    return scale * (std::erf(sqrt_k * (hi - band.center)) - std::erf(sqrt_k * (lo - band.center)));
}

} // namespace detail

/// Equivalent rectangular bandwidth of `band` restricted to the generation
/// band [pump - width/2, pump + width/2]: (1/peak) * integral of T.
inline double band_limited_bandwidth(const Passband& band, double pump_frequency, double generation_band)
{
    return detail::normalized_band_integral(band, pump_frequency - 0.5 * generation_band,
                                            pump_frequency + 0.5 * generation_band);
}

/// Integral over the generation band of T_s(nu) * T_i(2 nu_p - nu), in hertz.
/// Peaks are included. Evaluated by adaptive quadrature (QAGP) with
/// breakpoints at passband centers and edges.
inline double anticorrelated_overlap(const Passband& signal, const Passband& idler, double pump_frequency,
                                     double generation_band, double rel_tol = 1e-10)
{
    detail::silence_gsl();
    // Work in detuning d = nu - nu_p; the idler window appears mirrored.
    const double ds = signal.center - pump_frequency;
    const double di = -(idler.center - pump_frequency);
    const double half_band = 0.5 * generation_band;

    const double lo = std::max({-half_band, ds - signal.half_support(), di - idler.half_support()});
    const double hi = std::min({half_band, ds + signal.half_support(), di + idler.half_support()});
    if (hi <= lo) return 0.0;

    struct Ctx {
        const Passband* s;
        const Passband* i;
        double nu_p;
    } ctx{&signal, &idler, pump_frequency};

    gsl_function fn;
    fn.function = [](double d, void* p) {
        const auto* c = static_cast<const Ctx*>(p);
        return c->s->transmission(c->nu_p + d) * c->i->transmission(c->nu_p - d);
    };
    fn.params = &ctx;

    std::vector<double> pts{lo, hi};
    for (double x : {ds, di, ds - 0.5 * signal.width_3db, ds + 0.5 * signal.width_3db,
                     di - 0.5 * idler.width_3db, di + 0.5 * idler.width_3db, 0.5 * (ds + di)}) {
        if (x > lo && x < hi) pts.push_back(x);
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

    // Integrate in units of the narrower passband width to keep QAGP's
    // absolute error estimates well scaled.
    const double unit = std::min(signal.width_3db, idler.width_3db);
    struct Scaled {
        gsl_function* inner;
        double unit;
    } scaled{&fn, unit};
    gsl_function fn_scaled;
    fn_scaled.function = [](double u, void* p) {
        const auto* s = static_cast<const Scaled*>(p);
        return GSL_FN_EVAL(s->inner, u * s->unit);
    };
    fn_scaled.params = &scaled;
    for (auto& x : pts) x /= unit;

    constexpr std::size_t limit = 2000;
    gsl_integration_workspace* ws = gsl_integration_workspace_alloc(limit);
    double result = 0.0;
    double abserr = 0.0;
    const int status = gsl_integration_qagp(&fn_scaled, pts.data(), pts.size(), 0.0, rel_tol, limit, ws,
                                            &result, &abserr);
    gsl_integration_workspace_free(ws);
    if (status != GSL_SUCCESS && status != GSL_EROUND) {
        throw numerical_error(std::string("passband overlap quadrature failed: ") + gsl_strerror(status));
    }
    return result * unit;
}

} // namespace pairsim
