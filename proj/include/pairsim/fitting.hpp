#pragma once

// Parameter recovery from rate-versus-length and rate-versus-power data.
//
//   fit_sio2_decay    y = A exp(-2 a x)                  (passive section loss)
//   fit_gamma_alpha   y = pair rate of the nonlinear segment times the fixed
//                     downstream transmittance squared    (gamma, Si loss)
//   fit_singles_poly  y = n0 + n1 x + a2 x^2              (singles vs power)
//
// Objectives are least squares, inverse-variance weighted when every point
// carries sigma. Nonlinear fits use a deterministic start (log-linear
// regression or a coarse log grid) followed by Nelder-Mead refinement in
// log-parameter space. Standard errors come from the finite-difference
// Jacobian of the residuals.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "pairsim/chainmodel.hpp"
#include "pairsim/errors.hpp"
#include "pairsim/spectrum.hpp"
#include "pairsim/units.hpp"

namespace pairsim {

enum class DataRole { l_si, l_siox, peak_power };

inline const char* to_string(DataRole role)
{
    switch (role) {
    case DataRole::l_si: return "l_si";
    case DataRole::l_siox: return "l_siox";
    case DataRole::peak_power: return "pp";
    }
    return "?";
}

struct DataPoint {
    double x = 0.0;                     // m or W, per role
    double y = 0.0;
    std::optional<double> sigma;
    std::optional<double> siox_length;  // per-point passive length, gamma/alpha co-fit only
};

/// Chain parameters held fixed during a fit. Only the fields a given fitter
/// needs must be set.
struct FixedParams {
    std::optional<double> pair_bandwidth;      // Hz
    std::optional<double> pulse_fwhm;          // s
    std::optional<double> peak_power;          // W
    std::optional<double> siox_length;         // m
    std::optional<double> siox_loss_db_per_m;
};

struct DataSet {
    DataRole role = DataRole::l_siox;
    std::vector<DataPoint> points;
    FixedParams fixed;

    bool weighted() const
    {
        return !points.empty() && std::all_of(points.begin(), points.end(), [](const auto& p) { return p.sigma.has_value(); });
    }

    std::size_t distinct_x() const
    {
        std::set<double> xs;
        for (const auto& p : points) xs.insert(p.x);
        return xs.size();
    }

    void validate(std::size_t n_params, DataRole expected) const
    {
        detail::require(role == expected, std::string("fit: data role must be ") + to_string(expected));
        detail::require(points.size() >= n_params, "fit: not enough data points");
        const bool any_sigma = std::any_of(points.begin(), points.end(), [](const auto& p) { return p.sigma.has_value(); });
        detail::require(!any_sigma || weighted(), "fit: sigma must be given for all points or none");
        for (const auto& p : points) {
            detail::require(p.x > 0.0 && std::isfinite(p.x), "fit: x must be strictly positive");
            detail::require(std::isfinite(p.y), "fit: y must be finite");
            detail::require(!p.sigma || *p.sigma > 0.0, "fit: sigma must be positive");
        }
    }
};

struct FitResult {
    std::vector<std::string> names;
    std::vector<double> values;
    std::vector<double> std_errors;      // inf when not identifiable, nan when undetermined
    std::vector<bool> non_identifiable;
    double rss = 0.0;                    // objective at `values`
    bool converged = false;
    bool unvalidated = false;            // exactly determined: no residual degrees of freedom
    int evaluations = 0;
    std::optional<double> coarse_grid_min_rss;

    double value(const std::string& name) const
    {
        for (std::size_t k = 0; k < names.size(); ++k) {
            if (names[k] == name) return values[k];
        }
        throw std::out_of_range("FitResult: no parameter " + name);
    }

    double error(const std::string& name) const
    {
        for (std::size_t k = 0; k < names.size(); ++k) {
            if (names[k] == name) return std_errors[k];
        }
        throw std::out_of_range("FitResult: no parameter " + name);
    }
};

namespace detail {

using ModelFn = std::function<double(const std::vector<double>& params, const DataPoint& point)>;

inline double weight(const DataPoint& p)
{
    return p.sigma ? 1.0 / (*p.sigma * *p.sigma) : 1.0;
}

inline double residual_sum(const ModelFn& model, const std::vector<double>& params, const DataSet& data)
{
    double s = 0.0;
    for (const auto& p : data.points) {
        const double r = p.y - model(params, p);
        s += weight(p) * r * r;
    }
    return s;
}

struct SimplexResult {
    std::vector<double> x;
    double f = 0.0;
    int evaluations = 0;
    bool converged = false;
};

// Nelder-Mead (GSL nmsimplex2) on f(u), stopping when the simplex
// characteristic size falls below `size_tol`. A run that stalls at the
// rounding floor counts as converged if the size is below `accept_tol`.
inline SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> start, double step, double size_tol, int max_iter,
                                 double accept_tol = 1e-8)
{
    silence_gsl();
    const std::size_t n = start.size();
    struct Ctx {
        const std::function<double(const std::vector<double>&)>* f;
        std::vector<double> buf;
        int evals;
    } ctx{&f, std::vector<double>(n), 0};

    gsl_multimin_function fn;
    fn.n = n;
    fn.params = &ctx;
    fn.f = [](const gsl_vector* v, void* p) {
        auto* c = static_cast<Ctx*>(p);
        for (std::size_t k = 0; k < c->buf.size(); ++k) c->buf[k] = gsl_vector_get(v, k);
        ++c->evals;
        const double val = (*c->f)(c->buf);
        return std::isfinite(val) ? val : std::numeric_limits<double>::max();
    };

    gsl_vector* x = gsl_vector_alloc(n);
    gsl_vector* ss = gsl_vector_alloc(n);
    for (std::size_t k = 0; k < n; ++k) {
        gsl_vector_set(x, k, start[k]);
        gsl_vector_set(ss, k, step);
    }
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
    gsl_multimin_fminimizer_set(s, &fn, x, ss);

    SimplexResult out;
    for (int it = 0; it < max_iter; ++it) {
        if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
        if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), size_tol) == GSL_SUCCESS) {
            out.converged = true;
            break;
        }
    }
    if (!out.converged) out.converged = gsl_multimin_fminimizer_size(s) < accept_tol;
    out.x.resize(n);
    for (std::size_t k = 0; k < n; ++k) out.x[k] = gsl_vector_get(s->x, k);
    out.f = s->fval;
    out.evaluations = ctx.evals;
    gsl_multimin_fminimizer_free(s);
    gsl_vector_free(x);
    gsl_vector_free(ss);
    return out;
}

// Minimizes over u = log(params / scale) with one restart from the first
// optimum.
inline SimplexResult refine_log(const ModelFn& model, const DataSet& data, const std::vector<double>& start)
{
    const std::size_t n = start.size();
    auto objective = [&](const std::vector<double>& u) {
        std::vector<double> p(n);
        for (std::size_t k = 0; k < n; ++k) p[k] = start[k] * std::exp(u[k]);
        return residual_sum(model, p, data);
    };
    constexpr double tol = 1e-12;
    auto first = nelder_mead(objective, std::vector<double>(n, 0.0), 0.1, tol, 20000);
    auto second = nelder_mead(objective, first.x, 1e-4, tol, 20000);
    second.evaluations += first.evaluations;
    second.converged = first.converged && second.converged;
    for (std::size_t k = 0; k < n; ++k) second.x[k] = start[k] * std::exp(second.x[k]);
    return second;
}

// Standard errors from the finite-difference Jacobian of weighted residuals.
inline std::vector<double> standard_errors(const ModelFn& model, const std::vector<double>& params,
                                           const DataSet& data, double rss)
{
    const std::size_t n = data.points.size();
    const std::size_t p = params.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (n <= p) return std::vector<double>(p, nan);

    Eigen::MatrixXd jac(n, p);
    for (std::size_t j = 0; j < p; ++j) {
        const double h = 1e-6 * std::max(std::abs(params[j]), 1e-300);
        auto plus = params;
        auto minus = params;
        plus[j] += h;
        minus[j] -= h;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& pt = data.points[i];
            jac(i, j) = std::sqrt(weight(pt)) * (model(plus, pt) - model(minus, pt)) / (2.0 * h);
        }
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
    if (!lu.isInvertible()) return std::vector<double>(p, std::numeric_limits<double>::infinity());
    const double s2 = data.weighted() ? 1.0 : rss / static_cast<double>(n - p);
    const Eigen::MatrixXd cov = s2 * lu.inverse();
    std::vector<double> se(p);
    for (std::size_t j = 0; j < p; ++j) se[j] = cov(j, j) >= 0.0 ? std::sqrt(cov(j, j)) : nan;
    return se;
}

} // namespace detail

// ---------------------------------------------------------------------------

/// y = A exp(-2 a x), a = alpha_np of the passive section. Reports
/// "amplitude" and "alpha_db_per_m".
inline FitResult fit_sio2_decay(const DataSet& data)
{
    data.validate(2, DataRole::l_siox);
    if (data.distinct_x() < 2) throw config_error("fit_sio2_decay: degenerate data, all x equal");
    for (const auto& p : data.points) {
        detail::require(p.y > 0.0, "fit_sio2_decay: rates must be positive");
    }

    const detail::ModelFn model = [](const std::vector<double>& q, const DataPoint& pt) {
        return q[0] * std::exp(-2.0 * db_to_neper(q[1]) * pt.x);
    };

    // Weighted log-linear start: ln y = ln A - 2 a x.
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& p : data.points) {
        const double w = p.sigma ? (p.y / *p.sigma) * (p.y / *p.sigma) : p.y * p.y;
        const double ly = std::log(p.y);
        sw += w;
        sx += w * p.x;
        sy += w * ly;
        sxx += w * p.x * p.x;
        sxy += w * p.x * ly;
    }
    const double mx = sx / sw;
    const double my = sy / sw;
    const double slope = (sxy - sw * mx * my) / (sxx - sw * mx * mx);
    const double ln_a = my - slope * mx;
    const double alpha_np = -0.5 * slope;

    FitResult out;
    out.names = {"amplitude", "alpha_db_per_m"};
    out.non_identifiable = {false, false};

    if (!(alpha_np > 0.0)) {
        // Rising or flat data: the loss coefficient sits on its lower bound.
        throw numerical_error("fit_sio2_decay: data do not decay with length");
    }
    const std::vector<double> start{std::exp(ln_a), neper_to_db(alpha_np)};
    if (data.points.size() == 2) {
        out.values = start;
        out.converged = true;
        out.unvalidated = true;
        out.evaluations = 0;
    } else {
        const auto r = detail::refine_log(model, data, start);
        out.values = r.x;
        out.converged = r.converged;
        out.evaluations = r.evaluations;
    }
    out.rss = detail::residual_sum(model, out.values, data);
    out.std_errors = detail::standard_errors(model, out.values, data, out.rss);
    return out;
}

struct GammaAlphaOptions {
    bool cofit_siox_loss = false;
    double gamma_min = 1.0, gamma_max = 1e4;                  // 1/(W m)
    double alpha_min = 1.0, alpha_max = 5000.0;               // dB/m (0.01 .. 50 dB/cm)
    double siox_alpha_min = 1.0, siox_alpha_max = 5000.0;     // dB/m, co-fit only
    int grid_points = 48;
};

/// Nonlinear-segment pair rate y(L) = dnu dt (gamma P_p L_eff)^2 eta_Si^2
/// times eta_SiOx^2 of the fixed downstream section. Reports
/// "gamma_per_w_m", "alpha_si_db_per_m" and, when co-fitting,
/// "alpha_siox_db_per_m".
inline FitResult fit_gamma_alpha(const DataSet& data, const GammaAlphaOptions& opt = {})
{
    const std::size_t n_params = opt.cofit_siox_loss ? 3 : 2;
    data.validate(n_params + 1, DataRole::l_si);
    const auto& fx = data.fixed;
    detail::require(fx.pair_bandwidth && fx.pulse_fwhm && fx.peak_power,
                    "fit_gamma_alpha: pair_bandwidth, pulse_fwhm and peak_power must be fixed");
    detail::require(opt.cofit_siox_loss || (fx.siox_length && fx.siox_loss_db_per_m) ||
                        (!fx.siox_length && !fx.siox_loss_db_per_m),
                    "fit_gamma_alpha: siox length and loss must be fixed together");

    DataSet work = data;
    for (auto& p : work.points) {
        if (!p.siox_length) p.siox_length = fx.siox_length.value_or(0.0);
    }
    if (opt.cofit_siox_loss) {
        const bool varies = std::any_of(work.points.begin(), work.points.end(), [&](const DataPoint& p) {
            return *p.siox_length != *work.points.front().siox_length;
        });
        if (!varies) throw config_error("fit_gamma_alpha: co-fitting the passive loss needs varying passive lengths");
    }

    const double bw = *fx.pair_bandwidth;
    const double dt = *fx.pulse_fwhm;
    const double pp = *fx.peak_power;
    const double fixed_siox_loss = fx.siox_loss_db_per_m.value_or(0.0);
    const detail::ModelFn model = [=](const std::vector<double>& q, const DataPoint& pt) {
        const auto seg = WaveguideSegment::nonlinear(pt.x, q[1], q[0]);
        const double siox_loss = q.size() > 2 ? q[2] : fixed_siox_loss;
        const double eta_siox = db_to_linear(siox_loss * pt.siox_length.value_or(0.0));
        return pair_generation_rate(pp, dt, seg, bw) * eta_siox * eta_siox;
    };

    // Coarse log grid.
    FitResult out;
    out.names = {"gamma_per_w_m", "alpha_si_db_per_m"};
    if (opt.cofit_siox_loss) out.names.push_back("alpha_siox_db_per_m");
    const int g = opt.grid_points;
    auto log_node = [g](double lo, double hi, int k) { return lo * std::pow(hi / lo, static_cast<double>(k) / (g - 1)); };
    std::vector<double> best;
    double best_rss = std::numeric_limits<double>::infinity();
    int evals = 0;
    const int g3 = opt.cofit_siox_loss ? g : 1;
    for (int i = 0; i < g; ++i) {
        for (int j = 0; j < g; ++j) {
            for (int k = 0; k < g3; ++k) {
                std::vector<double> q{log_node(opt.gamma_min, opt.gamma_max, i), log_node(opt.alpha_min, opt.alpha_max, j)};
                if (opt.cofit_siox_loss) q.push_back(log_node(opt.siox_alpha_min, opt.siox_alpha_max, k));
                const double s = detail::residual_sum(model, q, work);
                ++evals;
                if (s < best_rss) {
                    best_rss = s;
                    best = q;
                }
            }
        }
    }
    out.coarse_grid_min_rss = best_rss;

    const auto r = detail::refine_log(model, work, best);
    out.values = r.x;
    out.converged = r.converged;
    out.evaluations = evals + r.evaluations;
    out.rss = detail::residual_sum(model, out.values, work);
    if (out.rss > best_rss) {
        out.values = best;
        out.rss = best_rss;
        out.converged = false;
    }
    out.std_errors = detail::standard_errors(model, out.values, work, out.rss);
    out.non_identifiable.assign(out.values.size(), false);

    // One distinct length cannot separate gamma from loss; neither can lengths
    // all far below the loss length, where L_eff ~ L and eta ~ 1.
    const double alpha_np = db_to_neper(out.values[1]);
    double max_x = 0.0;
    for (const auto& p : work.points) max_x = std::max(max_x, p.x);
    if (data.distinct_x() < 2 || alpha_np * max_x < 1e-3) {
        out.non_identifiable[1] = true;
        out.std_errors[1] = std::numeric_limits<double>::infinity();
    }
    return out;
}

/// y = n0 + n1 x + a2 x^2 by weighted normal equations. Reports "n0",
/// "n1_per_w", "a2_per_w2".
inline FitResult fit_singles_poly(const DataSet& data)
{
    data.validate(4, DataRole::peak_power);
    if (data.distinct_x() < 3) throw numerical_error("fit_singles_poly: rank-deficient design, fewer than 3 distinct powers");

    const std::size_t n = data.points.size();
    // Scale x to order one so the normal matrix is well conditioned.
    double xs = 0.0;
    for (const auto& p : data.points) xs = std::max(xs, p.x);
    Eigen::MatrixXd design(n, 3);
    Eigen::VectorXd y(n);
    Eigen::VectorXd w(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double u = data.points[k].x / xs;
        design(k, 0) = 1.0;
        design(k, 1) = u;
        design(k, 2) = u * u;
        y(k) = data.points[k].y;
        w(k) = detail::weight(data.points[k]);
    }
    const Eigen::MatrixXd normal = design.transpose() * w.asDiagonal() * design;
    const Eigen::VectorXd rhs = design.transpose() * w.asDiagonal() * y;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) {
        throw numerical_error("fit_singles_poly: singular normal equations");
    }
    const Eigen::VectorXd beta = ldlt.solve(rhs);
    const Eigen::Vector3d unscale(1.0, 1.0 / xs, 1.0 / (xs * xs));

    FitResult out;
    out.names = {"n0", "n1_per_w", "a2_per_w2"};
    out.values = {beta(0) * unscale(0), beta(1) * unscale(1), beta(2) * unscale(2)};
    out.non_identifiable = {false, false, false};
    out.converged = true;
    out.evaluations = 1;
    const detail::ModelFn model = [](const std::vector<double>& q, const DataPoint& pt) {
        return q[0] + q[1] * pt.x + q[2] * pt.x * pt.x;
    };
    out.rss = detail::residual_sum(model, out.values, data);

    const double dof = static_cast<double>(n) - 3.0;
    const double s2 = data.weighted() ? 1.0 : out.rss / dof;
    const Eigen::MatrixXd cov = s2 * ldlt.solve(Eigen::MatrixXd::Identity(3, 3));
    out.std_errors.resize(3);
    for (int j = 0; j < 3; ++j) out.std_errors[j] = std::sqrt(std::max(cov(j, j), 0.0)) * unscale(j);
    return out;
}

/// Ratio of the fitted quadratic singles coefficient to the SFWM prediction
/// dnu dt (gamma L_eff)^2 eta^2; near 1 when the quadratic part is all SFWM.
inline double sfwm_consistency(const FitResult& poly, double bandwidth, double pulse_fwhm,
                               const WaveguideSegment& nonlinear)
{
    return poly.value("a2_per_w2") / sfwm_quadratic_coefficient(bandwidth, pulse_fwhm, nonlinear);
}

} // namespace pairsim
