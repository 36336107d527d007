#pragma once

// Command-line front end. `run` is the whole program minus process setup so
// tests can drive it in-process.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pairsim/chainmodel.hpp"
#include "pairsim/errors.hpp"
#include "pairsim/fitting.hpp"
#include "pairsim/io/config.hpp"
#include "pairsim/io/table.hpp"
#include "pairsim/montecarlo.hpp"

namespace pairsim::app {

enum ExitCode { ok = 0, usage = 2, numerical = 3 };

struct Globals {
    std::string out;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

inline std::uint64_t parse_pulses(const std::string& text)
{
    double v = 0.0;
    try {
        std::size_t used = 0;
        v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
        throw config_error("--pulses: not a number: '" + text + "'");
    }
    if (!(v >= 1.0) || v != std::floor(v) || v > 1.8e19) throw config_error("--pulses must be a positive integer");
    return static_cast<std::uint64_t>(v);
}

/// "a,b,c", "lin:start:stop:n" or "log:start:stop:n".
inline std::vector<double> parse_grid(const std::string& spec)
{
    auto numbers = [&](const std::string& s, char sep) {
        std::vector<double> v;
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, sep)) {
            try {
                v.push_back(io::parse_number(tok));
            } catch (const std::exception&) {
                throw config_error("--grid: bad number '" + tok + "'");
            }
        }
        return v;
    };
    const bool lin = spec.rfind("lin:", 0) == 0;
    const bool log = spec.rfind("log:", 0) == 0;
    if (!lin && !log) {
        auto v = numbers(spec, ',');
        if (v.empty()) throw config_error("--grid: empty");
        return v;
    }
    const auto p = numbers(spec.substr(4), ':');
    if (p.size() != 3 || p[2] < 1 || p[2] != std::floor(p[2])) throw config_error("--grid: expected start:stop:n");
    const int n = static_cast<int>(p[2]);
    if (log && !(p[0] > 0 && p[1] > 0)) throw config_error("--grid: log grid needs positive bounds");
    std::vector<double> v(n);
    for (int k = 0; k < n; ++k) {
        const double t = n == 1 ? 0.0 : static_cast<double>(k) / (n - 1);
        v[k] = lin ? p[0] + t * (p[1] - p[0]) : p[0] * std::pow(p[1] / p[0], t);
    }
    return v;
}

inline SweepVariable parse_variable(const std::string& s)
{
    if (s == "l_si") return SweepVariable::l_si;
    if (s == "l_siox") return SweepVariable::l_siox;
    if (s == "pp") return SweepVariable::peak_power;
    if (s == "awg_loss") return SweepVariable::awg_loss;
    if (s == "dark") return SweepVariable::dark_rate;
    throw config_error("--var must be one of l_si, l_siox, pp, awg_loss, dark");
}

// User units on the command line and in output tables.
inline const char* variable_unit(SweepVariable v)
{
    switch (v) {
    case SweepVariable::l_si:
    case SweepVariable::l_siox: return "cm";
    case SweepVariable::peak_power: return "mW";
    case SweepVariable::awg_loss: return "dB";
    case SweepVariable::dark_rate: return "Hz";
    }
    return "";
}

inline double variable_scale(SweepVariable v)
{
    switch (v) {
    case SweepVariable::l_si:
    case SweepVariable::l_siox: return units::cm;
    case SweepVariable::peak_power: return units::mw;
    default: return 1.0;
    }
}

inline void emit(const io::ResultTable& table, const Globals& g, std::ostream& out)
{
    if (g.out.empty()) {
        io::write_csv(out, table);
        return;
    }
    std::ofstream f(g.out, std::ios::binary);
    if (!f) throw config_error("cannot write '" + g.out + "'");
    io::write_csv(f, table);
}

inline io::ResultTable base_table(const std::string& command, const io::ExperimentConfig* cfg)
{
    io::ResultTable t;
    t.add_meta("tool", std::string("pairsim ") + io::tool_version);
    t.add_meta("command", command);
    if (cfg) {
        t.add_meta("config", cfg->name);
        t.add_meta("config_hash", io::hex(io::config_hash(cfg->source)));
    }
    return t;
}

inline std::string car_text(const std::optional<double>& car) { return car ? io::format_number(*car) : "undefined"; }

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& prediction_columns()
{
    static const std::vector<std::string> c{
        "mu_pair_generated", "mu_pair_out",      "mu_signal",        "mu_idler",
        "pair_bandwidth_hz", "p_click_signal",   "p_click_idler",    "p_coincidence",
        "p_accidental",      "car",              "gate_duty_signal", "gate_duty_idler",
        "singles_rate_signal_hz", "singles_rate_idler_hz", "coincidence_rate_hz", "accidental_rate_hz"};
    return c;
}

inline std::vector<std::string> prediction_row(const RatePrediction& r)
{
    using io::format_number;
    return {format_number(r.mu_pair_generated),
            format_number(r.mu_pair_out),
            format_number(r.mu_signal),
            format_number(r.mu_idler),
            format_number(r.pair_bandwidth),
            format_number(r.p_click_signal),
            format_number(r.p_click_idler),
            format_number(r.p_coincidence),
            format_number(r.p_accidental),
            car_text(r.car),
            format_number(r.gate_duty.signal),
            format_number(r.gate_duty.idler),
            format_number(r.singles_rate_signal()),
            format_number(r.singles_rate_idler()),
            format_number(r.coincidence_rate()),
            format_number(r.accidental_rate())};
}

inline int cmd_predict(const std::string& source, const Globals& g, std::ostream& out)
{
    const auto cfg = io::load_config(source);
    const auto r = predict(cfg.chain, cfg.pump);
    const auto cols = prediction_columns();
    const auto row = prediction_row(r);
    for (std::size_t k = 0; k < cols.size(); ++k) out << cols[k] << " = " << row[k] << '\n';
    auto t = base_table("pairsim predict " + source, &cfg);
    t.columns = cols;
    t.add_row(row);
    out << '\n';
    if (g.out.empty()) {
        io::write_csv(out, t);
    } else {
        emit(t, g, out);
    }
    return ok;
}

inline const std::vector<std::string>& count_columns()
{
    static const std::vector<std::string> c{
        "n_pulses",    "singles_signal",      "singles_idler",       "coincidences",       "accidentals",
        "accidental_windows", "active_gates_signal", "active_gates_idler", "car",            "car_error",
        "singles_rate_signal_hz", "singles_rate_idler_hz", "coincidence_rate_hz", "accidental_rate_hz"};
    return c;
}

inline std::vector<std::string> count_row(const CountSummary& c)
{
    using io::format_number;
    const auto err = c.car_error();
    return {format_number(c.n_pulses),
            format_number(c.singles_signal),
            format_number(c.singles_idler),
            format_number(c.coincidences),
            format_number(c.accidentals),
            format_number(c.accidental_windows),
            format_number(c.active_gates_signal),
            format_number(c.active_gates_idler),
            car_text(c.car()),
            err ? format_number(*err) : "undefined",
            format_number(c.per_second(c.singles_signal)),
            format_number(c.per_second(c.singles_idler)),
            format_number(c.per_second(c.coincidences)),
            format_number(c.per_second(c.accidentals))};
}

inline int cmd_simulate(const std::string& source, const std::string& pulses, const Globals& g, std::ostream& out)
{
    const auto cfg = io::load_config(source);
    TrialConfig trial;
    trial.n_pulses = parse_pulses(pulses);
    trial.seed = g.seed;
    trial.threads = g.threads;
    const auto counts = simulate(cfg.chain, cfg.pump, trial);
    const auto pred = predict(cfg.chain, cfg.pump);

    auto t = base_table("pairsim simulate " + source + " --pulses " + std::to_string(trial.n_pulses) +
                            " --seed " + std::to_string(trial.seed),
                        &cfg);
    t.add_meta("seed", std::to_string(trial.seed));
    t.add_meta("predicted_car", car_text(pred.car));
    for (const auto& w : counts.warnings) t.add_meta("warning", w);
    t.columns = count_columns();
    t.add_row(count_row(counts));
    emit(t, g, out);
    return ok;
}

inline int cmd_sweep(const std::string& source, const std::string& var_name, const std::string& grid_spec, bool mc,
                     const std::string& pulses, const Globals& g, std::ostream& out)
{
    const auto cfg = io::load_config(source);
    const auto var = parse_variable(var_name);
    const auto grid = parse_grid(grid_spec);
    const double scale = variable_scale(var);
    std::vector<double> si(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) si[k] = grid[k] * scale;

    const Scenario base{cfg.chain, cfg.pump};
    std::string command = "pairsim sweep " + source + " --var " + var_name + " --grid " + grid_spec;
    TrialConfig trial;
    if (mc) {
        trial.n_pulses = parse_pulses(pulses);
        trial.seed = g.seed;
        trial.threads = g.threads;
        command += " --mc --pulses " + std::to_string(trial.n_pulses) + " --seed " + std::to_string(trial.seed);
    }
    auto t = base_table(command, &cfg);
    t.add_meta("variable", std::string(to_string(var)) + " [" + variable_unit(var) + "]");
    if (mc) t.add_meta("seed", std::to_string(trial.seed));
    t.columns = {to_string(var)};
    for (const auto& c : prediction_columns()) t.columns.push_back("pred_" + c);
    if (mc) {
        t.columns.push_back("mc_seed");
        for (const auto& c : count_columns()) t.columns.push_back("mc_" + c);
    }

    std::vector<SweepPoint> points;
    if (mc) points = sweep(base, var, si, trial);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto sc = with_value(base, var, si[k]);
        std::vector<std::string> row{io::format_number(grid[k])};
        for (auto& v : prediction_row(predict(sc.chain, sc.pump))) row.push_back(std::move(v));
        if (mc) {
            row.push_back(std::to_string(points[k].seed));
            for (auto& v : count_row(points[k].counts)) row.push_back(std::move(v));
        }
        t.add_row(std::move(row));
    }
    emit(t, g, out);
    return ok;
}

// ---------------------------------------------------------------------------
// fit

inline DataSet read_dataset(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open data file '" + path + "'");
    const auto table = io::read_csv(in);
    auto has = [&](const std::string& c) {
        return std::find(table.columns.begin(), table.columns.end(), c) != table.columns.end();
    };
    DataSet data;
    std::string x_col;
    double scale = 1.0;
    if (has("l_si_cm")) {
        data.role = DataRole::l_si;
        x_col = "l_si_cm";
        scale = units::cm;
    } else if (has("l_siox_cm")) {
        data.role = DataRole::l_siox;
        x_col = "l_siox_cm";
        scale = units::cm;
    } else if (has("pp_mw")) {
        data.role = DataRole::peak_power;
        x_col = "pp_mw";
        scale = units::mw;
    } else {
        throw config_error("fit: data needs one of the columns l_si_cm, l_siox_cm, pp_mw");
    }
    if (!has("rate")) throw config_error("fit: data needs a 'rate' column");
    const auto xi = table.column(x_col);
    const auto yi = table.column("rate");
    const std::optional<std::size_t> si = has("sigma") ? std::optional(table.column("sigma")) : std::nullopt;
    const std::optional<std::size_t> li =
        data.role == DataRole::l_si && has("l_siox_cm") ? std::optional(table.column("l_siox_cm")) : std::nullopt;
    for (const auto& row : table.rows) {
        DataPoint p;
        try {
            p.x = io::parse_number(row[xi]) * scale;
            p.y = io::parse_number(row[yi]);
            if (si && !row[*si].empty()) p.sigma = io::parse_number(row[*si]);
            if (li && !row[*li].empty()) p.siox_length = io::parse_number(row[*li]) * units::cm;
        } catch (const std::invalid_argument&) {
            throw config_error("fit: non-numeric entry in data file");
        }
        data.points.push_back(p);
    }
    return data;
}

inline nlohmann::json fit_json(const FitResult& r)
{
    nlohmann::json j;
    auto num = [](double v) -> nlohmann::json {
        if (std::isfinite(v)) return v;
        return io::format_number(v);
    };
    for (std::size_t k = 0; k < r.names.size(); ++k) {
        j["parameters"][r.names[k]] = {{"value", num(r.values[k])},
                                       {"std_error", num(r.std_errors[k])},
                                       {"non_identifiable", static_cast<bool>(r.non_identifiable[k])}};
    }
    j["rss"] = num(r.rss);
    j["converged"] = r.converged;
    j["unvalidated"] = r.unvalidated;
    j["evaluations"] = r.evaluations;
    if (r.coarse_grid_min_rss) j["coarse_grid_min_rss"] = num(*r.coarse_grid_min_rss);
    return j;
}

inline int cmd_fit(const std::string& data_path, const std::string& model, const std::string& config_source,
                   bool cofit_siox, const Globals& g, std::ostream& out)
{
    auto data = read_dataset(data_path);
    std::optional<io::ExperimentConfig> cfg;
    if (!config_source.empty()) cfg = io::load_config(config_source);

    FitResult r;
    std::optional<double> consistency;
    if (model == "decay") {
        r = fit_sio2_decay(data);
    } else if (model == "gamma_alpha") {
        if (!cfg) throw config_error("fit --model gamma_alpha needs --config for the fixed chain parameters");
        const auto& chain = cfg->chain;
        data.fixed.pair_bandwidth = demux_spectra(chain, cfg->pump.frequency()).pair_bandwidth;
        data.fixed.pulse_fwhm = cfg->pump.pulse_fwhm;
        data.fixed.peak_power = coupled_peak_power(chain, cfg->pump);
        const std::size_t nl = chain.nonlinear_index();
        if (!cofit_siox && nl + 1 < chain.segments.size()) {
            data.fixed.siox_length = chain.segments[nl + 1].length;
            data.fixed.siox_loss_db_per_m = chain.segments[nl + 1].loss_db_per_m;
        }
        GammaAlphaOptions opt;
        opt.cofit_siox_loss = cofit_siox;
        r = fit_gamma_alpha(data, opt);
    } else if (model == "poly") {
        r = fit_singles_poly(data);
        if (cfg) {
            const auto spectra = demux_spectra(cfg->chain, cfg->pump.frequency());
            consistency = sfwm_consistency(r, spectra.single_bandwidth.signal, cfg->pump.pulse_fwhm,
                                           cfg->chain.nonlinear_segment());
        }
    } else {
        throw config_error("--model must be one of decay, gamma_alpha, poly");
    }

    for (std::size_t k = 0; k < r.names.size(); ++k) {
        out << r.names[k] << " = " << io::format_number(r.values[k]) << '\n';
        out << r.names[k] << "_std_error = " << io::format_number(r.std_errors[k]) << '\n';
    }
    out << "rss = " << io::format_number(r.rss) << '\n';
    out << "converged = " << (r.converged ? "true" : "false") << '\n';
    out << "unvalidated = " << (r.unvalidated ? "true" : "false") << '\n';
    auto j = fit_json(r);
    j["model"] = model;
    if (consistency) {
        out << "sfwm_consistency = " << io::format_number(*consistency) << '\n';
        j["sfwm_consistency"] = *consistency;
    }
    const std::string text = j.dump(2);
    if (g.out.empty()) {
        out << '\n' << text << '\n';
    } else {
        std::ofstream f(g.out, std::ios::binary);
        if (!f) throw config_error("cannot write '" + g.out + "'");
        f << text << '\n';
    }
    return r.converged ? ok : numerical;
}

// ---------------------------------------------------------------------------
// reproduce

inline std::vector<double> power_grid_w()
{
    std::vector<double> v;
    for (const double mw : parse_grid("log:1:100:41")) v.push_back(mw * units::mw);
    return v;
}

/// mu_c at the end of the passive section: mu_c' eta_passive^2.
inline double pair_rate_at_output(const Scenario& sc)
{
    double eta = 1.0;
    const std::size_t nl = sc.chain.nonlinear_index();
    for (std::size_t k = nl + 1; k < sc.chain.segments.size(); ++k) eta *= sc.chain.segments[k].transmittance();
    return chain_pair_rate(sc.chain, sc.pump) * eta * eta;
}

inline int cmd_reproduce(const std::string& figure, const Globals& g, std::ostream& out)
{
    auto load = [](const std::string& name) {
        const auto c = io::load_config("preset:" + name);
        return std::pair{Scenario{c.chain, c.pump}, c};
    };
    io::ResultTable t = base_table("pairsim reproduce --figure " + figure, nullptr);
    t.add_meta("figure", figure);
    using io::format_number;

    if (figure == "3a") {
        const auto [base, cfg] = load("wg1");
        t.add_meta("config_hash", io::hex(io::config_hash(cfg.source)));
        t.columns = {"l_siox_cm", "mu_c"};
        for (const double cm : parse_grid("lin:0:5:51")) {
            const auto sc = with_value(base, SweepVariable::l_siox, cm * units::cm);
            t.add_row({format_number(cm), format_number(pair_rate_at_output(sc))});
        }
    } else if (figure == "3b") {
        const auto [base, cfg] = load("wg1");
        t.add_meta("config_hash", io::hex(io::config_hash(cfg.source)));
        t.add_meta("gamma_per_w_m", format_number(base.chain.nonlinear_segment().gamma));
        t.add_meta("alpha_si_db_per_cm", format_number(base.chain.nonlinear_segment().loss_db_per_m / units::db_per_cm));
        t.columns = {"l_si_cm", "mu_c", "mu_c_prime"};
        for (const double cm : parse_grid("lin:0.3:6:58")) {
            const auto sc = with_value(base, SweepVariable::l_si, cm * units::cm);
            t.add_row({format_number(cm), format_number(pair_rate_at_output(sc)),
                       format_number(chain_pair_rate(sc.chain, sc.pump))});
        }
    } else if (figure == "3c") {
        t.columns = {"curve", "pp_mw", "mu_s_prime", "mu_i_prime"};
        for (const char* name : {"wg1", "wg5", "wg6"}) {
            const auto [base, cfg] = load(name);
            for (const double pp : power_grid_w()) {
                const auto sc = with_value(base, SweepVariable::peak_power, pp);
                const auto mu = singles_rate(sc.chain, sc.pump);
                t.add_row({name, format_number(pp / units::mw), format_number(mu.signal), format_number(mu.idler)});
            }
        }
    } else if (figure == "3d") {
        t.columns = {"curve", "pp_mw", "car"};
        for (const char* name : {"wg1", "wg5", "wg6"}) {
            const auto [base, cfg] = load(name);
            for (const double pp : power_grid_w()) {
                const auto sc = with_value(base, SweepVariable::peak_power, pp);
                t.add_row({name, format_number(pp / units::mw), car_text(predict(sc.chain, sc.pump).car)});
            }
        }
    } else if (figure == "5a") {
        const auto [base, cfg] = load("awg");
        t.add_meta("config_hash", io::hex(io::config_hash(cfg.source)));
        const double t_awg = std::get<AwgDemux>(base.chain.demux).awg.peak_transmittance();
        t.columns = {"pp_mw", "mu_c", "mu_c_prime"};
        for (const double pp : power_grid_w()) {
            const auto sc = with_value(base, SweepVariable::peak_power, pp);
            const double mu = chain_pair_rate(sc.chain, sc.pump);
            t.add_row({format_number(pp / units::mw), format_number(mu * t_awg * t_awg), format_number(mu)});
        }
    } else if (figure == "5b") {
        const auto [base, cfg] = load("awg");
        t.add_meta("config_hash", io::hex(io::config_hash(cfg.source)));
        t.columns = {"curve", "pp_mw", "car"};
        struct Curve {
            const char* name;
            Scenario sc;
        };
        const std::vector<Curve> curves{{"baseline", base},
                                        {"awg_loss_0db", with_value(base, SweepVariable::awg_loss, 0.0)},
                                        {"dark_20hz", with_value(base, SweepVariable::dark_rate, 20.0)}};
        for (const auto& c : curves) {
            for (const double pp : power_grid_w()) {
                const auto sc = with_value(c.sc, SweepVariable::peak_power, pp);
                t.add_row({c.name, format_number(pp / units::mw), car_text(predict(sc.chain, sc.pump).car)});
            }
        }
    } else {
        throw config_error("--figure must be one of 3a, 3b, 3c, 3d, 5a, 5b");
    }
    emit(t, g, out);
    return ok;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Photon-pair source chain model, Monte Carlo simulator and fitter", "pairsim"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--out", g.out, "Write the result to this path instead of stdout");
    app.add_option("--seed", g.seed, "Master random seed");
    app.add_option("--threads", g.threads, "Worker threads for Monte Carlo")->check(CLI::PositiveNumber);
    app.set_version_flag("--version", io::tool_version);

    std::string source;
    std::string pulses = "1000000";

    auto* predict_cmd = app.add_subcommand("predict", "Closed-form rates and CAR");
    predict_cmd->add_option("config", source, "Config JSON path or preset:NAME")->required();

    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo count simulation");
    sim_cmd->add_option("config", source, "Config JSON path or preset:NAME")->required();
    sim_cmd->add_option("--pulses", pulses, "Number of pump pulses");

    std::string var;
    std::string grid;
    bool mc = false;
    auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one parameter");
    sweep_cmd->add_option("config", source, "Config JSON path or preset:NAME")->required();
    sweep_cmd->add_option("--var", var, "l_si | l_siox (cm), pp (mW), awg_loss (dB), dark (Hz)")->required();
    sweep_cmd->add_option("--grid", grid, "a,b,c | lin:start:stop:n | log:start:stop:n")->required();
    sweep_cmd->add_flag("--mc", mc, "Also run a Monte Carlo simulation at every grid point");
    sweep_cmd->add_option("--pulses", pulses, "Pulses per grid point with --mc");

    std::string data;
    std::string model;
    std::string fit_config;
    bool cofit = false;
    auto* fit_cmd = app.add_subcommand("fit", "Fit a model to rate data");
    fit_cmd->add_option("data", data, "CSV with l_si_cm | l_siox_cm | pp_mw, rate[, sigma]")->required();
    fit_cmd->add_option("--model", model, "decay | gamma_alpha | poly")->required();
    fit_cmd->add_option("--config", fit_config, "Config supplying fixed chain parameters");
    fit_cmd->add_flag("--cofit-siox-loss", cofit, "gamma_alpha: also fit the passive-section loss");

    std::string figure;
    auto* repro_cmd = app.add_subcommand("reproduce", "Model curves for a published figure");
    repro_cmd->add_option("--figure", figure, "3a | 3b | 3c | 3d | 5a | 5b")->required();

    try {
        std::vector<std::string> args;
        for (int k = argc - 1; k > 0; --k) args.emplace_back(argv[k]);
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForVersion&) {
        out << io::tool_version << '\n';
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return usage;
    }

    try {
        if (predict_cmd->parsed()) return cmd_predict(source, g, out);
        if (sim_cmd->parsed()) return cmd_simulate(source, pulses, g, out);
        if (sweep_cmd->parsed()) return cmd_sweep(source, var, grid, mc, pulses, g, out);
        if (fit_cmd->parsed()) return cmd_fit(data, model, fit_config, cofit, g, out);
        if (repro_cmd->parsed()) return cmd_reproduce(figure, g, out);
    } catch (const config_error& e) {
        err << "error: " << e.what() << '\n';
        return usage;
    } catch (const numerical_error& e) {
        err << "numerical error: " << e.what() << '\n';
        return numerical;
    }
    return usage;
}

} // namespace pairsim::app
