#pragma once

// JSON experiment configuration. Keys carry their unit as a suffix; anything
// not listed in the schema is rejected.
//
// {
//   "notes": "...",
//   "pump": {"wavelength_nm", "rep_rate_mhz", "fwhm_ps",
//            "average_power_mw" | "peak_power_mw"},
//   "coupling_loss_db": 1.0,
//   "segments": [{"kind": "nonlinear"|"passive", "length_cm",
//                 "loss_db_per_cm", "gamma_per_w_m"}],
//   "demux": {"filters": {"signal": F, "idler": F}, "generation_band_ghz"}
//          | {"awg": {"channels", "spacing_ghz", "passband_ghz",
//                     "insertion_loss_db", "signal_channel", "idler_channel",
//                     "shape"}, "generation_band_ghz"},
//      F = {"detuning_ghz", "bandwidth_ghz", "insertion_loss_db", "shape"}
//   "post_filters": {"signal": [{"insertion_loss_db"}], "idler": [...]},
//   "detectors": {"signal": D, "idler": D},
//      D = {"qe", "gate_rate_mhz", "gate_width_ns", "dark_rate_khz",
//           "dead_time_us"}
//   "noise": {"signal": {"n0", "n1_per_w"}, "idler": {...}}
// }

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairsim/chainmodel.hpp"
#include "pairsim/errors.hpp"
#include "pairsim/units.hpp"

namespace pairsim::io {

using json = nlohmann::json;

inline constexpr const char* tool_version = "0.1.0";

struct ExperimentConfig {
    std::string name;
    std::string notes;
    ExperimentChain chain;
    PumpConfig pump;
    json source; // as parsed, used for hashing
};

namespace detail {

class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) fail("expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& at(const std::string& key)
    {
        seen_.insert(key);
        if (!j_.contains(key)) fail("missing key '" + key + "'");
        return j_.at(key);
    }

    double number(const std::string& key)
    {
        const json& v = at(key);
        if (!v.is_number()) fail("'" + key + "' must be a number");
        return v.get<double>();
    }

    double number(const std::string& key, double fallback)
    {
        return has(key) ? number(key) : (seen_.insert(key), fallback);
    }

    std::optional<double> optional_number(const std::string& key)
    {
        if (!has(key)) return std::nullopt;
        return number(key);
    }

    int integer(const std::string& key)
    {
        const json& v = at(key);
        if (!v.is_number_integer()) fail("'" + key + "' must be an integer");
        return v.get<int>();
    }

    std::string string(const std::string& key, const std::string& fallback)
    {
        if (!has(key)) return fallback;
        const json& v = at(key);
        if (!v.is_string()) fail("'" + key + "' must be a string");
        return v.get<std::string>();
    }

    std::string child(const std::string& key) const { return path_ + "." + key; }

    void finish() const
    {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) fail("unknown key '" + k + "'");
        }
    }

    [[noreturn]] void fail(const std::string& msg) const { throw config_error("config " + path_ + ": " + msg); }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline PassbandShape parse_shape(const std::string& s, const ObjectReader& r)
{
    if (s == "rectangular") return PassbandShape::rectangular;
    if (s == "gaussian") return PassbandShape::gaussian;
    r.fail("shape must be 'rectangular' or 'gaussian'");
}

inline PumpConfig parse_pump(const json& j)
{
    ObjectReader r(j, "pump");
    PumpConfig p;
    p.wavelength = r.number("wavelength_nm", 1551.1) * units::nm;
    p.repetition_rate = r.number("rep_rate_mhz", 100.0) * units::mhz;
    p.pulse_fwhm = r.number("fwhm_ps", 200.0) * units::ps;
    const bool avg = r.has("average_power_mw");
    const bool peak = r.has("peak_power_mw");
    if (avg == peak) r.fail("exactly one of 'average_power_mw' and 'peak_power_mw' is required");
    if (avg) {
        p.average_power = r.number("average_power_mw") * units::mw;
    } else {
        p.average_power = r.number("peak_power_mw") * units::mw * p.duty_cycle();
    }
    r.finish();
    return p;
}

inline WaveguideSegment parse_segment(const json& j, const std::string& path)
{
    ObjectReader r(j, path);
    const std::string kind = r.string("kind", "");
    WaveguideSegment s;
    if (kind == "nonlinear") {
        s.kind = SegmentKind::nonlinear;
        s.gamma = r.number("gamma_per_w_m");
    } else if (kind == "passive") {
        s.kind = SegmentKind::passive;
        s.gamma = r.number("gamma_per_w_m", 0.0);
    } else {
        r.fail("kind must be 'nonlinear' or 'passive'");
    }
    s.length = r.number("length_cm") * units::cm;
    s.loss_db_per_m = r.number("loss_db_per_cm") * units::db_per_cm;
    r.finish();
    return s;
}

inline FilterSpec parse_filter(const json& j, const std::string& path, double pump_frequency)
{
    ObjectReader r(j, path);
    FilterSpec f;
    f.center_frequency = pump_frequency + r.number("detuning_ghz") * units::ghz;
    f.bandwidth_3db = r.number("bandwidth_ghz") * units::ghz;
    f.insertion_loss_db = r.number("insertion_loss_db", 0.0);
    f.shape = parse_shape(r.string("shape", "rectangular"), r);
    r.finish();
    return f;
}

inline Demux parse_demux(const json& j, double pump_frequency)
{
    ObjectReader r(j, "demux");
    const double band = r.number("generation_band_ghz", 0.0) * units::ghz;
    const bool filters = r.has("filters");
    if (filters == r.has("awg")) r.fail("exactly one of 'filters' and 'awg' is required");
    if (filters) {
        ObjectReader fr(r.at("filters"), r.child("filters"));
        FilterPairDemux d;
        d.signal = parse_filter(fr.at("signal"), fr.child("signal"), pump_frequency);
        d.idler = parse_filter(fr.at("idler"), fr.child("idler"), pump_frequency);
        d.generation_band = band;
        fr.finish();
        r.finish();
        return d;
    }
    ObjectReader ar(r.at("awg"), r.child("awg"));
    AwgDemux d;
    d.awg.channel_count = ar.integer("channels");
    d.awg.channel_spacing = ar.number("spacing_ghz") * units::ghz;
    d.awg.passband_3db = ar.number("passband_ghz") * units::ghz;
    d.awg.insertion_loss_db = ar.number("insertion_loss_db");
    d.awg.passband_shape = parse_shape(ar.string("shape", "gaussian"), ar);
    d.signal_channel = ar.integer("signal_channel");
    d.idler_channel = ar.integer("idler_channel");
    d.generation_band = band;
    ar.finish();
    r.finish();
    return d;
}

inline DetectorConfig parse_detector(const json& j, const std::string& path)
{
    ObjectReader r(j, path);
    DetectorConfig d;
    d.quantum_efficiency = r.number("qe");
    d.gate_rate = r.number("gate_rate_mhz") * units::mhz;
    d.gate_width = r.number("gate_width_ns", 1.0) * units::ns;
    d.dark_rate = r.number("dark_rate_khz") * units::khz;
    d.dead_time = r.number("dead_time_us", 0.0) * units::us;
    r.finish();
    return d;
}

inline std::vector<FilterSpec> parse_post_filters(const json& j, const std::string& path)
{
    if (!j.is_array()) throw config_error("config " + path + ": expected an array");
    std::vector<FilterSpec> out;
    for (std::size_t k = 0; k < j.size(); ++k) {
        ObjectReader r(j[k], path + "[" + std::to_string(k) + "]");
        FilterSpec f;
        f.insertion_loss_db = r.number("insertion_loss_db");
        r.finish();
        out.push_back(f);
    }
    return out;
}

inline NoiseCoefficients parse_noise(const json& j, const std::string& path)
{
    ObjectReader r(j, path);
    NoiseCoefficients n;
    n.n0 = r.number("n0", 0.0);
    n.n1 = r.number("n1_per_w", 0.0);
    r.finish();
    return n;
}

} // namespace detail

inline ExperimentConfig parse_config(const json& j, std::string name = "")
{
    detail::ObjectReader r(j, name.empty() ? "$" : name);
    ExperimentConfig cfg;
    cfg.name = std::move(name);
    cfg.source = j;
    cfg.notes = r.string("notes", "");
    cfg.pump = detail::parse_pump(r.at("pump"));
    cfg.pump.validate();
    const double nu_p = cfg.pump.frequency();

    auto& chain = cfg.chain;
    chain.coupling_loss_db = r.number("coupling_loss_db", 0.0);
    const json& segs = r.at("segments");
    if (!segs.is_array()) r.fail("'segments' must be an array");
    for (std::size_t k = 0; k < segs.size(); ++k) {
        chain.segments.push_back(detail::parse_segment(segs[k], "segments[" + std::to_string(k) + "]"));
    }
    chain.demux = detail::parse_demux(r.at("demux"), nu_p);

    if (r.has("post_filters")) {
        detail::ObjectReader pr(r.at("post_filters"), "post_filters");
        if (pr.has("signal")) chain.post_filters.signal = detail::parse_post_filters(pr.at("signal"), "post_filters.signal");
        if (pr.has("idler")) chain.post_filters.idler = detail::parse_post_filters(pr.at("idler"), "post_filters.idler");
        pr.finish();
    }
    {
        detail::ObjectReader dr(r.at("detectors"), "detectors");
        chain.detectors.signal = detail::parse_detector(dr.at("signal"), "detectors.signal");
        chain.detectors.idler = detail::parse_detector(dr.at("idler"), "detectors.idler");
        dr.finish();
    }
    if (r.has("noise")) {
        detail::ObjectReader nr(r.at("noise"), "noise");
        if (nr.has("signal")) chain.noise.signal = detail::parse_noise(nr.at("signal"), "noise.signal");
        if (nr.has("idler")) chain.noise.idler = detail::parse_noise(nr.at("idler"), "noise.idler");
        nr.finish();
    }
    r.finish();
    chain.validate();
    return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text, std::string name = "")
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw config_error(std::string("config: invalid JSON: ") + e.what());
    }
    return parse_config(j, std::move(name));
}

// ---------------------------------------------------------------------------
// Presets

namespace detail {

inline json waveguide_preset(double l_si_cm, double l_siox_cm, const std::string& notes)
{
    return {
        {"notes", notes},
        {"pump", {{"wavelength_nm", 1551.1}, {"rep_rate_mhz", 100.0}, {"fwhm_ps", 200.0}, {"peak_power_mw", 37.0}}},
        {"coupling_loss_db", 1.0},
        {"segments",
         {{{"kind", "nonlinear"}, {"length_cm", l_si_cm}, {"loss_db_per_cm", 2.0}, {"gamma_per_w_m", 161.0}},
          {{"kind", "passive"}, {"length_cm", l_siox_cm}, {"loss_db_per_cm", 1.8}}}},
        {"demux",
         {{"filters",
           {{"signal", {{"detuning_ghz", 598.0}, {"bandwidth_ghz", 120.0}, {"insertion_loss_db", 0.0}}},
            {"idler", {{"detuning_ghz", -598.0}, {"bandwidth_ghz", 120.0}, {"insertion_loss_db", 0.0}}}}}}},
        {"post_filters", {{"signal", {{{"insertion_loss_db", 3.8}}}}, {"idler", {{{"insertion_loss_db", 3.8}}}}}},
        {"detectors",
         {{"signal", {{"qe", 0.21}, {"gate_rate_mhz", 100.0}, {"gate_width_ns", 1.0}, {"dark_rate_khz", 2.1}, {"dead_time_us", 10.0}}},
          {"idler", {{"qe", 0.21}, {"gate_rate_mhz", 100.0}, {"gate_width_ns", 1.0}, {"dark_rate_khz", 2.1}, {"dead_time_us", 10.0}}}}},
        {"noise", {{"signal", {{"n0", 0.0}, {"n1_per_w", 0.2}}}, {"idler", {{"n0", 0.0}, {"n1_per_w", 0.2}}}}},
    };
}

inline json awg_preset()
{
    return {
        {"notes",
         "AWG-demultiplexed source: L_Si 1.37 cm, 16 channels at 200 GHz, 80 GHz passband, 7.7 dB loss, "
         "channels +3/-3. Noise slope n1 is an assumed value."},
        {"pump", {{"wavelength_nm", 1551.1}, {"rep_rate_mhz", 100.0}, {"fwhm_ps", 200.0}, {"peak_power_mw", 37.0}}},
        {"coupling_loss_db", 1.0},
        {"segments", {{{"kind", "nonlinear"}, {"length_cm", 1.37}, {"loss_db_per_cm", 2.0}, {"gamma_per_w_m", 161.0}}}},
        {"demux",
         {{"awg",
           {{"channels", 16},
            {"spacing_ghz", 200.0},
            {"passband_ghz", 80.0},
            {"insertion_loss_db", 7.7},
            {"shape", "gaussian"},
            {"signal_channel", 3},
            {"idler_channel", -3}}}}},
        {"post_filters", {{"signal", {{{"insertion_loss_db", 2.8}}}}, {"idler", {{{"insertion_loss_db", 2.8}}}}}},
        {"detectors",
         {{"signal", {{"qe", 0.24}, {"gate_rate_mhz", 100.0}, {"gate_width_ns", 1.0}, {"dark_rate_khz", 5.1}, {"dead_time_us", 10.0}}},
          {"idler", {{"qe", 0.24}, {"gate_rate_mhz", 100.0}, {"gate_width_ns", 1.0}, {"dark_rate_khz", 5.1}, {"dead_time_us", 10.0}}}}},
        {"noise", {{"signal", {{"n0", 0.0}, {"n1_per_w", 0.2}}}, {"idler", {{"n0", 0.0}, {"n1_per_w", 0.2}}}}},
    };
}

} // namespace detail

inline const std::map<std::string, json>& presets()
{
    static const std::map<std::string, json> table = [] {
        const std::string assumed = " Length marked (assumed) is not stated for this waveguide and is a placeholder.";
        std::map<std::string, json> m;
        m["wg1"] = detail::waveguide_preset(1.37, 0.94, "Waveguide (i): L_Si 1.37 cm, L_SiOx 0.94 cm (assumed)." + assumed);
        m["wg2"] = detail::waveguide_preset(0.5, 0.94, "Waveguide (ii): L_Si 0.5 cm (assumed), L_SiOx 0.94 cm (assumed)." + assumed);
        m["wg3"] = detail::waveguide_preset(3.0, 0.94, "Waveguide (iii): L_Si 3.0 cm (assumed), L_SiOx 0.94 cm (assumed)." + assumed);
        m["wg4"] = detail::waveguide_preset(5.0, 0.94, "Waveguide (iv): L_Si 5.0 cm (assumed), L_SiOx 0.94 cm (assumed)." + assumed);
        m["wg5"] = detail::waveguide_preset(1.37, 2.93, "Waveguide (v): L_Si 1.37 cm (assumed), L_SiOx 2.93 cm." + assumed);
        m["wg6"] = detail::waveguide_preset(1.37, 4.49, "Waveguide (vi): L_Si 1.37 cm (assumed), L_SiOx 4.49 cm." + assumed);
        m["awg"] = detail::awg_preset();
        return m;
    }();
    return table;
}

/// Loads "preset:NAME" or a JSON file path.
inline ExperimentConfig load_config(const std::string& source)
{
    const std::string prefix = "preset:";
    if (source.rfind(prefix, 0) == 0) {
        const std::string name = source.substr(prefix.size());
        const auto it = presets().find(name);
        if (it == presets().end()) throw config_error("unknown preset '" + name + "'");
        return parse_config(it->second, name);
    }
    std::ifstream in(source);
    if (!in) throw config_error("cannot open config file '" + source + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), source);
}

/// FNV-1a 64 of the canonical (key-sorted, compact) JSON text.
inline std::uint64_t config_hash(const json& j)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : j.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace pairsim::io
