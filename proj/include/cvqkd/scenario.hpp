#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cvqkd/channel.hpp"
#include "cvqkd/dsp.hpp"
#include "cvqkd/errors.hpp"
#include "cvqkd/keyrate.hpp"
#include "cvqkd/planner.hpp"
#include "cvqkd/rxchain.hpp"
#include "cvqkd/txchain.hpp"

namespace cvqkd::scenario {

inline constexpr int kSchemaVersion = 1;

/// Optional key-rate input overrides: when zeta/zeta_trusted are present the
/// key-rate stage uses them instead of the pipeline estimates (regression
/// mode against externally reported noise figures).
struct SecurityOverrides {
    double beta = 0.95;
    double detection_efficiency = 1.0;
    std::optional<double> v_mod;
    std::optional<double> transmission;
    std::optional<double> zeta;
    std::optional<double> zeta_trusted;
};

struct Scenario {
    std::string name = "default";
    tx::TxConfig tx;
    channel::ChannelConfig channel;
    rx::RxConfig rx;
    rx::ClassicalLoad classical;
    dsp::DspConfig dsp;
    SecurityOverrides security;
    plan::RadioPlan radio;
    plan::KeyPolicy policy;
    std::size_t n_symbols = 1u << 17;
    std::size_t calibration_symbols = 1u << 17;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "out";

    /// The stock configuration models the reference link: 13.2 km dark
    /// fiber, 250 MHz carved transmission, pilot at 1 GHz, 20 GSa/s capture.
    Scenario() {
        tx.symbol_rate = 250e6;
        tx.pilot_freq = 1e9;
        tx.samples_per_symbol = 80; // 20 GSa/s
        tx.carving_enabled = true;
        tx.mean_photons = 4.0;
        tx.pulse_shape = FilterSpec{FilterKind::Gaussian, 0.0, 0.5, 104e6};
        channel.length_km = 13.2;
        channel.freq_offset = 2e6;
        channel.linewidth_tx = 10e3;
        channel.linewidth_lo = 10e3;
        dsp.b_fil = 400e6;
    }

    void validate() const {
        tx.validate();
        channel.validate();
        rx.validate();
        dsp.validate();
        if (n_symbols < 128) throw ConfigError("scenario: n_symbols must be >= 128");
        if (seeds.empty()) throw ConfigError("scenario: at least one seed required");
        const double frame_rate = tx.symbol_rate * tx.samples_per_symbol;
        if (frame_rate < 2.0 * rx.b_rx_pilot)
            throw ConfigError("scenario: frame rate must be >= 2*B_RX_pilot");
        const double ratio = rx.adc_rate / tx.symbol_rate;
        if (std::fabs(ratio - std::round(ratio)) > 1e-9)
            throw ConfigError("scenario: adc_rate must be an integer multiple of the symbol rate");
    }
};

namespace detail {

struct IniFile {
    // section -> key -> value, with consumption tracking for fail-closed use
    std::map<std::string, std::map<std::string, std::string>> data;
    mutable std::map<std::string, std::map<std::string, bool>> used;

    static std::string trim(const std::string& s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? "" : s.substr(b, e - b + 1);
    }

    static IniFile parse(std::istream& is) {
        IniFile ini;
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("scenario line " + std::to_string(lineno) + ": bad section");
                section = trim(line.substr(1, line.size() - 2));
                ini.data[section];
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("scenario line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string val = trim(line.substr(eq + 1));
            if (key.empty() || val.empty())
                throw ConfigError("scenario line " + std::to_string(lineno) + ": empty key or value");
            auto [it, fresh] = ini.data[section].emplace(key, val);
            if (!fresh)
                throw ConfigError("scenario line " + std::to_string(lineno) + ": duplicate key " + key);
        }
        return ini;
    }

    std::optional<std::string> get(const std::string& sec, const std::string& key) const {
        auto s = data.find(sec);
        if (s == data.end()) return std::nullopt;
        auto k = s->second.find(key);
        if (k == s->second.end()) return std::nullopt;
        used[sec][key] = true;
        return k->second;
    }

    void reject_unknown() const {
        for (const auto& [sec, kv] : data)
            for (const auto& [key, val] : kv)
                if (!used.count(sec) || !used.at(sec).count(key))
                    throw ConfigError("scenario: unknown key '" + key + "' in section [" + sec
                                      + "]");
    }
};

inline double to_double(const std::string& s, const std::string& what) {
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (...) {
        throw ConfigError("scenario: bad numeric value for " + what + ": '" + s + "'");
    }
}

inline bool to_bool(const std::string& s, const std::string& what) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("scenario: bad boolean for " + what + ": '" + s + "'");
}

struct Binder {
    const IniFile& ini;
    std::string section;

    void num(const std::string& key, double& out) const {
        if (auto v = ini.get(section, key)) out = to_double(*v, section + "." + key);
    }
    void integer(const std::string& key, unsigned& out) const {
        if (auto v = ini.get(section, key))
            out = static_cast<unsigned>(to_double(*v, section + "." + key));
    }
    void size(const std::string& key, std::size_t& out) const {
        if (auto v = ini.get(section, key))
            out = static_cast<std::size_t>(to_double(*v, section + "." + key));
    }
    void boolean(const std::string& key, bool& out) const {
        if (auto v = ini.get(section, key)) out = to_bool(*v, section + "." + key);
    }
    void text(const std::string& key, std::string& out) const {
        if (auto v = ini.get(section, key)) out = *v;
    }
    void opt(const std::string& key, std::optional<double>& out) const {
        if (auto v = ini.get(section, key)) out = to_double(*v, section + "." + key);
    }
};

} // namespace detail

inline Scenario parse(std::istream& is) {
    using detail::Binder;
    auto ini = detail::IniFile::parse(is);

    const auto schema = ini.get("", "schema");
    if (!schema) throw ConfigError("scenario: missing 'schema' key");
    if (static_cast<int>(detail::to_double(*schema, "schema")) != kSchemaVersion)
        throw ConfigError("scenario: unsupported schema version " + *schema);

    Scenario sc;
    Binder root{ini, ""};
    root.text("name", sc.name);

    Binder tx{ini, "tx"};
    tx.num("symbol_rate", sc.tx.symbol_rate);
    tx.num("pilot_freq", sc.tx.pilot_freq);
    tx.num("mean_photons", sc.tx.mean_photons);
    tx.num("pilot_to_quantum_db", sc.tx.pilot_to_quantum_db);
    tx.num("per_tx_db", sc.tx.per_tx_db);
    tx.integer("prbs_order", sc.tx.prbs_order);
    tx.integer("samples_per_symbol", sc.tx.samples_per_symbol);
    tx.boolean("carving", sc.tx.carving_enabled);
    tx.num("iq_bias_error", sc.tx.iq_bias_error);
    tx.num("phase_bias_error", sc.tx.phase_bias_error);
    tx.num("rf_imbalance_db", sc.tx.rf_imbalance_db);
    tx.num("rf_imbalance_deg", sc.tx.rf_imbalance_deg);
    tx.num("pilot_drive", sc.tx.pilot_drive);
    if (auto v = ini.get("tx", "modulation")) {
        if (*v == "four_state") sc.tx.modulation = tx::Modulation::FourState;
        else if (*v == "gaussian") sc.tx.modulation = tx::Modulation::Gaussian;
        else throw ConfigError("scenario: unknown tx.modulation '" + *v + "'");
    }
    if (auto v = ini.get("tx", "pulse_shape")) {
        if (*v == "raised_cosine")
            sc.tx.pulse_shape.kind = FilterKind::RaisedCosine;
        else if (*v == "gaussian")
            sc.tx.pulse_shape.kind = FilterKind::Gaussian;
        else if (*v == "brickwall")
            sc.tx.pulse_shape.kind = FilterKind::BrickwallLowPass;
        else
            throw ConfigError("scenario: unknown tx.pulse_shape '" + *v + "'");
    }
    tx.num("roll_off", sc.tx.pulse_shape.roll_off);
    tx.num("pulse_cutoff", sc.tx.pulse_shape.cutoff);
    sc.tx.pulse_shape.symbol_rate = sc.tx.symbol_rate;

    Binder ch{ini, "channel"};
    ch.num("length_km", sc.channel.length_km);
    ch.num("loss_db_per_km", sc.channel.loss_db_per_km);
    ch.num("freq_offset", sc.channel.freq_offset);
    ch.num("linewidth_tx", sc.channel.linewidth_tx);
    ch.num("linewidth_lo", sc.channel.linewidth_lo);
    ch.num("delta_sop", sc.channel.delta_sop);
    ch.integer("classical_channels", sc.channel.classical_channels);
    ch.num("raman_noise_photons", sc.channel.raman_noise_photons);

    Binder rx{ini, "rx"};
    rx.num("b_rx_quantum", sc.rx.b_rx_quantum);
    rx.num("b_rx_pilot", sc.rx.b_rx_pilot);
    rx.num("cmrr_q_db", sc.rx.cmrr_q_db);
    rx.num("cmrr_pi_db", sc.rx.cmrr_pi_db);
    rx.num("responsivity_q", sc.rx.responsivity_q);
    rx.num("responsivity_pi", sc.rx.responsivity_pi);
    rx.num("elec_snu", sc.rx.elec_snu);
    rx.num("elec_broadband_fraction", sc.rx.elec_broadband_fraction);
    rx.num("adc_rate", sc.rx.adc_rate);
    rx.integer("adc_bits", sc.rx.adc_bits);
    rx.num("adc_fullscale_sigma", sc.rx.adc_fullscale_sigma);
    rx.integer("rho_order", sc.rx.rho_order);
    rx.num("classical_dd_power", sc.classical.dd_power_per_channel);
    rx.num("classical_dd_fundamental", sc.classical.fundamental);
    rx.integer("classical_dd_tones", sc.classical.n_tones);

    Binder dsp{ini, "dsp"};
    dsp.num("b_fil", sc.dsp.b_fil);
    dsp.integer("b_fil_order", sc.dsp.b_fil_order);
    dsp.num("deskew", sc.dsp.deskew);
    dsp.integer("phase_smoothing_window", sc.dsp.phase_smoothing_window);
    dsp.num("decision_search_resolution", sc.dsp.decision_search_resolution);
    dsp.num("decision_offset_delta", sc.dsp.decision_offset_delta);
    dsp.num("pilot_band", sc.dsp.pilot_band);
    dsp.boolean("equalize_rx", sc.dsp.equalize_rx_response);
    dsp.num("eq_band", sc.dsp.eq_band);
    dsp.boolean("matched_filter", sc.dsp.matched_filter);
    dsp.num("guard_fraction", sc.dsp.guard_fraction);
    dsp.num("freq_search_range", sc.dsp.freq_search_range);

    Binder sec{ini, "security"};
    sec.num("beta", sc.security.beta);
    sec.num("detection_efficiency", sc.security.detection_efficiency);
    sec.opt("v_mod", sc.security.v_mod);
    sec.opt("transmission", sc.security.transmission);
    sec.opt("zeta", sc.security.zeta);
    sec.opt("zeta_trusted", sc.security.zeta_trusted);

    Binder plan{ini, "planner"};
    plan.integer("macro_cells", sc.radio.macro_cells);
    plan.integer("sectors_per_macro", sc.radio.sectors_per_macro);
    plan.integer("beams_per_sector", sc.radio.beams_per_sector);
    plan.num("rate_per_beam", sc.radio.rate_per_beam);
    plan.integer("small_cells_per_sector", sc.radio.small_cells_per_sector);
    plan.num("rate_per_small_cell", sc.radio.rate_per_small_cell);
    plan.num("reach_km", sc.radio.reach_km);
    plan.num("aes_key_bits", sc.policy.aes_key_bits);
    plan.num("chunk_size_bytes", sc.policy.chunk_size_bytes);
    plan.num("nominal_key_rate", sc.policy.nominal_key_rate);
    plan.num("buffer_size_bits", sc.policy.buffer_size_bits);
    plan.num("sync_time_s", sc.policy.sync_time_s);

    Binder run{ini, "run"};
    run.size("n_symbols", sc.n_symbols);
    run.size("calibration_symbols", sc.calibration_symbols);
    run.text("output_dir", sc.output_dir);
    if (auto v = ini.get("run", "seeds")) {
        sc.seeds.clear();
        std::stringstream ss(*v);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = detail::IniFile::trim(tok);
            if (tok.empty()) continue;
            sc.seeds.push_back(static_cast<std::uint64_t>(detail::to_double(tok, "run.seeds")));
        }
        if (sc.seeds.empty()) throw ConfigError("scenario: run.seeds is empty");
    }

    ini.reject_unknown();
    sc.validate();
    return sc;
}

inline Scenario load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("scenario: cannot open " + path);
    return parse(is);
}

} // namespace cvqkd::scenario
