#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cvqkd/channel.hpp"
#include "cvqkd/dsp.hpp"
#include "cvqkd/estimator.hpp"
#include "cvqkd/keyrate.hpp"
#include "cvqkd/planner.hpp"
#include "cvqkd/scenario.hpp"

namespace cvqkd::pipeline {

using nlohmann::json;

struct RunResult {
    std::uint64_t seed = 0;
    est::NoiseEstimate estimate;
    key::KeyRateReport keyrate;
    double est_freq_offset = 0.0;
    double decision_offset = 0.0;
    bool low_confidence = false;
    bool saturated = false;
    std::size_t n_symbols_used = 0;
};

namespace detail {

inline rx::ClassicalLoad bind_load(const scenario::Scenario& sc) {
    rx::ClassicalLoad load = sc.classical;
    load.channels = sc.channel.classical_channels;
    return load;
}

inline DualPolFrame transmit(const scenario::Scenario& sc,
                             const std::vector<tx::SymbolRecord>& symbols) {
    auto quantum = tx::shape_and_carve(symbols, sc.tx);
    auto pilot = tx::synthesize_pilot(sc.tx, quantum.duration(), quantum.sample_rate);
    pilot.samples.resize(quantum.size());
    return tx::assemble_frame(quantum, pilot, sc.tx);
}

inline rx::Capture calibration_capture(const scenario::Scenario& sc, std::uint64_t seed,
                                       bool lo_on) {
    const std::size_t n = sc.calibration_symbols * sc.tx.samples_per_symbol;
    const double fs = sc.tx.symbol_rate * sc.tx.samples_per_symbol;
    DualPolFrame dark;
    dark.te = ComplexWaveform{std::vector<cplx>(n, cplx{0.0, 0.0}), fs};
    dark.tm = dark.te;
    rx::RxConfig cfg = sc.rx;
    cfg.signal_on = false;
    cfg.lo_on = lo_on;
    return rx::detect(dark, cfg, seed, bind_load(sc));
}

} // namespace detail

struct RunArtifacts {
    RunResult result;
    dsp::RecoveredSymbols recovered;  // populated when keep_waveforms
    std::vector<cplx> alice;
    rx::Capture signal_capture;
};

/// One full pipeline pass: calibration captures, signal capture, DSP
/// recovery, SNU-calibrated parameter estimation, secure-key computation.
inline RunResult run_single(const scenario::Scenario& sc, std::uint64_t seed,
                            RunArtifacts* artifacts = nullptr) {
    sc.validate();

    auto symbols = tx::generate_quantum_symbols(sc.tx, sc.n_symbols, seed);
    auto frame = detail::transmit(sc, symbols);

    channel::ChannelConfig ch = sc.channel;
    ch.seed = seed;
    frame = channel::propagate(std::move(frame), ch);

    const auto load = detail::bind_load(sc);
    rx::Capture capture = rx::detect(frame, sc.rx, seed, load);
    frame = DualPolFrame{}; // release the field memory before DSP

    auto recovered = dsp::recover(capture, symbols, sc.dsp, sc.tx, sc.rx);

    rx::Capture shot_cap = detail::calibration_capture(sc, seed ^ 0x5ca1'ab1e'0000'0001ull, true);
    rx::Capture elec_cap = detail::calibration_capture(sc, seed ^ 0x5ca1'ab1e'0000'0002ull, false);
    auto shot_syms =
        dsp::extract_noise_symbols(shot_cap, sc.dsp, sc.tx, sc.rx, recovered.decision_offset);
    auto elec_syms =
        dsp::extract_noise_symbols(elec_cap, sc.dsp, sc.tx, sc.rx, recovered.decision_offset);
    auto cal = est::calibrate_snu(shot_syms, elec_syms);

    auto alice = est::symbols_of(symbols, recovered.truth_start, recovered.bob_symbols.size());
    est::NoiseEstimate estimate =
        sc.tx.modulation == tx::Modulation::Gaussian
            ? est::estimate_gaussian(alice, recovered.bob_symbols, cal)
            : est::estimate_four_state(alice, recovered.bob_symbols, cal);

    key::SecurityParams params;
    params.beta = sc.security.beta;
    params.detection_efficiency = sc.security.detection_efficiency;
    params.v_mod = sc.security.v_mod.value_or(sc.tx.modulation_variance());
    params.transmission =
        std::clamp(sc.security.transmission.value_or(estimate.t_hat), 1e-12, 1.0);
    // estimates can dip below zero by sampling noise; the security
    // computation needs physical (non-negative) variances
    params.zeta_trusted = std::max(sc.security.zeta_trusted.value_or(estimate.zeta_T), 0.0);
    params.v_el = std::max(sc.security.zeta.value_or(estimate.zeta) - params.zeta_trusted, 0.0);
    params.zeta = params.zeta_trusted + params.v_el;
    params.symbol_rate = sc.tx.symbol_rate;

    RunResult r;
    r.seed = seed;
    r.estimate = estimate;
    r.keyrate = key::secure_key_rate(params);
    r.est_freq_offset = recovered.est_freq_offset;
    r.decision_offset = recovered.decision_offset;
    r.low_confidence = recovered.low_confidence;
    r.saturated = capture.saturated;
    r.n_symbols_used = recovered.bob_symbols.size();

    if (artifacts) {
        artifacts->result = r;
        artifacts->recovered = std::move(recovered);
        artifacts->alice = std::move(alice);
        artifacts->signal_capture = std::move(capture);
    }
    return r;
}

/// Deterministic worker pool: jobs indexed 0..n-1, results land by index so
/// the output is identical for any worker count.
inline void parallel_for(std::size_t n_jobs, unsigned workers,
                         const std::function<void(std::size_t)>& job) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_jobs)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n_jobs; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n_jobs) return;
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline json to_json(const scenario::Scenario& sc) {
    json j;
    j["name"] = sc.name;
    j["tx"] = {{"symbol_rate", sc.tx.symbol_rate},
               {"pilot_freq", sc.tx.pilot_freq},
               {"mean_photons", sc.tx.mean_photons},
               {"v_mod", sc.tx.modulation_variance()},
               {"pilot_to_quantum_db", sc.tx.pilot_to_quantum_db},
               {"per_tx_db", std::isinf(sc.tx.per_tx_db) ? -1.0 : sc.tx.per_tx_db},
               {"prbs_order", sc.tx.prbs_order},
               {"samples_per_symbol", sc.tx.samples_per_symbol},
               {"carving", sc.tx.carving_enabled},
               {"pulse_shape", static_cast<int>(sc.tx.pulse_shape.kind)},
               {"roll_off", sc.tx.pulse_shape.roll_off},
               {"pulse_cutoff", sc.tx.pulse_shape.cutoff},
               {"modulation", sc.tx.modulation == tx::Modulation::Gaussian ? "gaussian"
                                                                           : "four_state"}};
    j["channel"] = {{"length_km", sc.channel.length_km},
                    {"loss_db_per_km", sc.channel.loss_db_per_km},
                    {"freq_offset", sc.channel.freq_offset},
                    {"linewidth_tx", sc.channel.linewidth_tx},
                    {"linewidth_lo", sc.channel.linewidth_lo},
                    {"delta_sop", sc.channel.delta_sop},
                    {"classical_channels", sc.channel.classical_channels},
                    {"raman_noise_photons", sc.channel.raman_noise_photons}};
    j["rx"] = {{"b_rx_quantum", sc.rx.b_rx_quantum},
               {"b_rx_pilot", sc.rx.b_rx_pilot},
               {"cmrr_q_db", sc.rx.cmrr_q_db},
               {"cmrr_pi_db", sc.rx.cmrr_pi_db},
               {"elec_snu", sc.rx.elec_snu},
               {"elec_broadband_fraction", sc.rx.elec_broadband_fraction},
               {"adc_rate", sc.rx.adc_rate},
               {"adc_bits", sc.rx.adc_bits},
               {"rho_order", sc.rx.rho_order},
               {"classical_dd_power", sc.classical.dd_power_per_channel},
               {"classical_dd_fundamental", sc.classical.fundamental},
               {"classical_dd_tones", sc.classical.n_tones}};
    j["dsp"] = {{"b_fil", sc.dsp.b_fil},
                {"b_fil_order", sc.dsp.b_fil_order},
                {"deskew", sc.dsp.deskew},
                {"phase_smoothing_window", sc.dsp.phase_smoothing_window},
                {"decision_search_resolution", sc.dsp.decision_search_resolution},
                {"decision_offset_delta", sc.dsp.decision_offset_delta},
                {"pilot_band", sc.dsp.pilot_band},
                {"equalize_rx", sc.dsp.equalize_rx_response},
                {"eq_band", sc.dsp.eq_band},
                {"matched_filter", sc.dsp.matched_filter},
                {"guard_fraction", sc.dsp.guard_fraction}};
    j["security"] = {{"beta", sc.security.beta},
                     {"detection_efficiency", sc.security.detection_efficiency}};
    if (sc.security.v_mod) j["security"]["v_mod"] = *sc.security.v_mod;
    if (sc.security.transmission) j["security"]["transmission"] = *sc.security.transmission;
    if (sc.security.zeta) j["security"]["zeta"] = *sc.security.zeta;
    if (sc.security.zeta_trusted) j["security"]["zeta_trusted"] = *sc.security.zeta_trusted;
    j["run"] = {{"n_symbols", sc.n_symbols},
                {"calibration_symbols", sc.calibration_symbols},
                {"seeds", sc.seeds}};
    return j;
}

inline json to_json(const RunResult& r) {
    return json{{"seed", r.seed},
                {"zeta", r.estimate.zeta},
                {"zeta_trusted", r.estimate.zeta_T},
                {"v_el", r.estimate.v_el},
                {"t_hat", r.estimate.t_hat},
                {"snr", r.estimate.snr},
                {"sigma_zeta", r.estimate.sigma_zeta},
                {"zeta_channel_input", r.estimate.zeta_channel_input},
                {"n_symbols_used", r.n_symbols_used},
                {"est_freq_offset", r.est_freq_offset},
                {"decision_offset", r.decision_offset},
                {"low_confidence", r.low_confidence},
                {"saturated", r.saturated},
                {"i_ab", r.keyrate.i_ab},
                {"chi_untrusted", r.keyrate.chi_untrusted},
                {"chi_trusted", r.keyrate.chi_trusted},
                {"k_untrusted", r.keyrate.k_untrusted},
                {"k_trusted", r.keyrate.k_trusted},
                {"no_key_untrusted", r.keyrate.no_key_untrusted},
                {"no_key_trusted", r.keyrate.no_key_trusted}};
}

struct ScenarioReport {
    std::vector<RunResult> runs;
    json document;
};

/// Execute every seed of a scenario (optionally in parallel) and assemble the
/// report document. Identical inputs give a byte-identical document.
inline ScenarioReport run_scenario(const scenario::Scenario& sc, unsigned workers = 1) {
    ScenarioReport rep;
    rep.runs.resize(sc.seeds.size());
    parallel_for(sc.seeds.size(), workers,
                 [&](std::size_t i) { rep.runs[i] = run_single(sc, sc.seeds[i]); });

    json runs = json::array();
    double zeta = 0, zeta_t = 0, ks = 0, kt = 0, snr = 0, t_hat = 0;
    for (const auto& r : rep.runs) {
        runs.push_back(to_json(r));
        zeta += r.estimate.zeta;
        zeta_t += r.estimate.zeta_T;
        ks += r.keyrate.k_untrusted;
        kt += r.keyrate.k_trusted;
        snr += r.estimate.snr;
        t_hat += r.estimate.t_hat;
    }
    const double n = static_cast<double>(rep.runs.size());
    rep.document = json{{"scenario", to_json(sc)},
                        {"runs", runs},
                        {"mean", json{{"zeta", zeta / n},
                                      {"zeta_trusted", zeta_t / n},
                                      {"k_untrusted", ks / n},
                                      {"k_trusted", kt / n},
                                      {"snr", snr / n},
                                      {"t_hat", t_hat / n}}}};
    return rep;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw PipelineError("io", "cannot write " + path.string());
    os << text;
}

/// Full `run` artifact bundle: report JSON, per-seed estimate CSV, and
/// first-seed diagnostics (spectrum, phase track, constellation).
inline void write_run_bundle(const scenario::Scenario& sc, const ScenarioReport& rep,
                             const std::filesystem::path& outdir) {
    std::filesystem::create_directories(outdir);
    write_text(outdir / "report.json", rep.document.dump(2) + "\n");

    std::ostringstream csv;
    csv << "seed,zeta,zeta_trusted,v_el,t_hat,snr,k_untrusted,k_trusted\n";
    csv.precision(12);
    for (const auto& r : rep.runs)
        csv << r.seed << ',' << r.estimate.zeta << ',' << r.estimate.zeta_T << ','
            << r.estimate.v_el << ',' << r.estimate.t_hat << ',' << r.estimate.snr << ','
            << r.keyrate.k_untrusted << ',' << r.keyrate.k_trusted << '\n';
    write_text(outdir / "estimate.csv", csv.str());

    // diagnostics from the first seed
    RunArtifacts art;
    run_single(sc, sc.seeds.front(), &art);

    {
        auto te = art.signal_capture.te();
        auto psd = spectrum::power_spectrum(te, spectrum::Window::Hann);
        std::ostringstream os;
        os << "frequency_hz,power\n";
        os.precision(9);
        const std::size_t m = psd.size();
        const std::size_t stride = std::max<std::size_t>(1, m / 8192);
        for (std::size_t k = 0; k < m; k += stride)
            os << fft::bin_frequency(k, m, te.sample_rate) << ',' << psd[k] << '\n';
        write_text(outdir / "spectrum.csv", os.str());
    }
    {
        std::ostringstream os;
        os << "symbol,phase_rad\n";
        os.precision(12);
        for (std::size_t k = 0; k < art.recovered.phase_track.size(); ++k)
            os << k << ',' << art.recovered.phase_track[k] << '\n';
        write_text(outdir / "phase_track.csv", os.str());
    }
    {
        std::ostringstream os;
        os << "re,im,alice_re,alice_im\n";
        os.precision(12);
        const std::size_t n = std::min<std::size_t>(art.recovered.bob_symbols.size(), 4096);
        for (std::size_t k = 0; k < n; ++k)
            os << art.recovered.bob_symbols[k].real() << ',' << art.recovered.bob_symbols[k].imag()
               << ',' << art.alice[k].real() << ',' << art.alice[k].imag() << '\n';
        write_text(outdir / "constellation.csv", os.str());
    }
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

inline void apply_sweep_parameter(scenario::Scenario& sc, const std::string& param, double v) {
    if (param == "b_fil")
        sc.dsp.b_fil = v;
    else if (param == "decision_offset")
        sc.dsp.decision_offset_delta = v;
    else if (param == "cmrr" || param == "cmrr_pi")
        sc.rx.cmrr_pi_db = v;
    else if (param == "cmrr_q")
        sc.rx.cmrr_q_db = v;
    else if (param == "delta_sop")
        sc.channel.delta_sop = v;
    else if (param == "length")
        sc.channel.length_km = v;
    else if (param == "channels")
        sc.channel.classical_channels = static_cast<unsigned>(v);
    else
        throw ConfigError("sweep: unknown parameter '" + param + "'");
}

struct SweepRow {
    double value = 0.0;
    std::uint64_t seed = 0;
    RunResult result;
};

inline std::vector<SweepRow> sweep(const scenario::Scenario& base, const std::string& param,
                                   const std::vector<double>& values, unsigned workers = 1) {
    if (values.empty()) throw ConfigError("sweep: no values given");
    {
        scenario::Scenario probe = base;
        apply_sweep_parameter(probe, param, values.front()); // fail-fast on name
    }
    std::vector<SweepRow> rows(values.size() * base.seeds.size());
    parallel_for(rows.size(), workers, [&](std::size_t idx) {
        const std::size_t vi = idx / base.seeds.size();
        const std::size_t si = idx % base.seeds.size();
        scenario::Scenario sc = base;
        apply_sweep_parameter(sc, param, values[vi]);
        rows[idx] = SweepRow{values[vi], sc.seeds[si], run_single(sc, sc.seeds[si])};
    });
    return rows;
}

inline std::string sweep_csv(const std::string& param, const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "parameter,value,seed,zeta,zeta_trusted,k_untrusted,k_trusted,snr,t_hat\n";
    os.precision(12);
    for (const auto& r : rows)
        os << param << ',' << r.value << ',' << r.seed << ',' << r.result.estimate.zeta << ','
           << r.result.estimate.zeta_T << ',' << r.result.keyrate.k_untrusted << ','
           << r.result.keyrate.k_trusted << ',' << r.result.estimate.snr << ','
           << r.result.estimate.t_hat << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Reference-table regression and planner reports
// ---------------------------------------------------------------------------

struct ReferenceColumn {
    std::string label;
    double symbol_rate;
    double zeta;
    double zeta_trusted;
    double k_untrusted_ref;
    double k_trusted_ref;
};

/// Reported reception-performance columns for the 13.2 km link (noise in
/// SNU, rates in bits/s) used for the key-rate regression.
inline const std::vector<ReferenceColumn>& reference_columns() {
    static const std::vector<ReferenceColumn> cols{
        {"gauss-250-carved-dark", 250e6, 0.01446, 0.00092, 12.0e6, 43.2e6},
        {"gauss-250-carved-lit", 250e6, 0.01683, 0.00329, 9.59e6, 38.9e6},
        {"nyquist-500-dark", 500e6, 0.01721, 0.00115, 18.4e6, 85.3e6},
        {"nyquist-500-lit", 500e6, 0.02120, 0.00514, 10.7e6, 72.0e6},
    };
    return cols;
}

/// Detection-efficiency nuisance fitted once against the reference key rates
/// (v_el always comes from zeta - zeta_trusted).
inline constexpr double kFittedDetectionEfficiency = 0.435;

inline key::KeyRateReport reference_keyrate(const ReferenceColumn& col,
                                            double beta = 0.95,
                                            double eta = kFittedDetectionEfficiency) {
    key::SecurityParams p;
    p.beta = beta;
    p.v_mod = 8.0;
    p.transmission = 0.5016;
    p.zeta = col.zeta;
    p.zeta_trusted = col.zeta_trusted;
    p.v_el = col.zeta - col.zeta_trusted;
    p.symbol_rate = col.symbol_rate;
    p.detection_efficiency = eta;
    return key::secure_key_rate(p);
}

inline std::string table3_csv() {
    std::ostringstream os;
    os << "column,symbol_rate,zeta,zeta_trusted,i_ab,chi_untrusted,chi_trusted,"
          "k_untrusted,k_trusted,k_untrusted_ref,k_trusted_ref\n";
    os.precision(10);
    for (const auto& col : reference_columns()) {
        auto r = reference_keyrate(col);
        os << col.label << ',' << col.symbol_rate << ',' << col.zeta << ',' << col.zeta_trusted
           << ',' << r.i_ab << ',' << r.chi_untrusted << ',' << r.chi_trusted << ','
           << r.k_untrusted << ',' << r.k_trusted << ',' << col.k_untrusted_ref << ','
           << col.k_trusted_ref << '\n';
    }
    return os.str();
}

inline json plan_report(const scenario::Scenario& sc) {
    const double macro_rate = sc.radio.macro_site_rate();
    const double macro_cons = plan::site_consumption(macro_rate, sc.policy);
    const double small_cons = plan::site_consumption(sc.radio.rate_per_small_cell, sc.policy);
    const double demand = plan::aggregate_demand(sc.radio, sc.policy);
    auto buffer = plan::buffer_dynamics(macro_cons, sc.policy, sc.radio.total_sites());
    return json{{"macro_cells", sc.radio.macro_cells},
                {"small_cells", sc.radio.small_cells()},
                {"total_sites", sc.radio.total_sites()},
                {"macro_site_rate_bps", macro_rate},
                {"macro_site_key_consumption_bps", macro_cons},
                {"small_cell_key_consumption_bps", small_cons},
                {"aggregate_key_demand_bps", demand},
                {"buffer", json{{"erosion_fraction", buffer.erosion_fraction},
                                {"cycle_time_s", buffer.cycle_time_s},
                                {"slot_time_s", buffer.slot_time_s},
                                {"feasible", buffer.feasible},
                                {"deficit_bps", buffer.deficit}}}};
}

inline std::string plan_table(const json& p) {
    std::ostringstream os;
    os << "QKD key dimensioning\n";
    os << "  macro cells               " << p["macro_cells"].get<unsigned>() << "\n";
    os << "  small cells               " << p["small_cells"].get<unsigned>() << "\n";
    os << "  macro consumption [b/s]   " << p["macro_site_key_consumption_bps"].get<double>()
       << "\n";
    os << "  small consumption [b/s]   " << p["small_cell_key_consumption_bps"].get<double>()
       << "\n";
    os << "  aggregate demand  [Mb/s]  "
       << p["aggregate_key_demand_bps"].get<double>() / 1e6 << "\n";
    os << "  buffer erosion            " << p["buffer"]["erosion_fraction"].get<double>() * 100.0
       << " %\n";
    os << "  cycle time [s]            " << p["buffer"]["cycle_time_s"].get<double>() << "\n";
    os << "  feasible                  " << (p["buffer"]["feasible"].get<bool>() ? "yes" : "no")
       << "\n";
    return os.str();
}

} // namespace cvqkd::pipeline
