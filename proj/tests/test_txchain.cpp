#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "cvqkd/spectrum.hpp"
#include "cvqkd/txchain.hpp"

using namespace cvqkd;
using namespace cvqkd::tx;

namespace {

struct PilotTones {
    double carrier_dbc; // power at DC relative to the +Omega line
    double mirror_dbc;  // power at -Omega relative to the +Omega line
};

PilotTones pilot_tones(const TxConfig& cfg, double fs, double duration) {
    auto w = synthesize_pilot(cfg, duration, fs);
    auto psd = spectrum::power_spectrum(w);
    const double half = 2.0 / duration;
    const double p_plus = spectrum::band_power(psd, fs, cfg.pilot_freq, half);
    const double p_car = spectrum::band_power(psd, fs, 0.0, half);
    const double p_minus = spectrum::band_power(psd, fs, -cfg.pilot_freq, half);
    return {10.0 * std::log10(p_car / p_plus), 10.0 * std::log10(p_minus / p_plus)};
}

// integer pilot cycles and power-of-two samples keep the bins leak-free
constexpr double kFs = 8e9;
constexpr double kDur = 8192.0 / kFs;

} // namespace

TEST_CASE("four-state symbols carry V_mod = 2<n> split over the quadratures", "[txchain]") {
    TxConfig cfg;
    cfg.mean_photons = 4.0;
    auto syms = generate_quantum_symbols(cfg, 20000, 5);
    double vi = 0.0, vq = 0.0, m2 = 0.0;
    cplx mean{0.0, 0.0};
    for (const auto& s : syms) {
        vi += s.alice_symbol.real() * s.alice_symbol.real();
        vq += s.alice_symbol.imag() * s.alice_symbol.imag();
        m2 += std::norm(s.alice_symbol);
        mean += s.alice_symbol;
    }
    const double n = static_cast<double>(syms.size());
    vi /= n; vq /= n; m2 /= n; mean /= n;
    CHECK(m2 == Catch::Approx(8.0).epsilon(1e-9));          // |a|^2 = V_mod exactly (QPSK)
    CHECK(vi == Catch::Approx(4.0).epsilon(0.05));          // V_mod/2 per quadrature
    CHECK(vq == Catch::Approx(4.0).epsilon(0.05));
    CHECK(std::norm(mean) < 1e-3 * 8.0);                    // carrier-less
}

TEST_CASE("four-state generator rejects non-positive photon numbers", "[txchain]") {
    TxConfig cfg;
    cfg.mean_photons = 0.0;
    CHECK_THROWS_AS(generate_quantum_symbols(cfg, 10, 1), ConfigError);
}

TEST_CASE("prbs-7 mapping repeats after 127 symbols", "[txchain]") {
    TxConfig cfg;
    auto syms = generate_quantum_symbols(cfg, 254, 9);
    for (std::size_t k = 0; k < 127; ++k)
        CHECK(syms[k].alice_symbol == syms[k + 127].alice_symbol);
    // all four constellation points appear
    std::set<std::pair<int, int>> pts;
    for (std::size_t k = 0; k < 127; ++k)
        pts.insert({syms[k].alice_symbol.real() > 0 ? 1 : -1,
                    syms[k].alice_symbol.imag() > 0 ? 1 : -1});
    CHECK(pts.size() == 4);
}

TEST_CASE("gaussian modulation has matching variance", "[txchain]") {
    TxConfig cfg;
    cfg.modulation = Modulation::Gaussian;
    auto syms = generate_quantum_symbols(cfg, 40000, 17);
    double m2 = 0.0;
    for (const auto& s : syms) m2 += std::norm(s.alice_symbol);
    m2 /= static_cast<double>(syms.size());
    CHECK(m2 == Catch::Approx(8.0).epsilon(0.05));
}

TEST_CASE("determinism: same seed, same symbols", "[txchain]") {
    TxConfig cfg;
    auto a = generate_quantum_symbols(cfg, 500, 123);
    auto b = generate_quantum_symbols(cfg, 500, 123);
    for (std::size_t k = 0; k < a.size(); ++k)
        CHECK(a[k].alice_symbol == b[k].alice_symbol);
}

TEST_CASE("nyquist shaping reproduces symbols exactly at decision instants", "[txchain]") {
    TxConfig cfg;
    cfg.symbol_rate = 500e6;
    cfg.samples_per_symbol = 8;
    cfg.pulse_shape = FilterSpec{FilterKind::RaisedCosine, 500e6, 0.5, 0.0};
    auto syms = generate_quantum_symbols(cfg, 256, 3);
    auto w = shape_and_carve(syms, cfg);
    REQUIRE(w.size() == 256 * 8);
    CHECK(w.sample_rate == Catch::Approx(4e9));
    for (const auto& s : syms)
        CHECK(std::abs(w.samples[s.index * 8] - s.alice_symbol) < 1e-9);
}

TEST_CASE("single shaped pulse crosses zero at neighbouring symbol instants", "[txchain]") {
    TxConfig cfg;
    cfg.symbol_rate = 250e6;
    cfg.samples_per_symbol = 16;
    cfg.pulse_shape = FilterSpec{FilterKind::RaisedCosine, 250e6, 0.5, 0.0};
    std::vector<SymbolRecord> syms(64);
    for (std::size_t k = 0; k < syms.size(); ++k) syms[k] = {k, cplx{0.0, 0.0}};
    syms[32] = {32, cplx{1.0, 0.0}};
    auto w = shape_and_carve(syms, cfg);
    for (std::size_t k = 0; k < syms.size(); ++k) {
        if (k == 32) continue;
        CHECK(std::abs(w.samples[16 * k]) < 1e-9);
    }
}

TEST_CASE("shaped spectrum follows the raised-cosine response", "[txchain]") {
    TxConfig cfg;
    cfg.symbol_rate = 500e6;
    cfg.samples_per_symbol = 8;
    cfg.pulse_shape = FilterSpec{FilterKind::RaisedCosine, 500e6, 0.5, 0.0};
    auto syms = generate_quantum_symbols(cfg, 2048, 21);

    auto shaped = shape_and_carve(syms, cfg);
    TxConfig flat = cfg;
    // reference: same symbols through an all-pass (brickwall at Nyquist)
    flat.pulse_shape = FilterSpec{FilterKind::BrickwallLowPass, 0.0, 0.5, 2.1e9};
    auto unshaped = shape_and_carve(syms, flat);

    auto ps = spectrum::power_spectrum(shaped);
    auto pu = spectrum::power_spectrum(unshaped);
    const double fs = shaped.sample_rate;
    const std::size_t m = ps.size();
    // reference gain from the flat passband
    double flat = 0.0;
    std::size_t nflat = 0;
    for (std::size_t k = 0; k < m; ++k) {
        const double f = fft::bin_frequency(k, m, fs);
        if (std::fabs(f) < 100e6) {
            flat += ps[k] / pu[k];
            ++nflat;
        }
    }
    flat /= static_cast<double>(nflat);
    // roll-off band: normalized spectral ratio equals |H_RC|^2 within 0.5 dB
    for (std::size_t k = 0; k < m; ++k) {
        const double f = fft::bin_frequency(k, m, fs);
        if (std::fabs(f) < 150e6 || std::fabs(f) > 360e6) continue;
        const double h2 = std::pow(raised_cosine_response(f, 500e6, 0.5), 2);
        const double ratio = ps[k] / pu[k] / flat;
        CHECK(10.0 * std::fabs(std::log10(ratio / h2)) < 0.5);
    }
}

TEST_CASE("carving nulls the symbol boundaries", "[txchain]") {
    TxConfig cfg;
    cfg.symbol_rate = 250e6;
    cfg.samples_per_symbol = 16;
    cfg.carving_enabled = true;
    cfg.pulse_shape = FilterSpec{FilterKind::BrickwallLowPass, 0.0, 0.5, 1.9e9};
    std::vector<SymbolRecord> syms(128);
    for (std::size_t k = 0; k < syms.size(); ++k)
        syms[k] = {k, cplx{2.0, 0.0}}; // constant stream
    auto w = shape_and_carve(syms, cfg);
    double peak = 0.0;
    for (const auto& v : w.samples) peak = std::max(peak, std::abs(v));
    // boundary instants sit at half-symbol offsets
    for (std::size_t k = 1; k + 1 < syms.size(); ++k)
        CHECK(std::abs(w.samples[16 * k + 8]) <= 0.01 * peak);
}

TEST_CASE("aliasing pulse shapes are rejected", "[txchain]") {
    TxConfig cfg;
    cfg.symbol_rate = 500e6;
    cfg.samples_per_symbol = 2; // Nyquist = 500 MHz < (1+alpha)R/2 would alias
    cfg.pulse_shape = FilterSpec{FilterKind::RaisedCosine, 500e6, 0.5, 0.0};
    auto syms = generate_quantum_symbols(cfg, 16, 1);
    CHECK_THROWS_AS(shape_and_carve(syms, cfg), ConfigError);
}

TEST_CASE("ideal pilot is a single sideband line", "[txchain]") {
    TxConfig cfg;
    cfg.pilot_freq = 1e9;
    auto t = pilot_tones(cfg, kFs, kDur);
    CHECK(t.carrier_dbc <= -60.0);
    CHECK(t.mirror_dbc <= -60.0);
}

TEST_CASE("bias errors tuned by bisection reproduce 23 dB carrier and 14 dB sideband suppression",
          "[txchain][pilot]") {
    TxConfig cfg;
    cfg.pilot_freq = 1e9;

    // mirror sideband depends only on the quadrature phase error: solve first
    double lo = 0.0, hi = 0.9;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        TxConfig probe = cfg;
        probe.phase_bias_error = mid;
        if (pilot_tones(probe, kFs, kDur).mirror_dbc < -14.0)
            lo = mid;
        else
            hi = mid;
    }
    cfg.phase_bias_error = 0.5 * (lo + hi);

    // carrier power grows monotonically with |bias error|; bisect to -23 dBc
    lo = 0.0; hi = 0.4;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        TxConfig probe = cfg;
        probe.iq_bias_error = mid;
        if (pilot_tones(probe, kFs, kDur).carrier_dbc < -23.0)
            lo = mid;
        else
            hi = mid;
    }
    cfg.iq_bias_error = 0.5 * (lo + hi);

    const auto t = pilot_tones(cfg, kFs, kDur);
    CHECK(t.carrier_dbc == Catch::Approx(-23.0).margin(0.2));
    CHECK(t.mirror_dbc == Catch::Approx(-14.0).margin(0.2));
}

TEST_CASE("pilot line power scales quadratically with small drive", "[txchain]") {
    TxConfig cfg;
    cfg.pilot_freq = 1e9;
    std::vector<double> logs_a, logs_p;
    for (double a = 0.002; a <= 0.2 + 1e-12; a *= std::sqrt(10.0)) {
        cfg.pilot_drive = a;
        auto w = synthesize_pilot(cfg, kDur, kFs);
        auto psd = spectrum::power_spectrum(w);
        const double p = spectrum::band_power(psd, kFs, cfg.pilot_freq, 2.0 / kDur);
        logs_a.push_back(std::log10(a));
        logs_p.push_back(std::log10(p));
    }
    // least-squares slope over two decades
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(logs_a.size());
    for (std::size_t k = 0; k < logs_a.size(); ++k) {
        sx += logs_a[k]; sy += logs_p[k];
        sxx += logs_a[k] * logs_a[k]; sxy += logs_a[k] * logs_p[k];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope == Catch::Approx(2.0).margin(0.01));
}

TEST_CASE("pilot spectral purity degrades monotonically with bias error", "[txchain]") {
    TxConfig cfg;
    cfg.pilot_freq = 1e9;
    double prev = -1e9;
    for (double e : {0.01, 0.02, 0.05, 0.1, 0.2}) {
        cfg.iq_bias_error = e;
        const double car = pilot_tones(cfg, kFs, kDur).carrier_dbc;
        CHECK(car > prev);
        prev = car;
    }
}

TEST_CASE("pilot drive beyond 2 V_pi warns but is not clipped", "[txchain]") {
    TxConfig cfg;
    cfg.pilot_drive = 2.5;
    bool warn = false;
    auto w = synthesize_pilot(cfg, kDur, kFs, &warn);
    CHECK(warn);
    CHECK(w.energy() > 0.0);
}

TEST_CASE("pilot sampling rate precondition", "[txchain]") {
    TxConfig cfg;
    CHECK_THROWS_AS(synthesize_pilot(cfg, 1e-6, 2.0e9), ConfigError);
}

TEST_CASE("frame leveling hits the configured pilot-to-quantum ratio", "[txchain]") {
    TxConfig cfg;
    cfg.samples_per_symbol = 32; // rate 8 GHz > 2*(Omega+Rq)
    auto syms = generate_quantum_symbols(cfg, 1024, 5);
    auto q = shape_and_carve(syms, cfg);
    auto p = synthesize_pilot(cfg, q.duration(), q.sample_rate);
    p.samples.resize(q.size());
    auto frame = assemble_frame(q, p, cfg);
    CHECK(frame.tm.mean_power() / frame.te.mean_power() == Catch::Approx(100.0).epsilon(0.01));
}

TEST_CASE("polarization extinction leaks the configured power fraction", "[txchain]") {
    TxConfig cfg;
    cfg.samples_per_symbol = 32;
    auto syms = generate_quantum_symbols(cfg, 1024, 6);
    auto q = shape_and_carve(syms, cfg);
    auto p = synthesize_pilot(cfg, q.duration(), q.sample_rate);
    p.samples.resize(q.size());

    SECTION("infinite PER: no leakage") {
        auto frame = assemble_frame(q, p, cfg);
        auto ref_q = q;
        CHECK(frame.te.mean_power() == Catch::Approx(ref_q.mean_power()).epsilon(1e-12));
    }
    SECTION("30 dB PER: pilot leak at P_pi/1000") {
        TxConfig lossy = cfg;
        lossy.per_tx_db = 30.0;
        auto frame = assemble_frame(q, p, lossy);
        const double p_pi = 100.0 * q.mean_power(); // leveled pilot power
        const double leak_expected = p_pi / 1000.0;
        // TE now carries quantum * (1-1e-3) + pilot * 1e-3; subtract quantum part
        const double te_power = frame.te.mean_power();
        const double quantum_part = q.mean_power() * (1.0 - 1e-3);
        CHECK(te_power - quantum_part == Catch::Approx(leak_expected).epsilon(0.05));
    }
}

TEST_CASE("launch budget violations name the broken inequality", "[txchain]") {
    TxConfig cfg;
    cfg.samples_per_symbol = 32;
    auto syms = generate_quantum_symbols(cfg, 256, 7);
    auto q = shape_and_carve(syms, cfg);
    auto p = synthesize_pilot(cfg, q.duration(), q.sample_rate);
    p.samples.resize(q.size());

    LaunchBudget budget;
    budget.eve_threshold = q.mean_power() / 2.0; // P_q >= P_Eve
    budget.saturation = budget.eve_threshold * 100.0;
    try {
        assemble_frame(q, p, cfg, budget);
        FAIL("expected budget violation");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("P_q < P_Eve") != std::string::npos);
    }
}
