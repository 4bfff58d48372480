#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "cvqkd/rxchain.hpp"
#include "cvqkd/spectrum.hpp"

using namespace cvqkd;
using namespace cvqkd::rx;

namespace {

DualPolFrame silent_frame(std::size_t n, double fs) {
    DualPolFrame f;
    f.te = ComplexWaveform{std::vector<cplx>(n, cplx{0.0, 0.0}), fs};
    f.tm = f.te;
    return f;
}

double variance(const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size());
}

RxConfig fast_cfg() {
    RxConfig cfg;
    cfg.adc_rate = 4e9;
    cfg.b_rx_pilot = 2e9;
    cfg.b_rx_quantum = 315e6;
    cfg.elec_snu = 0.1;
    cfg.adc_bits = 0; // quantization exercised separately
    return cfg;
}

} // namespace

TEST_CASE("shot-noise-only capture has unit variance plus v_el", "[rxchain]") {
    RxConfig cfg = fast_cfg();
    cfg.signal_on = false;
    auto cap = detect(silent_frame(1 << 17, 4e9), cfg, 42);
    CHECK(cap.mode == CalibrationMode::ShotNoiseOnly);
    CHECK(variance(cap.i_te) == Catch::Approx(1.0 + cfg.elec_snu).epsilon(0.02));
    CHECK(variance(cap.q_te) == Catch::Approx(1.0 + cfg.elec_snu).epsilon(0.02));
}

TEST_CASE("electronic-only capture has variance v_el", "[rxchain]") {
    RxConfig cfg = fast_cfg();
    cfg.lo_on = false;
    auto cap = detect(silent_frame(1 << 17, 4e9), cfg, 7);
    CHECK(cap.mode == CalibrationMode::ElectronicOnly);
    CHECK(variance(cap.i_te) == Catch::Approx(cfg.elec_snu).epsilon(0.02));
}

TEST_CASE("quantum-plane response attenuates the pilot frequency by ~20 dB", "[rxchain]") {
    // second-order roll-off at 315 MHz evaluated at 1 GHz
    const double att = rho_response(1e9, 315e6, 2);
    const double att_db = 20.0 * std::log10(att);
    CHECK(att_db == Catch::Approx(-20.0).margin(1.0));

    // and the full detector applies it to an in-frame tone
    RxConfig cfg = fast_cfg();
    cfg.shot_noise_on = false;
    cfg.elec_snu = 0.0;
    const std::size_t n = 1 << 14;
    auto f = silent_frame(n, 4e9);
    for (std::size_t k = 0; k < n; ++k)
        f.te.samples[k] = std::polar(1.0, 2.0 * std::numbers::pi * 1e9 * static_cast<double>(k) / 4e9);
    auto cap = detect(f, cfg, 1);
    const double p = variance(cap.i_te) + variance(cap.q_te);
    CHECK(10.0 * std::log10(p / 1.0) == Catch::Approx(att_db).margin(0.5));
}

TEST_CASE("shot noise is independent between quadratures and planes", "[rxchain]") {
    RxConfig cfg = fast_cfg();
    cfg.signal_on = false;
    cfg.elec_snu = 0.0;
    auto cap = detect(silent_frame(1 << 16, 4e9), cfg, 3);
    auto cross = [](const std::vector<double>& a, const std::vector<double>& b) {
        double acc = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
        return acc / static_cast<double>(a.size());
    };
    const double bound = 3.0 / std::sqrt(static_cast<double>(cap.size()));
    CHECK(std::fabs(cross(cap.i_te, cap.q_te)) < bound);
    CHECK(std::fabs(cross(cap.i_te, cap.i_tm)) < bound);
    CHECK(std::fabs(cross(cap.q_te, cap.q_tm)) < bound);
}

TEST_CASE("detection is linear in the field while shot noise stays fixed", "[rxchain]") {
    RxConfig cfg = fast_cfg();
    cfg.elec_snu = 0.0;
    const std::size_t n = 1 << 15;
    auto f = silent_frame(n, 4e9);
    for (std::size_t k = 0; k < n; ++k)
        f.te.samples[k] = std::polar(1.0, 2.0 * std::numbers::pi * 50e6 * static_cast<double>(k) / 4e9);

    cfg.shot_noise_on = false;
    auto c1 = detect(f, cfg, 5);
    auto f2 = f;
    f2.te.scale(2.0);
    auto c2 = detect(f2, cfg, 5);
    for (std::size_t k = 0; k < 32; ++k)
        CHECK(c2.i_te[k] == Catch::Approx(2.0 * c1.i_te[k]).margin(1e-9));

    cfg.shot_noise_on = true;
    cfg.signal_on = false;
    auto n1 = detect(f, cfg, 6);
    CHECK(variance(n1.i_te) == Catch::Approx(1.0).epsilon(0.03));
}

TEST_CASE("classical leakage scales as 10^(-CMRR/10)", "[rxchain]") {
    std::vector<double> spec{1.0, 0.5, 0.25};
    auto none = leak_classical(spec, std::numeric_limits<double>::infinity());
    for (double v : none) CHECK(v == 0.0);

    // log-log slope of leaked power vs CMRR
    ClassicalLoad load;
    load.channels = 11;
    load.dd_power_per_channel = 2.0;
    load.fundamental = 400e6;
    load.n_tones = 3;

    RxConfig cfg = fast_cfg();
    cfg.shot_noise_on = false;
    cfg.elec_snu = 0.0;
    const std::size_t n = 1 << 14;

    std::vector<double> cmrrs, leaks;
    for (double cmrr = 5.0; cmrr <= 45.0; cmrr += 10.0) {
        cfg.cmrr_pi_db = cmrr;
        auto cap = detect(silent_frame(n, 4e9), cfg, 9, load);
        leaks.push_back(std::log10(variance(cap.i_tm)));
        cmrrs.push_back(cmrr / 10.0);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(cmrrs.size());
    for (std::size_t k = 0; k < cmrrs.size(); ++k) {
        sx += cmrrs[k]; sy += leaks[k]; sxx += cmrrs[k] * cmrrs[k]; sxy += cmrrs[k] * leaks[k];
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    CHECK(slope == Catch::Approx(-1.0).margin(0.02));
}

TEST_CASE("adc saturation is flagged", "[rxchain]") {
    RxConfig cfg = fast_cfg();
    cfg.adc_bits = 10;
    cfg.adc_fullscale_sigma = 2.0; // tight full scale to force clipping
    cfg.signal_on = false;
    auto cap = detect(silent_frame(1 << 14, 4e9), cfg, 11);
    CHECK(cap.saturated);

    cfg.adc_fullscale_sigma = 12.0;
    auto clean = detect(silent_frame(1 << 14, 4e9), cfg, 11);
    CHECK_FALSE(clean.saturated);
}

TEST_CASE("10-bit quantization noise is far below 0.1% of shot", "[rxchain]") {
    RxConfig cfg = fast_cfg();
    cfg.signal_on = false;
    cfg.elec_snu = 0.0;
    auto raw = detect(silent_frame(1 << 15, 4e9), cfg, 13);
    cfg.adc_bits = 10;
    auto quant = detect(silent_frame(1 << 15, 4e9), cfg, 13);
    double err = 0.0;
    for (std::size_t k = 0; k < raw.size(); ++k) {
        const double d = raw.i_te[k] - quant.i_te[k];
        err += d * d;
    }
    err /= static_cast<double>(raw.size());
    CHECK(err < 1e-3 * 0.1); // quantization variance well under 0.1% SNU
}

TEST_CASE("capture container round-trips", "[rxchain]") {
    RxConfig cfg = fast_cfg();
    cfg.signal_on = false;
    auto cap = detect(silent_frame(512, 4e9), cfg, 21);
    std::stringstream ss;
    rx::io::write_capture(ss, cap);
    auto back = rx::io::read_capture(ss);
    CHECK(back.sample_rate == cap.sample_rate);
    CHECK(back.mode == cap.mode);
    CHECK(back.i_te == cap.i_te);
    CHECK(back.q_tm == cap.q_tm);
}

TEST_CASE("rx config invariants", "[rxchain]") {
    RxConfig cfg;
    cfg.b_rx_quantum = 11e9; // above pilot bandwidth
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    RxConfig cfg2;
    cfg2.elec_snu = -0.1;
    CHECK_THROWS_AS(cfg2.validate(), ConfigError);
    RxConfig ok;
    CHECK_NOTHROW(ok.validate());
    CHECK(ok.b_rx_quantum == 315e6);
    CHECK(ok.cmrr_q_db == 44.8);
    CHECK(ok.adc_rate == 20e9);
}
