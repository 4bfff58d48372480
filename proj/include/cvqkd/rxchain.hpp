#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "cvqkd/errors.hpp"
#include "cvqkd/filters.hpp"
#include "cvqkd/waveform.hpp"

namespace cvqkd::rx {

enum class CalibrationMode { Signal, ShotNoiseOnly, ElectronicOnly };

/// Direct-detection load of the classical WDM comb as seen by a balanced
/// receiver: a harmonic line spectrum plus total power bookkeeping. Tone
/// frequencies are multiples of `fundamental`; per-tone power is
/// total_dd_power/n_tones.
struct ClassicalLoad {
    unsigned channels = 0;
    double dd_power_per_channel = 0.0; // capture-level units before CMRR
    double fundamental = 500e6;        // Hz
    unsigned n_tones = 4;

    double total_power() const {
        return static_cast<double>(channels) * dd_power_per_channel;
    }
};

struct RxConfig {
    double b_rx_quantum = 315e6;  // -3 dB of the quantum-plane response, Hz
    double b_rx_pilot = 10e9;     // pilot-plane response, Hz
    double cmrr_q_db = 44.8;
    double cmrr_pi_db = 28.0;
    double responsivity_q = 0.85;  // A/W; informational, the SNU calibration
    double responsivity_pi = 0.8;  // absorbs any common analog gain
    double elec_snu = 0.0129;     // v_el: electronic noise per quadrature, SNU
    double elec_broadband_fraction = 0.0925; // part of v_el wider than rho(f)
    double adc_rate = 20e9;
    unsigned adc_bits = 10;
    double adc_fullscale_sigma = 8.0;
    unsigned rho_order = 2;       // declared model order of rho(f)
    bool shot_noise_on = true;
    bool lo_on = true;
    bool signal_on = true;

    void validate() const {
        if (!(b_rx_quantum > 0.0 && b_rx_quantum < b_rx_pilot && b_rx_pilot <= adc_rate / 2.0))
            throw ConfigError("rx: need 0 < B_RX_quantum < B_RX_pilot <= adc_rate/2");
        if (elec_snu < 0.0) throw ConfigError("rx: v_el must be >= 0");
        if (cmrr_q_db < 0.0 || cmrr_pi_db < 0.0) throw ConfigError("rx: CMRR must be >= 0 dB");
        if (adc_bits != 0 && (adc_bits < 2 || adc_bits > 24))
            throw ConfigError("rx: adc_bits out of range (0 disables quantization)");
        if (elec_broadband_fraction < 0.0 || elec_broadband_fraction > 1.0)
            throw ConfigError("rx: elec_broadband_fraction must be in [0,1]");
    }

    CalibrationMode mode() const {
        if (!lo_on) return CalibrationMode::ElectronicOnly;
        if (!signal_on) return CalibrationMode::ShotNoiseOnly;
        return CalibrationMode::Signal;
    }
};

/// Opto-electronic magnitude response of a detection plane: Butterworth-type
/// |rho(f)| = (1 + (f/B)^(2n))^(-1/2) with -3 dB at B. Order 0 models an
/// ideal flat front end.
inline double rho_response(double f, double b3db, unsigned order) {
    if (order == 0) return 1.0;
    const double x = std::fabs(f) / b3db;
    return 1.0 / std::sqrt(1.0 + std::pow(x, 2.0 * static_cast<double>(order)));
}

/// Power scaling of direct-detection crosstalk by the balancing quality.
inline std::vector<double> leak_classical(const std::vector<double>& classical_power_spectrum,
                                          double cmrr_db) {
    if (cmrr_db < 0.0) throw ConfigError("rx: CMRR must be >= 0 dB");
    const double s = std::isinf(cmrr_db) ? 0.0 : std::pow(10.0, -cmrr_db / 10.0);
    std::vector<double> out(classical_power_spectrum.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = classical_power_spectrum[i] * s;
    return out;
}

/// Four real ADC traces (both planes, both quadratures) at adc_rate.
struct Capture {
    std::vector<double> i_te, q_te, i_tm, q_tm;
    double sample_rate = 0.0;
    CalibrationMode mode = CalibrationMode::Signal;
    bool saturated = false;

    std::size_t size() const { return i_te.size(); }

    ComplexWaveform te() const {
        std::vector<cplx> s(i_te.size());
        for (std::size_t k = 0; k < s.size(); ++k) s[k] = cplx{i_te[k], q_te[k]};
        return ComplexWaveform{std::move(s), sample_rate};
    }
    ComplexWaveform tm() const {
        std::vector<cplx> s(i_tm.size());
        for (std::size_t k = 0; k < s.size(); ++k) s[k] = cplx{i_tm[k], q_tm[k]};
        return ComplexWaveform{std::move(s), sample_rate};
    }
};

namespace detail {

/// White Gaussian trace shaped by `response`, rescaled so the output variance
/// per sample is exactly `target_var` in expectation.
inline ComplexWaveform shaped_noise(std::size_t n, double fs, double target_var,
                                    const std::function<double(double)>& response,
                                    std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<cplx> buf(n);
    for (auto& v : buf) v = cplx{gauss(rng), gauss(rng)};
    ComplexWaveform w{std::move(buf), fs};
    w = apply_response(w, response);
    // normalize the response power gain over the transform grid
    const std::size_t m = fft::next_pow2(n);
    double gain = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double h = response(fft::bin_frequency(k, m, fs));
        gain += h * h;
    }
    gain /= static_cast<double>(m);
    if (gain <= 0.0) throw PipelineError("rx", "noise shaping response has zero power");
    w.scale(std::sqrt(target_var / gain));
    return w;
}

inline void quantize(std::vector<double>& x, unsigned bits, double fullscale_sigma,
                     bool& saturated) {
    double rms = 0.0;
    for (double v : x) rms += v * v;
    rms = std::sqrt(rms / static_cast<double>(x.size()));
    if (rms <= 0.0) return;
    const double fs = fullscale_sigma * rms;
    const double lsb = 2.0 * fs / static_cast<double>(1ull << bits);
    for (double& v : x) {
        if (std::fabs(v) > fs) {
            saturated = true;
            v = std::copysign(fs, v);
        }
        v = std::nearbyint(v / lsb) * lsb;
    }
}

struct PlaneParams {
    double b3db;
    double cmrr_db;
    std::uint64_t salt;
};

inline void detect_plane(const ComplexWaveform& field, const RxConfig& cfg,
                         const PlaneParams& pp, const ClassicalLoad& load,
                         std::uint64_t seed, std::vector<double>& i_out,
                         std::vector<double>& q_out, bool& saturated) {
    const std::size_t n = field.size();
    const double fs = field.sample_rate;
    const auto rho = [&](double f) { return rho_response(f, pp.b3db, cfg.rho_order); };

    ComplexWaveform analog{std::vector<cplx>(n, cplx{0.0, 0.0}), fs};
    if (cfg.lo_on && cfg.signal_on) {
        analog = apply_response(field, rho);
    }

    std::mt19937_64 rng(seed ^ pp.salt);
    if (cfg.lo_on && cfg.shot_noise_on) {
        ComplexWaveform shot = detail::shaped_noise(n, fs, 1.0, rho, rng);
        for (std::size_t k = 0; k < n; ++k) analog.samples[k] += shot.samples[k];
    }
    if (cfg.elec_snu > 0.0) {
        const double v_in = cfg.elec_snu * (1.0 - cfg.elec_broadband_fraction);
        const double v_bb = cfg.elec_snu * cfg.elec_broadband_fraction;
        if (v_in > 0.0) {
            ComplexWaveform e = detail::shaped_noise(n, fs, v_in, rho, rng);
            for (std::size_t k = 0; k < n; ++k) analog.samples[k] += e.samples[k];
        }
        if (v_bb > 0.0) {
            std::normal_distribution<double> gauss(0.0, std::sqrt(v_bb));
            for (std::size_t k = 0; k < n; ++k)
                analog.samples[k] += cplx{gauss(rng), gauss(rng)};
        }
    }

    // direct-detection harmonics of the classical comb at -CMRR, shaped by rho
    if (cfg.lo_on && load.channels > 0 && load.dd_power_per_channel > 0.0) {
        const double cm = std::pow(10.0, -pp.cmrr_db / 10.0);
        const double per_tone = load.total_power() * cm / static_cast<double>(load.n_tones);
        for (unsigned t = 1; t <= load.n_tones; ++t) {
            const double f = load.fundamental * t;
            if (f >= fs / 2.0) break;
            const double amp = std::sqrt(2.0 * per_tone) * rho(f);
            const double ph = 2.399963229728653 * t; // deterministic spread
            for (std::size_t k = 0; k < n; ++k) {
                const double arg = 2.0 * std::numbers::pi * f * static_cast<double>(k) / fs + ph;
                const double c = amp * std::cos(arg);
                analog.samples[k] += cplx{c, c};
            }
        }
    }

    if (std::fabs(fs - cfg.adc_rate) > 1e-6 * cfg.adc_rate)
        analog = resample(analog, cfg.adc_rate);

    i_out.resize(analog.size());
    q_out.resize(analog.size());
    for (std::size_t k = 0; k < analog.size(); ++k) {
        i_out[k] = analog.samples[k].real();
        q_out[k] = analog.samples[k].imag();
    }
    if (cfg.adc_bits > 0) {
        quantize(i_out, cfg.adc_bits, cfg.adc_fullscale_sigma, saturated);
        quantize(q_out, cfg.adc_bits, cfg.adc_fullscale_sigma, saturated);
    }
}

} // namespace detail

/// PDM pi/4-hybrid intradyne front end. Quadratures of each plane pass the
/// plane's rho(f), pick up unit shot noise and v_el electronic noise per
/// quadrature (capture-level SNU), plus classical direct-detection leakage at
/// -CMRR, then are quantized and delivered at adc_rate. The intrinsic
/// heterodyne split is folded into the SNU convention.
inline Capture detect(const DualPolFrame& frame, const RxConfig& cfg, std::uint64_t seed,
                      const ClassicalLoad& load = ClassicalLoad{}) {
    cfg.validate();
    frame.validate();
    if (frame.te.sample_rate < 2.0 * cfg.b_rx_pilot)
        throw ConfigError("rx: frame sample rate must be >= 2*B_RX_pilot");

    Capture cap;
    cap.sample_rate = cfg.adc_rate;
    cap.mode = cfg.mode();

    detail::PlaneParams q{cfg.b_rx_quantum, cfg.cmrr_q_db, 0x7e46'1a2b'0000'0001ull};
    detail::PlaneParams p{cfg.b_rx_pilot, cfg.cmrr_pi_db, 0x11d3'99aa'0000'0002ull};
    detail::detect_plane(frame.te, cfg, q, load, seed, cap.i_te, cap.q_te, cap.saturated);
    detail::detect_plane(frame.tm, cfg, p, load, seed, cap.i_tm, cap.q_tm, cap.saturated);
    return cap;
}

// ---------------------------------------------------------------------------
// Capture container: "CVQ4" | version u32 | sample_rate f64 | mode u32 |
// count u64 | four f64 blocks (i_te, q_te, i_tm, q_tm).
// ---------------------------------------------------------------------------

namespace io {

inline void write_capture(std::ostream& os, const Capture& c) {
    cvqkd::io::detail::put_magic(os, "CVQ4");
    cvqkd::io::detail::put<std::uint32_t>(os, cvqkd::io::kContainerVersion);
    cvqkd::io::detail::put<double>(os, c.sample_rate);
    cvqkd::io::detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.mode));
    cvqkd::io::detail::put<std::uint64_t>(os, c.size());
    for (const auto* v : {&c.i_te, &c.q_te, &c.i_tm, &c.q_tm})
        for (double x : *v) cvqkd::io::detail::put<double>(os, x);
}

inline Capture read_capture(std::istream& is) {
    cvqkd::io::detail::expect_magic(is, "CVQ4", "CVQ4 capture");
    const auto version = cvqkd::io::detail::get<std::uint32_t>(is);
    if (version != cvqkd::io::kContainerVersion)
        throw PipelineError("io", "unsupported CVQ4 version");
    Capture c;
    c.sample_rate = cvqkd::io::detail::get<double>(is);
    c.mode = static_cast<CalibrationMode>(cvqkd::io::detail::get<std::uint32_t>(is));
    const auto count = cvqkd::io::detail::get<std::uint64_t>(is);
    for (auto* v : {&c.i_te, &c.q_te, &c.i_tm, &c.q_tm}) {
        v->resize(count);
        for (double& x : *v) x = cvqkd::io::detail::get<double>(is);
    }
    return c;
}

} // namespace io
} // namespace cvqkd::rx
