#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "cvqkd/errors.hpp"
#include "cvqkd/filters.hpp"
#include "cvqkd/rxchain.hpp"
#include "cvqkd/spectrum.hpp"
#include "cvqkd/txchain.hpp"
#include "cvqkd/waveform.hpp"

namespace cvqkd::dsp {

struct DspConfig {
    double b_fil = 400e6;             // quantum-plane reception low-pass, Hz
    unsigned b_fil_order = 0;         // 0 = brickwall, n >= 1 = Butterworth-type
    double deskew = 0.0;              // known TE-vs-TM skew to remove, seconds
    unsigned phase_smoothing_window = 64; // pilot periods
    double decision_search_resolution = 5e-12; // seconds
    double decision_offset_delta = 0.0;  // applied on top of the found optimum
    double pilot_band = 100e6;          // half-width of the pilot band-pass, Hz
    bool equalize_rx_response = true;   // divide out the known rho(f) in-band
    double eq_band = 450e6;             // equalizer reach; caps the 1/rho boost
    bool matched_filter = false;        // re-apply the TX pulse shape at RX
    double guard_fraction = 0.01;       // symbols discarded at each end
    double freq_search_range = 50e6;    // +/- window around Omega, Hz

    void validate() const {
        if (b_fil <= 0.0) throw ConfigError("dsp: B_Fil must be > 0");
        if (phase_smoothing_window < 1) throw ConfigError("dsp: window must be >= 1");
        if (decision_search_resolution <= 0.0)
            throw ConfigError("dsp: decision_search_resolution must be > 0");
        if (guard_fraction < 0.0 || guard_fraction > 0.2)
            throw ConfigError("dsp: guard_fraction out of range");
    }
};

struct RecoveredSymbols {
    std::vector<cplx> bob_symbols;   // one per transmitted symbol, aligned
    std::vector<double> phase_track; // radians at each decision instant
    double est_freq_offset = 0.0;    // Hz
    double decision_offset = 0.0;    // seconds into the symbol slot
    std::size_t truth_start = 0;     // index into tx_truth of bob_symbols[0]
    bool low_confidence = false;     // any pilot window below the SNR floor
};

/// LO frequency offset from the pilot line position: spectral peak near the
/// nominal Omega, refined by log-parabolic interpolation. Fails if no peak
/// stands 10 dB above the median spectrum level.
inline double estimate_freq_offset(const rx::Capture& capture, double pilot_freq,
                                   double search_range = 50e6) {
    const ComplexWaveform tm = capture.tm();
    const auto psd = spectrum::power_spectrum(tm, spectrum::Window::Hann);
    const auto peak = spectrum::find_peak(psd, tm.sample_rate, pilot_freq - search_range,
                                          pilot_freq + search_range);
    const double floor = spectrum::median(psd);
    if (!(peak.power > 0.0) || peak.power < 10.0 * floor)
        throw PipelineError("freq-offset", "no pilot peak >= 10 dB above the median spectrum");
    return peak.frequency - pilot_freq;
}

namespace detail {

inline ComplexWaveform rotate(const ComplexWaveform& w, double freq, double phase0 = 0.0) {
    ComplexWaveform out = w;
    const double step = -2.0 * std::numbers::pi * freq / w.sample_rate;
    for (std::size_t k = 0; k < out.size(); ++k)
        out.samples[k] *= std::polar(1.0, step * static_cast<double>(k) - phase0);
    return out;
}

/// Fractional time advance by tau via spectral phase ramp (y[n] = x(n/fs + tau)).
inline ComplexWaveform time_shift(const ComplexWaveform& w, double tau) {
    if (tau == 0.0) return w;
    const std::size_t n = w.size();
    const std::size_t m = fft::next_pow2(n);
    std::vector<cplx> buf(m, cplx{0.0, 0.0});
    std::copy(w.samples.begin(), w.samples.end(), buf.begin());
    fft::forward(buf);
    for (std::size_t k = 0; k < m; ++k) {
        const double f = fft::bin_frequency(k, m, w.sample_rate);
        buf[k] *= std::polar(1.0, 2.0 * std::numbers::pi * f * tau);
    }
    fft::inverse(buf);
    buf.resize(n);
    return ComplexWaveform{std::move(buf), w.sample_rate};
}

/// Mean |b|^2 of the symbol stream sampled at integer phase k0.
inline double symbol_power_at(const ComplexWaveform& w, std::size_t sps, std::size_t k0) {
    double acc = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = k0; i < w.size(); i += sps) {
        acc += std::norm(w.samples[i]);
        ++cnt;
    }
    return cnt ? acc / static_cast<double>(cnt) : 0.0;
}

/// Fourth-moment timing metric |mean(b^4)|: the four-state constellation
/// collapses to a single point under b -> b^4, circular noise averages out,
/// and inter-symbol mixing destroys the alignment. Sharp even at low SNR.
inline double symbol_moment4_at(const ComplexWaveform& w, std::size_t sps, std::size_t k0) {
    cplx acc{0.0, 0.0};
    std::size_t cnt = 0;
    for (std::size_t i = k0; i < w.size(); i += sps) {
        const cplx b2 = w.samples[i] * w.samples[i];
        acc += b2 * b2;
        ++cnt;
    }
    return cnt ? std::abs(acc) / static_cast<double>(cnt) : 0.0;
}

inline std::vector<cplx> decimate(const ComplexWaveform& w, std::size_t sps, std::size_t k0) {
    std::vector<cplx> out;
    out.reserve(w.size() / sps + 1);
    for (std::size_t i = k0; i < w.size(); i += sps) out.push_back(w.samples[i]);
    return out;
}

} // namespace detail

/// Optimal decision sampling point: grid search of the symbol-power objective
/// over one symbol period (integer sample phases first, then parabolic
/// refinement quantized to the requested resolution).
inline double find_decision_offset(const ComplexWaveform& quantum, double symbol_rate,
                                   double resolution) {
    const double fs = quantum.sample_rate;
    const double ratio = fs / symbol_rate;
    const auto sps = static_cast<std::size_t>(std::llround(ratio));
    if (std::fabs(ratio - static_cast<double>(sps)) > 1e-9 || sps < 2)
        throw ConfigError("dsp: capture rate must be an integer multiple of the symbol rate");

    std::vector<double> obj(sps);
    for (std::size_t k = 0; k < sps; ++k)
        obj[k] = detail::symbol_moment4_at(quantum, sps, k);
    double omax = *std::max_element(obj.begin(), obj.end());
    double omin = *std::min_element(obj.begin(), obj.end());
    if (omax <= 0.0 || (omax - omin) / omax < 0.05) {
        // Gaussian-modulated signals have no fourth-moment line; fall back to
        // the symbol-power objective
        for (std::size_t k = 0; k < sps; ++k)
            obj[k] = detail::symbol_power_at(quantum, sps, k);
        omax = *std::max_element(obj.begin(), obj.end());
        omin = *std::min_element(obj.begin(), obj.end());
        if (omax <= 0.0 || (omax - omin) / omax < 1e-3)
            throw PipelineError("decision-offset", "flat timing objective (no modulation)");
    }
    const auto kbest = static_cast<std::size_t>(
        std::distance(obj.begin(), std::max_element(obj.begin(), obj.end())));

    // least-squares parabola over +/-2 circular neighbours: the wider lever
    // arm keeps the vertex steady against the per-phase metric noise
    double delta = 0.0;
    {
        const int span = sps >= 5 ? 2 : 1;
        const auto ln = static_cast<long>(sps);
        double s2 = 0.0, s4 = 0.0, sy = 0.0, s1y = 0.0, s2y = 0.0;
        int n = 0;
        for (int d = -span; d <= span; ++d) {
            const long idx = (static_cast<long>(kbest) + d + ln) % ln;
            const double y = obj[static_cast<std::size_t>(idx)];
            const auto dd = static_cast<double>(d);
            s2 += dd * dd;
            s4 += dd * dd * dd * dd;
            sy += y;
            s1y += dd * y;
            s2y += dd * dd * y;
            ++n;
        }
        const double denom_a = s4 - s2 * s2 / n;
        if (std::fabs(denom_a) > 1e-300 && s2 > 0.0) {
            const double a = (s2y - s2 * sy / n) / denom_a;
            const double b = s1y / s2;
            if (a < 0.0) delta = std::clamp(-b / (2.0 * a), -0.5 * span, 0.5 * span);
        }
    }

    double tau = (static_cast<double>(kbest) + delta) / fs;
    tau = std::round(tau / resolution) * resolution;
    const double period = 1.0 / symbol_rate;
    tau = std::fmod(tau + period, period);
    return tau;
}

inline double find_decision_offset(const rx::Capture& capture, double symbol_rate,
                                   double resolution = 5e-12) {
    return find_decision_offset(capture.te(), symbol_rate, resolution);
}

/// Unwrapped argument of the centred moving mean over `window` samples.
/// Flags spans whose mean amplitude falls below five shot-sigma.
inline std::vector<double> estimate_phase(const std::vector<cplx>& pilot_samples,
                                          unsigned window, bool* low_confidence = nullptr) {
    if (pilot_samples.empty()) throw ConfigError("dsp: empty pilot sequence");
    if (window < 1) throw ConfigError("dsp: window must be >= 1");
    const std::size_t n = pilot_samples.size();
    const std::size_t w = std::min<std::size_t>(window, n);

    // centred moving average via prefix sums
    std::vector<cplx> prefix(n + 1, cplx{0.0, 0.0});
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + pilot_samples[i];
    const double snr_floor = 5.0 * std::sqrt(2.0 / static_cast<double>(w));

    bool any_low = false;
    std::vector<double> track(n);
    double prev = 0.0;
    double offset = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= w / 2 ? i - w / 2 : 0;
        const std::size_t hi = std::min(n, lo + w);
        const cplx mean = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
        if (std::abs(mean) < snr_floor) any_low = true;
        double ph = std::arg(mean);
        if (i > 0) {
            double d = ph + offset - prev;
            while (d > std::numbers::pi) { offset -= 2.0 * std::numbers::pi; d -= 2.0 * std::numbers::pi; }
            while (d < -std::numbers::pi) { offset += 2.0 * std::numbers::pi; d += 2.0 * std::numbers::pi; }
        }
        track[i] = ph + offset;
        prev = track[i];
    }
    if (low_confidence) *low_confidence = any_low;
    return track;
}

namespace detail {

} // namespace detail

/// Quantum-plane reception response: the B_Fil low-pass (brickwall or
/// Butterworth-type) with the known rho(f) divided out inside eq_band.
inline std::function<double(double)> reception_response(const DspConfig& cfg,
                                                        const rx::RxConfig& rxcfg) {
    const double b_fil = cfg.b_fil;
    const unsigned order = cfg.b_fil_order;
    const double eq_edge = cfg.equalize_rx_response ? std::min(cfg.b_fil, cfg.eq_band) : 0.0;
    const double b_rx = rxcfg.b_rx_quantum;
    const unsigned rho_order = rxcfg.rho_order;
    return [=](double f) {
        double h;
        if (order == 0) {
            h = std::fabs(f) <= b_fil ? 1.0 : 0.0;
        } else {
            const double x = std::fabs(f) / b_fil;
            h = 1.0 / std::sqrt(1.0 + std::pow(x, 2.0 * order));
        }
        if (rho_order > 0 && std::fabs(f) <= eq_edge)
            h /= rx::rho_response(f, b_rx, rho_order);
        return h;
    };
}

/// One complex value per symbol slot at decision offset tau (fractional
/// offsets via spectral shift). The plain sampling path of the receiver.
inline std::vector<cplx> decimate_at(const ComplexWaveform& w, double symbol_rate,
                                     double tau) {
    const double fs = w.sample_rate;
    const double ratio = fs / symbol_rate;
    const auto sps = static_cast<std::size_t>(std::llround(ratio));
    if (std::fabs(ratio - static_cast<double>(sps)) > 1e-9 || sps < 1)
        throw ConfigError("dsp: trace rate must be an integer multiple of the symbol rate");
    const double period = 1.0 / symbol_rate;
    tau = std::fmod(std::fmod(tau, period) + period, period);
    const double samples_off = tau * fs;
    const auto k0 = static_cast<std::size_t>(std::floor(samples_off + 1e-9));
    const double frac = (samples_off - static_cast<double>(k0)) / fs;
    const ComplexWaveform& src = w;
    if (std::fabs(frac) * fs > 1e-9) {
        ComplexWaveform shifted = detail::time_shift(w, frac);
        return detail::decimate(shifted, sps, k0 % sps);
    }
    return detail::decimate(src, sps, k0 % sps);
}

/// Calibration-path processing: run a (noise) capture through the identical
/// reception filter and symbol-rate sampling as the signal, without the
/// frequency and phase corrections (pure rotations, irrelevant for noise
/// statistics). Defines the symbol-level SNU reference.
inline std::vector<cplx> extract_noise_symbols(const rx::Capture& capture,
                                               const DspConfig& cfg,
                                               const tx::TxConfig& txcfg,
                                               const rx::RxConfig& rxcfg,
                                               double decision_offset) {
    cfg.validate();
    ComplexWaveform te = apply_response(capture.te(), reception_response(cfg, rxcfg));
    auto syms = decimate_at(te, txcfg.symbol_rate, decision_offset);
    const auto guard =
        static_cast<std::size_t>(std::ceil(cfg.guard_fraction * static_cast<double>(syms.size())));
    if (syms.size() > 2 * guard)
        return {syms.begin() + static_cast<std::ptrdiff_t>(guard),
                syms.end() - static_cast<std::ptrdiff_t>(guard)};
    return syms;
}

namespace detail {

/// Cross-correlation alignment of recovered symbols against the transmitted
/// sequence. Returns (lag into truth, normalized peak).
inline std::pair<std::size_t, double> align(const std::vector<cplx>& bob,
                                            const std::vector<tx::SymbolRecord>& truth,
                                            std::size_t max_lag) {
    // keep head-room in the truth sequence so every lag in [0, max_lag] can
    // be scored over the same probe window
    max_lag = std::min(max_lag, truth.size() / 4);
    const std::size_t probe =
        std::min({bob.size(), static_cast<std::size_t>(4096), truth.size() - max_lag});
    if (probe < 16) throw PipelineError("align", "sequences too short to align");
    double best = -1.0;
    std::size_t best_lag = 0;
    for (std::size_t lag = 0; lag <= max_lag; ++lag) {
        cplx acc{0.0, 0.0};
        double pa = 0.0, pb = 0.0;
        for (std::size_t k = 0; k < probe; ++k) {
            acc += bob[k] * std::conj(truth[lag + k].alice_symbol);
            pa += std::norm(truth[lag + k].alice_symbol);
            pb += std::norm(bob[k]);
        }
        const double corr = std::abs(acc) / std::max(std::sqrt(pa * pb), 1e-300);
        if (corr > best) {
            best = corr;
            best_lag = lag;
        }
    }
    return {best_lag, best};
}

} // namespace detail

/// Offline receiver pipeline: de-skew, reception filtering (with optional
/// rho(f) equalization), pilot-based frequency correction, decision-point
/// search, symbol-rate decimation, and pilot-tracked phase compensation.
inline RecoveredSymbols recover(const rx::Capture& capture,
                                const std::vector<tx::SymbolRecord>& tx_truth,
                                const DspConfig& cfg, const tx::TxConfig& txcfg,
                                const rx::RxConfig& rxcfg) {
    cfg.validate();
    txcfg.validate();
    if (capture.mode != rx::CalibrationMode::Signal)
        throw PipelineError("recover", "capture is not in Signal mode");

    ComplexWaveform quantum = capture.te();
    ComplexWaveform pilot = capture.tm();
    const double fs = quantum.sample_rate;

    if (cfg.deskew != 0.0) quantum = detail::time_shift(quantum, cfg.deskew);

    // reception filter: B_Fil low-pass, optionally equalizing the known rho(f)
    quantum = apply_response(quantum, reception_response(cfg, rxcfg));

    // pilot band-pass around the nominal tone
    const double omega = txcfg.pilot_freq;
    const double half = cfg.pilot_band;
    pilot = apply_response(pilot, [&](double f) {
        return std::fabs(f - omega) <= half ? 1.0 : 0.0;
    });

    const double dnu = estimate_freq_offset(capture, omega, cfg.freq_search_range);
    quantum = detail::rotate(quantum, dnu);
    pilot = detail::rotate(pilot, dnu);

    if (cfg.matched_filter) {
        FilterSpec shape = txcfg.pulse_shape;
        if (shape.kind == FilterKind::RaisedCosine && shape.symbol_rate <= 0.0)
            shape.symbol_rate = txcfg.symbol_rate;
        quantum = apply_filter(quantum, shape);
    }

    const double ratio = fs / txcfg.symbol_rate;
    const auto sps = static_cast<std::size_t>(std::llround(ratio));
    if (std::fabs(ratio - static_cast<double>(sps)) > 1e-9)
        throw ConfigError("dsp: capture rate must be an integer multiple of the symbol rate");

    // pilot phase track: downconvert the tone, average per pilot period
    ComplexWaveform pilot_bb = detail::rotate(pilot, omega);
    const double samples_per_period = fs / omega;
    const auto n_periods = static_cast<std::size_t>(
        std::floor(static_cast<double>(pilot_bb.size()) / samples_per_period));
    if (n_periods < 2) throw PipelineError("phase", "trace too short for pilot tracking");
    std::vector<cplx> per_period(n_periods, cplx{0.0, 0.0});
    for (std::size_t p = 0; p < n_periods; ++p) {
        const auto lo = static_cast<std::size_t>(std::llround(static_cast<double>(p) * samples_per_period));
        const auto hi = std::min<std::size_t>(
            static_cast<std::size_t>(std::llround(static_cast<double>(p + 1) * samples_per_period)),
            pilot_bb.size());
        cplx acc{0.0, 0.0};
        for (std::size_t i = lo; i < hi; ++i) acc += pilot_bb.samples[i];
        per_period[p] = acc / static_cast<double>(std::max<std::size_t>(hi - lo, 1));
    }
    bool low_conf = false;
    std::vector<double> period_track =
        estimate_phase(per_period, cfg.phase_smoothing_window, &low_conf);

    // compensate the full-rate trace so the timing metric sees a stable
    // constellation; per-sample phase interpolated from the period track
    auto track_at = [&](double t) {
        const double idx = t * omega;
        const auto i0 = static_cast<std::size_t>(
            std::clamp(idx, 0.0, static_cast<double>(n_periods - 1)));
        const std::size_t i1 = std::min(i0 + 1, n_periods - 1);
        const double w1 = std::clamp(idx - static_cast<double>(i0), 0.0, 1.0);
        return (1.0 - w1) * period_track[i0] + w1 * period_track[i1];
    };
    for (std::size_t i = 0; i < quantum.size(); ++i)
        quantum.samples[i] *= std::polar(1.0, -track_at(static_cast<double>(i) / fs));

    double tau = find_decision_offset(quantum, txcfg.symbol_rate, cfg.decision_search_resolution);
    tau += cfg.decision_offset_delta;
    const double period = 1.0 / txcfg.symbol_rate;
    tau = std::fmod(std::fmod(tau, period) + period, period);

    // split into integer stride phase + fractional remainder
    const double samples_off = tau * fs;
    const auto k0 = static_cast<std::size_t>(std::floor(samples_off + 1e-9));
    const double frac = (samples_off - static_cast<double>(k0)) / fs;
    ComplexWaveform q_shift = std::fabs(frac) * fs > 1e-9
                                  ? detail::time_shift(quantum, frac)
                                  : quantum;
    std::vector<cplx> bob = detail::decimate(q_shift, sps, k0 % sps);

    std::vector<double> phase_at_symbol(bob.size());
    for (std::size_t k = 0; k < bob.size(); ++k) {
        const double t =
            (static_cast<double>(k0 % sps) + static_cast<double>(k) * static_cast<double>(sps)) / fs
            + frac;
        phase_at_symbol[k] = track_at(t);
    }

    RecoveredSymbols out;
    out.est_freq_offset = dnu;
    out.decision_offset = tau;
    out.low_confidence = low_conf;

    if (!tx_truth.empty()) {
        auto [lag, corr] = detail::align(bob, tx_truth, std::min<std::size_t>(tx_truth.size(), 64));
        if (corr < 0.1)
            throw PipelineError("align", "correlation peak below 0.1; alignment failed");
        out.truth_start = lag;
    }

    // guard discard against transform wrap-around at the trace edges
    const auto guard = static_cast<std::size_t>(
        std::ceil(cfg.guard_fraction * static_cast<double>(bob.size())));
    const std::size_t usable = bob.size() > 2 * guard ? bob.size() - 2 * guard : bob.size();
    const std::size_t start = bob.size() > 2 * guard ? guard : 0;
    out.bob_symbols.assign(bob.begin() + static_cast<std::ptrdiff_t>(start),
                           bob.begin() + static_cast<std::ptrdiff_t>(start + usable));
    out.phase_track.assign(phase_at_symbol.begin() + static_cast<std::ptrdiff_t>(start),
                           phase_at_symbol.begin() + static_cast<std::ptrdiff_t>(start + usable));
    out.truth_start += start;
    return out;
}

} // namespace cvqkd::dsp
