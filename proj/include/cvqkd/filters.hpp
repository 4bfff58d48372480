#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include "cvqkd/errors.hpp"
#include "cvqkd/fft.hpp"
#include "cvqkd/waveform.hpp"

namespace cvqkd {

enum class FilterKind { RaisedCosine, Gaussian, BrickwallLowPass };

/// Spectral shaping specification. `cutoff` is the -3 dB point for Gaussian
/// and the hard edge for the brickwall low-pass; raised cosine is set by
/// (symbol_rate, roll_off).
struct FilterSpec {
    FilterKind kind = FilterKind::RaisedCosine;
    double symbol_rate = 0.0; // Hz
    double roll_off = 0.5;    // (0, 1]
    double cutoff = 0.0;      // Hz

    void validate() const {
        switch (kind) {
        case FilterKind::RaisedCosine:
            if (symbol_rate <= 0.0)
                throw ConfigError("raised cosine requires symbol_rate > 0");
            if (roll_off <= 0.0 || roll_off > 1.0)
                throw ConfigError("raised cosine requires 0 < roll_off <= 1");
            break;
        case FilterKind::Gaussian:
        case FilterKind::BrickwallLowPass:
            if (cutoff <= 0.0) throw ConfigError("low-pass filter requires cutoff > 0");
            break;
        }
    }
};

/// Raised-cosine magnitude response: unity through the passband, cos^2
/// roll-off, zero beyond (1+roll_off)*R/2. Continuous everywhere.
inline double raised_cosine_response(double f, double symbol_rate, double roll_off) {
    if (symbol_rate <= 0.0) throw ConfigError("raised cosine requires symbol_rate > 0");
    if (roll_off <= 0.0 || roll_off > 1.0)
        throw ConfigError("raised cosine requires 0 < roll_off <= 1");
    const double af = std::fabs(f);
    const double f1 = (1.0 - roll_off) * symbol_rate / 2.0;
    const double f2 = (1.0 + roll_off) * symbol_rate / 2.0;
    if (af <= f1) return 1.0;
    if (af >= f2) return 0.0;
    const double arg = (2.0 * std::numbers::pi * af - (1.0 - roll_off) * std::numbers::pi * symbol_rate)
                       / (4.0 * roll_off * symbol_rate);
    const double c = std::cos(arg);
    return c * c;
}

/// Gaussian low-pass magnitude, -3 dB at `cutoff`.
inline double gaussian_response(double f, double cutoff) {
    const double x = f / cutoff;
    return std::exp2(-0.5 * x * x);
}

inline double filter_response(const FilterSpec& spec, double f) {
    switch (spec.kind) {
    case FilterKind::RaisedCosine:
        return raised_cosine_response(f, spec.symbol_rate, spec.roll_off);
    case FilterKind::Gaussian:
        return gaussian_response(f, spec.cutoff);
    case FilterKind::BrickwallLowPass:
        return std::fabs(f) > spec.cutoff ? 0.0 : 1.0;
    }
    return 0.0;
}

/// Zero-phase frequency-domain multiplication by an arbitrary real response.
/// Transforms run at the next power of two; callers discard guard samples
/// downstream where edge wrap matters.
inline ComplexWaveform apply_response(const ComplexWaveform& w,
                                      const std::function<double(double)>& response) {
    w.validate();
    const std::size_t n = w.size();
    const std::size_t m = fft::next_pow2(n);
    std::vector<cplx> buf(m, cplx{0.0, 0.0});
    std::copy(w.samples.begin(), w.samples.end(), buf.begin());
    fft::forward(buf);
    for (std::size_t k = 0; k < m; ++k)
        buf[k] *= response(fft::bin_frequency(k, m, w.sample_rate));
    fft::inverse(buf);
    buf.resize(n);
    return ComplexWaveform{std::move(buf), w.sample_rate};
}

/// Apply a FilterSpec. A low-pass whose cutoff reaches the Nyquist frequency
/// passes everything; that case is a no-op and sets *no_op if provided.
inline ComplexWaveform apply_filter(const ComplexWaveform& w, const FilterSpec& spec,
                                    bool* no_op = nullptr) {
    spec.validate();
    w.validate();
    if (no_op) *no_op = false;
    if (spec.kind == FilterKind::BrickwallLowPass && spec.cutoff >= w.nyquist()) {
        if (no_op) *no_op = true;
        return w;
    }
    return apply_response(w, [&spec](double f) { return filter_response(spec, f); });
}

/// Band-limited resampling: interpolates the trace at instants
/// k/new_rate + phase_offset. Implemented spectrally (rational length change
/// plus phase-ramp time shift), so content beyond the output Nyquist is
/// removed rather than aliased.
inline ComplexWaveform resample(const ComplexWaveform& w, double new_rate,
                                double phase_offset = 0.0) {
    w.validate();
    if (new_rate <= 0.0) throw ConfigError("resample requires new_rate > 0");
    if (std::fabs(phase_offset) >= 1.0 / new_rate)
        throw ConfigError("resample phase_offset must satisfy |offset| < 1/new_rate");

    if (new_rate == w.sample_rate && phase_offset == 0.0) return w;

    // Exact fast path: integer decimation on the existing grid.
    const double ratio = w.sample_rate / new_rate;
    const double kd = phase_offset * w.sample_rate;
    const bool integer_ratio = std::fabs(ratio - std::round(ratio)) < 1e-9 && ratio >= 1.0;
    const bool on_grid = std::fabs(kd - std::round(kd)) < 1e-9;
    if (integer_ratio && on_grid) {
        const auto stride = static_cast<std::size_t>(std::llround(ratio));
        const auto k0 = static_cast<std::ptrdiff_t>(std::llround(kd));
        std::vector<cplx> out;
        out.reserve(w.size() / stride + 1);
        for (std::size_t i = (k0 < 0 ? 0 : static_cast<std::size_t>(k0)); i < w.size(); i += stride)
            out.push_back(w.samples[i]);
        if (out.empty()) throw PipelineError("resample", "no output samples inside trace");
        return ComplexWaveform{std::move(out), new_rate};
    }

    const std::size_t n = w.size();
    const std::size_t nfft = fft::next_pow2(n);
    std::vector<cplx> buf(nfft, cplx{0.0, 0.0});
    std::copy(w.samples.begin(), w.samples.end(), buf.begin());
    fft::forward(buf);
    // time shift by +phase_offset
    if (phase_offset != 0.0) {
        for (std::size_t k = 0; k < nfft; ++k) {
            const double f = fft::bin_frequency(k, nfft, w.sample_rate);
            const double ph = 2.0 * std::numbers::pi * f * phase_offset;
            buf[k] *= cplx{std::cos(ph), std::sin(ph)};
        }
    }
    // rational length change on the padded grid
    const double exact_m = static_cast<double>(nfft) * new_rate / w.sample_rate;
    const auto mfft = static_cast<std::size_t>(std::llround(exact_m));
    if (mfft < 2) throw ConfigError("resample target rate too low for trace length");
    std::vector<cplx> outspec(mfft, cplx{0.0, 0.0});
    const std::size_t half = std::min(nfft, mfft) / 2;
    for (std::size_t k = 0; k <= half; ++k) outspec[k] = buf[k];
    for (std::size_t k = 1; k < half; ++k) outspec[mfft - k] = buf[nfft - k];
    fft::inverse(outspec);
    const double gain = static_cast<double>(mfft) / static_cast<double>(nfft);
    for (auto& v : outspec) v *= gain;

    const auto want = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) / w.sample_rate * new_rate));
    outspec.resize(std::min<std::size_t>(std::max<std::size_t>(want, 1), outspec.size()));
    return ComplexWaveform{std::move(outspec), new_rate};
}

} // namespace cvqkd
