#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "cvqkd/fft.hpp"
#include "cvqkd/waveform.hpp"

namespace cvqkd::spectrum {

enum class Window { Rectangular, Hann };

/// Two-sided power spectrum |X_k|^2 / N^2 on the padded power-of-two grid.
/// Returned in FFT bin order; use fft::bin_frequency for the axis.
inline std::vector<double> power_spectrum(const ComplexWaveform& w,
                                          Window window = Window::Rectangular) {
    const std::size_t n = w.size();
    const std::size_t m = fft::next_pow2(n);
    std::vector<cplx> buf(m, cplx{0.0, 0.0});
    if (window == Window::Hann) {
        for (std::size_t i = 0; i < n; ++i) {
            const double h = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i)
                                                  / static_cast<double>(n));
            buf[i] = w.samples[i] * h;
        }
    } else {
        std::copy(w.samples.begin(), w.samples.end(), buf.begin());
    }
    fft::forward(buf);
    std::vector<double> psd(m);
    const double inv = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
    for (std::size_t k = 0; k < m; ++k) psd[k] = std::norm(buf[k]) * inv;
    return psd;
}

inline std::size_t bin_of(double f, std::size_t m, double sample_rate) {
    double x = f / sample_rate * static_cast<double>(m);
    auto k = static_cast<long long>(std::llround(x));
    const auto mm = static_cast<long long>(m);
    k %= mm;
    if (k < 0) k += mm;
    return static_cast<std::size_t>(k);
}

/// Total power within +/- half_width of f (inclusive bin range).
inline double band_power(const std::vector<double>& psd, double sample_rate,
                         double f, double half_width) {
    const std::size_t m = psd.size();
    double acc = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double fk = fft::bin_frequency(k, m, sample_rate);
        if (std::fabs(fk - f) <= half_width) acc += psd[k];
    }
    return acc;
}

inline double median(std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    return v[v.size() / 2];
}

struct Peak {
    double frequency = 0.0;
    double power = 0.0;
    std::size_t bin = 0;
};

/// Strongest bin within [f_lo, f_hi], refined by log-parabolic interpolation
/// of the two neighbours. Resolution is well below one bin for a clean tone.
inline Peak find_peak(const std::vector<double>& psd, double sample_rate,
                      double f_lo, double f_hi) {
    const std::size_t m = psd.size();
    Peak best;
    bool found = false;
    for (std::size_t k = 0; k < m; ++k) {
        const double fk = fft::bin_frequency(k, m, sample_rate);
        if (fk < f_lo || fk > f_hi) continue;
        if (!found || psd[k] > best.power) {
            best = Peak{fk, psd[k], k};
            found = true;
        }
    }
    if (!found) return best;
    const std::size_t km = (best.bin + m - 1) % m;
    const std::size_t kp = (best.bin + 1) % m;
    const double eps = 1e-300;
    const double lm = std::log(psd[km] + eps);
    const double l0 = std::log(psd[best.bin] + eps);
    const double lp = std::log(psd[kp] + eps);
    const double denom = lm - 2.0 * l0 + lp;
    if (std::fabs(denom) > 1e-12) {
        const double delta = 0.5 * (lm - lp) / denom;
        if (std::fabs(delta) < 1.0)
            best.frequency += delta * sample_rate / static_cast<double>(m);
    }
    return best;
}

} // namespace cvqkd::spectrum
