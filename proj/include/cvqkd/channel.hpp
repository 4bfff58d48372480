#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "cvqkd/errors.hpp"
#include "cvqkd/waveform.hpp"

namespace cvqkd::channel {

struct ChannelConfig {
    double length_km = 13.2;
    double loss_db_per_km = 0.227;
    double freq_offset = 0.0;       // Delta-nu between TX laser and LO, Hz
    double linewidth_tx = 0.0;      // Hz
    double linewidth_lo = 0.0;      // Hz
    double delta_sop = 0.0;         // static polarization misalignment, rad
    unsigned classical_channels = 0;
    double raman_noise_photons = 0.0; // SNU added per channel-km, calibration
    std::uint64_t seed = 1;

    void validate() const {
        if (length_km < 0.0) throw ConfigError("channel: length must be >= 0");
        if (loss_db_per_km < 0.0) throw ConfigError("channel: loss coefficient must be >= 0");
        if (linewidth_tx < 0.0 || linewidth_lo < 0.0)
            throw ConfigError("channel: linewidths must be >= 0");
        if (raman_noise_photons < 0.0)
            throw ConfigError("channel: raman_noise_photons must be >= 0");
    }
};

inline double fiber_transmission(const ChannelConfig& cfg) {
    cfg.validate();
    return std::pow(10.0, -0.1 * cfg.length_km * cfg.loss_db_per_km);
}

/// Amplitude pass through the fiber: power scales by T, amplitude by sqrt(T).
inline DualPolFrame apply_fiber_loss(DualPolFrame frame, const ChannelConfig& cfg) {
    const double a = std::sqrt(fiber_transmission(cfg));
    frame.te.scale(a);
    frame.tm.scale(a);
    return frame;
}

/// Common phase rotation exp(j(2 pi dnu t + phi_t)) on both polarizations,
/// phi_t a Wiener process with increment variance
/// 2 pi (linewidth_tx + linewidth_lo) dt per sample. Instantaneous power is
/// untouched sample-by-sample.
inline DualPolFrame apply_phase_noise(DualPolFrame frame, const ChannelConfig& cfg) {
    cfg.validate();
    frame.validate();
    const double fs = frame.te.sample_rate;
    const double dt = 1.0 / fs;
    const double lw = cfg.linewidth_tx + cfg.linewidth_lo;
    const double sigma = std::sqrt(2.0 * std::numbers::pi * lw * dt);

    std::mt19937_64 rng(cfg.seed ^ 0x9e37'79b9'7f4a'7c15ull);
    std::normal_distribution<double> gauss(0.0, 1.0);

    double phi = 0.0;
    for (std::size_t i = 0; i < frame.te.size(); ++i) {
        const double t = static_cast<double>(i) * dt;
        if (sigma > 0.0) phi += sigma * gauss(rng);
        const double total = 2.0 * std::numbers::pi * cfg.freq_offset * t + phi;
        const cplx rot = std::polar(1.0, total);
        frame.te.samples[i] *= rot;
        frame.tm.samples[i] *= rot;
    }
    return frame;
}

/// Unitary 2x2 rotation mixing TE/TM by delta_sop; total power conserved.
inline DualPolFrame apply_polarization_rotation(DualPolFrame frame, double delta_sop) {
    frame.validate();
    if (delta_sop == 0.0) return frame;
    const double c = std::cos(delta_sop);
    const double s = std::sin(delta_sop);
    for (std::size_t i = 0; i < frame.te.size(); ++i) {
        const cplx te = frame.te.samples[i];
        const cplx tm = frame.tm.samples[i];
        frame.te.samples[i] = c * te + s * tm;
        frame.tm.samples[i] = -s * te + c * tm;
    }
    return frame;
}

/// Raman contribution of the classical WDM load: white circular Gaussian
/// noise of variance channels * raman_noise_photons * length (receiver
/// referred, SNU) on both polarizations. Zero channels is a no-op.
inline DualPolFrame inject_classical_noise(DualPolFrame frame, const ChannelConfig& cfg) {
    cfg.validate();
    frame.validate();
    if (cfg.classical_channels == 0) return frame;
    // per-quadrature variance in SNU, matching the excess-noise convention
    const double var = static_cast<double>(cfg.classical_channels) * cfg.raman_noise_photons
                       * cfg.length_km;
    if (var <= 0.0) return frame;
    const double sigma = std::sqrt(var);

    std::mt19937_64 rng(cfg.seed ^ 0xc2b2'ae35'1d4f'2b89ull);
    std::normal_distribution<double> gauss(0.0, sigma);
    for (auto* pol : {&frame.te, &frame.tm})
        for (auto& v : pol->samples) v += cplx{gauss(rng), gauss(rng)};
    return frame;
}

/// Full channel: loss, phase noise, polarization rotation, Raman noise.
inline DualPolFrame propagate(DualPolFrame frame, const ChannelConfig& cfg) {
    frame = apply_fiber_loss(std::move(frame), cfg);
    frame = apply_phase_noise(std::move(frame), cfg);
    frame = apply_polarization_rotation(std::move(frame), cfg.delta_sop);
    frame = inject_classical_noise(std::move(frame), cfg);
    return frame;
}

} // namespace cvqkd::channel
