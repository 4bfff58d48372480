#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "cvqkd/errors.hpp"
#include "cvqkd/filters.hpp"
#include "cvqkd/prbs.hpp"
#include "cvqkd/waveform.hpp"

namespace cvqkd::tx {

enum class Modulation { FourState, Gaussian };

/// Transmitter configuration. V_pi is normalized to 1; only ratios matter.
struct TxConfig {
    double symbol_rate = 250e6;       // R_q, Hz
    double pilot_freq = 1e9;          // Omega, Hz; out-of-band: Omega > R_q
    FilterSpec pulse_shape{FilterKind::RaisedCosine, 250e6, 0.5, 0.0};
    bool carving_enabled = false;
    double mean_photons = 4.0;        // <n> per symbol; V_mod = 2<n>
    double pilot_to_quantum_db = 20.0;
    double per_tx_db = std::numeric_limits<double>::infinity();
    unsigned prbs_order = 7;
    unsigned samples_per_symbol = 16;
    double iq_bias_error = 0.0;       // fraction of V_pi on both I and Q bias
    double phase_bias_error = 0.0;    // fraction of V_pi_phi
    double rf_imbalance_db = 0.0;     // Q-arm drive amplitude error
    double rf_imbalance_deg = 0.0;    // Q-arm electrical phase error
    double pilot_drive = 0.2;         // A in units of V_pi
    Modulation modulation = Modulation::FourState;

    double modulation_variance() const { return 2.0 * mean_photons; }

    void validate() const {
        if (symbol_rate <= 0.0) throw ConfigError("tx: symbol_rate must be > 0");
        if (pilot_freq <= symbol_rate)
            throw ConfigError("tx: pilot frequency must exceed the symbol rate");
        if (mean_photons <= 0.0) throw ConfigError("tx: mean_photons must be > 0");
        if (samples_per_symbol < 2) throw ConfigError("tx: samples_per_symbol must be >= 2");
        if (per_tx_db < 0.0) throw ConfigError("tx: PER_TX must be >= 0 dB");
    }
};

/// Receiver-referred launch-power window for both tributaries.
/// Quantum: S_q < P_q < P_Eve <= P_Sat/10. Pilot: S_pi + SNR < P_pi < P_Ov.
struct LaunchBudget {
    double sensitivity_q = 0.0;
    double eve_threshold = std::numeric_limits<double>::infinity();
    double saturation = std::numeric_limits<double>::infinity();
    double sensitivity_pilot = 0.0;
    double overload_pilot = std::numeric_limits<double>::infinity();
    double required_pilot_snr_db = 0.0;
};

struct SymbolRecord {
    std::size_t index = 0;
    cplx alice_symbol{0.0, 0.0};
};

/// PRBS-7 bit pairs mapped onto the four-state constellation, scaled so each
/// quadrature has variance V_mod/2 and |a|^2 = V_mod = 2<n>. The seed selects
/// the sequence offset (four-state) or the Gaussian draw.
inline std::vector<SymbolRecord> generate_quantum_symbols(const TxConfig& cfg,
                                                          std::size_t count,
                                                          std::uint64_t seed) {
    cfg.validate();
    if (count < 1) throw ConfigError("tx: symbol count must be >= 1");
    const double q = std::sqrt(cfg.modulation_variance() / 2.0);
    std::vector<SymbolRecord> out(count);

    if (cfg.modulation == Modulation::Gaussian) {
        std::mt19937_64 rng(seed ^ 0x67a7'5ce1'11aa'00ffull);
        std::normal_distribution<double> n(0.0, q);
        for (std::size_t i = 0; i < count; ++i)
            out[i] = SymbolRecord{i, cplx{n(rng), n(rng)}};
        return out;
    }

    Prbs prbs(cfg.prbs_order, static_cast<std::uint32_t>(seed % ((1u << cfg.prbs_order) - 1u)) + 1u);
    for (std::size_t i = 0; i < count; ++i) {
        const int b0 = prbs.next_bit();
        const int b1 = prbs.next_bit();
        out[i] = SymbolRecord{i, cplx{b0 ? q : -q, b1 ? q : -q}};
    }
    return out;
}

/// Carver amplitude window: unity plateau over the middle half of each symbol
/// slot, cos^2 taper to an exact null at the slot boundaries.
inline double carving_window(double t_in_symbol) {
    double tau = t_in_symbol - std::floor(t_in_symbol + 0.5); // [-0.5, 0.5)
    const double a = std::fabs(tau);
    if (a <= 0.25) return 1.0;
    const double c = std::cos(2.0 * std::numbers::pi * (a - 0.25));
    return c * c;
}

/// Upsample symbol impulses, shape spectrally, optionally carve. The shaping
/// gain is normalized so the waveform reproduces the symbol amplitudes
/// exactly at the symbol instants for any Nyquist-criterion shape.
inline ComplexWaveform shape_and_carve(const std::vector<SymbolRecord>& symbols,
                                       const TxConfig& cfg) {
    cfg.validate();
    if (symbols.empty()) throw ConfigError("tx: no symbols to shape");
    const double fs = cfg.symbol_rate * cfg.samples_per_symbol;

    FilterSpec shape = cfg.pulse_shape;
    if (shape.kind == FilterKind::RaisedCosine) {
        if (shape.symbol_rate <= 0.0) shape.symbol_rate = cfg.symbol_rate;
        const double needed = 2.0 * (1.0 + shape.roll_off);
        if (static_cast<double>(cfg.samples_per_symbol) < needed)
            throw ConfigError("tx: samples_per_symbol below 2*(1+roll_off) oversampling");
    }
    shape.validate();
    // a brickwall at or beyond Nyquist is the documented pass-through
    if (shape.kind != FilterKind::BrickwallLowPass && filter_response(shape, fs / 2.0) > 1e-2)
        throw ConfigError("tx: pulse shape is not band-limited below Nyquist (aliasing)");

    std::vector<cplx> impulses(symbols.size() * cfg.samples_per_symbol, cplx{0.0, 0.0});
    for (const auto& s : symbols)
        impulses[s.index * cfg.samples_per_symbol] = s.alice_symbol;

    ComplexWaveform shaped = apply_filter(ComplexWaveform{std::move(impulses), fs}, shape);

    // normalize to unit pulse peak so decision instants carry the symbol
    // amplitudes for any shape (exact for Nyquist-criterion responses)
    const std::size_t m = fft::next_pow2(shaped.size());
    double g0 = 0.0;
    for (std::size_t k = 0; k < m; ++k)
        g0 += filter_response(shape, fft::bin_frequency(k, m, fs));
    g0 /= static_cast<double>(m);
    if (g0 <= 0.0) throw ConfigError("tx: pulse shape has zero net gain");
    shaped.scale(1.0 / g0);

    if (cfg.carving_enabled) {
        const auto sps = static_cast<double>(cfg.samples_per_symbol);
        for (std::size_t i = 0; i < shaped.samples.size(); ++i)
            shaped.samples[i] *= carving_window(static_cast<double>(i) / sps);
    }
    return shaped;
}

/// I/Q modulator field transfer for the carrier-suppressed single-sideband
/// pilot. RF drives are A cos(Omega t) and A sin(Omega t) (90 deg electrical
/// phase); at ideal bias the output is a clean exp(+j Omega t) line. Bias and
/// imbalance errors regrow the carrier and the mirror sideband. The cosine
/// transfer is evaluated in full; drives beyond 2 V_pi only raise a warning.
inline ComplexWaveform synthesize_pilot(const TxConfig& cfg, double duration,
                                        double sample_rate,
                                        bool* nonlinearity_warning = nullptr) {
    cfg.validate();
    if (sample_rate <= 2.0 * (cfg.pilot_freq + cfg.symbol_rate))
        throw ConfigError("tx: pilot sample_rate must exceed 2*(Omega + R_q)");
    const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));
    if (n < 2) throw ConfigError("tx: pilot duration too short");

    const double a_i = cfg.pilot_drive;
    const double a_q = cfg.pilot_drive * std::pow(10.0, cfg.rf_imbalance_db / 20.0);
    if (nonlinearity_warning)
        *nonlinearity_warning = (std::max(a_i, a_q) > 2.0);

    const double pi = std::numbers::pi;
    const double bias_i = -(1.0 + cfg.iq_bias_error);
    const double bias_q = -(1.0 + cfg.iq_bias_error);
    const double phase_term = pi * (1.0 + cfg.phase_bias_error) / 2.0;
    const cplx j_phase = std::polar(1.0, phase_term);
    const double delta = cfg.rf_imbalance_deg * pi / 180.0;

    std::vector<cplx> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / sample_rate;
        const double wt = 2.0 * pi * cfg.pilot_freq * t;
        const double vi = a_i * std::cos(wt);
        const double vq = a_q * std::cos(wt - pi / 2.0 + delta);
        const double arm_i = std::cos(pi * (vi + bias_i) / 2.0);
        const double arm_q = std::cos(pi * (vq + bias_q) / 2.0);
        out[k] = 0.5 * (arm_i + j_phase * arm_q);
    }
    return ComplexWaveform{std::move(out), sample_rate};
}

/// Power-level the two tributaries and model finite transmitter polarization
/// extinction as symmetric cross-coupling of a 10^(-PER/10) power fraction.
inline DualPolFrame assemble_frame(const ComplexWaveform& quantum,
                                   const ComplexWaveform& pilot, const TxConfig& cfg,
                                   const LaunchBudget& budget = LaunchBudget{}) {
    cfg.validate();
    if (quantum.sample_rate != pilot.sample_rate || quantum.size() != pilot.size())
        throw ConfigError("tx: quantum and pilot traces must share rate and length");

    DualPolFrame frame;
    frame.te = quantum;
    frame.tm = pilot;

    const double p_q = frame.te.mean_power();
    const double target_pilot = p_q * std::pow(10.0, cfg.pilot_to_quantum_db / 10.0);
    const double p_pi_raw = frame.tm.mean_power();
    if (p_pi_raw <= 0.0) throw ConfigError("tx: pilot trace has zero power");
    frame.tm.scale(std::sqrt(target_pilot / p_pi_raw));

    const double p_pi = frame.tm.mean_power();
    if (!(budget.sensitivity_q < p_q))
        throw ConfigError("tx budget violated: S_q < P_q");
    if (!(p_q < budget.eve_threshold))
        throw ConfigError("tx budget violated: P_q < P_Eve");
    if (!(budget.eve_threshold <= budget.saturation / 10.0))
        throw ConfigError("tx budget violated: P_Eve << P_Sat");
    const double pilot_floor =
        budget.sensitivity_pilot * std::pow(10.0, budget.required_pilot_snr_db / 10.0);
    if (!(pilot_floor < p_pi))
        throw ConfigError("tx budget violated: S_pi + SNR < P_pi");
    if (!(p_pi < budget.overload_pilot))
        throw ConfigError("tx budget violated: P_pi < P_Ov");

    const double leak = std::isinf(cfg.per_tx_db) ? 0.0 : std::pow(10.0, -cfg.per_tx_db / 10.0);
    if (leak > 0.0) {
        const double keep = std::sqrt(1.0 - leak);
        const double mix = std::sqrt(leak);
        for (std::size_t i = 0; i < frame.te.size(); ++i) {
            const cplx te = frame.te.samples[i];
            const cplx tm = frame.tm.samples[i];
            frame.te.samples[i] = keep * te + mix * tm;
            frame.tm.samples[i] = keep * tm + mix * te;
        }
    }
    frame.validate();
    return frame;
}

} // namespace cvqkd::tx
