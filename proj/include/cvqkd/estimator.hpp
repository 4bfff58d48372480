#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "cvqkd/errors.hpp"
#include "cvqkd/txchain.hpp"
#include "cvqkd/waveform.hpp"

namespace cvqkd::est {

/// Raw calibration variances. shot_var is the LO-on/signal-off per-quadrature
/// variance (shot plus electronic), elec_var the LO-off variance. The SNU
/// scale is 1/(shot_var - elec_var).
struct CalibrationSet {
    double shot_var = 1.0;
    double elec_var = 0.0;
    std::size_t n_samples = 0;

    double snu_scale() const { return 1.0 / (shot_var - elec_var); }
    double v_el() const { return elec_var / (shot_var - elec_var); }

    void validate() const {
        if (!(shot_var > elec_var) || elec_var < 0.0)
            throw ConfigError("calibration requires shot_var > elec_var >= 0");
    }
};

struct NoiseEstimate {
    double zeta = 0.0;       // total excess noise, SNU (includes TIA)
    double zeta_T = 0.0;     // trusted-receiver excess noise = zeta - v_el
    double t_hat = 0.0;      // transmission estimate |t|^2
    double snr = 0.0;
    double v_el = 0.0;
    std::size_t n_symbols = 0;
    double zeta_channel_input = 0.0; // zeta / t_hat, for cross-literature use
    double sigma_zeta = 0.0;         // chi^2 variance-of-variance 1-sigma
    double v_cond_i = 0.0;           // per-quadrature conditional variances
    double v_cond_q = 0.0;
    bool unphysical = false;
};

inline double quad_variance(const std::vector<cplx>& v) {
    double acc = 0.0;
    for (const auto& s : v) acc += std::norm(s);
    return acc / (2.0 * static_cast<double>(v.size()));
}

/// Calibration from symbol-level noise sequences that went through the same
/// reception chain as the signal.
inline CalibrationSet calibrate_snu(const std::vector<cplx>& shot_symbols,
                                    const std::vector<cplx>& elec_symbols) {
    if (shot_symbols.empty() || elec_symbols.empty())
        throw ConfigError("calibration sequences must be non-empty");
    CalibrationSet cal;
    cal.shot_var = quad_variance(shot_symbols);
    cal.elec_var = quad_variance(elec_symbols);
    cal.n_samples = std::min(shot_symbols.size(), elec_symbols.size());
    cal.validate();
    return cal;
}

namespace detail {

inline NoiseEstimate finish(const std::vector<cplx>& alice, const std::vector<cplx>& bob_snu,
                            const CalibrationSet& cal, cplx t, double v_cond,
                            double v_cond_i, double v_cond_q) {
    const double n = static_cast<double>(alice.size());
    NoiseEstimate e;
    e.n_symbols = alice.size();
    e.v_el = cal.v_el();
    e.t_hat = std::norm(t);
    if (std::abs(t) < 1e-3)
        throw PipelineError("estimator", "|t| below 1e-3: channel dead");
    e.zeta = v_cond - 1.0;
    e.zeta_T = e.zeta - e.v_el;
    e.zeta_channel_input = e.zeta / e.t_hat;
    double vmod = 0.0;
    for (const auto& a : alice) vmod += std::norm(a);
    vmod /= n;
    e.snr = e.t_hat * (vmod / 2.0) / v_cond;
    e.sigma_zeta = v_cond / std::sqrt(n);
    e.v_cond_i = v_cond_i;
    e.v_cond_q = v_cond_q;
    e.unphysical = (e.zeta < -0.5);
    (void)bob_snu;
    return e;
}

} // namespace detail

/// Least-squares conditional-variance estimator: fit bob = t*alice + noise
/// (complex t, both quadratures pooled), V_cond per quadrature in SNU,
/// zeta = V_cond - 1 (receiver referred, includes TIA), zeta_T = zeta - v_el.
inline NoiseEstimate estimate_four_state(const std::vector<cplx>& alice,
                                         const std::vector<cplx>& bob,
                                         const CalibrationSet& cal) {
    cal.validate();
    if (alice.size() != bob.size() || alice.size() < 16)
        throw ConfigError("estimator: aligned sequences of >= 16 symbols required");
    const double scale_amp = std::sqrt(cal.snu_scale());
    const double n = static_cast<double>(alice.size());

    cplx num{0.0, 0.0};
    double den = 0.0;
    std::vector<cplx> bsnu(bob.size());
    for (std::size_t k = 0; k < bob.size(); ++k) {
        bsnu[k] = bob[k] * scale_amp;
        num += bsnu[k] * std::conj(alice[k]);
        den += std::norm(alice[k]);
    }
    if (den <= 0.0) throw ConfigError("estimator: alice sequence has zero power");
    const cplx t = num / den;

    double acc = 0.0, acc_i = 0.0, acc_q = 0.0;
    for (std::size_t k = 0; k < bob.size(); ++k) {
        const cplx r = bsnu[k] - t * alice[k];
        acc += std::norm(r);
        acc_i += r.real() * r.real();
        acc_q += r.imag() * r.imag();
    }
    const double v_cond = acc / (2.0 * n);
    return detail::finish(alice, bsnu, cal, t, v_cond, acc_i / n, acc_q / n);
}

/// Difference-variance route for Gaussian modulation: V_cond computed from
/// the variance/covariance identity var(x_B - t x_A) = var(x_B) - |cov|^2/var(x_A)
/// at the optimal t. Consistent with the four-state estimator on shared data.
inline NoiseEstimate estimate_gaussian(const std::vector<cplx>& alice,
                                       const std::vector<cplx>& bob,
                                       const CalibrationSet& cal) {
    cal.validate();
    if (alice.size() != bob.size() || alice.size() < 16)
        throw ConfigError("estimator: aligned sequences of >= 16 symbols required");
    const double scale = cal.snu_scale();
    const double n = static_cast<double>(alice.size());

    double var_a = 0.0, var_b = 0.0;
    cplx cov{0.0, 0.0};
    double var_b_i = 0.0, var_b_q = 0.0;
    for (std::size_t k = 0; k < alice.size(); ++k) {
        const cplx b = bob[k] * std::sqrt(scale);
        var_a += std::norm(alice[k]);
        var_b += std::norm(b);
        var_b_i += b.real() * b.real();
        var_b_q += b.imag() * b.imag();
        cov += b * std::conj(alice[k]);
    }
    var_a /= n;
    var_b /= n;
    cov /= n;
    if (var_a <= 0.0) throw ConfigError("estimator: alice sequence has zero power");
    const cplx t = cov / var_a;
    const double v_cond = (var_b - std::norm(cov) / var_a) / 2.0;

    // per-quadrature split uses the residual decomposition at the same t
    double acc_i = 0.0, acc_q = 0.0;
    for (std::size_t k = 0; k < alice.size(); ++k) {
        const cplx r = bob[k] * std::sqrt(scale) - t * alice[k];
        acc_i += r.real() * r.real();
        acc_q += r.imag() * r.imag();
    }
    return detail::finish(alice, {}, cal, t, v_cond, acc_i / n, acc_q / n);
}

inline std::vector<cplx> symbols_of(const std::vector<tx::SymbolRecord>& recs,
                                    std::size_t start, std::size_t count) {
    if (start + count > recs.size())
        throw ConfigError("estimator: alignment window exceeds truth length");
    std::vector<cplx> out(count);
    for (std::size_t k = 0; k < count; ++k) out[k] = recs[start + k].alice_symbol;
    return out;
}

} // namespace cvqkd::est
