#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "cvqkd/errors.hpp"

namespace cvqkd::key {

/// von Neumann entropy contribution of a symplectic eigenvalue.
inline double g_entropy(double nu) {
    if (nu <= 1.0 + 1e-12) return 0.0;
    const double p = (nu + 1.0) / 2.0;
    const double m = (nu - 1.0) / 2.0;
    return p * std::log2(p) - m * std::log2(m);
}

struct SecurityParams {
    double beta = 0.95;          // reconciliation efficiency
    double v_mod = 8.0;          // modulation variance, SNU (= 2<n>)
    double transmission = 0.5016;
    double zeta = 0.0;           // total excess noise at the receiver, SNU
    double zeta_trusted = 0.0;   // excess noise excluding electronic noise
    double v_el = 0.0;           // electronic noise, SNU (zeta - zeta_trusted)
    double symbol_rate = 250e6;  // Hz
    double detection_efficiency = 1.0; // trusted-loss override (eta)

    void validate() const {
        if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("keyrate: need 0 < beta <= 1");
        if (v_mod <= 0.0) throw ConfigError("keyrate: v_mod must be > 0");
        if (!(transmission > 0.0 && transmission <= 1.0))
            throw ConfigError("keyrate: T must be in (0, 1]");
        if (zeta_trusted < 0.0 || v_el < 0.0)
            throw ConfigError("keyrate: variances must be >= 0");
        if (!(detection_efficiency > 0.0 && detection_efficiency <= 1.0))
            throw ConfigError("keyrate: detection_efficiency must be in (0, 1]");
        if (symbol_rate <= 0.0) throw ConfigError("keyrate: symbol_rate must be > 0");
    }
};

namespace detail {

// Reported noise figures are per-quadrature values of the heterodyne
// measurement (shot = 1 per quadrature). The covariance algebra below works
// at the channel output, where the same physical noise is twice as large;
// the detector model then carries the heterodyne vacuum explicitly.
inline double xi_alice(const SecurityParams& p) {
    return 2.0 * p.zeta_trusted / p.transmission;
}
inline double vel_detector(const SecurityParams& p) {
    return p.v_el * p.detection_efficiency;
}

inline double chi_line(const SecurityParams& p) {
    return (1.0 - p.transmission) / p.transmission + xi_alice(p);
}

inline double chi_het(const SecurityParams& p) {
    const double eta = p.detection_efficiency;
    return (2.0 - eta + 2.0 * vel_detector(p)) / eta;
}

inline double chi_total(const SecurityParams& p) {
    return chi_line(p) + chi_het(p) / p.transmission;
}

using Mat = Eigen::MatrixXd;

/// Symplectic eigenvalues of a (2n x 2n) covariance matrix, xpxp ordering.
inline std::vector<double> symplectic_eigenvalues(const Mat& gamma) {
    const auto n = gamma.rows() / 2;
    Mat omega = Mat::Zero(gamma.rows(), gamma.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        omega(2 * i, 2 * i + 1) = 1.0;
        omega(2 * i + 1, 2 * i) = -1.0;
    }
    Eigen::EigenSolver<Mat> solver(omega * gamma, false);
    std::vector<double> nus;
    for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i)
        nus.push_back(std::abs(solver.eigenvalues()[i].imag()));
    std::sort(nus.begin(), nus.end(), std::greater<>());
    std::vector<double> out;
    for (std::size_t i = 0; i < nus.size(); i += 2) out.push_back(nus[i]);
    return out;
}

inline double entropy(const Mat& gamma) {
    double s = 0.0;
    for (double nu : symplectic_eigenvalues(gamma)) {
        if (nu < 1.0 - 1e-6)
            throw PipelineError("holevo", "unphysical covariance: symplectic eigenvalue < 1");
        s += g_entropy(nu);
    }
    return s;
}

inline void set_block(Mat& g, int i, int j, double diag, double zfac) {
    g(2 * i, 2 * j) = diag + zfac;
    g(2 * i + 1, 2 * j + 1) = diag - zfac;
}

inline void apply_bs(Mat& g, int i, int j, double eta) {
    Mat s = Mat::Identity(g.rows(), g.cols());
    const double t = std::sqrt(eta), r = std::sqrt(1.0 - eta);
    for (int k = 0; k < 2; ++k) {
        s(2 * i + k, 2 * i + k) = t;
        s(2 * i + k, 2 * j + k) = r;
        s(2 * j + k, 2 * i + k) = -r;
        s(2 * j + k, 2 * j + k) = t;
    }
    g = s * g * s.transpose();
}

/// Condition a Gaussian state on an ideal heterodyne measurement of mode idx.
inline Mat condition_heterodyne(const Mat& g, int idx) {
    const auto n = g.rows() / 2;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index m = 0; m < n; ++m)
        if (m != idx)
            for (int k = 0; k < 2; ++k) keep.push_back(2 * m + k);
    Mat a(keep.size(), keep.size());
    Mat c(keep.size(), 2);
    Eigen::Matrix2d b;
    for (std::size_t r = 0; r < keep.size(); ++r) {
        for (std::size_t q = 0; q < keep.size(); ++q) a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) = g(keep[r], keep[q]);
        for (int k = 0; k < 2; ++k) c(static_cast<Eigen::Index>(r), k) = g(keep[r], 2 * idx + k);
    }
    for (int r = 0; r < 2; ++r)
        for (int q = 0; q < 2; ++q) b(r, q) = g(2 * idx + r, 2 * idx + q);
    b += Eigen::Matrix2d::Identity();
    return a - c * b.inverse() * c.transpose();
}

/// Full trusted-receiver state: modes (A, B, E1, E2, F0, F1). The entangling
/// cloner (E1, E2) purifies the channel; the detector is a beamsplitter of
/// transmittance eta whose EPR ancilla carries the trusted electronic noise.
inline Mat build_trusted_state(const SecurityParams& p) {
    const double V = p.v_mod + 1.0;
    const double T = std::min(p.transmission, 1.0 - 1e-6);
    const double xi = xi_alice(p);
    const double W = 1.0 + T * xi / (1.0 - T);
    const double eta = std::min(p.detection_efficiency, 1.0 - 1e-6);
    const double vel = vel_detector(p);
    const double d = 1.0 + 2.0 * vel / (1.0 - eta);

    Mat g = Mat::Zero(12, 12);
    // A-B entangled source
    set_block(g, 0, 0, V, 0.0);
    set_block(g, 1, 1, V, 0.0);
    set_block(g, 0, 1, 0.0, std::sqrt(V * V - 1.0));
    set_block(g, 1, 0, 0.0, std::sqrt(V * V - 1.0));
    // channel cloner
    set_block(g, 2, 2, W, 0.0);
    set_block(g, 3, 3, W, 0.0);
    set_block(g, 2, 3, 0.0, std::sqrt(W * W - 1.0));
    set_block(g, 3, 2, 0.0, std::sqrt(W * W - 1.0));
    // detector ancilla
    set_block(g, 4, 4, d, 0.0);
    set_block(g, 5, 5, d, 0.0);
    set_block(g, 4, 5, 0.0, std::sqrt(d * d - 1.0));
    set_block(g, 5, 4, 0.0, std::sqrt(d * d - 1.0));

    apply_bs(g, 1, 2, T);   // fiber
    apply_bs(g, 1, 4, eta); // detector
    return g;
}

inline Mat marginal(const Mat& g, std::initializer_list<int> modes) {
    Mat out(2 * static_cast<Eigen::Index>(modes.size()), 2 * static_cast<Eigen::Index>(modes.size()));
    int r = 0;
    for (int mi : modes) {
        int c = 0;
        for (int mj : modes) {
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b)
                    out(2 * r + a, 2 * c + b) = g(2 * mi + a, 2 * mj + b);
            ++c;
        }
        ++r;
    }
    return out;
}

} // namespace detail

/// Shannon rate of the heterodyne Gaussian channel, both quadratures.
inline double mutual_information(const SecurityParams& p) {
    p.validate();
    const double chi = detail::chi_total(p);
    const double V = p.v_mod + 1.0;
    return std::log2((V + chi) / (1.0 + chi));
}

/// Measured per-quadrature SNR implied by the parameters.
inline double implied_snr(const SecurityParams& p) {
    return p.v_mod / (1.0 + detail::chi_total(p));
}

/// Holevo bound on Eve's information about Bob (reverse reconciliation,
/// heterodyne). trusted=true leaves detector loss and electronic noise out of
/// Eve's purification; trusted=false hands her the full receiver.
inline double holevo_bound(const SecurityParams& p, bool trusted) {
    p.validate();
    const double V = p.v_mod + 1.0;

    if (!trusted) {
        const double eta = p.detection_efficiency;
        const double vel = detail::vel_detector(p);
        const double T = p.transmission;
        const double b = eta * (T * V + 1.0 - T + T * detail::xi_alice(p)) + (1.0 - eta)
                         + 2.0 * vel;
        const double c = std::sqrt(eta * T * (V * V - 1.0));
        const double a = V;
        const double delta = a * a + b * b - 2.0 * c * c;
        const double det = a * b - c * c;
        const double s = std::sqrt(std::max(delta * delta - 4.0 * det * det, 0.0));
        const double nu1 = std::sqrt((delta + s) / 2.0);
        const double nu2 = std::sqrt(std::max((delta - s) / 2.0, 0.0));
        if (nu1 < 1.0 - 1e-9 || nu2 < 1.0 - 1e-9)
            throw PipelineError("holevo", "unphysical covariance: symplectic eigenvalue < 1");
        const double nu3 = a - c * c / (b + 1.0);
        return g_entropy(nu1) + g_entropy(nu2) - g_entropy(nu3);
    }

    // lossless, excess-free channel: Eve's modes never couple to the signal
    if (p.transmission >= 1.0 - 1e-12 && detail::xi_alice(p) <= 0.0) return 0.0;

    const detail::Mat g = detail::build_trusted_state(p);
    const double s_eve = detail::entropy(detail::marginal(g, {2, 3}));
    const detail::Mat cond = detail::condition_heterodyne(g, 1);
    // after conditioning, mode order is (A, E1, E2, F0, F1); Eve is (1, 2)
    const double s_eve_b = detail::entropy(detail::marginal(cond, {1, 2}));
    return std::max(s_eve - s_eve_b, 0.0);
}

struct KeyRateReport {
    double i_ab = 0.0;          // bits/symbol
    double chi_untrusted = 0.0; // bits/symbol
    double chi_trusted = 0.0;   // bits/symbol
    double k_untrusted = 0.0;   // K_S, bits/s
    double k_trusted = 0.0;     // K_T, bits/s
    bool no_key_untrusted = false;
    bool no_key_trusted = false;
    SecurityParams inputs;
};

/// K = max(0, R_q (beta I_AB - chi_EB)) for both receiver assumptions.
inline KeyRateReport secure_key_rate(const SecurityParams& p) {
    p.validate();
    KeyRateReport r;
    r.inputs = p;
    r.i_ab = mutual_information(p);
    r.chi_untrusted = holevo_bound(p, false);
    r.chi_trusted = holevo_bound(p, true);
    const double su = p.beta * r.i_ab - r.chi_untrusted;
    const double st = p.beta * r.i_ab - r.chi_trusted;
    r.no_key_untrusted = su <= 0.0;
    r.no_key_trusted = st <= 0.0;
    r.k_untrusted = p.symbol_rate * std::max(0.0, su);
    r.k_trusted = p.symbol_rate * std::max(0.0, st);
    return r;
}

} // namespace cvqkd::key
