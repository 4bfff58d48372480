#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cvqkd/errors.hpp"

namespace cvqkd {

using cplx = std::complex<double>;

/// Uniformly sampled complex baseband trace. The universal signal currency:
/// amplitudes are dimensionless until SNU calibration in the estimator.
struct ComplexWaveform {
    std::vector<cplx> samples;
    double sample_rate = 0.0; // Hz

    ComplexWaveform() = default;
    ComplexWaveform(std::vector<cplx> s, double rate)
        : samples(std::move(s)), sample_rate(rate) {
        validate();
    }

    void validate() const {
        if (sample_rate <= 0.0) throw ConfigError("waveform sample_rate must be > 0");
        if (samples.empty()) throw ConfigError("waveform must hold at least one sample");
    }

    std::size_t size() const { return samples.size(); }
    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
    double nyquist() const { return sample_rate / 2.0; }

    double energy() const {
        double e = 0.0;
        for (const auto& s : samples) e += std::norm(s);
        return e;
    }

    double mean_power() const { return energy() / static_cast<double>(samples.size()); }

    ComplexWaveform& scale(double a) {
        for (auto& s : samples) s *= a;
        return *this;
    }
};

/// Paired TE/TM traces representing the polarization-multiplexed field.
struct DualPolFrame {
    ComplexWaveform te; // quantum plane
    ComplexWaveform tm; // pilot plane

    void validate() const {
        te.validate();
        tm.validate();
        if (te.sample_rate != tm.sample_rate || te.size() != tm.size())
            throw ConfigError("TE/TM traces must share sample rate and length");
    }
};

// ---------------------------------------------------------------------------
// Binary container: little-endian "CVQW" | version u32 | sample_rate f64 |
// count u64 | interleaved f64 (re, im) pairs.
// ---------------------------------------------------------------------------

namespace io {

inline constexpr std::uint32_t kContainerVersion = 1;

namespace detail {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw PipelineError("io", "truncated waveform container");
    return v;
}

inline void put_magic(std::ostream& os, const char m[4]) { os.write(m, 4); }

inline void expect_magic(std::istream& is, const char m[4], const std::string& what) {
    char buf[4];
    is.read(buf, 4);
    if (!is || std::memcmp(buf, m, 4) != 0)
        throw PipelineError("io", "bad magic, not a " + what + " container");
}

} // namespace detail

inline void write_waveform(std::ostream& os, const ComplexWaveform& w) {
    detail::put_magic(os, "CVQW");
    detail::put<std::uint32_t>(os, kContainerVersion);
    detail::put<double>(os, w.sample_rate);
    detail::put<std::uint64_t>(os, w.samples.size());
    for (const auto& s : w.samples) {
        detail::put<double>(os, s.real());
        detail::put<double>(os, s.imag());
    }
}

inline ComplexWaveform read_waveform(std::istream& is) {
    detail::expect_magic(is, "CVQW", "CVQW waveform");
    const auto version = detail::get<std::uint32_t>(is);
    if (version != kContainerVersion)
        throw PipelineError("io", "unsupported CVQW version " + std::to_string(version));
    ComplexWaveform w;
    w.sample_rate = detail::get<double>(is);
    const auto count = detail::get<std::uint64_t>(is);
    w.samples.resize(count);
    for (auto& s : w.samples) {
        const double re = detail::get<double>(is);
        const double im = detail::get<double>(is);
        s = {re, im};
    }
    w.validate();
    return w;
}

inline void save_waveform(const std::string& path, const ComplexWaveform& w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw PipelineError("io", "cannot open " + path + " for writing");
    write_waveform(os, w);
}

inline ComplexWaveform load_waveform(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw PipelineError("io", "cannot open " + path);
    return read_waveform(is);
}

/// CSV export (index, re, im) for plotting.
inline void export_csv(std::ostream& os, const ComplexWaveform& w) {
    os << "index,re,im\n";
    os.precision(17);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
        os << i << ',' << w.samples[i].real() << ',' << w.samples[i].imag() << '\n';
}

} // namespace io
} // namespace cvqkd
