#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace cvqkd::fft {

namespace detail {

// FFTW plan creation is not thread-safe; execution via the new-array API is.
// Plans are cached per (size, direction) and created with FFTW_ESTIMATE so
// the chosen algorithm (and therefore the output bits) is reproducible.
class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache c;
        return c;
    }

    fftw_plan get(std::size_t n, int sign) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_pair(n, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::vector<std::complex<double>> dummy(n);
        auto* p = reinterpret_cast<fftw_complex*>(dummy.data());
        fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), p, p, sign,
                                          FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, plan);
        return plan;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

private:
    PlanCache() = default;
    ~PlanCache() {
        for (auto& [k, p] : plans_) fftw_destroy_plan(p);
    }
    std::mutex mutex_;
    std::map<std::pair<std::size_t, int>, fftw_plan> plans_;
};

inline void execute(std::vector<std::complex<double>>& data, int sign) {
    fftw_plan plan = PlanCache::instance().get(data.size(), sign);
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, p, p);
}

} // namespace detail

/// In-place forward DFT (no normalization).
inline void forward(std::vector<std::complex<double>>& data) {
    detail::execute(data, FFTW_FORWARD);
}

/// In-place inverse DFT, normalized by 1/N.
inline void inverse(std::vector<std::complex<double>>& data) {
    detail::execute(data, FFTW_BACKWARD);
    const double inv = 1.0 / static_cast<double>(data.size());
    for (auto& v : data) v *= inv;
}

/// Smallest power of two >= n.
inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

/// DFT bin center frequency for bin k of an n-point transform at sample_rate,
/// mapped to the signed baseband range (-fs/2, fs/2].
inline double bin_frequency(std::size_t k, std::size_t n, double sample_rate) {
    const auto kn = static_cast<double>(k);
    const auto nn = static_cast<double>(n);
    double f = kn / nn * sample_rate;
    if (kn >= nn / 2.0 && k > 0) f -= sample_rate;
    return f;
}

} // namespace cvqkd::fft
