#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "cvqkd/filters.hpp"
#include "cvqkd/prbs.hpp"
#include "cvqkd/spectrum.hpp"
#include "cvqkd/waveform.hpp"

using namespace cvqkd;

namespace {

ComplexWaveform make_tone(double freq, double fs, std::size_t n, double amp = 1.0) {
    std::vector<cplx> s(n);
    for (std::size_t k = 0; k < n; ++k)
        s[k] = std::polar(amp, 2.0 * std::numbers::pi * freq * static_cast<double>(k) / fs);
    return ComplexWaveform{std::move(s), fs};
}

// integer number of cycles in the window: the DFT holds a single clean line
double bin_aligned(double freq, double fs, std::size_t n) {
    const double df = fs / static_cast<double>(n);
    return std::round(freq / df) * df;
}

ComplexWaveform make_noise(double fs, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<cplx> s(n);
    for (auto& v : s) v = cplx{g(rng), g(rng)};
    return ComplexWaveform{std::move(s), fs};
}

} // namespace

TEST_CASE("raised cosine matches the analytic roll-off points", "[sigcore]") {
    const double rq = 500e6, alpha = 0.5;
    CHECK(raised_cosine_response(0.25 * rq, rq, alpha) == Catch::Approx(1.0).margin(1e-12));
    CHECK(raised_cosine_response(0.75 * rq, rq, alpha) == Catch::Approx(0.0).margin(1e-12));
    CHECK(raised_cosine_response(0.50 * rq, rq, alpha) == Catch::Approx(0.5).margin(1e-12));
    // passband flat and stopband zero for arbitrary alpha
    CHECK(raised_cosine_response(0.0, rq, 0.2) == 1.0);
    CHECK(raised_cosine_response(0.61 * rq, rq, 0.2) == 0.0);
}

TEST_CASE("raised cosine rejects invalid parameters", "[sigcore]") {
    CHECK_THROWS_AS(raised_cosine_response(0.0, -1.0, 0.5), ConfigError);
    CHECK_THROWS_AS(raised_cosine_response(0.0, 1e6, 0.0), ConfigError);
    CHECK_THROWS_AS(raised_cosine_response(0.0, 1e6, 1.5), ConfigError);
}

TEST_CASE("raised cosine is even and non-increasing in |f|", "[sigcore]") {
    const double rq = 250e6, alpha = 0.35;
    double prev = 2.0;
    for (int i = 0; i <= 200; ++i) {
        const double f = static_cast<double>(i) * rq / 200.0;
        const double h = raised_cosine_response(f, rq, alpha);
        CHECK(raised_cosine_response(-f, rq, alpha) == Catch::Approx(h).margin(1e-15));
        CHECK(h <= prev + 1e-12);
        prev = h;
    }
}

TEST_CASE("brickwall low-pass separates in-band and out-of-band tones", "[sigcore]") {
    const double fs = 10e9, bfil = 1e9;
    FilterSpec spec{FilterKind::BrickwallLowPass, 0.0, 0.5, bfil};

    auto in_band = make_tone(bin_aligned(0.9 * bfil, fs, 4096), fs, 4096);
    auto kept = apply_filter(in_band, spec);
    CHECK(kept.energy() / in_band.energy() >= 0.999);

    auto out_band = make_tone(bin_aligned(1.1 * bfil, fs, 4096), fs, 4096);
    auto removed = apply_filter(out_band, spec);
    CHECK(removed.energy() / out_band.energy() <= 1e-6);
}

TEST_CASE("brickwall at or above Nyquist is a flagged no-op", "[sigcore]") {
    auto w = make_noise(2e9, 1000, 7);
    FilterSpec spec{FilterKind::BrickwallLowPass, 0.0, 0.5, 1e9};
    bool noop = false;
    auto out = apply_filter(w, spec, &noop);
    CHECK(noop);
    for (std::size_t k = 0; k < w.size(); ++k)
        CHECK(out.samples[k] == w.samples[k]);
}

TEST_CASE("gain-bounded filtering never increases energy", "[sigcore]") {
    auto w = make_noise(5e9, 3000, 42);
    const double e0 = w.energy();
    for (double cutoff : {0.3e9, 1.0e9, 2.4e9}) {
        FilterSpec spec{FilterKind::Gaussian, 0.0, 0.5, cutoff};
        auto out = apply_filter(w, spec);
        CHECK(out.energy() <= e0 * (1.0 + 1e-9));
    }
}

TEST_CASE("resample identity and integer decimation are exact", "[sigcore]") {
    auto w = make_noise(20e9, 8000, 3);
    auto same = resample(w, 20e9, 0.0);
    CHECK(same.samples == w.samples);

    auto dec = resample(w, 250e6, 0.0); // 80:1
    REQUIRE(dec.size() == w.size() / 80);
    for (std::size_t k = 0; k < dec.size(); ++k)
        CHECK(dec.samples[k] == w.samples[80 * k]);
}

TEST_CASE("resample offset rotates a tone by 2 pi f tau", "[sigcore]") {
    const double fs = 8e9, tau = 31e-12;
    const double f = bin_aligned(1.1e9, fs, 4096);
    auto w = make_tone(f, fs, 4096);
    auto shifted = resample(w, fs / 2.0, tau);
    // compare against the directly evaluated tone at the shifted instants
    for (std::size_t k = 100; k < 110; ++k) {
        const double t = static_cast<double>(k) / (fs / 2.0) + tau;
        const cplx ref = std::polar(1.0, 2.0 * std::numbers::pi * f * t);
        CHECK(std::abs(shifted.samples[k] - ref) < 1e-6);
    }
    const double expected = 2.0 * std::numbers::pi * f * tau;
    const cplx base = w.samples[0];
    const cplx rot = shifted.samples[0];
    CHECK(std::arg(rot / base) == Catch::Approx(expected).epsilon(1e-6));
}

TEST_CASE("band-limited up-down resampling round-trips", "[sigcore]") {
    // strictly band-limited signal: noise through a brickwall at fs/8
    auto w = make_noise(4e9, 4096, 11);
    w = apply_filter(w, FilterSpec{FilterKind::BrickwallLowPass, 0.0, 0.5, 0.4e9});
    auto up = resample(w, 8e9, 0.0);
    auto back = resample(up, 4e9, 0.0);
    REQUIRE(back.size() >= w.size() - 1);
    double err = 0.0, ref = 0.0;
    // guard 1% at each end against transform wrap
    const std::size_t g = w.size() / 100;
    for (std::size_t k = g; k + g < back.size() && k < w.size(); ++k) {
        err += std::norm(back.samples[k] - w.samples[k]);
        ref += std::norm(w.samples[k]);
    }
    CHECK(std::sqrt(err / ref) < 1e-6);
}

TEST_CASE("resample validates inputs", "[sigcore]") {
    auto w = make_noise(1e9, 64, 1);
    CHECK_THROWS_AS(resample(w, -1.0, 0.0), ConfigError);
    CHECK_THROWS_AS(resample(w, 1e9, 2e-9), ConfigError);
}

TEST_CASE("waveform container round-trips bit-exactly", "[sigcore]") {
    auto w = make_noise(20e9, 257, 99);
    std::stringstream ss;
    io::write_waveform(ss, w);
    auto back = io::read_waveform(ss);
    CHECK(back.sample_rate == w.sample_rate);
    REQUIRE(back.size() == w.size());
    for (std::size_t k = 0; k < w.size(); ++k)
        CHECK(back.samples[k] == w.samples[k]);
}

TEST_CASE("csv export emits one row per sample", "[sigcore]") {
    auto w = make_tone(1e6, 1e9, 5);
    std::stringstream ss;
    io::export_csv(ss, w);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(ss, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 6); // header + 5 samples
}

TEST_CASE("waveform invariants are enforced", "[sigcore]") {
    CHECK_THROWS_AS(ComplexWaveform({}, 1e9).validate(), ConfigError);
    CHECK_THROWS_AS(ComplexWaveform({cplx{1, 0}}, 0.0), ConfigError);
    auto w = make_tone(1e6, 1e9, 16, 2.0);
    CHECK(w.energy() == Catch::Approx(16.0 * 4.0));
}

TEST_CASE("prbs-7 visits every nonzero state once per period", "[sigcore]") {
    Prbs p(7, 1);
    std::vector<std::uint32_t> states;
    for (int i = 0; i < 127; ++i) {
        states.push_back(p.state());
        p.next_bit();
    }
    CHECK(p.state() == states.front());
    std::sort(states.begin(), states.end());
    CHECK(std::adjacent_find(states.begin(), states.end()) == states.end());
    CHECK(states.front() >= 1);
    CHECK(states.back() <= 127);
    CHECK(states.size() == 127);
}
