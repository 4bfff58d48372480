#pragma once

#include <cstdint>
#include <vector>

#include "cvqkd/errors.hpp"

namespace cvqkd {

/// Maximal-length LFSR bit source (Fibonacci form). Order 7 uses the
/// x^7 + x^6 + 1 polynomial, period 2^7 - 1.
class Prbs {
public:
    explicit Prbs(unsigned order, std::uint32_t seed = 1) : order_(order) {
        static constexpr std::uint32_t taps_by_order[] = {
            0, 0, 0x3, 0x6, 0xC, 0x14, 0x30, 0x60, 0xB8, 0x110, 0x240,
        };
        if (order < 2 || order >= sizeof(taps_by_order) / sizeof(taps_by_order[0]))
            throw ConfigError("unsupported PRBS order " + std::to_string(order));
        taps_ = taps_by_order[order];
        mask_ = (1u << order) - 1u;
        state_ = seed & mask_;
        if (state_ == 0) state_ = 1;
    }

    unsigned order() const { return order_; }
    std::uint32_t period() const { return mask_; }
    std::uint32_t state() const { return state_; }

    int next_bit() {
        std::uint32_t x = state_ & taps_;
        x ^= x >> 16;
        x ^= x >> 8;
        x ^= x >> 4;
        x ^= x >> 2;
        x ^= x >> 1;
        const int fb = static_cast<int>(x & 1u);
        state_ = ((state_ << 1) | static_cast<std::uint32_t>(fb)) & mask_;
        return fb;
    }

    std::vector<int> bits(std::size_t count) {
        std::vector<int> out(count);
        for (auto& b : out) b = next_bit();
        return out;
    }

private:
    unsigned order_;
    std::uint32_t taps_;
    std::uint32_t mask_;
    std::uint32_t state_;
};

} // namespace cvqkd
