#pragma once

#include <cmath>

#include "cvqkd/errors.hpp"

namespace cvqkd::plan {

struct RadioPlan {
    unsigned macro_cells = 4000;
    unsigned sectors_per_macro = 3;
    unsigned beams_per_sector = 5;
    double rate_per_beam = 20e9;        // bits/s
    unsigned small_cells_per_sector = 4;
    double rate_per_small_cell = 100e9; // bits/s
    double reach_km = 20.0;

    double macro_site_rate() const {
        return static_cast<double>(sectors_per_macro) * static_cast<double>(beams_per_sector)
               * rate_per_beam;
    }
    unsigned small_cells() const {
        return macro_cells * sectors_per_macro * small_cells_per_sector;
    }
    unsigned total_sites() const { return macro_cells + small_cells(); }

    void validate() const {
        if (rate_per_beam < 0.0 || rate_per_small_cell < 0.0)
            throw ConfigError("plan: rates must be >= 0");
    }
};

struct KeyPolicy {
    double aes_key_bits = 256.0;
    double chunk_size_bytes = 64e9;     // AES rekey after each chunk
    double nominal_key_rate = 10e6;     // bits/s delivered by the QKD system
    double buffer_size_bits = 200e6;
    double sync_time_s = 5.0;           // retuning + resynchronization per hop

    void validate() const {
        if (chunk_size_bytes <= 0.0) throw ConfigError("plan: chunk_size must be > 0");
        if (buffer_size_bits <= 0.0) throw ConfigError("plan: buffer_size must be > 0");
        if (aes_key_bits <= 0.0) throw ConfigError("plan: aes_key_bits must be > 0");
    }
};

/// Key consumption of one site: one fresh AES key per transmitted chunk.
inline double site_consumption(double data_rate, const KeyPolicy& policy) {
    policy.validate();
    if (data_rate < 0.0) throw ConfigError("plan: data_rate must be >= 0");
    return data_rate / (8.0 * policy.chunk_size_bytes) * policy.aes_key_bits;
}

/// Aggregate secure-key demand over all macro sites and small cells.
inline double aggregate_demand(const RadioPlan& plan, const KeyPolicy& policy) {
    plan.validate();
    return static_cast<double>(plan.macro_cells)
               * site_consumption(plan.macro_site_rate(), policy)
           + static_cast<double>(plan.small_cells())
                 * site_consumption(plan.rate_per_small_cell, policy);
}

struct BufferReport {
    double erosion_fraction = 0.0;
    double cycle_time_s = 0.0;
    double slot_time_s = 0.0;
    bool feasible = false;
    double deficit = 0.0;         // consumption excess when infeasible, bits/s
    unsigned iterations = 0;
};

/// Time-shared head-end, round-robin over n_sites. Each visit tops the site
/// buffer up at the nominal key rate and costs an extra synchronization
/// window; the buffer then erodes at the site's consumption rate until the
/// next visit. The reported erosion is the steady-state fixed point.
inline BufferReport buffer_dynamics(double site_rate, const KeyPolicy& policy,
                                    unsigned n_sites) {
    policy.validate();
    if (n_sites < 1) throw ConfigError("plan: n_sites must be >= 1");
    BufferReport r;
    if (site_rate >= policy.nominal_key_rate) {
        r.feasible = false;
        r.deficit = site_rate - policy.nominal_key_rate;
        r.erosion_fraction = 1.0;
        return r;
    }
    r.slot_time_s = policy.buffer_size_bits / policy.nominal_key_rate + policy.sync_time_s;
    r.cycle_time_s = static_cast<double>(n_sites) * r.slot_time_s;

    // fixed-point iteration on the erosion fraction; the refill model fills
    // the full buffer each visit, so the map is a contraction onto one value
    double e = 0.5;
    for (unsigned it = 0; it < 64; ++it) {
        const double next = site_rate * r.cycle_time_s / policy.buffer_size_bits;
        r.iterations = it + 1;
        if (std::fabs(next - e) < 1e-12) {
            e = next;
            break;
        }
        e = next;
    }
    r.erosion_fraction = e;
    r.feasible = e < 1.0;
    return r;
}

} // namespace cvqkd::plan
