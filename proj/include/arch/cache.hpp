#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>

#include "arch/perturb.hpp"

namespace arch {

// T_c value meaning "cache once and never refresh again".
inline constexpr std::size_t kCacheOnce = std::numeric_limits<std::size_t>::max();

// True iff epoch t is a refresh epoch (t mod T_c == 0). With T_c = kCacheOnce
// only epoch 0 refreshes.
bool should_refresh(std::size_t t, std::size_t t_cache);

// alpha * old + (1 - alpha) * fresh, elementwise.
Perturbation ema_update(const Perturbation& old_delta, const Perturbation& fresh,
                        double alpha);

// Sample-id keyed perturbation store with EMA blending on refresh writes.
class PerturbationCache {
public:
    PerturbationCache() = default;
    PerturbationCache(std::size_t t_cache, double alpha);

    std::size_t t_cache() const { return t_cache_; }
    double alpha() const { return alpha_; }

    // EMA write: first write stores the fresh value directly.
    void put(std::size_t id, const Perturbation& fresh);

    std::optional<Perturbation> get(std::size_t id) const;
    bool contains(std::size_t id) const { return entries_.count(id) > 0; }

    struct Footprint {
        std::size_t entries = 0;
        std::size_t scalars = 0;
    };
    Footprint memory_footprint() const;

    // Flat binary snapshot: magic "ARCHCACH", u32 count, then per entry
    // (u64 id, u32 rows, u32 cols, rows*cols f64). Little-endian.
    void dump(const std::string& path) const;
    static PerturbationCache load(const std::string& path);

private:
    std::map<std::size_t, Perturbation> entries_;
    std::size_t t_cache_ = 1;
    double alpha_ = 0.0;
};

}  // namespace arch
