#include "arch/cache.hpp"

#include <fstream>
#include <stdexcept>

namespace arch {

bool should_refresh(std::size_t t, std::size_t t_cache) {
    if (t_cache == 0) throw std::invalid_argument("should_refresh: T_c must be >= 1");
    if (t_cache == kCacheOnce) return t == 0;
    return t % t_cache == 0;
}

Perturbation ema_update(const Perturbation& old_delta, const Perturbation& fresh,
                        double alpha) {
    if (!old_delta.values.same_shape(fresh.values))
        throw std::invalid_argument("ema_update: shape mismatch");
    Perturbation out = fresh;
    for (std::size_t i = 0; i < out.values.numel(); ++i)
        out.values.data[i] =
            alpha * old_delta.values.data[i] + (1.0 - alpha) * fresh.values.data[i];
    return out;
}

PerturbationCache::PerturbationCache(std::size_t t_cache, double alpha)
    : t_cache_(t_cache), alpha_(alpha) {
    if (t_cache_ == 0)
        throw std::invalid_argument("PerturbationCache: T_c must be >= 1");
    if (alpha_ < 0.0 || alpha_ > 1.0)
        throw std::invalid_argument("PerturbationCache: alpha must be in [0, 1]");
}

void PerturbationCache::put(std::size_t id, const Perturbation& fresh) {
    auto it = entries_.find(id);
    if (it == entries_.end()) {
        entries_.emplace(id, fresh);
    } else {
        it->second = ema_update(it->second, fresh, alpha_);
    }
}

std::optional<Perturbation> PerturbationCache::get(std::size_t id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

PerturbationCache::Footprint PerturbationCache::memory_footprint() const {
    Footprint fp;
    fp.entries = entries_.size();
    for (const auto& [id, p] : entries_) fp.scalars += p.values.numel();
    return fp;
}

namespace {

constexpr char kMagic[8] = {'A', 'R', 'C', 'H', 'C', 'A', 'C', 'H'};

template <typename T>
void write_raw(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void PerturbationCache::dump(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cache dump: cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [id, p] : entries_) {
        write_raw<std::uint64_t>(out, id);
        write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(p.values.rows()));
        write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(p.values.cols()));
        out.write(reinterpret_cast<const char*>(p.values.data.data()),
                  static_cast<std::streamsize>(p.values.numel() * sizeof(double)));
    }
}

PerturbationCache PerturbationCache::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cache load: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::string(magic, 8) != std::string(kMagic, 8))
        throw std::runtime_error("cache load: bad magic in " + path);
    PerturbationCache cache;
    const auto count = read_raw<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto id = read_raw<std::uint64_t>(in);
        const auto rows = read_raw<std::uint32_t>(in);
        const auto cols = read_raw<std::uint32_t>(in);
        Perturbation p;
        p.values = Tensor({rows, cols});
        in.read(reinterpret_cast<char*>(p.values.data.data()),
                static_cast<std::streamsize>(p.values.numel() * sizeof(double)));
        if (!in) throw std::runtime_error("cache load: truncated file " + path);
        cache.entries_.emplace(static_cast<std::size_t>(id), std::move(p));
    }
    return cache;
}

}  // namespace arch
