#include "arch/knn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace arch {

Tensor sentence_vector(const Sample& sample, const Tensor& w) {
    if (sample.tokens.empty())
        throw std::invalid_argument("sentence_vector: empty sample");
    const std::size_t d = w.shape[0], vsz = w.shape[1];
    Tensor v({d});
    for (std::size_t tok : sample.tokens) {
        if (tok >= vsz) throw std::out_of_range("sentence_vector: token out of range");
        for (std::size_t k = 0; k < d; ++k) v.data[k] += w.data[k * vsz + tok];
    }
    const double inv = 1.0 / static_cast<double>(sample.tokens.size());
    for (auto& x : v.data) x *= inv;
    return v;
}

double cosine_sim(const Tensor& u, const Tensor& v) {
    if (!u.same_shape(v))
        throw std::invalid_argument("cosine_sim: dimension mismatch");
    const double nu = l2_norm(u.data), nv = l2_norm(v.data);
    if (nu <= 1e-12 || nv <= 1e-12)
        throw std::invalid_argument("cosine_sim: zero-norm vector");
    return dot(u.data, v.data) / (nu * nv);
}

std::set<std::size_t> sample_cache_set(std::size_t n, double p, std::mt19937_64& rng) {
    if (p <= 0.0 || p > 1.0)
        throw std::invalid_argument("sample_cache_set: p must be in (0, 1]");
    const std::size_t m = static_cast<std::size_t>(static_cast<double>(n) * p);
    if (m == 0)
        throw std::invalid_argument("sample_cache_set: floor(n*p) is zero");

    // Partial Fisher-Yates over the id range.
    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i;
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> dist(i, n - 1);
        std::swap(ids[i], ids[dist(rng)]);
    }
    return std::set<std::size_t>(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(m));
}

void NeighborIndex::dump(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("index dump: cannot open " + path);
    for (const auto& [i, list] : neighbors) {
        out << i << ":";
        for (std::size_t j = 0; j < list.size(); ++j)
            out << (j ? "," : " ") << list[j];
        out << "\n";
    }
}

NeighborIndex build_neighbor_index(const std::vector<Tensor>& vectors,
                                   const std::set<std::size_t>& cache_set,
                                   std::size_t k) {
    if (k < 1) throw std::invalid_argument("build_neighbor_index: K must be >= 1");
    if (cache_set.empty())
        throw std::invalid_argument("build_neighbor_index: empty cache set");

    NeighborIndex index;
    index.cache_set = cache_set;
    const std::vector<std::size_t> cached(cache_set.begin(), cache_set.end());

    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (cache_set.count(i)) continue;
        std::vector<std::pair<double, std::size_t>> scored;
        scored.reserve(cached.size());
        for (std::size_t j : cached)
            scored.emplace_back(cosine_sim(vectors[i], vectors[j]), j);
        // Descending similarity, ties to the smaller id.
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        const std::size_t take = std::min(k, scored.size());
        std::vector<std::size_t> list(take);
        for (std::size_t j = 0; j < take; ++j) list[j] = scored[j].second;
        index.neighbors.emplace(i, std::move(list));
    }
    return index;
}

NeighborIndex random_neighbor_index(std::size_t n,
                                    const std::set<std::size_t>& cache_set,
                                    std::size_t k, std::mt19937_64& rng) {
    if (k < 1) throw std::invalid_argument("random_neighbor_index: K must be >= 1");
    if (cache_set.empty())
        throw std::invalid_argument("random_neighbor_index: empty cache set");

    NeighborIndex index;
    index.cache_set = cache_set;
    const std::vector<std::size_t> cached(cache_set.begin(), cache_set.end());
    const std::size_t take = std::min(k, cached.size());

    for (std::size_t i = 0; i < n; ++i) {
        if (cache_set.count(i)) continue;
        std::vector<std::size_t> pool = cached;
        for (std::size_t j = 0; j < take; ++j) {
            std::uniform_int_distribution<std::size_t> dist(j, pool.size() - 1);
            std::swap(pool[j], pool[dist(rng)]);
        }
        index.neighbors.emplace(i, std::vector<std::size_t>(
                                       pool.begin(),
                                       pool.begin() + static_cast<std::ptrdiff_t>(take)));
    }
    return index;
}

Perturbation construct_perturbation(std::size_t id, const NeighborIndex& index,
                                    const PerturbationCache& cache,
                                    std::size_t sentence_len) {
    auto it = index.neighbors.find(id);
    if (it == index.neighbors.end())
        throw std::invalid_argument("construct_perturbation: sample " +
                                    std::to_string(id) + " has no neighbor list");
    const auto& neigh = it->second;
    if (neigh.empty())
        throw std::invalid_argument("construct_perturbation: empty neighbor list");

    std::vector<double> row;
    NormKind norm_kind = NormKind::L2Sentence;
    for (std::size_t j : neigh) {
        const auto entry = cache.get(j);
        if (!entry)
            throw std::logic_error("construct_perturbation: neighbor " +
                                   std::to_string(j) + " missing from cache");
        const Tensor& dj = entry->values;
        norm_kind = entry->norm_kind;
        const std::size_t rows = dj.rows(), cols = dj.cols();
        if (row.empty()) row.assign(cols, 0.0);
        for (std::size_t c = 0; c < cols; ++c) {
            double mean = 0.0;
            for (std::size_t r = 0; r < rows; ++r) mean += dj.at(r, c);
            row[c] += mean / static_cast<double>(rows);
        }
    }
    const double inv = 1.0 / static_cast<double>(neigh.size());
    for (auto& v : row) v *= inv;

    Perturbation out;
    out.norm_kind = norm_kind;
    out.values = Tensor({sentence_len, row.size()});
    for (std::size_t r = 0; r < sentence_len; ++r)
        std::copy(row.begin(), row.end(),
                  out.values.data.begin() + static_cast<std::ptrdiff_t>(r * row.size()));
    return out;
}

}  // namespace arch
