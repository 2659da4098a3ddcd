#pragma once

#include <set>

#include "arch/cache.hpp"
#include "arch/data.hpp"

namespace arch {

// Mean of a sample's embedding columns, used only for neighbor search.
Tensor sentence_vector(const Sample& sample, const Tensor& w);

double cosine_sim(const Tensor& u, const Tensor& v);

// Uniform sample without replacement of floor(n*p) ids from [0, n).
std::set<std::size_t> sample_cache_set(std::size_t n, double p, std::mt19937_64& rng);

// Cached-id set plus per-uncached-sample neighbor lists, most-similar first.
struct NeighborIndex {
    std::set<std::size_t> cache_set;
    std::map<std::size_t, std::vector<std::size_t>> neighbors;

    // Audit dump, one line per uncached sample: "i: j1,j2,...,jK".
    void dump(const std::string& path) const;
};

// Exhaustive cosine top-K over the cache set for every uncached sample.
// Ties break toward the smaller id.
NeighborIndex build_neighbor_index(const std::vector<Tensor>& vectors,
                                   const std::set<std::size_t>& cache_set,
                                   std::size_t k);

// Ablation variant: neighbors drawn uniformly from the cache set.
NeighborIndex random_neighbor_index(std::size_t n,
                                    const std::set<std::size_t>& cache_set,
                                    std::size_t k, std::mt19937_64& rng);

// Perturbation for an uncached sample: every row equals the mean over its
// neighbors of each neighbor's word-level (row) mean.
Perturbation construct_perturbation(std::size_t id, const NeighborIndex& index,
                                    const PerturbationCache& cache,
                                    std::size_t sentence_len);

}  // namespace arch
