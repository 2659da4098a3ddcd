#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace arch {

struct Sample {
    std::size_t id = 0;
    std::vector<std::size_t> tokens;  // vocab indices, nonempty
    std::size_t label = 0;            // class index (classification)
    double target = 0.0;              // real target (regression)
};

struct Dataset {
    std::vector<Sample> train;
    std::vector<Sample> test;
    std::size_t vocab_size = 0;
    std::size_t num_classes = 2;

    std::size_t n() const { return train.size(); }
};

struct SyntheticSpec {
    std::size_t n = 2000;
    std::size_t n_test = 500;
    std::size_t vocab_size = 1000;
    std::size_t len_min = 4;
    std::size_t len_max = 16;
    std::size_t num_classes = 2;
    std::size_t signal_tokens_per_class = 4;
    double signal_rate = 0.35;   // fraction of tokens drawn from the label's signal set
    double label_noise = 0.05;
};

// Planted-signal token classification task. Each class owns a disjoint set of
// signal tokens; a sample's label is whichever class's signal tokens dominate
// its token multiset, then flipped with probability `label_noise`.
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// TSV ingestion: text<TAB>label per row, whitespace tokenization, vocab built
// from the train split, OOV mapped to index 0. Sample ids follow file order.
Dataset load_tsv(const std::string& train_path, const std::string& test_path = "");

}  // namespace arch
