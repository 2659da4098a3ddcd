#include "arch/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace arch {

namespace {

Sample make_sample(const SyntheticSpec& spec, std::size_t id, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> len_dist(spec.len_min, spec.len_max);
    std::uniform_int_distribution<std::size_t> class_dist(0, spec.num_classes - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::size_t signal_total = spec.num_classes * spec.signal_tokens_per_class;
    std::uniform_int_distribution<std::size_t> bg_dist(signal_total,
                                                       spec.vocab_size - 1);
    std::uniform_int_distribution<std::size_t> sig_dist(0, spec.signal_tokens_per_class - 1);

    Sample s;
    s.id = id;
    const std::size_t len = len_dist(rng);
    const std::size_t intended = class_dist(rng);
    s.tokens.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
        if (unit(rng) < spec.signal_rate) {
            // Signal tokens for class c occupy [c*m, (c+1)*m).
            s.tokens.push_back(intended * spec.signal_tokens_per_class + sig_dist(rng));
        } else {
            s.tokens.push_back(bg_dist(rng));
        }
    }

    // Label = class whose signal tokens dominate the multiset; ties to the
    // smaller class index.
    std::vector<std::size_t> counts(spec.num_classes, 0);
    for (std::size_t t : s.tokens)
        if (t < signal_total) counts[t / spec.signal_tokens_per_class]++;
    s.label = static_cast<std::size_t>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());

    if (spec.label_noise > 0.0 && unit(rng) < spec.label_noise) {
        std::uniform_int_distribution<std::size_t> other(0, spec.num_classes - 2);
        std::size_t flip = other(rng);
        if (flip >= s.label) ++flip;
        s.label = flip;
    }
    s.target = static_cast<double>(s.label);
    return s;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.len_min < 1 || spec.len_max < spec.len_min)
        throw std::invalid_argument("generate_synthetic: invalid length range");
    if (spec.num_classes * spec.signal_tokens_per_class >= spec.vocab_size)
        throw std::invalid_argument("generate_synthetic: signal tokens exceed vocab");

    std::mt19937_64 rng(seed);
    Dataset ds;
    ds.vocab_size = spec.vocab_size;
    ds.num_classes = spec.num_classes;
    ds.train.reserve(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i)
        ds.train.push_back(make_sample(spec, i, rng));
    ds.test.reserve(spec.n_test);
    for (std::size_t i = 0; i < spec.n_test; ++i)
        ds.test.push_back(make_sample(spec, i, rng));
    return ds;
}

namespace {

struct RawRow {
    std::vector<std::string> words;
    std::size_t label;
};

std::vector<RawRow> read_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_tsv: cannot open " + path);
    std::vector<RawRow> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("load_tsv: " + path + ":" +
                                     std::to_string(lineno) + ": missing tab");
        RawRow row;
        std::istringstream text(line.substr(0, tab));
        std::string w;
        while (text >> w) row.words.push_back(w);
        if (row.words.empty())
            throw std::runtime_error("load_tsv: " + path + ":" +
                                     std::to_string(lineno) + ": empty text");
        try {
            row.label = std::stoul(line.substr(tab + 1));
        } catch (const std::exception&) {
            throw std::runtime_error("load_tsv: " + path + ":" +
                                     std::to_string(lineno) + ": bad label");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

Dataset load_tsv(const std::string& train_path, const std::string& test_path) {
    const auto train_rows = read_rows(train_path);
    std::vector<RawRow> test_rows;
    if (!test_path.empty()) test_rows = read_rows(test_path);

    // Vocab from the train split only; index 0 is reserved for OOV.
    std::map<std::string, std::size_t> vocab;
    for (const auto& row : train_rows)
        for (const auto& w : row.words)
            if (!vocab.count(w)) vocab[w] = vocab.size() + 1;

    auto convert = [&](const std::vector<RawRow>& rows) {
        std::vector<Sample> out;
        out.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            Sample s;
            s.id = i;
            for (const auto& w : rows[i].words) {
                auto it = vocab.find(w);
                s.tokens.push_back(it == vocab.end() ? 0 : it->second);
            }
            s.label = rows[i].label;
            s.target = static_cast<double>(rows[i].label);
            out.push_back(std::move(s));
        }
        return out;
    };

    Dataset ds;
    ds.train = convert(train_rows);
    ds.test = convert(test_rows);
    ds.vocab_size = vocab.size() + 1;
    std::size_t max_label = 0;
    for (const auto& s : ds.train) max_label = std::max(max_label, s.label);
    ds.num_classes = max_label + 1;
    return ds;
}

}  // namespace arch
