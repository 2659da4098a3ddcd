#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "arch/experiment.hpp"

using namespace arch;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_experiment(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.set("n", "40");
    cfg.set("n_test", "10");
    cfg.set("vocab_size", "50");
    cfg.set("len_min", "3");
    cfg.set("len_max", "6");
    cfg.set("embed_dim", "6");
    cfg.set("hidden", "8");
    cfg.set("epochs", "2");
    cfg.set("batch_size", "16");
    cfg.set("pgd_steps", "2");
    cfg.set("t_cache", "2");
    cfg.out_dir = out_dir;
    return cfg;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config serialization round-trips") {
    ExperimentConfig cfg;
    cfg.set("strategy", "smart");
    cfg.set("lambda", "0.3333333333333333");
    cfg.set("t_cache", "7");
    cfg.set("alpha", "0.01");
    cfg.set("norm", "linf");
    cfg.set("init", "normal");
    cfg.set("clean_branch_grad", "false");
    cfg.set("seed", "42");
    cfg.set("out_dir", "elsewhere");
    const ExperimentConfig back = ExperimentConfig::parse(cfg.serialize());
    CHECK(back == cfg);
    CHECK(back.serialize() == cfg.serialize());
}

TEST_CASE("config accepts t_cache=inf and overrides") {
    ExperimentConfig cfg;
    cfg.set("t_cache", "inf");
    CHECK(cfg.train.t_cache == kCacheOnce);
    const ExperimentConfig back = ExperimentConfig::parse(cfg.serialize());
    CHECK(back.train.t_cache == kCacheOnce);
}

TEST_CASE("config rejects unknown keys and malformed lines") {
    ExperimentConfig cfg;
    CHECK_THROWS_AS(cfg.set("bogus_key", "1"), std::invalid_argument);
    CHECK_THROWS_AS(cfg.set("norm", "l7"), std::invalid_argument);
    CHECK_THROWS_AS(cfg.set("strategy", "mystery"), std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::parse("no_equals_here\n"), std::invalid_argument);
    // Comments and blank lines are fine.
    const ExperimentConfig ok = ExperimentConfig::parse("# comment\n\nseed=5\n");
    CHECK(ok.train.seed == 5);
}

TEST_CASE("run_experiment writes run.csv with one row per iteration") {
    TempDir dir("arch_test_run");
    ExperimentConfig cfg = tiny_experiment((dir.path / "out").string());
    cfg.set("strategy", "standard");
    const RunSummary s = run_experiment(cfg);

    const std::size_t batches = (40 + 15) / 16;
    CHECK(s.iterations == 2 * batches);
    CHECK(s.total_forward == s.iterations);
    CHECK(s.total_backward == s.iterations);

    const std::string csv = slurp(dir.path / "out" / "run.csv");
    std::istringstream in(csv);
    std::string line;
    std::size_t lines = 0;
    std::getline(in, line);
    CHECK(line == "# arch-reg v1");
    std::getline(in, line);
    CHECK(line == "iteration,fwd,bwd,grad_norm,loss,reg");
    while (std::getline(in, line))
        if (!line.empty()) ++lines;
    CHECK(lines == s.iterations);

    CHECK(fs::exists(dir.path / "out" / "summary.json"));
    CHECK(fs::exists(dir.path / "out" / "config.json"));
}

TEST_CASE("repeated runs with one seed produce byte-identical run.csv") {
    TempDir dir("arch_test_repeat");
    ExperimentConfig cfg = tiny_experiment((dir.path / "a").string());
    cfg.set("strategy", "arch");
    run_experiment(cfg);
    const std::string first = slurp(dir.path / "a" / "run.csv");
    cfg.out_dir = (dir.path / "b").string();
    run_experiment(cfg);
    const std::string second = slurp(dir.path / "b" / "run.csv");
    CHECK(first == second);
}

TEST_CASE("arch run reports the partial-cache footprint") {
    TempDir dir("arch_test_footprint");
    ExperimentConfig cfg = tiny_experiment((dir.path / "out").string());
    cfg.set("strategy", "arch");
    cfg.set("cache_fraction", "0.25");
    const RunSummary s = run_experiment(cfg);
    CHECK(s.cache_entries == 10);  // floor(40 * 0.25)
    CHECK(s.cache_scalars > 0);
}

TEST_CASE("ARCH_REG_OUT overrides the configured output directory") {
    TempDir dir("arch_test_env");
    ExperimentConfig cfg = tiny_experiment((dir.path / "ignored").string());
    const std::string target = (dir.path / "env_out").string();
    setenv("ARCH_REG_OUT", target.c_str(), 1);
    CHECK(cfg.resolved_out_dir() == fs::path(target));
    run_experiment(cfg);
    unsetenv("ARCH_REG_OUT");
    CHECK(fs::exists(fs::path(target) / "run.csv"));
    CHECK_FALSE(fs::exists(dir.path / "ignored"));
    CHECK(cfg.resolved_out_dir() == fs::path((dir.path / "ignored").string()));
}

TEST_CASE("sweep writes one row per value and seed") {
    TempDir dir("arch_test_sweep");
    ExperimentConfig cfg = tiny_experiment((dir.path / "out").string());
    cfg.set("strategy", "arch");
    cfg.set("repeats", "3");
    run_sweep(cfg, "alpha", {"0", "0.01", "0.5"});

    const std::string csv = slurp(dir.path / "out" / "sweep.csv");
    std::istringstream in(csv);
    std::string line;
    std::size_t rows = 0;
    std::getline(in, line);  // version tag
    std::getline(in, line);  // header
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 9);

    CHECK_THROWS_AS(run_sweep(cfg, "epsilon", {"0.1"}), std::invalid_argument);
}

TEST_CASE("load_tsv builds the vocab from train and maps OOV to zero") {
    TempDir dir("arch_test_tsv");
    const fs::path train = dir.path / "train.tsv";
    const fs::path test = dir.path / "test.tsv";
    std::ofstream(train) << "the cat sat\t0\n"
                            "the dog ran\t1\n"
                            "cat cat dog\t0\n";
    std::ofstream(test) << "the newword sat\t1\n";

    const Dataset ds = load_tsv(train.string(), test.string());
    REQUIRE(ds.train.size() == 3);
    REQUIRE(ds.test.size() == 1);
    CHECK(ds.num_classes == 2);
    // Distinct train words: the, cat, sat, dog, ran -> indices 1..5, 0 is OOV.
    CHECK(ds.vocab_size == 6);
    // "cat cat dog": both cats share one index.
    CHECK(ds.train[2].tokens[0] == ds.train[2].tokens[1]);
    // Unknown test word maps to 0; known ones keep their train index.
    CHECK(ds.test[0].tokens[1] == 0);
    CHECK(ds.test[0].tokens[0] == ds.train[0].tokens[0]);
    CHECK(ds.test[0].tokens[2] == ds.train[0].tokens[2]);
    // Ids follow file order.
    for (std::size_t i = 0; i < 3; ++i) CHECK(ds.train[i].id == i);
}

TEST_CASE("load_tsv reports the offending line") {
    TempDir dir("arch_test_tsv_bad");
    const fs::path bad = dir.path / "bad.tsv";
    std::ofstream(bad) << "fine line\t0\n"
                          "missing tab here\n";
    try {
        load_tsv(bad.string());
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
        CHECK(std::string(e.what()).find("missing tab") != std::string::npos);
    }
    CHECK_THROWS_AS(load_tsv((dir.path / "absent.tsv").string()), std::runtime_error);
}

TEST_CASE("synthetic data is deterministic and learnably labeled") {
    SyntheticSpec spec;
    spec.n = 100;
    spec.n_test = 20;
    spec.vocab_size = 60;
    spec.label_noise = 0.0;
    const Dataset a = generate_synthetic(spec, 5);
    const Dataset b = generate_synthetic(spec, 5);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].tokens == b.train[i].tokens);
        CHECK(a.train[i].label == b.train[i].label);
    }
    // With zero label noise the label is recoverable from signal counts.
    const std::size_t m = spec.signal_tokens_per_class;
    for (const auto& s : a.train) {
        std::vector<std::size_t> counts(spec.num_classes, 0);
        for (std::size_t t : s.tokens)
            if (t < spec.num_classes * m) counts[t / m]++;
        std::size_t best = 0;
        for (std::size_t c = 1; c < counts.size(); ++c)
            if (counts[c] > counts[best]) best = c;
        CHECK(s.label == best);
    }
    const Dataset other = generate_synthetic(spec, 6);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.train.size() && !any_diff; ++i)
        any_diff = a.train[i].tokens != other.train[i].tokens;
    CHECK(any_diff);
}

TEST_CASE("experiment dataset derives from the training seed") {
    ExperimentConfig cfg = tiny_experiment("unused");
    cfg.set("seed", "3");
    const Dataset a = cfg.make_dataset();
    const Dataset b = cfg.make_dataset();
    CHECK(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i)
        CHECK(a.train[i].tokens == b.train[i].tokens);
    cfg.set("seed", "4");
    const Dataset c = cfg.make_dataset();
    bool any_diff = false;
    for (std::size_t i = 0; i < a.train.size() && !any_diff; ++i)
        any_diff = a.train[i].tokens != c.train[i].tokens;
    CHECK(any_diff);
}

TEST_CASE("oracle suite passes") {
    CHECK(run_oracles(false));
}
