#include "arch/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace arch {

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad boolean value '" + v + "'");
}

std::string norm_name(NormKind k) {
    return k == NormKind::L2Sentence ? "l2" : "linf";
}
std::string init_name(InitKind k) {
    return k == InitKind::Uniform ? "uniform" : "normal";
}
std::string task_name(TaskKind k) {
    return k == TaskKind::Classification ? "classification" : "regression";
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    auto& t = train;
    if (key == "strategy") t.strategy = strategy_from_name(value);
    else if (key == "lambda") t.lambda = std::stod(value);
    else if (key == "epsilon") t.epsilon = std::stod(value);
    else if (key == "eta") t.eta = std::stod(value);
    else if (key == "pgd_steps") t.pgd_steps = std::stoul(value);
    else if (key == "epochs") t.epochs = std::stoul(value);
    else if (key == "t_cache")
        t.t_cache = value == "inf" ? kCacheOnce : std::stoul(value);
    else if (key == "alpha") t.alpha = std::stod(value);
    else if (key == "cache_fraction") t.cache_fraction = std::stod(value);
    else if (key == "neighbors") t.neighbors = std::stoul(value);
    else if (key == "random_neighbors") t.random_neighbors = parse_bool(value);
    else if (key == "batch_size") t.batch_size = std::stoul(value);
    else if (key == "learning_rate") t.learning_rate = std::stod(value);
    else if (key == "seed") t.seed = std::stoull(value);
    else if (key == "norm") {
        if (value == "l2") t.norm_kind = NormKind::L2Sentence;
        else if (value == "linf") t.norm_kind = NormKind::LinfWord;
        else throw std::invalid_argument("config: norm must be l2 or linf");
    } else if (key == "init") {
        if (value == "uniform") t.init = InitKind::Uniform;
        else if (value == "normal") t.init = InitKind::Normal;
        else throw std::invalid_argument("config: init must be uniform or normal");
    } else if (key == "task") {
        if (value == "classification") t.model.task = TaskKind::Classification;
        else if (value == "regression") t.model.task = TaskKind::Regression;
        else throw std::invalid_argument("config: task must be classification or regression");
    } else if (key == "clean_branch_grad") t.clean_branch_grad = parse_bool(value);
    else if (key == "embed_dim") t.model.embed_dim = std::stoul(value);
    else if (key == "hidden") t.model.hidden = std::stoul(value);
    else if (key == "n") synthetic.n = std::stoul(value);
    else if (key == "n_test") synthetic.n_test = std::stoul(value);
    else if (key == "vocab_size") synthetic.vocab_size = std::stoul(value);
    else if (key == "len_min") synthetic.len_min = std::stoul(value);
    else if (key == "len_max") synthetic.len_max = std::stoul(value);
    else if (key == "num_classes") synthetic.num_classes = std::stoul(value);
    else if (key == "signal_tokens") synthetic.signal_tokens_per_class = std::stoul(value);
    else if (key == "signal_rate") synthetic.signal_rate = std::stod(value);
    else if (key == "label_noise") synthetic.label_noise = std::stod(value);
    else if (key == "tsv_train") tsv_train = value;
    else if (key == "tsv_test") tsv_test = value;
    else if (key == "out_dir") out_dir = value;
    else if (key == "repeats") repeats = std::stoul(value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

std::string ExperimentConfig::serialize() const {
    std::ostringstream out;
    const auto& t = train;
    out << "strategy=" << strategy_name(t.strategy) << "\n";
    out << "lambda=" << fmt_double(t.lambda) << "\n";
    out << "epsilon=" << fmt_double(t.epsilon) << "\n";
    out << "eta=" << fmt_double(t.eta) << "\n";
    out << "pgd_steps=" << t.pgd_steps << "\n";
    out << "epochs=" << t.epochs << "\n";
    out << "t_cache=" << (t.t_cache == kCacheOnce ? "inf" : std::to_string(t.t_cache))
        << "\n";
    out << "alpha=" << fmt_double(t.alpha) << "\n";
    out << "cache_fraction=" << fmt_double(t.cache_fraction) << "\n";
    out << "neighbors=" << t.neighbors << "\n";
    out << "random_neighbors=" << (t.random_neighbors ? "true" : "false") << "\n";
    out << "batch_size=" << t.batch_size << "\n";
    out << "learning_rate=" << fmt_double(t.learning_rate) << "\n";
    out << "seed=" << t.seed << "\n";
    out << "norm=" << norm_name(t.norm_kind) << "\n";
    out << "init=" << init_name(t.init) << "\n";
    out << "task=" << task_name(t.model.task) << "\n";
    out << "clean_branch_grad=" << (t.clean_branch_grad ? "true" : "false") << "\n";
    out << "embed_dim=" << t.model.embed_dim << "\n";
    out << "hidden=" << t.model.hidden << "\n";
    out << "n=" << synthetic.n << "\n";
    out << "n_test=" << synthetic.n_test << "\n";
    out << "vocab_size=" << synthetic.vocab_size << "\n";
    out << "len_min=" << synthetic.len_min << "\n";
    out << "len_max=" << synthetic.len_max << "\n";
    out << "num_classes=" << synthetic.num_classes << "\n";
    out << "signal_tokens=" << synthetic.signal_tokens_per_class << "\n";
    out << "signal_rate=" << fmt_double(synthetic.signal_rate) << "\n";
    out << "label_noise=" << fmt_double(synthetic.label_noise) << "\n";
    out << "tsv_train=" << tsv_train << "\n";
    out << "tsv_test=" << tsv_test << "\n";
    out << "out_dir=" << out_dir << "\n";
    out << "repeats=" << repeats << "\n";
    return out.str();
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value");
        cfg.set(line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
    return serialize() == other.serialize();
}

std::filesystem::path ExperimentConfig::resolved_out_dir() const {
    if (const char* env = std::getenv("ARCH_REG_OUT"); env && *env)
        return env;
    return out_dir;
}

Dataset ExperimentConfig::make_dataset() const {
    if (!tsv_train.empty()) return load_tsv(tsv_train, tsv_test);
    // Dataset derives from the training seed, so strategies run with the
    // same seed see identical data.
    return generate_synthetic(synthetic, 9000 + train.seed);
}

namespace {

RunSummary summarize(const TrainResult& result, const ParamVector& params,
                     const Dataset& ds, double wall_sec) {
    RunSummary s;
    s.train_metric = evaluate(params, ds.train);
    s.test_metric = ds.test.empty() ? 0.0 : evaluate(params, ds.test);
    s.total_forward = result.passes.forward_count;
    s.total_backward = result.passes.backward_count;
    s.forward_avg = result.passes.forward_avg();
    s.backward_avg = result.passes.backward_avg();
    const std::size_t half = result.grad_norms.size() / 2;
    if (half >= 2) s.grad_norm_variance_half = grad_norm_variance(result.grad_norms, half);
    s.cache_entries = result.cache_footprint.entries;
    s.cache_scalars = result.cache_footprint.scalars;
    s.iterations = result.iterations;
    s.wall_time_sec = wall_sec;
    return s;
}

nlohmann::json to_json(const RunSummary& s) {
    return nlohmann::json{
        {"train_metric", s.train_metric},
        {"test_metric", s.test_metric},
        {"total_forward", s.total_forward},
        {"total_backward", s.total_backward},
        {"forward_avg", s.forward_avg},
        {"backward_avg", s.backward_avg},
        {"grad_norm_variance_half", s.grad_norm_variance_half},
        {"cache_entries", s.cache_entries},
        {"cache_scalars", s.cache_scalars},
        {"iterations", s.iterations},
        {"wall_time_sec", s.wall_time_sec},
    };
}

void write_run_csv(const std::filesystem::path& path, const TrainResult& r) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("run_experiment: cannot write " + path.string());
    out << "# arch-reg v1\n";
    out << "iteration,fwd,bwd,grad_norm,loss,reg\n";
    for (std::size_t i = 0; i < r.iterations; ++i) {
        out << i << "," << r.passes.per_iteration[i].forward << ","
            << r.passes.per_iteration[i].backward << ","
            << fmt_double(r.grad_norms[i]) << "," << fmt_double(r.loss_trace[i])
            << "," << fmt_double(r.reg_trace[i]) << "\n";
    }
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config) {
    const auto dir = config.resolved_out_dir();
    std::filesystem::create_directories(dir);
    {
        std::ofstream probe(dir / ".write_probe");
        if (!probe)
            throw std::runtime_error("run_experiment: output dir not writable: " +
                                     dir.string());
    }
    std::filesystem::remove(dir / ".write_probe");

    const Dataset ds = config.make_dataset();
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult result = train(ds, config.train);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const RunSummary summary = summarize(result, result.params, ds, wall);

    write_run_csv(dir / "run.csv", result);
    std::ofstream(dir / "summary.json") << to_json(summary).dump(2) << "\n";
    std::ofstream(dir / "config.json")
        << nlohmann::json{{"config", config.serialize()}}.dump(2) << "\n";
    return summary;
}

void run_sweep(const ExperimentConfig& base, const std::string& axis,
               const std::vector<std::string>& values) {
    static const std::map<std::string, std::string> kAxes = {
        {"alpha", "alpha"},
        {"t_cache", "t_cache"},
        {"neighbors", "neighbors"},
        {"cache_fraction", "cache_fraction"},
    };
    if (!kAxes.count(axis))
        throw std::invalid_argument("run_sweep: unknown axis '" + axis + "'");

    const auto dir = base.resolved_out_dir();
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "sweep.csv");
    if (!out) throw std::runtime_error("run_sweep: cannot write sweep.csv");
    out << "# arch-reg v1\n";
    out << "axis,value,seed,test_metric,train_metric,grad_norm_variance,"
           "total_forward,total_backward\n";

    for (const auto& value : values) {
        for (std::size_t r = 0; r < base.repeats; ++r) {
            ExperimentConfig cell = base;
            cell.set(axis, value);
            cell.train.seed = base.train.seed + r;
            const Dataset ds = cell.make_dataset();
            const TrainResult result = train(ds, cell.train);
            const RunSummary s = summarize(result, result.params, ds, 0.0);
            out << axis << "," << value << "," << cell.train.seed << ","
                << fmt_double(s.test_metric) << "," << fmt_double(s.train_metric)
                << "," << fmt_double(s.grad_norm_variance_half) << ","
                << s.total_forward << "," << s.total_backward << "\n";
        }
    }
}

bool run_oracles(bool verbose) {
    bool ok = true;
    auto report = [&](const char* name, bool pass) {
        ok = ok && pass;
        if (verbose) std::printf("[%s] %s\n", pass ? "PASS" : "FAIL", name);
    };

    // KNN: index build vs exhaustive scan, K in {1, 5}.
    {
        std::mt19937_64 rng(7);
        const std::size_t n = 200, d = 8;
        std::normal_distribution<double> g(0.0, 1.0);
        std::vector<Tensor> vecs;
        for (std::size_t i = 0; i < n; ++i) {
            Tensor v({d});
            for (auto& x : v.data) x = g(rng);
            vecs.push_back(std::move(v));
        }
        const auto cache_set = sample_cache_set(n, 0.2, rng);
        bool pass = true;
        for (std::size_t k : {std::size_t{1}, std::size_t{5}}) {
            const auto index = build_neighbor_index(vecs, cache_set, k);
            for (const auto& [i, list] : index.neighbors) {
                std::vector<std::pair<double, std::size_t>> scored;
                for (std::size_t j : cache_set)
                    scored.emplace_back(cosine_sim(vecs[i], vecs[j]), j);
                std::sort(scored.begin(), scored.end(), [](auto& a, auto& b) {
                    if (a.first != b.first) return a.first > b.first;
                    return a.second < b.second;
                });
                for (std::size_t j = 0; j < list.size(); ++j)
                    if (list[j] != scored[j].second) pass = false;
            }
        }
        report("knn exhaustive equivalence", pass);
    }

    // Gradient check on the full objective w.r.t. a delta.
    {
        std::mt19937_64 rng(11);
        ModelConfig mc;
        mc.vocab_size = 50;
        mc.embed_dim = 6;
        mc.hidden = 8;
        ParamVector params = ParamVector::init(mc, rng);
        const std::vector<std::size_t> tokens{3, 14, 7};
        Tensor x = embed(Sample{0, tokens, 0, 0.0}, params.embedding_matrix());
        Tape tape;
        ModelGraph gr = add_ffn_leaves(tape, params, false);
        NodeId xn = tape.leaf(x);
        Tensor delta(x.shape);
        std::normal_distribution<double> nd(0.0, 0.05);
        for (auto& v : delta.data) v = nd(rng);
        NodeId dn = tape.leaf(delta, true);
        NodeId pert = build_predict_from_embedding(tape, gr, mc, xn, dn);
        NodeId clean = tape.leaf(predict_from_embedding(x, nullptr, params));
        NodeId loss = tape.kl_div(clean, pert);
        const double err = tape.grad_check(loss, dn, 1e-5);
        report("finite-difference gradient check", err < 1e-4);
    }

    // Pass-count formulas.
    {
        bool pass = true;
        const auto std_cost = count_passes_expected(Strategy::Standard, 3, 15);
        pass = pass && std_cost.first == 1.0 && std_cost.second == 1.0;
        const auto smart = count_passes_expected(Strategy::Smart, 3, 15);
        pass = pass && smart.first == 4.0 && smart.second == 4.0;
        const auto r3f = count_passes_expected(Strategy::R3F, 3, 15);
        pass = pass && r3f.first == 2.0 && r3f.second == 1.0;
        const auto arch = count_passes_expected(Strategy::Arch, 3, 15);
        pass = pass && std::abs(arch.first - (2.0 + 2.0 / 15.0)) < 1e-15 &&
               std::abs(arch.second - (1.0 + 3.0 / 15.0)) < 1e-15;
        report("pass-count formulas", pass);
    }

    return ok;
}

}  // namespace arch
