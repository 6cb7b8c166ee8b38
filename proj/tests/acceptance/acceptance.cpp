// Acceptance runner: one PASS / FAIL / SKIP line per criterion.
//
//   acceptance                 run every criterion
//   acceptance --criterion N   run one; exit 0 pass, 1 fail, 77 skip
//
// Criteria 9 and 10 need the public alcoholism corpus in OMAD_UCI_DIR.

#include "checks.hpp"

#include "omad/dataset.hpp"
#include "omad/dsp.hpp"
#include "omad/eval.hpp"
#include "omad/featsel.hpp"
#include "omad/pipeline.hpp"
#include "omad/prune.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

using namespace omad;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status;
    std::string detail;
};

Outcome pass(std::string d) { return {Status::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::Fail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::Skip, std::move(d)}; }
Outcome verdict(bool ok, std::string d) { return {ok ? Status::Pass : Status::Fail, std::move(d)}; }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ------------------------------------------------------- property checks ---

Outcome gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    std::map<std::string, double> worst;
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (const auto& c : testing::grad_cases(seed)) {
            BasicNetwork<double> net(c.specs, seed * 31 + 7);
            Rng rng(seed);
            const auto x = testing::gaussian_batch(6, c.input_width, rng);
            const auto y = testing::random_labels(6, static_cast<int>(net.output_width()), rng);
            const auto rep = testing::gradient_check(net, x, y);
            worst[c.kind] = std::max(worst[c.kind], rep.max_rel_error);
            checked += rep.checked;
        }
    }
    const double secs = seconds_since(t0);
    double max_err = 0.0;
    std::string detail;
    for (const auto& [kind, err] : worst) {
        max_err = std::max(max_err, err);
        detail += fmt("%s %.2e, ", kind.c_str(), err);
    }
    detail += fmt("%zu parameters over 20 seeds in %.1f s", checked, secs);
    return verdict(max_err < 1e-4 && secs < 60.0, detail);
}

Outcome mask_exactness() {
    Rng rng(2024);
    std::normal_distribution<float> d(0.0f, 1.0f);
    std::size_t cases = 0;
    for (std::size_t n : {10u, 100u, 4097u}) {
        for (double s : {0.0, 0.25, 0.5, 0.9}) {
            for (int rep = 0; rep < 10; ++rep) {
                std::vector<float> w(n);
                for (auto& v : w) {
                    v = d(rng);
                }
                const auto m = compute_mask(w, s);
                const auto zeros = static_cast<std::size_t>(std::count(m.keep.begin(), m.keep.end(), 0));
                const auto expect = static_cast<std::size_t>(std::floor(s * static_cast<double>(n)));
                if (zeros != expect) {
                    return fail(fmt("n=%zu s=%.2f: %zu zeros, expected %zu", n, s, zeros, expect));
                }
                ++cases;
            }
        }
    }
    return pass(fmt("%zu randomized masks with exact cardinality", cases));
}

Outcome sparse_dense_equivalence() {
    Rng rng(77);
    float worst = 0.0f;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto net = testing::random_pruned_net(1000 + seed);
        const auto x = testing::float_batch(64, net.input_width(), rng);
        const auto reference = forward(net, x, Mode::Eval).output;
        worst = std::max(worst, (sparse_forward(net, x) - reference).cwiseAbs().maxCoeff());
    }
    return verdict(worst <= 1e-6f, fmt("max |sparse - dense| = %.3e over 50 nets", static_cast<double>(worst)));
}

Outcome pruned_weight_persistence() {
    Rng rng(5);
    std::normal_distribution<float> noise(0.0f, 1.0f);
    const std::size_t n = 512;
    Mat<float> x(static_cast<Eigen::Index>(n), 24);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<int>(i % 2);
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            x(static_cast<Eigen::Index>(i), j) = noise(rng) + (y[i] ? 0.5f : -0.5f);
        }
    }
    auto net = main_mlp(24, 0.4, 3, {64, 32, 16});
    TrainConfig cfg;
    cfg.batch_size = 32;
    const long per_epoch = static_cast<long>(n / cfg.batch_size);
    const long end_step = 160;
    cfg.epochs = static_cast<int>((end_step + 500 + per_epoch - 1) / per_epoch);
    PruningCallback pruner(PruningSchedule{0.0, 0.5, 40, end_step, 20});
    long last = 0;
    train(net, x, y, cfg, [&](long step, Network& n) {
        pruner(step, n);
        last = step;
    });
    std::size_t masked = 0, nonzero = 0;
    for (auto i : net.weight_layers()) {
        const auto& p = net.params(i);
        for (Eigen::Index k = 0; k < p.mask.size(); ++k) {
            if (p.mask.data()[k] == 0.0f) {
                ++masked;
                nonzero += p.weight.data()[k] != 0.0f;
            }
        }
    }
    return verdict(last - end_step >= 500 && masked > 0 && nonzero == 0,
                   fmt("%ld steps after end_step, %zu masked weights, %zu non-zero", last - end_step, masked,
                       nonzero));
}

Outcome serialization() {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto net = testing::random_pruned_net(seed);
        for (auto enc : {Encoding::Dense, Encoding::Sparse, Encoding::Auto}) {
            const auto back = deserialize(serialize(net, enc));
            for (auto i : net.weight_layers()) {
                const auto& a = net.params(i);
                const auto& b = back.params(i);
                if (std::memcmp(a.weight.data(), b.weight.data(), sizeof(float) * static_cast<std::size_t>(a.weight.size())) !=
                        0 ||
                    a.bias != b.bias) {
                    return fail(fmt("round trip differs for net %llu", static_cast<unsigned long long>(seed)));
                }
            }
        }
    }
    Network layer({LayerSpec::dense(100, 100), LayerSpec::softmax(100)}, 1);
    const auto dense = serialize(layer, Encoding::Dense).size();
    prune_network(layer, 0.5);
    const auto sparse = serialize(layer, Encoding::Sparse).size();
    const std::size_t header = dense - 40000;
    const std::size_t sparse_payload = sparse - header;
    const double reduction = 1.0 - static_cast<double>(sparse_payload) / 40000.0;
    return verdict(sparse_payload == 21250 && sparse_payload_bytes(10000, 5000) == 21250,
                   fmt("round trips exact; 10,000 weights at 50%%: %zu vs 40000 payload bytes (%.1f%% smaller)",
                       sparse_payload, 100.0 * reduction));
}

Outcome windowing_and_parser() {
    const std::vector<double> signal(1280, 0.0);
    const auto windows = make_windows(signal, {128, 0.8});
    const auto rec = parse_rd("# co2a0000364.rd\n"
                              "# 120 trials, 64 chans, 416 samples 368 post_stim samples\n"
                              "# 3.906000 msecs uV\n"
                              "# S1 obj , trial 0\n"
                              "# FP1 chan 0\n"
                              "0 FP1 0 -8.921\n"
                              "0 FP1 1 -8.433\n"
                              "0 FP1 2 -2.574\n"
                              "0 FP1 3 5.239\n");
    const bool fields = rec.subject_id == "co2a0000364" && rec.group == Group::Alcoholic &&
                        rec.condition == Condition::S1Obj && rec.trial_number == 0 && rec.declared_trials == 120 &&
                        rec.declared_channels == 64 && rec.declared_samples == 416 &&
                        rec.channels == std::vector<std::string>{"FP1"} &&
                        rec.data[0] == std::vector<double>{-8.921, -8.433, -2.574, 5.239};
    return verdict(windows.size() == 47 && fields,
                   fmt("%zu windows; example recording fields %s", windows.size(), fields ? "match" : "differ"));
}

Outcome schedule() {
    const PruningSchedule s{0.0, 0.5, 0, 100, 10};
    const PruningSchedule t{0.2, 0.8, 10, 90, 10};
    const double mid = sparsity_at(50, s);
    const bool ok = sparsity_at(0, s) == 0.0 && sparsity_at(100, s) == 0.5 && std::abs(mid - 0.4375) < 1e-12 &&
                    sparsity_at(10, t) == 0.2 && sparsity_at(90, t) == 0.8;
    return verdict(ok, fmt("boundaries s_i/s_f exact, midpoint %.4f", mid));
}

Outcome feature_selection() {
    const std::vector<double> a{1, 2, 3, 4, 5};
    const std::vector<double> b{2, 3, 4, 5, 6};
    const auto r = welch_t(a, b);
    FeatureMatrix m;
    m.columns = {"A", "A_copy"};
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) {
        const double v = std::sin(1.7 * i) + (i % 2);
        m.rows.push_back({v, v});
        m.group_labels.emplace_back();
        m.artifact_labels.emplace_back();
        m.source_ids.push_back("s");
        m.trial_numbers.push_back(i);
        labels.push_back(i % 2);
    }
    const auto sel = select_features(m, labels, 0.9, 1.0);
    const bool dup = sel.kept_indices == std::vector<std::size_t>{0} &&
                     sel.dropped_by_correlation == std::vector<std::size_t>{1};
    return verdict(r.t == -1.0 && r.df == 8.0 && dup,
                   fmt("t = %.4f, df = %.1f, p = %.6f; duplicate column %s", r.t, r.df, r.p,
                       dup ? "dropped" : "kept"));
}

// --------------------------------------------------- desk-scale results ---

std::optional<std::string> uci_dir() {
    const char* dir = std::getenv("OMAD_UCI_DIR");
    if (dir == nullptr || *dir == '\0' || !std::filesystem::is_directory(dir)) {
        return std::nullopt;
    }
    return std::string(dir);
}

PipelineConfig uci_config(const std::string& dir, std::uint64_t seed) {
    auto cfg = config_from_json(nlohmann::json::object());
    cfg.data.main_dir = dir;
    cfg.seed = seed;
    return cfg;
}

struct SettingRun {
    std::map<std::pair<Setting, BaselineModel>, double> accuracy;
};

SettingRun run_settings(const PipelineConfig& cfg, const std::vector<Setting>& settings,
                        const std::vector<BaselineModel>& models) {
    const auto data = prepare_main_data(cfg);
    const auto sp = split_windows(data, cfg);
    const auto det = train_artifact_detector(load_or_generate_artifacts(cfg), cfg, false);
    const auto tags = tag_windows(det.dense.net, kArtifactSampleRate, data, cfg.artifact.channel_fraction_threshold);
    SettingRun out;
    for (auto s : settings) {
        for (const auto& r : run_setting(s, {&data, &sp, &tags}, models, cfg)) {
            out.accuracy[{s, r.model == "RF" ? BaselineModel::RF : r.model == "SVM" ? BaselineModel::SVM
                                                                                    : BaselineModel::MLP7}] =
                r.accuracy;
        }
    }
    return out;
}

Outcome table_reproduction() {
    const auto dir = uci_dir();
    if (!dir) {
        return skip("public alcoholism corpus not available (set OMAD_UCI_DIR)");
    }
    const auto t0 = std::chrono::steady_clock::now();
    double mlp = 0.0, rf = 0.0, svm = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto run = run_settings(uci_config(*dir, seed), {Setting::AllFeaturesWithRemoval},
                                      {BaselineModel::RF, BaselineModel::SVM, BaselineModel::MLP7});
        mlp += run.accuracy.at({Setting::AllFeaturesWithRemoval, BaselineModel::MLP7}) / 3.0;
        rf += run.accuracy.at({Setting::AllFeaturesWithRemoval, BaselineModel::RF}) / 3.0;
        svm += run.accuracy.at({Setting::AllFeaturesWithRemoval, BaselineModel::SVM}) / 3.0;
    }
    const double minutes = seconds_since(t0) / 60.0;
    const bool ok = std::abs(100.0 * mlp - 84.88) <= 6.0 && std::abs(100.0 * rf - 78.87) <= 6.0 &&
                    std::abs(100.0 * svm - 71.20) <= 6.0 && minutes < 30.0;
    return verdict(ok, fmt("setting 2 mean of 3 seeds: MLP7 %.2f%%, RF %.2f%%, SVM %.2f%% in %.1f min", 100.0 * mlp,
                           100.0 * rf, 100.0 * svm, minutes));
}

Outcome setting_ordering() {
    const auto dir = uci_dir();
    if (!dir) {
        return skip("public alcoholism corpus not available (set OMAD_UCI_DIR)");
    }
    double mlp1 = 0.0, mlp2 = 0.0, rf1 = 0.0, rf3 = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto cfg = uci_config(*dir, seed);
        const auto run = run_settings(cfg,
                                      {Setting::AllFeaturesNoRemoval, Setting::AllFeaturesWithRemoval,
                                       Setting::SelectedFeaturesWithRemoval},
                                      {BaselineModel::RF, BaselineModel::MLP7});
        mlp1 += run.accuracy.at({Setting::AllFeaturesNoRemoval, BaselineModel::MLP7});
        mlp2 += run.accuracy.at({Setting::AllFeaturesWithRemoval, BaselineModel::MLP7});
        rf1 += run.accuracy.at({Setting::AllFeaturesNoRemoval, BaselineModel::RF});
        rf3 += run.accuracy.at({Setting::SelectedFeaturesWithRemoval, BaselineModel::RF});
    }
    return verdict(mlp2 >= mlp1 && rf3 >= rf1,
                   fmt("MLP7 setting 1 %.2f%% -> setting 2 %.2f%%; RF setting 1 %.2f%% -> setting 3 %.2f%%",
                       100.0 * mlp1 / 3, 100.0 * mlp2 / 3, 100.0 * rf1 / 3, 100.0 * rf3 / 3));
}

// Synthetic stand-in for the main corpus used by criteria 11 to 14.
PipelineConfig synthetic_config(const std::string& type, std::uint64_t seed) {
    auto cfg = config_from_json(nlohmann::json::object());
    cfg.seed = seed;
    cfg.model.type = type;
    cfg.data.synthetic.subjects_per_group = 5;
    cfg.data.synthetic.trials_per_subject = 10;
    cfg.data.synthetic.channels = 16;
    cfg.data.synthetic.group_effect = 1.0;
    cfg.data.synthetic.artifact_fraction = 0.0;
    cfg.training.epochs = type == "cnn" ? 20 : 150;
    return cfg;
}

MainTraining train_synthetic(const PipelineConfig& cfg, bool with_pruning) {
    const auto data = prepare_main_data(cfg);
    const auto sp = split_windows(data, cfg);
    return train_main(sp.train, sp.test, data.channels.size(), cfg, with_pruning);
}

Outcome pruning_cost() {
    std::string detail;
    bool ok = true;
    for (const std::string type : {"mlp", "cnn"}) {
        double dense = 0.0, pruned = 0.0;
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const auto res = train_synthetic(synthetic_config(type, seed), true);
            dense += res.dense.metrics.accuracy / 3.0;
            pruned += res.pruned->metrics.accuracy / 3.0;
        }
        const double drop = 100.0 * (dense - pruned);
        ok = ok && drop <= 3.0;
        detail += fmt("%s %.2f%% -> %.2f%% (drop %.2f pts); ", type == "mlp" ? "MLP7" : "CNN", 100.0 * dense,
                      100.0 * pruned, drop);
    }
    detail += "synthetic corpus, 3 seeds";
    return verdict(ok, detail);
}

Outcome size_reduction() {
    std::string detail;
    bool ok = true;
    for (const std::string type : {"mlp", "cnn"}) {
        auto cfg = synthetic_config(type, 0);
        cfg.training.epochs = 5;
        cfg.pruning.fine_tune_epochs = 5;
        const auto res = train_synthetic(cfg, true);
        const auto dense = res.dense.size_bytes;
        const auto sparse = res.pruned->size_bytes;
        const double reduction = 1.0 - static_cast<double>(sparse) / static_cast<double>(dense);
        ok = ok && sparse < dense && reduction >= 0.35;
        detail += fmt("%s %zu -> %zu bytes (%.1f%% smaller); ", type == "mlp" ? "MLP7" : "CNN", dense, sparse,
                      100.0 * reduction);
    }
    detail.resize(detail.size() - 2);
    return verdict(ok, detail);
}

struct Timed {
    LatencyReport dense;
    LatencyReport sparse;
};

// Benchmarks dense and sparse backends on the same pruned network, repeating
// (up to 3 attempts) while either run fails the IQR/median stability gate.
Timed bench_pair(const Network& trained, double sparsity) {
    Network net = trained;
    prune_network(net, sparsity);
    const auto batch = bench_batch(net.input_width());
    const InferenceModel dense(trained, InferenceModel::Backend::Dense);
    const InferenceModel sparse(net, InferenceModel::Backend::Sparse);
    Timed t;
    for (int attempt = 0; attempt < 3; ++attempt) {
        t.dense = latency_bench(dense, batch);
        t.sparse = latency_bench(sparse, batch);
        if (t.dense.iqr_ms() / t.dense.median_ms <= 0.2 && t.sparse.iqr_ms() / t.sparse.median_ms <= 0.2) {
            break;
        }
    }
    return t;
}

Outcome latency_direction() {
    auto cfg = synthetic_config("mlp", 0);
    cfg.training.epochs = 5;
    const auto res = train_synthetic(cfg, false);
    std::string detail;
    bool ok = true;
    for (auto [s, need] : {std::pair{0.5, 0.10}, std::pair{0.9, 0.15}}) {
        const auto t = bench_pair(res.dense.net, s);
        const double speedup = 1.0 - t.sparse.median_ms / t.dense.median_ms;
        const double stab = std::max(t.dense.iqr_ms() / t.dense.median_ms, t.sparse.iqr_ms() / t.sparse.median_ms);
        ok = ok && speedup >= need && stab <= 0.2;
        detail += fmt("%.0f%%: dense %.3f ms, sparse %.3f ms (%.1f%% faster, IQR/median %.3f); ", 100.0 * s,
                      t.dense.median_ms, t.sparse.median_ms, 100.0 * speedup, stab);
    }
    detail += "1 thread, 64-row batch, " + hardware_descriptor();
    return verdict(ok, detail);
}

Outcome sweep_trend() {
    auto cfg = synthetic_config("mlp", 0);
    cfg.training.epochs = 10;
    cfg.pruning.fine_tune_epochs = 5;
    cfg.eval.sweep = {0.0, 0.25, 0.5, 0.75, 0.9};
    const auto data = prepare_main_data(cfg);
    const auto sp = split_windows(data, cfg);
    const auto rows = run_sweep(sp.train, sp.test, data.channels.size(), cfg);
    if (rows.size() != 5) {
        return fail(fmt("%zu rows for 5 sparsities", rows.size()));
    }
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].error.empty()) {
            return fail(fmt("sparsity %.2f failed: %s", rows[i].sparsity, rows[i].error.c_str()));
        }
        if (i > 0) {
            ok = ok && rows[i].size_bytes < rows[i - 1].size_bytes &&
                 rows[i].latency_ms <= 1.05 * rows[i - 1].latency_ms;
        }
        detail += fmt("%.2f: %zu B %.3f ms; ", rows[i].sparsity, rows[i].size_bytes, rows[i].latency_ms);
    }
    detail.resize(detail.size() - 2);
    return verdict(ok, detail);
}

Outcome artifact_detector() {
    auto cfg = config_from_json(nlohmann::json::object());
    cfg.artifact.training.epochs = 30;
    const auto res = train_artifact_detector(generate_artifact_corpus(cfg.data.artifact_synthetic, 7), cfg, true);
    const double dense = 100.0 * res.dense.metrics.accuracy;
    const double pruned = 100.0 * res.pruned->metrics.accuracy;
    return verdict(dense >= 90.0 && dense - pruned <= 3.0,
                   fmt("unpruned %.2f%%, pruned %.2f%% on %zu synthetic test windows", dense, pruned,
                       res.test_windows));
}

const std::vector<std::pair<const char*, std::function<Outcome()>>>& criteria() {
    static const std::vector<std::pair<const char*, std::function<Outcome()>>> all{
        {"gradient correctness", gradient_correctness},
        {"mask exactness", mask_exactness},
        {"sparse/dense equivalence", sparse_dense_equivalence},
        {"pruned-weight persistence", pruned_weight_persistence},
        {"serialization", serialization},
        {"windowing and parser golden", windowing_and_parser},
        {"pruning schedule", schedule},
        {"feature selection", feature_selection},
        {"setting-2 accuracy bands", table_reproduction},
        {"setting ordering", setting_ordering},
        {"pruning accuracy cost", pruning_cost},
        {"size reduction", size_reduction},
        {"latency direction", latency_direction},
        {"sparsity sweep trend", sweep_trend},
        {"artifact detector", artifact_detector},
    };
    return all;
}

Status run_one(std::size_t n) {
    const auto& [name, fn] = criteria()[n - 1];
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = fail(std::string("error: ") + e.what());
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    std::printf("criterion %2zu %-28s %s  %s\n", n, name, tag, o.detail.c_str());
    std::fflush(stdout);
    return o.status;
}

} // namespace

int main(int argc, char** argv) {
    setenv("OMAD_THREADS", "1", 0);
    if (argc == 3 && std::strcmp(argv[1], "--criterion") == 0) {
        const long n = std::strtol(argv[2], nullptr, 10);
        if (n < 1 || n > static_cast<long>(criteria().size())) {
            std::fprintf(stderr, "criterion must be 1..%zu\n", criteria().size());
            return 2;
        }
        switch (run_one(static_cast<std::size_t>(n))) {
        case Status::Pass: return 0;
        case Status::Skip: return 77;
        case Status::Fail: return 1;
        }
    }
    if (argc != 1) {
        std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
        return 2;
    }
    int failed = 0;
    for (std::size_t n = 1; n <= criteria().size(); ++n) {
        failed += run_one(n) == Status::Fail;
    }
    return failed == 0 ? 0 : 1;
}
