// omad: command-line front end for the EEG pipeline.

#include "omad/pipeline.hpp"

#include <CLI11.hpp>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace omad;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitLocked = 3;

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "omad_out";
    bool quiet = false;
};

Globals g;

void info(const std::string& msg) {
    if (!g.quiet) {
        std::cerr << msg << '\n';
    }
}

class OutputLock {
public:
    explicit OutputLock(const fs::path& dir) {
        fs::create_directories(dir);
        const auto path = dir / ".omad.lock";
        fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
        require(fd_ >= 0, ErrorCode::IoFailure, "cannot open lock file " + path.string());
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw Error(ErrorCode::IoFailure, "output directory " + dir.string() + " is locked by another omad process");
        }
    }
    ~OutputLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    int fd_ = -1;
};

PipelineConfig base_config() {
    PipelineConfig c = g.config.empty() ? PipelineConfig{} : load_config(g.config);
    if (g.seed) {
        c.seed = *g.seed;
    }
    c.validate();
    return c;
}

fs::path out_dir() {
    return fs::path(g.out);
}

fs::path models_dir() {
    return out_dir() / "models";
}

fs::path runs_dir() {
    return out_dir() / "runs";
}

fs::path detector_path() {
    return models_dir() / "artifact_detector.omad";
}

std::string pct(double v) {
    return format_fixed(100.0 * v, 2) + "%";
}

MetricsReport compression_row(const std::string& model, const ModelResult& r) {
    MetricsReport m;
    m.model = model;
    m.pruned = r.pruned;
    m.size_bytes = r.size_bytes;
    m.latency_ms = r.latency_ms;
    m.accuracy = r.metrics.accuracy;
    m.f1 = r.metrics.f1;
    return m;
}

// --------------------------------------------------------------- commands ---

int cmd_parse(const std::vector<std::string>& inputs) {
    nlohmann::json out = nlohmann::json::array();
    std::size_t failures = 0;
    auto describe = [&](const Recording& r, const std::string& path) {
        out.push_back({{"path", path},
                       {"subject_id", r.subject_id},
                       {"group", std::string(to_string(r.group))},
                       {"condition", std::string(to_string(r.condition))},
                       {"condition_error", r.condition_error},
                       {"trial_number", r.trial_number},
                       {"sample_rate_hz", r.sample_rate_hz},
                       {"channels", r.channels.size()},
                       {"samples", r.samples()},
                       {"declared_samples", r.declared_samples}});
        std::cout << r.subject_id << ' ' << to_string(r.group) << ' ' << to_string(r.condition) << " trial "
                  << r.trial_number << ": " << r.channels.size() << " channels x " << r.samples() << " samples @ "
                  << r.sample_rate_hz << " Hz\n";
    };
    for (const auto& in : inputs) {
        if (fs::is_directory(in)) {
            const auto load = load_corpus(in);
            for (const auto& r : load.recordings) {
                describe(r, in);
            }
            for (const auto& [path, err] : load.errors) {
                std::cerr << path.string() << ": " << err << '\n';
                ++failures;
            }
        } else {
            try {
                describe(read_rd_file(in), in);
            } catch (const Error& e) {
                std::cerr << in << ": " << e.what() << '\n';
                ++failures;
            }
        }
    }
    OutputLock lock(out_dir());
    save_json(out, out_dir() / "parse.json");
    return failures == 0 ? 0 : kExitError;
}

int cmd_gen_artifacts(std::optional<int> subjects, std::optional<int> trials) {
    auto cfg = base_config();
    if (subjects) {
        cfg.data.artifact_synthetic.subjects = *subjects;
    }
    if (trials) {
        cfg.data.artifact_synthetic.trials_per_kind = *trials;
    }
    cfg.validate();
    OutputLock lock(out_dir());
    const auto dir = out_dir() / "artifacts";
    fs::create_directories(dir);
    const auto corpus = generate_artifact_corpus(cfg.data.artifact_synthetic, derive_seed(cfg.seed, {0xa7}));
    for (const auto& rec : corpus) {
        write_artifact_csv(rec, dir);
    }
    info("wrote " + std::to_string(corpus.size()) + " artifact recordings to " + dir.string());
    return 0;
}

int cmd_gen_main(std::optional<int> subjects, std::optional<int> trials) {
    auto cfg = base_config();
    if (subjects) {
        cfg.data.synthetic.subjects_per_group = *subjects;
    }
    if (trials) {
        cfg.data.synthetic.trials_per_subject = *trials;
    }
    cfg.validate();
    OutputLock lock(out_dir());
    const auto dir = out_dir() / "main";
    fs::create_directories(dir);
    const auto corpus = generate_eeg_corpus(cfg.data.synthetic, derive_seed(cfg.seed, {0xc0}));
    for (const auto& rec : corpus) {
        write_rd_file(rec, dir / (rec.subject_id + ".rd." + std::to_string(rec.trial_number)));
    }
    info("wrote " + std::to_string(corpus.size()) + " recordings to " + dir.string());
    return 0;
}

int cmd_train_artifact(const std::string& artifact_dir, bool prune) {
    auto cfg = base_config();
    if (!artifact_dir.empty()) {
        cfg.data.artifact_dir = artifact_dir;
    }
    OutputLock lock(out_dir());
    const auto corpus = load_or_generate_artifacts(cfg);
    info("training artifact detector on " + std::to_string(corpus.size()) + " recordings");
    const auto res = train_artifact_detector(corpus, cfg, prune);
    ModelMeta meta;
    meta.role = "artifact_detector";
    meta.type = "mlp";
    meta.input = "robust_channel";
    meta.sample_rate_hz = corpus.front().sample_rate_hz;
    meta.window_size = cfg.dsp.window.window_size;
    meta.seed = cfg.seed;
    meta.accuracy = res.dense.metrics.accuracy;
    meta.f1 = res.dense.metrics.f1;
    save_model(res.dense.net, meta, detector_path());
    std::vector<MetricsReport> rows{compression_row("ArtifactMLP", res.dense)};
    std::cout << "artifact detector: accuracy " << pct(res.dense.metrics.accuracy) << ", f1 "
              << format_fixed(res.dense.metrics.f1) << ", " << res.dense.size_bytes << " bytes, "
              << format_fixed(res.dense.latency_ms) << " ms/batch\n";
    if (res.pruned) {
        meta.pruned = true;
        meta.accuracy = res.pruned->metrics.accuracy;
        meta.f1 = res.pruned->metrics.f1;
        save_model(res.pruned->net, meta, models_dir() / "artifact_detector_pruned.omad");
        rows.push_back(compression_row("ArtifactMLP", *res.pruned));
        std::cout << "pruned detector:   accuracy " << pct(res.pruned->metrics.accuracy) << ", f1 "
                  << format_fixed(res.pruned->metrics.f1) << ", " << res.pruned->size_bytes << " bytes, "
                  << format_fixed(res.pruned->latency_ms) << " ms/batch\n";
    }
    write_compression_csv(rows, runs_dir() / "compression_artifact.csv");
    return 0;
}

std::pair<Network, ModelMeta> load_detector(const std::string& path) {
    const fs::path p = path.empty() ? detector_path() : fs::path(path);
    if (!fs::exists(p)) {
        throw Error(ErrorCode::MissingDetector, "no artifact detector at " + p.string() + "; run train-artifact first");
    }
    auto model = load_model(p);
    require(model.second.role == "artifact_detector", ErrorCode::MissingDetector,
            p.string() + " is not an artifact detector");
    return model;
}

int cmd_tag(const std::string& detector, std::optional<double> threshold, const std::string& data_dir) {
    auto cfg = base_config();
    if (threshold) {
        cfg.artifact.channel_fraction_threshold = *threshold;
    }
    if (!data_dir.empty()) {
        cfg.data.main_dir = data_dir;
    }
    cfg.validate();
    OutputLock lock(out_dir());
    const auto [net, meta] = load_detector(detector);
    const auto data = prepare_main_data(cfg);
    const auto tags = tag_windows(net, meta.sample_rate_hz, data, cfg.artifact.channel_fraction_threshold);
    std::ofstream csv(out_dir() / "tags.csv");
    csv << "source_id,trial,offset,flagged_fraction,removed\n";
    for (std::size_t i = 0; i < data.windows.size(); ++i) {
        const auto& w = data.windows[i];
        csv << w.source_id << ',' << w.trial_number << ',' << w.offset << ',' << format_fixed(tags.flagged_fraction[i])
            << ',' << (tags.removed[i] ? 1 : 0) << '\n';
    }
    save_json({{"windows", data.windows.size()},
               {"kept", tags.kept},
               {"removed", tags.removed_count},
               {"threshold", cfg.artifact.channel_fraction_threshold}},
              out_dir() / "tag_stats.json");
    std::cout << "kept " << tags.kept << " windows, removed " << tags.removed_count << '\n';
    return 0;
}

int cmd_features(const std::string& data_dir, bool remove_artifacts) {
    auto cfg = base_config();
    if (!data_dir.empty()) {
        cfg.data.main_dir = data_dir;
    }
    OutputLock lock(out_dir());
    auto data = prepare_main_data(cfg);
    auto windows = data.windows;
    if (remove_artifacts) {
        const auto [net, meta] = load_detector("");
        const auto tags = tag_windows(net, meta.sample_rate_hz, data, cfg.artifact.channel_fraction_threshold);
        windows.clear();
        for (std::size_t i = 0; i < data.windows.size(); ++i) {
            if (!tags.removed[i]) {
                windows.push_back(data.windows[i]);
            }
        }
    }
    const auto m = window_features(windows, data, cfg);
    write_feature_csv(m, out_dir() / "features.csv");
    std::cout << m.size() << " rows x " << m.width() << " features\n";
    return 0;
}

int cmd_select(const std::string& features_path) {
    auto cfg = base_config();
    OutputLock lock(out_dir());
    const fs::path p = features_path.empty() ? out_dir() / "features.csv" : fs::path(features_path);
    const auto m = read_feature_csv(p);
    std::vector<int> labels;
    for (const auto& gl : m.group_labels) {
        require(gl.has_value(), ErrorCode::PreconditionViolation, "feature rows need group labels for selection");
        labels.push_back(class_index(*gl));
    }
    const auto sel = select_features(m, labels, cfg.features.corr_threshold, cfg.features.p_threshold);
    save_selection(sel, out_dir() / "selection.json");
    std::cout << "kept " << sel.kept_indices.size() << " of " << m.width() << " features ("
              << sel.dropped_by_correlation.size() << " correlated, " << sel.dropped_by_ttest.size()
              << " not significant)\n";
    return 0;
}

struct PreparedSplit {
    MainData data;
    Split split;
    std::optional<TagResult> tags;
};

PreparedSplit prepare_split(const PipelineConfig& cfg, bool need_tags) {
    PreparedSplit p;
    p.data = prepare_main_data(cfg);
    p.split = split_windows(p.data, cfg);
    if (need_tags) {
        const auto [net, meta] = load_detector("");
        p.tags = tag_windows(net, meta.sample_rate_hz, p.data, cfg.artifact.channel_fraction_threshold);
        info("artifact tagging kept " + std::to_string(p.tags->kept) + " windows, removed " +
             std::to_string(p.tags->removed_count));
    }
    return p;
}

std::vector<WindowedExample> kept(const std::vector<WindowedExample>& windows, const PreparedSplit& p) {
    if (!p.tags) {
        return windows;
    }
    std::map<std::tuple<std::string, int, std::size_t>, std::size_t> index;
    for (std::size_t i = 0; i < p.data.windows.size(); ++i) {
        const auto& w = p.data.windows[i];
        index.emplace(std::tuple{w.source_id, w.trial_number, w.offset}, i);
    }
    std::vector<WindowedExample> out;
    for (const auto& w : windows) {
        if (!p.tags->removed.at(index.at({w.source_id, w.trial_number, w.offset}))) {
            out.push_back(w);
        }
    }
    return out;
}

ModelMeta main_meta(const PipelineConfig& cfg, const MainData& data, const MainTraining& t, bool pruned) {
    ModelMeta meta;
    meta.role = "main";
    meta.type = cfg.model.type;
    meta.input = cfg.model.input;
    meta.input_scale = t.input_scale;
    meta.sample_rate_hz = data.sample_rate_hz;
    meta.window_size = cfg.dsp.window.window_size;
    meta.channels = data.channels.size();
    meta.pruned = pruned;
    const auto& m = pruned ? t.pruned->metrics : t.dense.metrics;
    meta.accuracy = m.accuracy;
    meta.f1 = m.f1;
    meta.seed = cfg.seed;
    return meta;
}

std::string model_label(const PipelineConfig& cfg) {
    return cfg.model.type == "cnn" ? "CNN" : "MLP7";
}

int cmd_train(const std::string& model, std::optional<int> epochs, bool prune, bool no_removal,
              const std::vector<std::string>& settings) {
    auto cfg = base_config();
    if (!model.empty()) {
        cfg.model.type = model;
    }
    if (epochs) {
        cfg.training.epochs = *epochs;
    }
    cfg.validate();
    OutputLock lock(out_dir());
    std::vector<Setting> wanted;
    for (const auto& s : settings) {
        if (s == "all") {
            wanted = {Setting::AllFeaturesNoRemoval, Setting::AllFeaturesWithRemoval,
                      Setting::SelectedFeaturesWithRemoval};
        } else {
            wanted.push_back(parse_setting(s));
        }
    }
    const bool need_tags = !no_removal || std::any_of(wanted.begin(), wanted.end(), [](Setting s) {
        return s != Setting::AllFeaturesNoRemoval;
    });
    const auto p = prepare_split(cfg, need_tags);

    if (!wanted.empty()) {
        std::vector<MetricsReport> rows;
        for (auto s : wanted) {
            info("running " + to_string(s));
            SettingInputs in{&p.data, &p.split, p.tags ? &*p.tags : nullptr};
            for (auto& r : run_setting(s, in, {BaselineModel::RF, BaselineModel::SVM, BaselineModel::MLP7}, cfg)) {
                std::cout << r.setting << ' ' << r.model << ": accuracy " << pct(r.accuracy) << ", f1 "
                          << format_fixed(r.f1) << '\n';
                rows.push_back(r);
            }
        }
        write_settings_csv(rows, runs_dir() / "settings_table.csv");
        return 0;
    }

    const auto train_w = no_removal ? p.split.train : kept(p.split.train, p);
    const auto test_w = no_removal ? p.split.test : kept(p.split.test, p);
    info("training " + cfg.model.type + " on " + std::to_string(train_w.size()) + " windows");
    const auto t = train_main(train_w, test_w, p.data.channels.size(), cfg, prune);
    const auto name = "main_" + cfg.model.type;
    save_model(t.dense.net, main_meta(cfg, p.data, t, false), models_dir() / (name + ".omad"));
    std::vector<MetricsReport> rows{compression_row(model_label(cfg), t.dense)};
    std::cout << model_label(cfg) << ": window accuracy " << pct(t.dense_scores.window.accuracy) << ", f1 "
              << format_fixed(t.dense_scores.window.f1) << ", trial accuracy " << pct(t.dense_scores.trial.accuracy)
              << '\n';
    if (t.pruned) {
        save_model(t.pruned->net, main_meta(cfg, p.data, t, true), models_dir() / (name + "_pruned.omad"));
        rows.push_back(compression_row(model_label(cfg), *t.pruned));
        std::cout << model_label(cfg) << " pruned: window accuracy " << pct(t.pruned_scores->window.accuracy)
                  << ", f1 " << format_fixed(t.pruned_scores->window.f1) << ", trial accuracy "
                  << pct(t.pruned_scores->trial.accuracy) << '\n';
    }
    write_compression_csv(rows, runs_dir() / ("compression_" + name + ".csv"));
    return 0;
}

int cmd_prune(const std::string& model_path, std::optional<double> sparsity) {
    auto cfg = base_config();
    if (sparsity) {
        cfg.pruning.final_sparsity = *sparsity;
    }
    cfg.validate();
    OutputLock lock(out_dir());
    auto [net, meta] = load_model(model_path);
    require(meta.role == "main", ErrorCode::PreconditionViolation, model_path + " is not a main model");
    cfg.model.type = meta.type;
    cfg.model.input = meta.input;
    const auto p = prepare_split(cfg, fs::exists(detector_path()));
    const auto train_w = kept(p.split.train, p);
    const auto test_w = kept(p.split.test, p);
    const auto W = meta.window_size;
    const auto tr = neural_inputs(train_w, meta.channels, W, meta.input, meta.input_scale);
    const auto te = neural_inputs(test_w, meta.channels, W, meta.input, meta.input_scale);
    TrainConfig t = cfg.training;
    t.seed = derive_seed(cfg.seed, {0x7a});
    fine_tune_pruned(net, tr.x, tr.y, t, cfg, cfg.pruning.final_sparsity);
    const auto scores = score_windows(net, te, test_w);
    meta.pruned = true;
    meta.accuracy = scores.window.accuracy;
    meta.f1 = scores.window.f1;
    fs::path out = model_path;
    out = out.parent_path() / (out.stem().string() + "_pruned.omad");
    save_model(net, meta, out);
    std::cout << "pruned to " << pct(overall_sparsity(net)) << " sparsity: accuracy " << pct(scores.window.accuracy)
              << ", " << fs::file_size(out) << " bytes -> " << out.string() << '\n';
    return 0;
}

int cmd_bench(const std::vector<std::string>& models) {
    auto cfg = base_config();
    OutputLock lock(out_dir());
    std::vector<MetricsReport> rows;
    std::string hardware;
    for (const auto& path : models) {
        const auto [net, meta] = load_model(path);
        const auto batch = bench_batch(net.input_width(), cfg.eval.batch, cfg.seed);
        const auto lat = latency_bench(InferenceModel(net, deployment_backend(net)), batch,
                                       {cfg.eval.warmup, cfg.eval.reps});
        hardware = lat.hardware;
        MetricsReport r;
        r.model = meta.role == "artifact_detector" ? "ArtifactMLP" : (meta.type == "cnn" ? "CNN" : "MLP7");
        r.pruned = meta.pruned;
        r.size_bytes = static_cast<std::size_t>(fs::file_size(path));
        r.latency_ms = lat.median_ms;
        r.accuracy = meta.accuracy;
        r.f1 = meta.f1;
        std::cout << path << ": " << r.size_bytes << " bytes, median " << format_fixed(lat.median_ms) << " ms (IQR "
                  << format_fixed(lat.iqr_ms()) << ") per " << cfg.eval.batch << "-row batch\n";
        rows.push_back(r);
    }
    write_compression_csv(rows, runs_dir() / "compression_bench.csv");
    info("hardware: " + hardware);
    return 0;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidConfig, "bad number '" + item + "' in list");
        }
    }
    return out;
}

int cmd_sweep(const std::string& sparsities, const std::string& model) {
    auto cfg = base_config();
    if (!sparsities.empty()) {
        cfg.eval.sweep = parse_list(sparsities);
    }
    if (!model.empty()) {
        cfg.model.type = model;
    }
    cfg.validate();
    OutputLock lock(out_dir());
    const auto p = prepare_split(cfg, fs::exists(detector_path()));
    const auto rows = run_sweep(kept(p.split.train, p), kept(p.split.test, p), p.data.channels.size(), cfg);
    int status = 0;
    for (const auto& r : rows) {
        if (!r.error.empty()) {
            std::cerr << "sparsity " << r.sparsity << " failed: " << r.error << '\n';
            status = kExitError;
            continue;
        }
        std::cout << "sparsity " << format_fixed(r.sparsity, 2) << ": " << r.size_bytes << " bytes, "
                  << format_fixed(r.latency_ms) << " ms, accuracy " << pct(r.accuracy) << '\n';
    }
    write_sweep_csv(rows, runs_dir() / "sweep_main.csv");
    return status;
}

// Concatenates every runs/<prefix>*.csv (sorted by name) under one header.
std::size_t concat_runs(const std::string& prefix, const fs::path& dest) {
    std::vector<fs::path> files;
    if (fs::exists(runs_dir())) {
        for (const auto& e : fs::directory_iterator(runs_dir())) {
            const auto name = e.path().filename().string();
            if (name.starts_with(prefix) && name.ends_with(".csv")) {
                files.push_back(e.path());
            }
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        return 0;
    }
    std::ofstream out(dest);
    require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + dest.string());
    std::size_t rows = 0;
    bool header_written = false;
    for (const auto& f : files) {
        std::ifstream in(f);
        std::string line;
        if (!std::getline(in, line)) {
            continue;
        }
        if (!header_written) {
            out << line << '\n';
            header_written = true;
        }
        while (std::getline(in, line)) {
            if (!line.empty()) {
                out << line << '\n';
                ++rows;
            }
        }
    }
    return rows;
}

int cmd_report() {
    OutputLock lock(out_dir());
    const auto s = concat_runs("settings_", out_dir() / "results_settings.csv");
    const auto c = concat_runs("compression_", out_dir() / "results_compression.csv");
    const auto w = concat_runs("sweep_", out_dir() / "sweep.csv");
    std::cout << "results_settings.csv: " << s << " rows\nresults_compression.csv: " << c << " rows\nsweep.csv: " << w
              << " rows\n";
    return (s + c + w) > 0 ? 0 : kExitError;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"On-device EEG anomaly detection pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", g.config, "JSON pipeline configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Root random seed (overrides the config)");
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_flag("--quiet", g.quiet, "Suppress progress messages");

    std::function<int()> run;

    std::vector<std::string> parse_inputs;
    auto* parse = app.add_subcommand("parse", "Parse .rd files or directories and summarise their headers");
    parse->add_option("inputs", parse_inputs, ".rd files or directories")->required();
    parse->callback([&] { run = [&] { return cmd_parse(parse_inputs); }; });

    std::optional<int> subjects, trials;
    auto* gen = app.add_subcommand("gen-artifacts", "Write the synthetic artifact corpus as CSV");
    gen->add_option("--subjects", subjects);
    gen->add_option("--trials", trials, "Trials per artifact kind");
    gen->callback([&] { run = [&] { return cmd_gen_artifacts(subjects, trials); }; });

    auto* gen_main = app.add_subcommand("gen-main", "Write a synthetic control/alcoholic corpus as .rd files");
    gen_main->add_option("--subjects", subjects, "Subjects per group");
    gen_main->add_option("--trials", trials, "Trials per subject");
    gen_main->callback([&] { run = [&] { return cmd_gen_main(subjects, trials); }; });

    std::string artifact_dir;
    bool prune_flag = false;
    auto* ta = app.add_subcommand("train-artifact", "Train the artifact detector");
    ta->add_option("--artifacts", artifact_dir, "Artifact corpus directory (default: synthetic)");
    ta->add_flag("--prune", prune_flag, "Also train the pruned detector");
    ta->callback([&] { run = [&] { return cmd_train_artifact(artifact_dir, prune_flag); }; });

    std::string detector, data_dir;
    std::optional<double> threshold;
    auto* tag = app.add_subcommand("tag", "Flag main-corpus windows containing artifacts");
    tag->add_option("--detector", detector, "Detector model (default: <out>/models/artifact_detector.omad)");
    tag->add_option("--threshold", threshold, "Flagged-channel fraction that removes a window");
    tag->add_option("--data", data_dir, "Main corpus directory (default: synthetic)");
    tag->callback([&] { run = [&] { return cmd_tag(detector, threshold, data_dir); }; });

    bool remove_artifacts = false;
    auto* feat = app.add_subcommand("features", "Extract window features to features.csv");
    feat->add_option("--data", data_dir, "Main corpus directory (default: synthetic)");
    feat->add_flag("--remove-artifacts", remove_artifacts, "Drop windows tagged by the detector");
    feat->callback([&] { run = [&] { return cmd_features(data_dir, remove_artifacts); }; });

    std::string features_path;
    auto* sel = app.add_subcommand("select", "Correlation and t-test feature selection");
    sel->add_option("--features", features_path, "Feature CSV (default: <out>/features.csv)");
    sel->callback([&] { run = [&] { return cmd_select(features_path); }; });

    std::string model;
    std::optional<int> epochs;
    bool no_removal = false;
    std::vector<std::string> settings;
    auto* tr = app.add_subcommand("train", "Train the main model, or run the three-setting comparison");
    tr->add_option("--model", model, "mlp or cnn")->check(CLI::IsMember({"mlp", "cnn"}));
    tr->add_option("--epochs", epochs);
    tr->add_flag("--prune", prune_flag, "Also fine-tune a pruned twin");
    tr->add_flag("--no-artifact-removal", no_removal, "Train on every window");
    tr->add_option("--settings", settings, "Run settings 1, 2, 3 or all with RF, SVM and MLP7")->delimiter(',');
    tr->callback([&] { run = [&] { return cmd_train(model, epochs, prune_flag, no_removal, settings); }; });

    std::string model_path;
    std::optional<double> sparsity;
    auto* pr = app.add_subcommand("prune", "Prune and fine-tune a trained main model");
    pr->add_option("model", model_path, "Model file")->required()->check(CLI::ExistingFile);
    pr->add_option("--sparsity", sparsity, "Final sparsity");
    pr->callback([&] { run = [&] { return cmd_prune(model_path, sparsity); }; });

    std::vector<std::string> bench_models;
    auto* be = app.add_subcommand("bench", "Measure size and single-thread latency of model files");
    be->add_option("models", bench_models, "Model files")->required();
    be->callback([&] { run = [&] { return cmd_bench(bench_models); }; });

    std::string sparsities;
    auto* sw = app.add_subcommand("sweep", "Size/latency/accuracy across sparsities");
    sw->add_option("--sparsities", sparsities, "Comma-separated ascending sparsities");
    sw->add_option("--model", model, "mlp or cnn")->check(CLI::IsMember({"mlp", "cnn"}));
    sw->callback([&] { run = [&] { return cmd_sweep(sparsities, model); }; });

    auto* rep = app.add_subcommand("report", "Collect run CSVs into the canonical result files");
    rep->callback([&] { run = [&] { return cmd_report(); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }
    try {
        if (!g.config.empty()) {
            base_config();
        }
        return run ? run() : kExitUsage;
    } catch (const Error& e) {
        std::cerr << "omad: " << e.what() << '\n';
        if (e.code() == ErrorCode::InvalidConfig) {
            return kExitUsage;
        }
        if (std::string(e.what()).find("locked by another") != std::string::npos) {
            return kExitLocked;
        }
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "omad: " << e.what() << '\n';
        return kExitError;
    }
}
