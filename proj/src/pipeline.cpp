#include "omad/pipeline.hpp"

#include "omad/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

namespace omad {

namespace {

using nlohmann::json;

// Reads one JSON object section, remembering which keys were consumed so
// leftovers can be rejected.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        require(j_.is_object(), ErrorCode::InvalidConfig, label() + " must be a JSON object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) {
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw Error(ErrorCode::InvalidConfig, "wrong type for " + name(key));
        }
    }

    const json* sub(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            require(seen_.count(key) > 0, ErrorCode::InvalidConfig, "unknown config key '" + name(key.c_str()) + "'");
        }
    }

private:
    std::string label() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::optional<Condition> parse_condition(const std::string& s) {
    for (auto c : {Condition::S1Obj, Condition::S2Match, Condition::S2Nomatch}) {
        if (s == to_string(c)) {
            return c;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown condition '" + s + "'");
}

void read_training(Section& s, TrainConfig& t) {
    s.get("epochs", t.epochs);
    s.get("batch_size", t.batch_size);
    s.get("learning_rate", t.adam.learning_rate);
    s.get("beta1", t.adam.beta1);
    s.get("beta2", t.adam.beta2);
    s.get("epsilon", t.adam.epsilon);
    s.get("dropout", t.dropout);
}

json training_json(const TrainConfig& t) {
    return {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"learning_rate", t.adam.learning_rate},
            {"beta1", t.adam.beta1},
            {"beta2", t.adam.beta2},
            {"epsilon", t.adam.epsilon},
            {"dropout", t.dropout}};
}

void check_training(const TrainConfig& t, const std::string& where) {
    require(t.epochs > 0 && t.batch_size > 0, ErrorCode::InvalidConfig, where + ": epochs and batch_size must be > 0");
    require(t.adam.learning_rate > 0.0 && t.adam.epsilon > 0.0, ErrorCode::InvalidConfig,
            where + ": learning_rate and epsilon must be > 0");
    require(t.adam.beta1 >= 0.0 && t.adam.beta1 < 1.0 && t.adam.beta2 >= 0.0 && t.adam.beta2 < 1.0,
            ErrorCode::InvalidConfig, where + ": betas must be in [0, 1)");
    require(t.dropout >= 0.0 && t.dropout < 1.0, ErrorCode::InvalidConfig, where + ": dropout must be in [0, 1)");
}

using WindowKey = std::tuple<std::string, int, std::size_t>;

WindowKey key_of(const WindowedExample& w) {
    return {w.source_id, w.trial_number, w.offset};
}

std::vector<int> group_classes(const std::vector<WindowedExample>& windows) {
    std::vector<int> y;
    y.reserve(windows.size());
    for (const auto& w : windows) {
        require(w.group_label.has_value(), ErrorCode::PreconditionViolation, "window without a group label");
        y.push_back(class_index(*w.group_label));
    }
    return y;
}

ModelResult measure(Network net, const ConfusionMetrics& m, const PipelineConfig& cfg, bool pruned) {
    ModelResult r;
    r.metrics = m;
    r.size_bytes = serialize(net, Encoding::Auto).size();
    const auto batch = bench_batch(net.input_width(), cfg.eval.batch, cfg.seed);
    r.latency_ms =
        latency_bench(InferenceModel(net, deployment_backend(net)), batch, {cfg.eval.warmup, cfg.eval.reps}).median_ms;
    r.pruned = pruned;
    r.net = std::move(net);
    return r;
}

Mat<float> to_mat(const Rows& rows) {
    Mat<float> m(static_cast<Eigen::Index>(rows.size()),
                 static_cast<Eigen::Index>(rows.empty() ? 0 : rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<float>(rows[r][c]);
        }
    }
    return m;
}

} // namespace

// ------------------------------------------------------------------ config ---

void PipelineConfig::validate() const {
    require(data.test_fraction > 0.0 && data.test_fraction < 1.0, ErrorCode::InvalidConfig,
            "data.test_fraction must be in (0, 1)");
    const auto& syn = data.synthetic;
    require(syn.subjects_per_group >= 1 && syn.trials_per_subject >= 1 && syn.channels >= 1 &&
                syn.channels <= static_cast<int>(uci_channels().size()) && syn.samples >= 1 &&
                syn.sample_rate_hz > 0.0 && syn.artifact_fraction >= 0.0 && syn.artifact_fraction <= 1.0,
            ErrorCode::InvalidConfig, "data.synthetic out of range");
    require(data.artifact_synthetic.subjects >= 1 && data.artifact_synthetic.trials_per_kind >= 1,
            ErrorCode::InvalidConfig, "data.artifact_synthetic counts must be >= 1");
    require(dsp.notch_f0 > 0.0 && dsp.notch_q > 0.0, ErrorCode::InvalidConfig, "dsp notch f0 and q must be > 0");
    try {
        dsp.window.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("dsp: ") + e.what());
    }
    check_training(artifact.training, "artifact");
    require(artifact.channel_fraction_threshold >= 0.0, ErrorCode::InvalidConfig,
            "artifact.channel_fraction_threshold must be >= 0");
    for (const auto& f : features.enabled) {
        const auto& names = FeatureVector::names();
        require(std::find(names.begin(), names.end(), f) != names.end(), ErrorCode::InvalidConfig,
                "features.enabled: unknown feature '" + f + "'");
    }
    require(features.corr_threshold > 0.0 && features.corr_threshold <= 1.0, ErrorCode::InvalidConfig,
            "features.corr_threshold must be in (0, 1]");
    require(features.p_threshold > 0.0 && features.p_threshold <= 1.0, ErrorCode::InvalidConfig,
            "features.p_threshold must be in (0, 1]");
    require(model.type == "mlp" || model.type == "cnn", ErrorCode::InvalidConfig, "model.type must be mlp or cnn");
    require(model.input == "per_channel" || model.input == "multi_channel", ErrorCode::InvalidConfig,
            "model.input must be per_channel or multi_channel");
    require(!model.mlp_widths.empty() &&
                std::all_of(model.mlp_widths.begin(), model.mlp_widths.end(), [](auto w) { return w > 0; }),
            ErrorCode::InvalidConfig, "model.mlp_widths must be non-empty and positive");
    require(model.cnn.conv1 > 0 && model.cnn.conv2 > 0 && model.cnn.dense > 0, ErrorCode::InvalidConfig,
            "model.cnn widths must be positive");
    require(model.forest.n_estimators >= 1 && model.forest.max_depth >= 1 && model.forest.features_per_split >= 0,
            ErrorCode::InvalidConfig, "model.forest out of range");
    require(model.svm.c > 0.0 && model.svm.gamma >= 0.0 && model.svm.tolerance > 0.0 && model.svm.max_iterations >= 0,
            ErrorCode::InvalidConfig, "model.svm out of range");
    check_training(training, "training");
    require(pruning.initial_sparsity >= 0.0 && pruning.initial_sparsity <= pruning.final_sparsity &&
                pruning.final_sparsity < 1.0,
            ErrorCode::InvalidConfig, "pruning sparsities must satisfy 0 <= initial <= final < 1");
    require(pruning.frequency > 0 && pruning.fine_tune_epochs >= 1, ErrorCode::InvalidConfig,
            "pruning.frequency and pruning.fine_tune_epochs must be positive");
    const bool auto_steps = pruning.begin_step < 0 && pruning.end_step < 0;
    require(auto_steps || (pruning.begin_step >= 0 && pruning.end_step > pruning.begin_step), ErrorCode::InvalidConfig,
            "pruning.begin_step/end_step must both be unset or satisfy 0 <= begin < end");
    require(eval.warmup >= 0 && eval.reps >= 1 && eval.batch >= 1, ErrorCode::InvalidConfig,
            "eval needs warmup >= 0, reps >= 1, batch >= 1");
    for (std::size_t i = 0; i < eval.sweep.size(); ++i) {
        require(eval.sweep[i] >= 0.0 && eval.sweep[i] <= 0.95 && (i == 0 || eval.sweep[i] > eval.sweep[i - 1]),
                ErrorCode::InvalidConfig, "eval.sweep must ascend strictly within [0, 0.95]");
    }
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    Section root(j, "");
    if (const auto* d = root.sub("data")) {
        Section s(*d, "data");
        s.get("main_dir", c.data.main_dir);
        s.get("artifact_dir", c.data.artifact_dir);
        s.get("test_fraction", c.data.test_fraction);
        if (const auto* cond = s.sub("condition"); cond && !cond->is_null()) {
            require(cond->is_string(), ErrorCode::InvalidConfig, "data.condition must be a string or null");
            c.data.condition = parse_condition(cond->get<std::string>());
        }
        if (const auto* syn = s.sub("synthetic")) {
            Section t(*syn, "data.synthetic");
            t.get("subjects_per_group", c.data.synthetic.subjects_per_group);
            t.get("trials_per_subject", c.data.synthetic.trials_per_subject);
            t.get("channels", c.data.synthetic.channels);
            t.get("samples", c.data.synthetic.samples);
            t.get("sample_rate_hz", c.data.synthetic.sample_rate_hz);
            t.get("group_effect", c.data.synthetic.group_effect);
            t.get("artifact_fraction", c.data.synthetic.artifact_fraction);
            t.finish();
        }
        if (const auto* art = s.sub("artifact_synthetic")) {
            Section t(*art, "data.artifact_synthetic");
            t.get("subjects", c.data.artifact_synthetic.subjects);
            t.get("trials_per_kind", c.data.artifact_synthetic.trials_per_kind);
            t.finish();
        }
        s.finish();
    }
    if (const auto* d = root.sub("dsp")) {
        Section s(*d, "dsp");
        s.get("notch", c.dsp.notch);
        s.get("notch_f0", c.dsp.notch_f0);
        s.get("notch_q", c.dsp.notch_q);
        s.get("window", c.dsp.window.window_size);
        s.get("overlap", c.dsp.window.overlap_fraction);
        s.finish();
    }
    if (const auto* d = root.sub("artifact")) {
        Section s(*d, "artifact");
        read_training(s, c.artifact.training);
        s.get("channel_fraction_threshold", c.artifact.channel_fraction_threshold);
        s.finish();
    }
    if (const auto* d = root.sub("features")) {
        Section s(*d, "features");
        s.get("enabled", c.features.enabled);
        s.get("corr_threshold", c.features.corr_threshold);
        s.get("p_threshold", c.features.p_threshold);
        s.finish();
    }
    if (const auto* d = root.sub("model")) {
        Section s(*d, "model");
        s.get("type", c.model.type);
        s.get("input", c.model.input);
        s.get("mlp_widths", c.model.mlp_widths);
        if (const auto* cnn = s.sub("cnn")) {
            Section t(*cnn, "model.cnn");
            t.get("conv1", c.model.cnn.conv1);
            t.get("conv2", c.model.cnn.conv2);
            t.get("dense", c.model.cnn.dense);
            t.finish();
        }
        if (const auto* f = s.sub("forest")) {
            Section t(*f, "model.forest");
            t.get("n_estimators", c.model.forest.n_estimators);
            t.get("max_depth", c.model.forest.max_depth);
            t.get("features_per_split", c.model.forest.features_per_split);
            t.get("bootstrap", c.model.forest.bootstrap);
            t.finish();
        }
        if (const auto* v = s.sub("svm")) {
            Section t(*v, "model.svm");
            t.get("c", c.model.svm.c);
            t.get("gamma", c.model.svm.gamma);
            t.get("tolerance", c.model.svm.tolerance);
            t.get("max_iterations", c.model.svm.max_iterations);
            t.get("cache_mb", c.model.svm.cache_mb);
            t.finish();
        }
        s.finish();
    }
    if (const auto* d = root.sub("training")) {
        Section s(*d, "training");
        read_training(s, c.training);
        s.finish();
    }
    if (const auto* d = root.sub("pruning")) {
        Section s(*d, "pruning");
        s.get("initial_sparsity", c.pruning.initial_sparsity);
        s.get("final_sparsity", c.pruning.final_sparsity);
        s.get("begin_step", c.pruning.begin_step);
        s.get("end_step", c.pruning.end_step);
        s.get("frequency", c.pruning.frequency);
        s.get("fine_tune_epochs", c.pruning.fine_tune_epochs);
        s.finish();
    }
    if (const auto* d = root.sub("eval")) {
        Section s(*d, "eval");
        s.get("warmup", c.eval.warmup);
        s.get("reps", c.eval.reps);
        s.get("batch", c.eval.batch);
        s.get("sweep", c.eval.sweep);
        s.finish();
    }
    root.get("seed", c.seed);
    root.finish();
    c.validate();
    return c;
}

json to_json(const PipelineConfig& c) {
    json cond = c.data.condition ? json(std::string(to_string(*c.data.condition))) : json(nullptr);
    const auto& syn = c.data.synthetic;
    return {
        {"data",
         {{"main_dir", c.data.main_dir},
          {"artifact_dir", c.data.artifact_dir},
          {"condition", cond},
          {"test_fraction", c.data.test_fraction},
          {"synthetic",
           {{"subjects_per_group", syn.subjects_per_group},
            {"trials_per_subject", syn.trials_per_subject},
            {"channels", syn.channels},
            {"samples", syn.samples},
            {"sample_rate_hz", syn.sample_rate_hz},
            {"group_effect", syn.group_effect},
            {"artifact_fraction", syn.artifact_fraction}}},
          {"artifact_synthetic",
           {{"subjects", c.data.artifact_synthetic.subjects},
            {"trials_per_kind", c.data.artifact_synthetic.trials_per_kind}}}}},
        {"dsp",
         {{"notch", c.dsp.notch},
          {"notch_f0", c.dsp.notch_f0},
          {"notch_q", c.dsp.notch_q},
          {"window", c.dsp.window.window_size},
          {"overlap", c.dsp.window.overlap_fraction}}},
        {"artifact", [&] {
             auto a = training_json(c.artifact.training);
             a["channel_fraction_threshold"] = c.artifact.channel_fraction_threshold;
             return a;
         }()},
        {"features",
         {{"enabled", c.features.enabled},
          {"corr_threshold", c.features.corr_threshold},
          {"p_threshold", c.features.p_threshold}}},
        {"model",
         {{"type", c.model.type},
          {"input", c.model.input},
          {"mlp_widths", c.model.mlp_widths},
          {"cnn", {{"conv1", c.model.cnn.conv1}, {"conv2", c.model.cnn.conv2}, {"dense", c.model.cnn.dense}}},
          {"forest",
           {{"n_estimators", c.model.forest.n_estimators},
            {"max_depth", c.model.forest.max_depth},
            {"features_per_split", c.model.forest.features_per_split},
            {"bootstrap", c.model.forest.bootstrap}}},
          {"svm",
           {{"c", c.model.svm.c},
            {"gamma", c.model.svm.gamma},
            {"tolerance", c.model.svm.tolerance},
            {"max_iterations", c.model.svm.max_iterations},
            {"cache_mb", c.model.svm.cache_mb}}}}},
        {"training", training_json(c.training)},
        {"pruning",
         {{"initial_sparsity", c.pruning.initial_sparsity},
          {"final_sparsity", c.pruning.final_sparsity},
          {"begin_step", c.pruning.begin_step},
          {"end_step", c.pruning.end_step},
          {"frequency", c.pruning.frequency},
          {"fine_tune_epochs", c.pruning.fine_tune_epochs}}},
        {"eval",
         {{"warmup", c.eval.warmup}, {"reps", c.eval.reps}, {"batch", c.eval.batch}, {"sweep", c.eval.sweep}}},
        {"seed", c.seed},
    };
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::FileNotFound, "config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

long steps_per_run(std::size_t examples, const TrainConfig& t) {
    const auto per_epoch = static_cast<long>((examples + t.batch_size - 1) / t.batch_size);
    return per_epoch * t.epochs;
}

PruningSchedule pruning_schedule(const PipelineConfig& cfg, long fine_tune_steps, double final_sparsity) {
    PruningSchedule s;
    if (cfg.pruning.begin_step < 0 && cfg.pruning.end_step < 0) {
        s = PruningSchedule::for_run(fine_tune_steps, final_sparsity, cfg.pruning.frequency);
    } else {
        s.begin_step = cfg.pruning.begin_step;
        s.end_step = cfg.pruning.end_step;
        s.frequency = cfg.pruning.frequency;
        s.final_sparsity = final_sparsity;
    }
    s.initial_sparsity = std::min(cfg.pruning.initial_sparsity, final_sparsity);
    s.validate();
    return s;
}

// --------------------------------------------------------------- main data ---

int class_index(Group g) {
    return g == Group::Alcoholic ? 1 : 0;
}

MainData prepare_main_data(const PipelineConfig& cfg) {
    if (!cfg.data.main_dir.empty()) {
        auto load = load_corpus(cfg.data.main_dir, cfg.data.condition);
        return prepare_main_data(std::move(load.recordings), cfg);
    }
    auto corpus = generate_eeg_corpus(cfg.data.synthetic, derive_seed(cfg.seed, {0xc0}));
    if (cfg.data.condition) {
        std::erase_if(corpus, [&](const Recording& r) { return r.condition != *cfg.data.condition; });
    }
    return prepare_main_data(std::move(corpus), cfg);
}

MainData prepare_main_data(std::vector<Recording> recordings, const PipelineConfig& cfg) {
    require(!recordings.empty(), ErrorCode::EmptyCorpus, "no recordings to prepare");
    MainData d;
    d.channels = recordings.front().channels;
    d.sample_rate_hz = recordings.front().sample_rate_hz;
    for (const auto& r : recordings) {
        require(r.channels == d.channels, ErrorCode::ShapeMismatch,
                r.subject_id + " trial " + std::to_string(r.trial_number) + " has a different channel list");
        require(r.sample_rate_hz == d.sample_rate_hz, ErrorCode::ShapeMismatch,
                r.subject_id + " trial " + std::to_string(r.trial_number) + " has a different sample rate");
    }
    if (cfg.dsp.notch) {
        parallel_for(recordings.size(), [&](std::size_t i) {
            for (auto& ch : recordings[i].data) {
                ch = notch_filter(ch, d.sample_rate_hz, cfg.dsp.notch_f0, cfg.dsp.notch_q);
            }
        });
    }
    const auto W = cfg.dsp.window.window_size;
    for (std::size_t r = 0; r < recordings.size(); ++r) {
        const auto& rec = recordings[r];
        for (auto off : window_offsets(rec.samples(), cfg.dsp.window)) {
            WindowedExample w;
            w.source_id = rec.subject_id;
            w.trial_number = rec.trial_number;
            w.channel = "multi";
            w.offset = off;
            w.group_label = rec.group;
            w.samples.reserve(d.channels.size() * W);
            for (const auto& ch : rec.data) {
                w.samples.insert(w.samples.end(), ch.begin() + static_cast<std::ptrdiff_t>(off),
                                 ch.begin() + static_cast<std::ptrdiff_t>(off + W));
            }
            d.windows.push_back(std::move(w));
            d.recording_of.push_back(r);
        }
    }
    d.recordings = std::move(recordings);
    return d;
}

// ---------------------------------------------------------- artifact model ---

double robust_scale(std::span<const double> x) {
    if (x.empty()) {
        return 1.0;
    }
    std::vector<double> v(x.begin(), x.end());
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    const double median = *mid;
    for (auto& e : v) {
        e = std::abs(e - median);
    }
    std::nth_element(v.begin(), mid, v.end());
    const double mad = 1.4826 * *mid;
    if (mad > 0.0) {
        return mad;
    }
    double ss = 0.0;
    for (double e : x) {
        ss += e * e;
    }
    const double rms = std::sqrt(ss / static_cast<double>(x.size()));
    return rms > 0.0 ? rms : 1.0;
}

ArtifactDataset artifact_dataset(const std::vector<ArtifactRecording>& corpus, const WindowConfig& window) {
    window.validate();
    const auto W = window.window_size;
    std::size_t rows = 0;
    for (const auto& rec : corpus) {
        rows += rec.data.size() * window_offsets(rec.samples(), window).size();
    }
    ArtifactDataset ds;
    ds.x.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(W));
    Eigen::Index row = 0;
    for (const auto& rec : corpus) {
        const auto first = std::lround(rec.artifact_interval_s.first * rec.sample_rate_hz);
        const auto last = std::lround(rec.artifact_interval_s.second * rec.sample_rate_hz);
        const auto offsets = window_offsets(rec.samples(), window);
        for (std::size_t c = 0; c < rec.data.size(); ++c) {
            const auto& ch = rec.data[c];
            const double scale = robust_scale(ch);
            for (auto off : offsets) {
                for (std::size_t k = 0; k < W; ++k) {
                    ds.x(row, static_cast<Eigen::Index>(k)) = static_cast<float>(ch[off + k] / scale);
                }
                const bool artifact = static_cast<long>(off) < last && static_cast<long>(off + W) > first;
                ds.y.push_back(artifact ? 1 : 0);
                WindowedExample w;
                w.source_id = rec.source_id();
                w.trial_number = rec.trial_number;
                w.channel = c < rec.channels.size() ? rec.channels[c] : std::to_string(c);
                w.offset = off;
                w.artifact_label = artifact;
                ds.index.push_back(std::move(w));
                ++row;
            }
        }
    }
    return ds;
}

std::vector<ArtifactRecording> load_or_generate_artifacts(const PipelineConfig& cfg) {
    if (!cfg.data.artifact_dir.empty()) {
        return load_artifact_corpus(cfg.data.artifact_dir);
    }
    return generate_artifact_corpus(cfg.data.artifact_synthetic, derive_seed(cfg.seed, {0xa7}));
}

ArtifactTraining train_artifact_detector(const std::vector<ArtifactRecording>& corpus, const PipelineConfig& cfg,
                                         bool with_pruning) {
    require(!corpus.empty(), ErrorCode::EmptyCorpus, "artifact corpus is empty");
    const auto ds = artifact_dataset(corpus, cfg.dsp.window);

    // One placeholder example per recording so the split is recording-level.
    std::vector<WindowedExample> trials;
    std::set<std::pair<std::string, int>> seen;
    for (const auto& w : ds.index) {
        if (seen.insert({w.source_id, w.trial_number}).second) {
            WindowedExample t;
            t.source_id = w.source_id;
            t.trial_number = w.trial_number;
            trials.push_back(std::move(t));
        }
    }
    const auto parts = split(trials, cfg.data.test_fraction, derive_seed(cfg.seed, {0xa5}));
    std::set<std::pair<std::string, int>> test_keys;
    for (const auto& t : parts.test) {
        test_keys.insert({t.source_id, t.trial_number});
    }
    std::vector<Eigen::Index> train_rows, test_rows;
    for (std::size_t i = 0; i < ds.index.size(); ++i) {
        const bool is_test = test_keys.count({ds.index[i].source_id, ds.index[i].trial_number}) > 0;
        (is_test ? test_rows : train_rows).push_back(static_cast<Eigen::Index>(i));
    }
    const Mat<float> x_train = ds.x(train_rows, Eigen::all);
    const Mat<float> x_test = ds.x(test_rows, Eigen::all);
    std::vector<int> y_train, y_test;
    for (auto r : train_rows) {
        y_train.push_back(ds.y[static_cast<std::size_t>(r)]);
    }
    for (auto r : test_rows) {
        y_test.push_back(ds.y[static_cast<std::size_t>(r)]);
    }

    ArtifactTraining out;
    out.train_windows = train_rows.size();
    out.test_windows = test_rows.size();
    Network net = artifact_mlp(cfg.dsp.window.window_size, derive_seed(cfg.seed, {0xa1}));
    TrainConfig t = cfg.artifact.training;
    t.seed = derive_seed(cfg.seed, {0xa2});
    train(net, x_train, y_train, t);
    auto score = [&](const Network& n) { return confusion_metrics(predict(n, x_test).labels, y_test, 1); };
    out.dense = measure(net, score(net), cfg, false);
    if (with_pruning) {
        fine_tune_pruned(net, x_train, y_train, t, cfg, cfg.pruning.final_sparsity);
        out.pruned = measure(net, score(net), cfg, true);
    }
    return out;
}

TagResult tag_windows(const Network& detector, double detector_rate_hz, const MainData& data, double threshold) {
    require(threshold >= 0.0, ErrorCode::PreconditionViolation, "threshold must be >= 0");
    require(detector.output_width() == 2 && detector.size() > 0 && detector.specs().front().kind == LayerKind::Dense,
            ErrorCode::MissingDetector, "network is not an artifact detector");
    const double ratio = data.sample_rate_hz / detector_rate_hz;
    const bool halve = std::abs(ratio - 2.0) < 1e-9;
    require(halve || std::abs(ratio - 1.0) < 1e-9, ErrorCode::PreconditionViolation,
            "main data must run at the detector rate or twice it");
    const auto W_det = detector.input_width();
    const auto context = halve ? 2 * W_det : W_det;

    // Window indices per recording.
    std::vector<std::vector<std::size_t>> by_recording(data.recordings.size());
    for (std::size_t w = 0; w < data.windows.size(); ++w) {
        by_recording[data.recording_of[w]].push_back(w);
    }
    TagResult out;
    out.removed.assign(data.windows.size(), false);
    out.flagged_fraction.assign(data.windows.size(), 0.0);
    std::vector<std::size_t> flagged_counts(data.windows.size(), 0);
    const auto C = data.channels.size();

    parallel_for(data.recordings.size(), [&](std::size_t r) {
        const auto& rec = data.recordings[r];
        const auto& windows = by_recording[r];
        if (windows.empty()) {
            return;
        }
        require(rec.samples() >= context, ErrorCode::TooShort,
                rec.subject_id + " trial " + std::to_string(rec.trial_number) + " is shorter than the detector context");
        Mat<float> rows(static_cast<Eigen::Index>(windows.size() * C), static_cast<Eigen::Index>(W_det));
        for (std::size_t c = 0; c < C; ++c) {
            const auto channel = halve ? resample_half(rec.data[c], rec.sample_rate_hz) : rec.data[c];
            const double scale = robust_scale(channel);
            for (std::size_t i = 0; i < windows.size(); ++i) {
                const auto& w = data.windows[windows[i]];
                const auto width = w.samples.size() / C;
                const long centred = static_cast<long>(w.offset + width / 2) - static_cast<long>(context / 2);
                const long start = std::clamp(centred, 0L, static_cast<long>(rec.samples() - context));
                const auto first = static_cast<std::size_t>(halve ? start / 2 : start);
                const auto src = std::min(first, channel.size() - W_det);
                for (std::size_t k = 0; k < W_det; ++k) {
                    rows(static_cast<Eigen::Index>(i * C + c), static_cast<Eigen::Index>(k)) =
                        static_cast<float>(channel[src + k] / scale);
                }
            }
        }
        const auto labels = predict(detector, rows).labels;
        for (std::size_t i = 0; i < windows.size(); ++i) {
            std::size_t flagged = 0;
            for (std::size_t c = 0; c < C; ++c) {
                flagged += labels[i * C + c] == 1 ? 1 : 0;
            }
            flagged_counts[windows[i]] = flagged;
        }
    });
    for (std::size_t w = 0; w < data.windows.size(); ++w) {
        const double frac = static_cast<double>(flagged_counts[w]) / static_cast<double>(C);
        out.flagged_fraction[w] = frac;
        out.removed[w] = flagged_counts[w] > 0 && frac >= threshold;
        (out.removed[w] ? out.removed_count : out.kept) += 1;
    }
    return out;
}

// -------------------------------------------------------------- main model ---

double signal_rms(const std::vector<WindowedExample>& windows) {
    double ss = 0.0;
    std::size_t n = 0;
    for (const auto& w : windows) {
        for (double v : w.samples) {
            ss += v * v;
        }
        n += w.samples.size();
    }
    const double rms = n == 0 ? 0.0 : std::sqrt(ss / static_cast<double>(n));
    return rms > 0.0 ? rms : 1.0;
}

NeuralInputs neural_inputs(const std::vector<WindowedExample>& windows, std::size_t channels,
                           std::size_t window_size, const std::string& input_mode, double scale) {
    require(scale > 0.0, ErrorCode::PreconditionViolation, "input scale must be positive");
    const bool per_channel = input_mode == "per_channel";
    require(per_channel || input_mode == "multi_channel", ErrorCode::InvalidConfig, "unknown input mode " + input_mode);
    NeuralInputs in;
    const auto per_window = per_channel ? channels : std::size_t{1};
    const auto width = per_channel ? window_size : channels * window_size;
    in.x.resize(static_cast<Eigen::Index>(windows.size() * per_window), static_cast<Eigen::Index>(width));
    const auto y = group_classes(windows);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const auto& s = windows[w].samples;
        require(s.size() == channels * window_size, ErrorCode::ShapeMismatch, "window size does not match the model");
        for (std::size_t r = 0; r < per_window; ++r) {
            const auto row = static_cast<Eigen::Index>(w * per_window + r);
            for (std::size_t k = 0; k < width; ++k) {
                in.x(row, static_cast<Eigen::Index>(k)) = static_cast<float>(s[r * width + k] / scale);
            }
            in.y.push_back(y[w]);
            in.window_of.push_back(w);
        }
    }
    return in;
}

Network build_main_network(const PipelineConfig& cfg, std::size_t channels, std::size_t window_size,
                           std::size_t feature_width) {
    const auto seed = derive_seed(cfg.seed, {0x4e});
    if (feature_width > 0) {
        return main_mlp(feature_width, cfg.training.dropout, seed, cfg.model.mlp_widths);
    }
    const bool per_channel = cfg.model.input == "per_channel";
    if (cfg.model.type == "cnn") {
        return main_cnn(per_channel ? 1 : channels, window_size, seed, cfg.model.cnn);
    }
    return main_mlp(per_channel ? window_size : channels * window_size, cfg.training.dropout, seed,
                    cfg.model.mlp_widths);
}

ConfusionMetrics trial_vote(const std::vector<int>& pred, const std::vector<WindowedExample>& windows) {
    require(pred.size() == windows.size(), ErrorCode::LengthMismatch, "one prediction per window required");
    std::map<std::pair<std::string, int>, std::array<std::size_t, 3>> votes; // positives, total, truth
    for (std::size_t i = 0; i < windows.size(); ++i) {
        auto& v = votes[{windows[i].source_id, windows[i].trial_number}];
        v[0] += pred[i] == 1 ? 1 : 0;
        v[1] += 1;
        v[2] = static_cast<std::size_t>(class_index(*windows[i].group_label));
    }
    std::vector<int> p, t;
    for (const auto& [key, v] : votes) {
        p.push_back(2 * v[0] > v[1] ? 1 : 0);
        t.push_back(static_cast<int>(v[2]));
    }
    return confusion_metrics(p, t, 1);
}

WindowScores score_windows(const Network& net, const NeuralInputs& in, const std::vector<WindowedExample>& windows) {
    const auto probs = predict(net, in.x).probabilities;
    std::vector<std::array<double, 2>> sums(windows.size(), {0.0, 0.0});
    for (std::size_t r = 0; r < in.window_of.size(); ++r) {
        sums[in.window_of[r]][0] += probs(static_cast<Eigen::Index>(r), 0);
        sums[in.window_of[r]][1] += probs(static_cast<Eigen::Index>(r), 1);
    }
    WindowScores s;
    s.window_true = group_classes(windows);
    for (const auto& p : sums) {
        s.window_pred.push_back(p[1] > p[0] ? 1 : 0);
    }
    s.window = confusion_metrics(s.window_pred, s.window_true, 1);
    s.trial = trial_vote(s.window_pred, windows);
    return s;
}

TrainLog fine_tune_pruned(Network& net, const Mat<float>& x, std::span<const int> y, const TrainConfig& base,
                          const PipelineConfig& cfg, double sparsity) {
    TrainConfig t = base;
    t.epochs = cfg.pruning.fine_tune_epochs;
    t.seed = derive_seed(base.seed, {0x9e});
    if (sparsity <= 0.0) {
        return train(net, x, y, t);
    }
    PruningCallback pruner(pruning_schedule(cfg, steps_per_run(static_cast<std::size_t>(x.rows()), t), sparsity));
    return train(net, x, y, t, pruner.as_step_callback());
}

MainTraining train_main(const std::vector<WindowedExample>& train_set, const std::vector<WindowedExample>& test_set,
                        std::size_t channels, const PipelineConfig& cfg, bool with_pruning) {
    require(!train_set.empty() && !test_set.empty(), ErrorCode::DegenerateSplit, "empty train or test windows");
    const auto W = train_set.front().samples.size() / channels;
    MainTraining out;
    out.input_scale = signal_rms(train_set);
    const auto tr = neural_inputs(train_set, channels, W, cfg.model.input, out.input_scale);
    const auto te = neural_inputs(test_set, channels, W, cfg.model.input, out.input_scale);
    Network net = build_main_network(cfg, channels, W);
    TrainConfig t = cfg.training;
    t.seed = derive_seed(cfg.seed, {0x7a});
    out.log = train(net, tr.x, tr.y, t);
    out.dense_scores = score_windows(net, te, test_set);
    out.dense = measure(net, out.dense_scores.window, cfg, false);
    if (with_pruning) {
        fine_tune_pruned(net, tr.x, tr.y, t, cfg, cfg.pruning.final_sparsity);
        out.pruned_scores = score_windows(net, te, test_set);
        out.pruned = measure(net, out.pruned_scores->window, cfg, true);
    }
    return out;
}

std::vector<SweepRow> run_sweep(const std::vector<WindowedExample>& train_set,
                                const std::vector<WindowedExample>& test_set, std::size_t channels,
                                const PipelineConfig& cfg, const Network* trained) {
    const auto W = train_set.front().samples.size() / channels;
    const double scale = signal_rms(train_set);
    const auto tr = neural_inputs(train_set, channels, W, cfg.model.input, scale);
    const auto te = neural_inputs(test_set, channels, W, cfg.model.input, scale);
    TrainConfig t = cfg.training;
    t.seed = derive_seed(cfg.seed, {0x7a});
    Network base;
    if (trained != nullptr) {
        base = *trained;
    } else {
        base = build_main_network(cfg, channels, W);
        train(base, tr.x, tr.y, t);
    }
    SweepConfig sc;
    sc.training = t;
    sc.training.epochs = cfg.pruning.fine_tune_epochs;
    sc.training.seed = derive_seed(t.seed, {0x9e});
    sc.frequency = cfg.pruning.frequency;
    sc.bench = {cfg.eval.warmup, cfg.eval.reps};
    sc.schedule = [&cfg](long steps, double s) { return pruning_schedule(cfg, steps, s); };
    return sparsity_sweep(base, tr.x, tr.y, cfg.eval.sweep, sc,
                          [&](const Network& n) { return score_windows(n, te, test_set).window.accuracy; });
}

// ---------------------------------------------------------------- settings ---

std::string to_string(Setting s) {
    switch (s) {
    case Setting::AllFeaturesNoRemoval: return "AllFeatures_NoArtifactRemoval";
    case Setting::AllFeaturesWithRemoval: return "AllFeatures_WithArtifactRemoval";
    case Setting::SelectedFeaturesWithRemoval: return "SelectedFeatures_WithArtifactRemoval";
    }
    return "?";
}

Setting parse_setting(std::string_view s) {
    for (auto v : {Setting::AllFeaturesNoRemoval, Setting::AllFeaturesWithRemoval,
                   Setting::SelectedFeaturesWithRemoval}) {
        if (s == to_string(v) || s == std::to_string(static_cast<int>(v))) {
            return v;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown setting '" + std::string(s) + "'");
}

std::string to_string(BaselineModel m) {
    switch (m) {
    case BaselineModel::RF: return "RF";
    case BaselineModel::SVM: return "SVM";
    case BaselineModel::MLP7: return "MLP7";
    }
    return "?";
}

Split split_windows(const MainData& data, const PipelineConfig& cfg) {
    return split(data.windows, cfg.data.test_fraction, derive_seed(cfg.seed, {0x5b}));
}

FeatureMatrix window_features(const std::vector<WindowedExample>& windows, const MainData& data,
                              const PipelineConfig& cfg) {
    FeatureMatrix m;
    const std::size_t chunk = 64;
    const std::size_t chunks = (windows.size() + chunk - 1) / chunk;
    std::vector<FeatureMatrix> blocks(chunks);
    parallel_for(chunks, [&](std::size_t b) {
        const auto lo = b * chunk;
        const auto hi = std::min(windows.size(), lo + chunk);
        std::vector<WindowedExample> sub(windows.begin() + static_cast<std::ptrdiff_t>(lo),
                                         windows.begin() + static_cast<std::ptrdiff_t>(hi));
        blocks[b] = feature_matrix(sub, data.channels, cfg.dsp.window.window_size, data.sample_rate_hz);
    });
    if (blocks.empty()) {
        m = feature_matrix({}, data.channels, cfg.dsp.window.window_size, data.sample_rate_hz);
    } else {
        m = std::move(blocks.front());
        for (std::size_t b = 1; b < blocks.size(); ++b) {
            auto& p = blocks[b];
            m.rows.insert(m.rows.end(), p.rows.begin(), p.rows.end());
            m.group_labels.insert(m.group_labels.end(), p.group_labels.begin(), p.group_labels.end());
            m.artifact_labels.insert(m.artifact_labels.end(), p.artifact_labels.begin(), p.artifact_labels.end());
            m.source_ids.insert(m.source_ids.end(), p.source_ids.begin(), p.source_ids.end());
            m.trial_numbers.insert(m.trial_numbers.end(), p.trial_numbers.begin(), p.trial_numbers.end());
        }
    }
    if (cfg.features.enabled.empty()) {
        return m;
    }
    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
        const auto& col = m.columns[c];
        const auto feature = col.substr(col.rfind('_') + 1);
        if (std::find(cfg.features.enabled.begin(), cfg.features.enabled.end(), feature) !=
            cfg.features.enabled.end()) {
            keep.push_back(c);
        }
    }
    return m.select_columns(keep);
}

std::vector<MetricsReport> run_setting(Setting setting, const SettingInputs& in,
                                       const std::vector<BaselineModel>& models, const PipelineConfig& cfg) {
    require(in.data != nullptr && in.split != nullptr, ErrorCode::PreconditionViolation, "setting needs data and split");
    const bool removal = setting != Setting::AllFeaturesNoRemoval;
    require(!removal || in.tags != nullptr, ErrorCode::MissingDetector,
            to_string(setting) + " needs artifact tags from a trained detector");

    auto filter = [&](const std::vector<WindowedExample>& windows) {
        if (!removal) {
            return windows;
        }
        std::map<WindowKey, std::size_t> index;
        for (std::size_t i = 0; i < in.data->windows.size(); ++i) {
            index.emplace(key_of(in.data->windows[i]), i);
        }
        std::vector<WindowedExample> kept;
        for (const auto& w : windows) {
            if (!in.tags->removed.at(index.at(key_of(w)))) {
                kept.push_back(w);
            }
        }
        return kept;
    };
    const auto train_w = filter(in.split->train);
    const auto test_w = filter(in.split->test);
    const auto y_train = group_classes(train_w);
    const auto y_test = group_classes(test_w);
    require(!test_w.empty() && std::set<int>(y_train.begin(), y_train.end()).size() == 2, ErrorCode::DegenerateSplit,
            to_string(setting) + ": too few windows survive artifact removal");

    const bool need_features = setting == Setting::SelectedFeaturesWithRemoval ||
                               std::any_of(models.begin(), models.end(),
                                           [](auto m) { return m != BaselineModel::MLP7; });
    FeatureMatrix f_train, f_test;
    if (need_features) {
        f_train = window_features(train_w, *in.data, cfg);
        f_test = window_features(test_w, *in.data, cfg);
        if (setting == Setting::SelectedFeaturesWithRemoval) {
            const auto sel = select_features(f_train, y_train, cfg.features.corr_threshold, cfg.features.p_threshold);
            f_train = f_train.select_columns(sel.kept_indices);
            f_test = f_test.select_columns(sel.kept_indices);
        }
    }

    std::vector<MetricsReport> out;
    for (auto model : models) {
        MetricsReport r;
        r.setting = to_string(setting);
        r.model = to_string(model);
        r.seed = cfg.seed;
        ConfusionMetrics m;
        switch (model) {
        case BaselineModel::RF: {
            auto fc = cfg.model.forest;
            fc.seed = derive_seed(cfg.seed, {0xf0, static_cast<std::uint64_t>(setting)});
            const auto forest = train_forest(f_train.rows, y_train, fc);
            m = confusion_metrics(predict_forest(forest, f_test.rows).labels, y_test, 1);
            r.size_bytes = to_json(forest).dump().size();
            break;
        }
        case BaselineModel::SVM: {
            std::vector<int> pm(y_train.size());
            std::transform(y_train.begin(), y_train.end(), pm.begin(), [](int y) { return y == 1 ? 1 : -1; });
            const auto svm = train_svm(f_train.rows, pm, cfg.model.svm);
            auto pred = predict_svm(svm, f_test.rows);
            for (auto& p : pred) {
                p = p == 1 ? 1 : 0;
            }
            m = confusion_metrics(pred, y_test, 1);
            r.size_bytes = to_json(svm).dump().size();
            break;
        }
        case BaselineModel::MLP7: {
            if (setting == Setting::SelectedFeaturesWithRemoval) {
                const auto st = Standardiser::fit(f_train.rows);
                Rows ztr, zte;
                for (const auto& row : f_train.rows) {
                    ztr.push_back(st.apply(row));
                }
                for (const auto& row : f_test.rows) {
                    zte.push_back(st.apply(row));
                }
                Network net = build_main_network(cfg, 0, 0, f_train.width());
                TrainConfig t = cfg.training;
                t.seed = derive_seed(cfg.seed, {0x7b});
                train(net, to_mat(ztr), y_train, t);
                m = confusion_metrics(predict(net, to_mat(zte)).labels, y_test, 1);
                r.size_bytes = serialize(net).size();
            } else {
                auto mlp_cfg = cfg;
                mlp_cfg.model.type = "mlp";
                const auto res = train_main(train_w, test_w, in.data->channels.size(), mlp_cfg, false);
                m = res.dense.metrics;
                r.size_bytes = res.dense.size_bytes;
                r.latency_ms = res.dense.latency_ms;
            }
            break;
        }
        }
        r.accuracy = m.accuracy;
        r.f1 = m.f1;
        out.push_back(r);
    }
    return out;
}

// ------------------------------------------------------------------- files ---

json to_json(const ModelMeta& m) {
    return {{"role", m.role},
            {"type", m.type},
            {"input", m.input},
            {"input_scale", m.input_scale},
            {"sample_rate_hz", m.sample_rate_hz},
            {"window_size", m.window_size},
            {"channels", m.channels},
            {"pruned", m.pruned},
            {"accuracy", m.accuracy},
            {"f1", m.f1},
            {"seed", m.seed}};
}

ModelMeta meta_from_json(const json& j) {
    try {
        ModelMeta m;
        m.role = j.at("role").get<std::string>();
        m.type = j.at("type").get<std::string>();
        m.input = j.at("input").get<std::string>();
        m.input_scale = j.at("input_scale").get<double>();
        m.sample_rate_hz = j.at("sample_rate_hz").get<double>();
        m.window_size = j.at("window_size").get<std::size_t>();
        m.channels = j.at("channels").get<std::size_t>();
        m.pruned = j.at("pruned").get<bool>();
        m.accuracy = j.at("accuracy").get<double>();
        m.f1 = j.at("f1").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedHeader, std::string("model metadata: ") + e.what());
    }
}

std::filesystem::path meta_path(const std::filesystem::path& model) {
    auto p = model;
    p.replace_extension(".meta.json");
    return p;
}

void save_model(const Network& net, const ModelMeta& meta, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    serialize(net, Encoding::Auto, path);
    save_json(to_json(meta), meta_path(path));
}

std::pair<Network, ModelMeta> load_model(const std::filesystem::path& path) {
    auto net = deserialize(path);
    return {std::move(net), meta_from_json(load_json(meta_path(path)))};
}

} // namespace omad
