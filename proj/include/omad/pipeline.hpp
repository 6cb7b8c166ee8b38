#pragma once

#include "omad/baselines.hpp"
#include "omad/dataset.hpp"
#include "omad/dsp.hpp"
#include "omad/eval.hpp"
#include "omad/featsel.hpp"
#include "omad/nn.hpp"
#include "omad/prune.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace omad {

struct PipelineConfig {
    struct Data {
        std::string main_dir;     // empty: synthetic corpus from `synthetic`
        std::string artifact_dir; // empty: synthetic corpus from `artifact_synthetic`
        std::optional<Condition> condition;
        double test_fraction = 0.3;
        EegCorpusConfig synthetic{.artifact_fraction = 0.3};
        ArtifactCorpusConfig artifact_synthetic;
    } data;
    struct Dsp {
        bool notch = true;
        double notch_f0 = kDefaultNotchHz;
        double notch_q = kDefaultNotchQ;
        WindowConfig window;
    } dsp;
    struct Artifact {
        TrainConfig training;
        double channel_fraction_threshold = 0.25;
    } artifact;
    struct Features {
        std::vector<std::string> enabled; // feature names; empty keeps all
        double corr_threshold = kDefaultCorrThreshold;
        double p_threshold = kDefaultPThreshold;
    } features;
    struct Model {
        std::string type = "mlp"; // mlp | cnn
        std::string input = "per_channel"; // per_channel | multi_channel
        std::vector<std::size_t> mlp_widths = kMainMlpWidths;
        CnnWidths cnn;
        ForestConfig forest;
        SvmConfig svm;
    } model;
    TrainConfig training;
    struct Pruning {
        double initial_sparsity = 0.0;
        double final_sparsity = 0.5;
        long begin_step = -1; // -1: 20% of the fine-tuning steps
        long end_step = -1;   // -1: 80% of the fine-tuning steps
        long frequency = 100;
        int fine_tune_epochs = 30;
    } pruning;
    struct Eval {
        int warmup = 5;
        int reps = 30;
        std::size_t batch = 64;
        std::vector<double> sweep{0.0, 0.25, 0.5, 0.75, 0.9};
    } eval;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Parses a config document; unknown keys and out-of-range values raise
/// InvalidConfig. Missing keys keep their defaults.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path);

/// Training schedule for `fine_tune_steps` optimiser steps, honouring
/// explicit begin/end steps from the config.
PruningSchedule pruning_schedule(const PipelineConfig& cfg, long fine_tune_steps, double final_sparsity);
long steps_per_run(std::size_t examples, const TrainConfig& t);

// ------------------------------------------------------------ main data ---

struct MainData {
    std::vector<Recording> recordings; // notch-filtered
    std::vector<std::string> channels;
    double sample_rate_hz = 256.0;
    std::vector<WindowedExample> windows; // multi-channel, channel-major
    std::vector<std::size_t> recording_of; // window -> recording index
};

/// Loads (or synthesises) the control/alcoholic corpus, notch-filters every
/// channel and cuts multi-channel windows.
MainData prepare_main_data(const PipelineConfig& cfg);
MainData prepare_main_data(std::vector<Recording> recordings, const PipelineConfig& cfg);

int class_index(Group g); // Control 0, Alcoholic 1

// ------------------------------------------------------- artifact model ---

/// 1.4826 * median absolute deviation; falls back to RMS and then 1 when
/// the spread is zero.
double robust_scale(std::span<const double> x);

struct ArtifactDataset {
    Mat<float> x; // per-channel windows, robust-scaled
    std::vector<int> y; // 1 = artifact
    std::vector<WindowedExample> index; // samples left empty
};

/// Per-channel windows labelled artifact when they overlap the recording's
/// artifact interval.
ArtifactDataset artifact_dataset(const std::vector<ArtifactRecording>& corpus, const WindowConfig& window);

struct ModelResult {
    Network net;
    ConfusionMetrics metrics;
    std::size_t size_bytes = 0;
    double latency_ms = 0.0;
    bool pruned = false;
};

struct ArtifactTraining {
    ModelResult dense;
    std::optional<ModelResult> pruned;
    std::size_t train_windows = 0;
    std::size_t test_windows = 0;
};

std::vector<ArtifactRecording> load_or_generate_artifacts(const PipelineConfig& cfg);
ArtifactTraining train_artifact_detector(const std::vector<ArtifactRecording>& corpus, const PipelineConfig& cfg,
                                         bool with_pruning);

struct TagResult {
    std::vector<bool> removed;             // per main window
    std::vector<double> flagged_fraction;  // per main window
    std::size_t kept = 0;
    std::size_t removed_count = 0;
};

/// Scores every channel of every main window with the detector. Each
/// window's detector input is a context of 2W source samples centred on the
/// window (clamped to the trial), halved in rate when the source runs at
/// twice the detector rate. A window is removed when at least one channel
/// is flagged and the flagged fraction >= threshold.
TagResult tag_windows(const Network& detector, double detector_rate_hz, const MainData& data, double threshold);

// ----------------------------------------------------------- main model ---

struct NeuralInputs {
    Mat<float> x;
    std::vector<int> y;
    std::vector<std::size_t> window_of; // input row -> window index within the set
};

/// Per-channel rows (one per channel of every window) or one row per
/// multi-channel window, scaled by 1 / `scale`.
NeuralInputs neural_inputs(const std::vector<WindowedExample>& windows, std::size_t channels,
                           std::size_t window_size, const std::string& input_mode, double scale);
double signal_rms(const std::vector<WindowedExample>& windows);

Network build_main_network(const PipelineConfig& cfg, std::size_t channels, std::size_t window_size,
                           std::size_t feature_width = 0);

struct WindowScores {
    std::vector<int> window_pred;
    std::vector<int> window_true;
    ConfusionMetrics window;
    ConfusionMetrics trial; // majority vote per (source, trial), ties -> class 0
};

/// Averages per-row class probabilities over each window's rows and scores
/// windows and trials with Alcoholic as the positive class.
WindowScores score_windows(const Network& net, const NeuralInputs& in, const std::vector<WindowedExample>& windows);
ConfusionMetrics trial_vote(const std::vector<int>& pred, const std::vector<WindowedExample>& windows);

struct MainTraining {
    ModelResult dense;
    std::optional<ModelResult> pruned;
    WindowScores dense_scores;
    std::optional<WindowScores> pruned_scores;
    double input_scale = 1.0;
    TrainLog log;
};

/// Trains the configured neural model (and optionally its pruned twin,
/// fine-tuned from the trained weights) on a window split.
MainTraining train_main(const std::vector<WindowedExample>& train, const std::vector<WindowedExample>& test,
                        std::size_t channels, const PipelineConfig& cfg, bool with_pruning);

/// Continues training `net` for pruning.fine_tune_epochs under the
/// schedule ending at `sparsity`; masks stay frozen after the end step.
TrainLog fine_tune_pruned(Network& net, const Mat<float>& x, std::span<const int> y, const TrainConfig& base,
                          const PipelineConfig& cfg, double sparsity);

/// Sparsity sweep for the configured neural model: trains the dense model
/// (unless `trained` is given), then prune-fine-tunes a copy per sparsity.
std::vector<SweepRow> run_sweep(const std::vector<WindowedExample>& train, const std::vector<WindowedExample>& test,
                                std::size_t channels, const PipelineConfig& cfg, const Network* trained = nullptr);

// --------------------------------------------------------------- settings ---

enum class Setting { AllFeaturesNoRemoval = 1, AllFeaturesWithRemoval = 2, SelectedFeaturesWithRemoval = 3 };
std::string to_string(Setting s);
Setting parse_setting(std::string_view s);

enum class BaselineModel { RF, SVM, MLP7 };
std::string to_string(BaselineModel m);

struct SettingInputs {
    const MainData* data = nullptr;
    const Split* split = nullptr;
    const TagResult* tags = nullptr; // required for settings 2 and 3
};

/// Runs one comparison setting for the requested models on a fixed trial split.
std::vector<MetricsReport> run_setting(Setting setting, const SettingInputs& in,
                                       const std::vector<BaselineModel>& models, const PipelineConfig& cfg);

/// Trial-level split of the main windows (stratified by group).
Split split_windows(const MainData& data, const PipelineConfig& cfg);

/// Feature rows for a window list, restricted to the enabled features.
FeatureMatrix window_features(const std::vector<WindowedExample>& windows, const MainData& data,
                              const PipelineConfig& cfg);

// ----------------------------------------------------------------- files ---

struct ModelMeta {
    std::string role;       // artifact_detector | main
    std::string type;       // mlp | cnn
    std::string input;      // per_channel | multi_channel | robust_channel
    double input_scale = 1.0;
    double sample_rate_hz = 0.0;
    std::size_t window_size = 128;
    std::size_t channels = 1;
    bool pruned = false;
    double accuracy = 0.0;
    double f1 = 0.0;
    std::uint64_t seed = 0;
};

nlohmann::json to_json(const ModelMeta& m);
ModelMeta meta_from_json(const nlohmann::json& j);
std::filesystem::path meta_path(const std::filesystem::path& model);
void save_model(const Network& net, const ModelMeta& meta, const std::filesystem::path& path);
std::pair<Network, ModelMeta> load_model(const std::filesystem::path& path);

} // namespace omad
