#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace omad {

enum class Group { Control, Alcoholic };
enum class Condition { S1Obj, S2Match, S2Nomatch };
enum class ArtifactKind { EyeBlink, EyebrowRaise };

std::string_view to_string(Group g);
std::string_view to_string(Condition c);
std::string_view to_string(ArtifactKind k);
ArtifactKind parse_artifact_kind(std::string_view s);

// Channel-major sample matrix: data[channel][sample], microvolts.
using SignalMatrix = std::vector<std::vector<double>>;

/// One subject/trial of the alcoholism EEG corpus.
struct Recording {
    std::string subject_id;
    Group group = Group::Control;
    Condition condition = Condition::S1Obj;
    bool condition_error = false; // "err" suffix on the condition line
    int trial_number = 0;
    double sample_rate_hz = 256.0;
    double sample_period_ms = 3.906;
    std::vector<std::string> channels;
    SignalMatrix data;

    // Header line 2 as declared; the per-channel blocks are authoritative.
    int declared_trials = 0;
    int declared_channels = 0;
    int declared_samples = 0;

    std::size_t samples() const { return data.empty() ? 0 : data.front().size(); }
    bool operator==(const Recording&) const = default;
};

Recording parse_rd(std::istream& in);
Recording parse_rd(std::string_view text);
std::string write_rd(const Recording& rec);

/// Reads a `.rd` file, transparently handling gzip compression.
Recording read_rd_file(const std::filesystem::path& path);
void write_rd_file(const Recording& rec, const std::filesystem::path& path);

struct CorpusLoad {
    std::vector<Recording> recordings;
    std::vector<std::pair<std::filesystem::path, std::string>> errors;
};

/// Recursively loads every file whose name contains ".rd". Parse failures are
/// collected in `errors`; the call throws EmptyCorpus only when nothing parsed.
CorpusLoad load_corpus(const std::filesystem::path& dir,
                       std::optional<Condition> filter = std::nullopt);

struct ArtifactRecording {
    std::string subject_id;
    ArtifactKind kind = ArtifactKind::EyeBlink;
    int trial_number = 0;
    double sample_rate_hz = 128.0;
    std::vector<std::string> channels;
    SignalMatrix data;
    std::pair<double, double> artifact_interval_s{4.0, 7.0};

    std::size_t samples() const { return data.empty() ? 0 : data.front().size(); }
    std::string source_id() const;
    bool operator==(const ArtifactRecording&) const = default;
};

struct ArtifactCorpusConfig {
    int subjects = 3;
    int trials_per_kind = 2;
};

inline constexpr double kArtifactSampleRate = 128.0;
inline constexpr double kArtifactTrialSeconds = 10.0;
inline constexpr double kBaselineRmsUv = 10.0;

const std::vector<std::string>& emotiv_channels();
const std::vector<std::string>& uci_channels();
bool is_frontal(std::string_view channel);

std::vector<ArtifactRecording> generate_artifact_corpus(const ArtifactCorpusConfig& cfg,
                                                        std::uint64_t seed);

/// Band-limited background EEG: a sum of sinusoids between 1 and 40 Hz plus
/// Gaussian noise, rescaled to `rms` microvolts.
std::vector<double> synth_background(std::size_t samples, double fs, double rms,
                                     std::uint64_t seed, double alpha_gain = 1.0,
                                     double beta_gain = 1.0);

/// Adds an artifact signature on [start_s, end_s) to every channel of `data`.
/// Frontal channels receive the strongest deflection.
void overlay_artifact(SignalMatrix& data, const std::vector<std::string>& channels, double fs,
                      ArtifactKind kind, double start_s, double end_s, double baseline_rms,
                      std::uint64_t seed);

void write_artifact_csv(const ArtifactRecording& rec, const std::filesystem::path& dir);
ArtifactRecording read_artifact_csv(const std::filesystem::path& csv_path);
std::vector<ArtifactRecording> load_artifact_corpus(const std::filesystem::path& dir);

/// Synthetic stand-in for the control/alcoholic corpus, used when the public
/// recordings are not available. Alcoholic subjects carry more beta and less
/// alpha power; subject-level jitter keeps the task from being trivial.
struct EegCorpusConfig {
    int subjects_per_group = 5;
    int trials_per_subject = 10;
    int channels = 64;
    int samples = 256;
    double sample_rate_hz = 256.0;
    double group_effect = 1.0; // 0 makes the groups indistinguishable
    double artifact_fraction = 0.0; // share of trials carrying an eye blink
};

std::vector<Recording> generate_eeg_corpus(const EegCorpusConfig& cfg, std::uint64_t seed);

struct WindowedExample {
    std::string source_id;
    int trial_number = 0;
    std::string channel; // "multi" for multi-channel windows
    std::size_t offset = 0;
    std::vector<double> samples; // channel-major when multi-channel
    std::optional<Group> group_label;
    std::optional<bool> artifact_label;
};

struct Split {
    std::vector<WindowedExample> train;
    std::vector<WindowedExample> test;
};

/// Trial-level stratified split keyed by (source_id, trial_number).
Split split(const std::vector<WindowedExample>& examples, double test_fraction,
            std::uint64_t seed);

} // namespace omad
