#pragma once

#include "omad/dataset.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace omad {

struct WindowConfig {
    std::size_t window_size = 128;
    double overlap_fraction = 0.8;

    /// floor((1 - overlap) * W); 25 for the default 128 / 0.8.
    std::size_t stride() const;
    void validate() const;
};

/// Second-order IIR notch (RBJ biquad), unity gain at DC, applied causally
/// from a zero state.
class NotchFilter {
public:
    NotchFilter(double fs, double f0, double q);

    double apply(double x);
    void reset();

private:
    double b0_, b1_, b2_, a1_, a2_;
    double x1_ = 0.0, x2_ = 0.0, y1_ = 0.0, y2_ = 0.0;
};

inline constexpr double kDefaultNotchHz = 60.0;
inline constexpr double kDefaultNotchQ = 30.0;

std::vector<double> notch_filter(std::span<const double> signal, double fs, double f0 = kDefaultNotchHz,
                                 double q = kDefaultNotchQ);

/// Zero-phase windowed-sinc low-pass at 0.45 * (fs / 2), then keep every
/// second sample. Output length is floor(len / 2) at fs / 2.
std::vector<double> resample_half(std::span<const double> signal, double fs);

std::vector<std::size_t> window_offsets(std::size_t length, const WindowConfig& cfg);
std::vector<std::vector<double>> make_windows(std::span<const double> signal, const WindowConfig& cfg);

inline constexpr std::size_t kFeatureCount = 12;

struct FeatureVector {
    enum Index : std::size_t {
        Mean, Variance, StdDev, Rms, Min, Max, ZeroCrossings,
        Delta, Theta, Alpha, Beta, Gamma,
    };
    std::array<double, kFeatureCount> values{};

    double operator[](std::size_t i) const { return values[i]; }
    static const std::array<std::string, kFeatureCount>& names();
};

struct Band {
    const char* name;
    double lo_hz, hi_hz; // [lo, hi), gamma closed at 45 Hz
};
const std::array<Band, 5>& eeg_bands();

/// One-sided periodogram |X_k|^2 / (N * fs) for bins k = 0 .. N/2.
std::vector<double> periodogram(std::span<const double> window, double fs);

FeatureVector extract_features(std::span<const double> window, double fs);

/// Per-window feature rows with named columns and optional labels. Row keys
/// (source_id, trial_number) keep trial identity for splitting.
struct FeatureMatrix {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::vector<std::optional<Group>> group_labels;
    std::vector<std::optional<bool>> artifact_labels;
    std::vector<std::string> source_ids;
    std::vector<int> trial_numbers;

    std::size_t size() const { return rows.size(); }
    std::size_t width() const { return columns.size(); }
    FeatureMatrix select_columns(const std::vector<std::size_t>& keep) const;
    FeatureMatrix select_rows(const std::vector<std::size_t>& keep) const;
};

/// Features for multi-channel windows: columns "<channel>_<feature>".
FeatureMatrix feature_matrix(const std::vector<WindowedExample>& windows,
                             const std::vector<std::string>& channels, std::size_t window_size, double fs);

void write_feature_csv(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix read_feature_csv(const std::filesystem::path& path);

} // namespace omad
