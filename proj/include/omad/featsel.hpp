#pragma once

#include "omad/dsp.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace omad {

/// Sample Pearson correlation. Throws ZeroVariance if either input is constant.
double pearson(std::span<const double> x, std::span<const double> y);

struct WelchResult {
    double t = 0.0;
    double p = 1.0;
    double df = 0.0;
};

/// Welch's unequal-variance two-sample t-test with a two-sided p-value.
/// Zero standard error with different means gives t = +-inf, p = 0; with equal
/// means it throws ZeroVariance.
WelchResult welch_t(std::span<const double> a, std::span<const double> b);

/// Two-sided tail probability P(|T| >= |t|) of Student's t with `df` degrees
/// of freedom, via the regularized incomplete beta function.
double student_t_two_sided(double t, double df);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double x, double a, double b);

inline constexpr double kDefaultCorrThreshold = 0.9;
inline constexpr double kDefaultPThreshold = 0.05;

struct FeatureStat {
    std::string name;
    double max_abs_r = 0.0; // largest |r| against columns kept before it
    double t = 0.0;
    double p = 1.0;
};

struct SelectionResult {
    std::vector<std::size_t> kept_indices;
    std::vector<std::size_t> dropped_by_correlation;
    std::vector<std::size_t> dropped_by_ttest;
    std::vector<FeatureStat> stats; // one per original column
    double corr_threshold = kDefaultCorrThreshold;
    double p_threshold = kDefaultPThreshold;

    std::vector<std::string> kept_names() const;
};

/// Pass 1 drops columns whose |r| with an already-kept column exceeds
/// corr_threshold (first column wins); pass 2 keeps survivors with Welch
/// p < p_threshold. `labels` are 0/1 class indices.
SelectionResult select_features(const FeatureMatrix& matrix, std::span<const int> labels,
                                double corr_threshold = kDefaultCorrThreshold,
                                double p_threshold = kDefaultPThreshold);

/// Column indices of pass 1 alone (correlation pruning).
std::vector<std::size_t> correlation_pass(const FeatureMatrix& matrix, double corr_threshold);

nlohmann::json to_json(const SelectionResult& r);
SelectionResult selection_from_json(const nlohmann::json& j);
void save_selection(const SelectionResult& r, const std::filesystem::path& path);
SelectionResult load_selection(const std::filesystem::path& path);

/// Indices of `names` within `columns`; throws ShapeMismatch for a missing name.
std::vector<std::size_t> column_indices(const std::vector<std::string>& columns,
                                        const std::vector<std::string>& names);

} // namespace omad
