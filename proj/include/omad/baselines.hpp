#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace omad {

using Rows = std::vector<std::vector<double>>;

// ---------------------------------------------------------------- forest ---

struct ForestConfig {
    int n_estimators = 50;
    int max_depth = 5;
    int features_per_split = 0; // 0 selects floor(sqrt(d))
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::array<double, 2> class_freq{}; // leaf class frequencies
    std::size_t samples = 0;

    bool is_leaf() const { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes; // nodes[0] is the root

    const std::array<double, 2>& leaf_for(std::span<const double> row) const;
    int depth() const;
    bool operator==(const Tree&) const = default;
};

struct Forest {
    std::vector<Tree> trees;
    std::size_t n_features = 0;
    bool operator==(const Forest&) const = default;
};

/// Bagged CART trees with Gini splits; labels are 0/1 class indices.
Forest train_forest(const Rows& features, std::span<const int> labels, const ForestConfig& cfg);

struct ForestPrediction {
    std::vector<int> labels;
    std::vector<std::array<double, 2>> probabilities;
};

ForestPrediction predict_forest(const Forest& forest, const Rows& rows);

nlohmann::json to_json(const Forest& forest);
Forest forest_from_json(const nlohmann::json& j);

// ------------------------------------------------------------------- svm ---

struct SvmConfig {
    double c = 1.0;
    double gamma = 0.0;       // 0 selects 1 / (d * var(X)) on standardised X
    double tolerance = 1e-3;  // stop when the maximal KKT violation <= tolerance
    long max_iterations = 0;  // 0 selects max(10'000'000, 100 n)
    std::size_t cache_mb = 256;
};

struct SvmModel {
    Rows support_vectors; // standardised
    std::vector<double> coef; // alpha_i * y_i
    std::vector<double> alpha;
    std::vector<int> sv_labels;
    double rho = 0.0; // decision = sum coef_i K(sv_i, x) - rho
    double gamma = 0.0;
    std::vector<double> mean;
    std::vector<double> scale;
    bool converged = true;
    long iterations = 0;
    double c = 1.0;

    std::vector<double> standardise(std::span<const double> row) const;
    /// Decision value for an already standardised row.
    double decision_standardised(std::span<const double> z) const;
    double decision(std::span<const double> row) const;
};

/// RBF-kernel C-SVM solved by SMO with second-order working-set selection.
/// Labels are -1 / +1; features are standardised inside and the column
/// statistics stored in the model.
SvmModel train_svm(const Rows& features, std::span<const int> labels, const SvmConfig& cfg);

/// sign(decision); a zero decision value maps to +1.
std::vector<int> predict_svm(const SvmModel& model, const Rows& rows);

double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma);

struct Standardiser {
    std::vector<double> mean;
    std::vector<double> scale; // population std; 1 for constant columns

    static Standardiser fit(const Rows& rows);
    std::vector<double> apply(std::span<const double> row) const;
};

nlohmann::json to_json(const SvmModel& model);
SvmModel svm_from_json(const nlohmann::json& j);

void save_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json load_json(const std::filesystem::path& path);

} // namespace omad
