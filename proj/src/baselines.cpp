#include "omad/baselines.hpp"

#include "omad/error.hpp"
#include "omad/parallel.hpp"
#include "omad/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <list>
#include <numeric>
#include <unordered_map>

namespace omad {

namespace {

void check_rows(const Rows& rows, std::size_t labels) {
    require(!rows.empty(), ErrorCode::PreconditionViolation, "no training rows");
    require(rows.size() == labels, ErrorCode::LengthMismatch, "one label per row required");
    const auto d = rows.front().size();
    require(d > 0, ErrorCode::ShapeMismatch, "rows have no features");
    for (const auto& r : rows) {
        require(r.size() == d, ErrorCode::ShapeMismatch, "ragged feature rows");
    }
}

double gini(double n0, double n1) {
    const double n = n0 + n1;
    if (n <= 0.0) {
        return 0.0;
    }
    const double p0 = n0 / n;
    const double p1 = n1 / n;
    return 1.0 - p0 * p0 - p1 * p1;
}

class TreeBuilder {
public:
    TreeBuilder(const Rows& x, std::span<const int> y, const ForestConfig& cfg, std::size_t mtry, Rng& rng)
        : x_(x), y_(y), cfg_(cfg), mtry_(mtry), rng_(rng), features_(x.front().size()) {
        std::iota(features_.begin(), features_.end(), std::size_t{0});
    }

    Tree build(std::vector<std::size_t> samples) {
        Tree t;
        t.nodes.emplace_back();
        grow(t, 0, std::move(samples), 0);
        return t;
    }

private:
    void grow(Tree& t, int node, std::vector<std::size_t> samples, int depth) {
        double counts[2] = {0.0, 0.0};
        for (auto s : samples) {
            counts[y_[s]] += 1.0;
        }
        const double total = counts[0] + counts[1];
        t.nodes[node].samples = samples.size();
        t.nodes[node].class_freq = {counts[0] / total, counts[1] / total};
        if (depth >= cfg_.max_depth || counts[0] == 0.0 || counts[1] == 0.0 || samples.size() < 2) {
            return;
        }

        // Partial Fisher-Yates: the first mtry entries are this node's candidates.
        for (std::size_t i = 0; i < mtry_; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, features_.size() - 1);
            std::swap(features_[i], features_[pick(rng_)]);
        }
        int best_feature = -1;
        double best_threshold = 0.0;
        double best_impurity = std::numeric_limits<double>::infinity();
        std::vector<std::pair<double, int>> column(samples.size());
        for (std::size_t f = 0; f < mtry_; ++f) {
            const auto feat = features_[f];
            for (std::size_t i = 0; i < samples.size(); ++i) {
                column[i] = {x_[samples[i]][feat], y_[samples[i]]};
            }
            std::sort(column.begin(), column.end());
            double left[2] = {0.0, 0.0};
            for (std::size_t i = 0; i + 1 < column.size(); ++i) {
                left[column[i].second] += 1.0;
                if (column[i].first == column[i + 1].first) {
                    continue;
                }
                const double nl = static_cast<double>(i + 1);
                const double nr = total - nl;
                const double impurity = (nl * gini(left[0], left[1]) +
                                         nr * gini(counts[0] - left[0], counts[1] - left[1])) /
                                        total;
                if (impurity < best_impurity) {
                    best_impurity = impurity;
                    best_feature = static_cast<int>(feat);
                    best_threshold = 0.5 * (column[i].first + column[i + 1].first);
                    // Midpoint can round onto the upper value for adjacent doubles.
                    if (!(best_threshold < column[i + 1].first)) {
                        best_threshold = column[i].first;
                    }
                }
            }
        }
        if (best_feature < 0) {
            return;
        }

        std::vector<std::size_t> lo;
        std::vector<std::size_t> hi;
        for (auto s : samples) {
            (x_[s][static_cast<std::size_t>(best_feature)] <= best_threshold ? lo : hi).push_back(s);
        }
        samples.clear();
        samples.shrink_to_fit();
        const int l = static_cast<int>(t.nodes.size());
        t.nodes.emplace_back();
        const int r = static_cast<int>(t.nodes.size());
        t.nodes.emplace_back();
        t.nodes[node].feature = best_feature;
        t.nodes[node].threshold = best_threshold;
        t.nodes[node].left = l;
        t.nodes[node].right = r;
        grow(t, l, std::move(lo), depth + 1);
        grow(t, r, std::move(hi), depth + 1);
    }

    const Rows& x_;
    std::span<const int> y_;
    const ForestConfig& cfg_;
    std::size_t mtry_;
    Rng& rng_;
    std::vector<std::size_t> features_;
};

} // namespace

const std::array<double, 2>& Tree::leaf_for(std::span<const double> row) const {
    int n = 0;
    while (!nodes[static_cast<std::size_t>(n)].is_leaf()) {
        const auto& node = nodes[static_cast<std::size_t>(n)];
        n = row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    }
    return nodes[static_cast<std::size_t>(n)].class_freq;
}

int Tree::depth() const {
    std::vector<int> d(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i].is_leaf()) {
            d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
        }
        deepest = std::max(deepest, d[i]);
    }
    return deepest;
}

Forest train_forest(const Rows& features, std::span<const int> labels, const ForestConfig& cfg) {
    check_rows(features, labels.size());
    require(cfg.n_estimators >= 1 && cfg.max_depth >= 1, ErrorCode::InvalidConfig,
            "n_estimators and max_depth must be >= 1");
    for (int y : labels) {
        require(y == 0 || y == 1, ErrorCode::PreconditionViolation, "forest labels must be 0 or 1");
    }
    const auto positives = std::count(labels.begin(), labels.end(), 1);
    require(positives > 0 && static_cast<std::size_t>(positives) < labels.size(), ErrorCode::DegenerateData,
            "both classes must be present");
    const auto d = features.front().size();
    bool any_varying = false;
    for (std::size_t f = 0; f < d && !any_varying; ++f) {
        for (const auto& r : features) {
            if (r[f] != features.front()[f]) {
                any_varying = true;
                break;
            }
        }
    }
    require(any_varying, ErrorCode::DegenerateData, "every feature is constant");

    const std::size_t mtry = cfg.features_per_split > 0
                                 ? std::min<std::size_t>(static_cast<std::size_t>(cfg.features_per_split), d)
                                 : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))));
    Forest forest;
    forest.n_features = d;
    forest.trees.resize(static_cast<std::size_t>(cfg.n_estimators));
    const auto n = features.size();
    parallel_for(forest.trees.size(), [&](std::size_t t) {
        Rng rng(derive_seed(cfg.seed, {0xf0, t}));
        std::vector<std::size_t> sample(n);
        if (cfg.bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (auto& s : sample) {
                s = pick(rng);
            }
        } else {
            std::iota(sample.begin(), sample.end(), std::size_t{0});
        }
        TreeBuilder builder(features, labels, cfg, mtry, rng);
        forest.trees[t] = builder.build(std::move(sample));
    });
    return forest;
}

ForestPrediction predict_forest(const Forest& forest, const Rows& rows) {
    require(!forest.trees.empty(), ErrorCode::PreconditionViolation, "forest is not trained");
    ForestPrediction out;
    for (const auto& row : rows) {
        require(row.size() == forest.n_features, ErrorCode::ShapeMismatch,
                "row has " + std::to_string(row.size()) + " features, forest expects " +
                    std::to_string(forest.n_features));
        std::array<double, 2> p{0.0, 0.0};
        for (const auto& tree : forest.trees) {
            const auto& leaf = tree.leaf_for(row);
            p[0] += leaf[0];
            p[1] += leaf[1];
        }
        const auto k = static_cast<double>(forest.trees.size());
        p[0] /= k;
        p[1] /= k;
        out.probabilities.push_back(p);
        out.labels.push_back(p[1] > p[0] ? 1 : 0);
    }
    return out;
}

nlohmann::json to_json(const Forest& forest) {
    nlohmann::json j;
    j["type"] = "random_forest";
    j["n_features"] = forest.n_features;
    auto& trees = j["trees"] = nlohmann::json::array();
    for (const auto& t : forest.trees) {
        auto nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            if (n.is_leaf()) {
                nodes.push_back({{"leaf", true}, {"class_freq", n.class_freq}, {"samples", n.samples}});
            } else {
                nodes.push_back({{"leaf", false},
                                 {"feature", n.feature},
                                 {"threshold", n.threshold},
                                 {"left", n.left},
                                 {"right", n.right},
                                 {"class_freq", n.class_freq},
                                 {"samples", n.samples}});
            }
        }
        trees.push_back({{"nodes", nodes}});
    }
    return j;
}

Forest forest_from_json(const nlohmann::json& j) {
    try {
        require(j.at("type") == "random_forest", ErrorCode::VersionMismatch, "not a forest model");
        Forest f;
        f.n_features = j.at("n_features").get<std::size_t>();
        for (const auto& t : j.at("trees")) {
            Tree tree;
            for (const auto& n : t.at("nodes")) {
                TreeNode node;
                node.class_freq = n.at("class_freq").get<std::array<double, 2>>();
                node.samples = n.at("samples").get<std::size_t>();
                if (!n.at("leaf").get<bool>()) {
                    node.feature = n.at("feature").get<int>();
                    node.threshold = n.at("threshold").get<double>();
                    node.left = n.at("left").get<int>();
                    node.right = n.at("right").get<int>();
                }
                tree.nodes.push_back(node);
            }
            f.trees.push_back(std::move(tree));
        }
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedHeader, std::string("forest json: ") + e.what());
    }
}

// ------------------------------------------------------------------- svm ---

double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
    require(a.size() == b.size(), ErrorCode::ShapeMismatch, "kernel arguments differ in length");
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

Standardiser Standardiser::fit(const Rows& rows) {
    require(!rows.empty(), ErrorCode::PreconditionViolation, "cannot standardise an empty matrix");
    const auto d = rows.front().size();
    const auto n = static_cast<double>(rows.size());
    Standardiser s;
    s.mean.assign(d, 0.0);
    s.scale.assign(d, 0.0);
    for (const auto& r : rows) {
        for (std::size_t f = 0; f < d; ++f) {
            s.mean[f] += r[f];
        }
    }
    for (auto& m : s.mean) {
        m /= n;
    }
    for (const auto& r : rows) {
        for (std::size_t f = 0; f < d; ++f) {
            const double dv = r[f] - s.mean[f];
            s.scale[f] += dv * dv;
        }
    }
    for (auto& v : s.scale) {
        v = std::sqrt(v / n);
        if (!(v > 0.0)) {
            v = 1.0;
        }
    }
    return s;
}

std::vector<double> Standardiser::apply(std::span<const double> row) const {
    require(row.size() == mean.size(), ErrorCode::ShapeMismatch,
            "row has " + std::to_string(row.size()) + " features, expected " + std::to_string(mean.size()));
    std::vector<double> z(row.size());
    for (std::size_t f = 0; f < row.size(); ++f) {
        z[f] = (row[f] - mean[f]) / scale[f];
    }
    return z;
}

std::vector<double> SvmModel::standardise(std::span<const double> row) const {
    return Standardiser{mean, scale}.apply(row);
}

double SvmModel::decision_standardised(std::span<const double> z) const {
    double f = -rho;
    for (std::size_t i = 0; i < support_vectors.size(); ++i) {
        f += coef[i] * rbf_kernel(support_vectors[i], z, gamma);
    }
    return f;
}

double SvmModel::decision(std::span<const double> row) const {
    return decision_standardised(standardise(row));
}

namespace {

// Rows of Q_ij = y_i y_j K(x_i, x_j), computed on demand with an LRU bound.
class KernelRows {
public:
    KernelRows(const Eigen::MatrixXd& x, std::span<const int> y, double gamma, std::size_t cache_mb)
        : x_(x), y_(y), gamma_(gamma), sqnorm_(x.rowwise().squaredNorm()) {
        const std::size_t row_bytes = static_cast<std::size_t>(x.rows()) * sizeof(float);
        capacity_ = std::max<std::size_t>(2, cache_mb * 1024 * 1024 / std::max<std::size_t>(row_bytes, 1));
    }

    const std::vector<float>& row(std::size_t i) {
        if (auto it = index_.find(i); it != index_.end()) {
            lru_.splice(lru_.begin(), lru_, it->second);
            return it->second->second;
        }
        if (lru_.size() >= capacity_) {
            index_.erase(lru_.back().first);
            lru_.pop_back();
        }
        const Eigen::VectorXd dots = x_ * x_.row(static_cast<Eigen::Index>(i)).transpose();
        std::vector<float> q(static_cast<std::size_t>(x_.rows()));
        const double si = sqnorm_(static_cast<Eigen::Index>(i));
        for (Eigen::Index k = 0; k < x_.rows(); ++k) {
            const double d2 = std::max(0.0, si + sqnorm_(k) - 2.0 * dots(k));
            q[static_cast<std::size_t>(k)] =
                static_cast<float>(y_[i] * y_[static_cast<std::size_t>(k)] * std::exp(-gamma_ * d2));
        }
        lru_.emplace_front(i, std::move(q));
        index_[i] = lru_.begin();
        return lru_.front().second;
    }

private:
    const Eigen::MatrixXd& x_;
    std::span<const int> y_;
    double gamma_;
    Eigen::VectorXd sqnorm_;
    std::size_t capacity_;
    std::list<std::pair<std::size_t, std::vector<float>>> lru_;
    std::unordered_map<std::size_t, decltype(lru_)::iterator> index_;
};

} // namespace

SvmModel train_svm(const Rows& features, std::span<const int> labels, const SvmConfig& cfg) {
    check_rows(features, labels.size());
    require(cfg.c > 0.0 && cfg.tolerance > 0.0 && cfg.gamma >= 0.0, ErrorCode::InvalidConfig,
            "C and tolerance must be positive, gamma non-negative");
    for (int y : labels) {
        require(y == -1 || y == 1, ErrorCode::PreconditionViolation, "svm labels must be -1 or +1");
    }
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    require(pos > 0 && static_cast<std::size_t>(pos) < labels.size(), ErrorCode::PreconditionViolation,
            "both classes must be present");

    const auto n = features.size();
    const auto d = features.front().size();
    const auto st = Standardiser::fit(features);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        const auto z = st.apply(features[i]);
        for (std::size_t f = 0; f < d; ++f) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = z[f];
        }
    }
    double gamma = cfg.gamma;
    if (gamma == 0.0) {
        const double mean = x.mean();
        const double var = (x.array() - mean).square().mean();
        gamma = var > 0.0 ? 1.0 / (static_cast<double>(d) * var) : 1.0;
    }

    const double c = cfg.c;
    const double eps = cfg.tolerance;
    constexpr double tau = 1e-12;
    const long max_iter = cfg.max_iterations > 0 ? cfg.max_iterations
                                                 : std::max<long>(10'000'000, 100 * static_cast<long>(n));
    std::vector<double> alpha(n, 0.0);
    std::vector<double> grad(n, -1.0);
    const std::vector<double> qd(n, 1.0); // K(x, x) = 1 for RBF
    KernelRows q(x, labels, gamma, cfg.cache_mb);
    auto upper = [&](std::size_t t) { return alpha[t] >= c; };
    auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

    long iter = 0;
    bool converged = false;
    while (iter < max_iter) {
        // Second-order working set selection.
        double gmax = -std::numeric_limits<double>::infinity();
        double gmax2 = -std::numeric_limits<double>::infinity();
        long i_sel = -1;
        for (std::size_t t = 0; t < n; ++t) {
            if (labels[t] == 1) {
                if (!upper(t) && -grad[t] >= gmax) {
                    gmax = -grad[t];
                    i_sel = static_cast<long>(t);
                }
            } else if (!lower(t) && grad[t] >= gmax) {
                gmax = grad[t];
                i_sel = static_cast<long>(t);
            }
        }
        long j_sel = -1;
        double obj_min = std::numeric_limits<double>::infinity();
        if (i_sel >= 0) {
            const auto i = static_cast<std::size_t>(i_sel);
            const auto& qi = q.row(i);
            for (std::size_t t = 0; t < n; ++t) {
                if (labels[t] == 1) {
                    if (lower(t)) {
                        continue;
                    }
                    const double diff = gmax + grad[t];
                    gmax2 = std::max(gmax2, grad[t]);
                    if (diff > 0.0) {
                        const double quad = qd[i] + qd[t] - 2.0 * labels[i] * qi[t];
                        const double obj = -(diff * diff) / (quad > 0.0 ? quad : tau);
                        if (obj <= obj_min) {
                            j_sel = static_cast<long>(t);
                            obj_min = obj;
                        }
                    }
                } else {
                    if (upper(t)) {
                        continue;
                    }
                    const double diff = gmax - grad[t];
                    gmax2 = std::max(gmax2, -grad[t]);
                    if (diff > 0.0) {
                        const double quad = qd[i] + qd[t] + 2.0 * labels[i] * qi[t];
                        const double obj = -(diff * diff) / (quad > 0.0 ? quad : tau);
                        if (obj <= obj_min) {
                            j_sel = static_cast<long>(t);
                            obj_min = obj;
                        }
                    }
                }
            }
        }
        if (i_sel < 0 || j_sel < 0 || gmax + gmax2 < eps) {
            converged = true;
            break;
        }
        ++iter;

        const auto i = static_cast<std::size_t>(i_sel);
        const auto j = static_cast<std::size_t>(j_sel);
        const std::vector<float> qi = q.row(i);
        const std::vector<float>& qj = q.row(j);
        const double old_i = alpha[i];
        const double old_j = alpha[j];
        if (labels[i] != labels[j]) {
            double quad = qd[i] + qd[j] + 2.0 * qi[j];
            if (quad <= 0.0) {
                quad = tau;
            }
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if (diff > 0.0) {
                if (alpha[i] > c) {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if (alpha[j] > c) {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            double quad = qd[i] + qd[j] - 2.0 * qi[j];
            if (quad <= 0.0) {
                quad = tau;
            }
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > c) {
                if (alpha[i] > c) {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if (alpha[j] < 0.0) {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if (sum > c) {
                if (alpha[j] > c) {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        const double di = alpha[i] - old_i;
        const double dj = alpha[j] - old_j;
        for (std::size_t t = 0; t < n; ++t) {
            grad[t] += static_cast<double>(qi[t]) * di + static_cast<double>(qj[t]) * dj;
        }
    }

    // rho: mean of y*G over free multipliers, else the midpoint of the bounds.
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = labels[t] * grad[t];
        if (upper(t)) {
            if (labels[t] == -1) {
                ub = std::min(ub, yg);
            } else {
                lb = std::max(lb, yg);
            }
        } else if (lower(t)) {
            if (labels[t] == 1) {
                ub = std::min(ub, yg);
            } else {
                lb = std::max(lb, yg);
            }
        } else {
            ++n_free;
            sum_free += yg;
        }
    }

    SvmModel m;
    m.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
    m.gamma = gamma;
    m.mean = st.mean;
    m.scale = st.scale;
    m.converged = converged;
    m.iterations = iter;
    m.c = c;
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] > 0.0) {
            std::vector<double> sv(d);
            for (std::size_t f = 0; f < d; ++f) {
                sv[f] = x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(f));
            }
            m.support_vectors.push_back(std::move(sv));
            m.alpha.push_back(alpha[t]);
            m.coef.push_back(alpha[t] * labels[t]);
            m.sv_labels.push_back(labels[t]);
        }
    }
    return m;
}

std::vector<int> predict_svm(const SvmModel& model, const Rows& rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        out.push_back(model.decision(r) >= 0.0 ? 1 : -1);
    }
    return out;
}

nlohmann::json to_json(const SvmModel& m) {
    return {{"type", "rbf_svm"},
            {"c", m.c},
            {"gamma", m.gamma},
            {"rho", m.rho},
            {"support_vectors", m.support_vectors},
            {"coef", m.coef},
            {"alpha", m.alpha},
            {"sv_labels", m.sv_labels},
            {"mean", m.mean},
            {"scale", m.scale},
            {"converged", m.converged},
            {"iterations", m.iterations}};
}

SvmModel svm_from_json(const nlohmann::json& j) {
    try {
        require(j.at("type") == "rbf_svm", ErrorCode::VersionMismatch, "not an svm model");
        SvmModel m;
        m.c = j.at("c").get<double>();
        m.gamma = j.at("gamma").get<double>();
        m.rho = j.at("rho").get<double>();
        m.support_vectors = j.at("support_vectors").get<Rows>();
        m.coef = j.at("coef").get<std::vector<double>>();
        m.alpha = j.at("alpha").get<std::vector<double>>();
        m.sv_labels = j.at("sv_labels").get<std::vector<int>>();
        m.mean = j.at("mean").get<std::vector<double>>();
        m.scale = j.at("scale").get<std::vector<double>>();
        m.converged = j.at("converged").get<bool>();
        m.iterations = j.at("iterations").get<long>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedHeader, std::string("svm json: ") + e.what());
    }
}

void save_json(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
    out << j.dump(1) << '\n';
}

nlohmann::json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::FileNotFound, path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::MalformedHeader, path.string() + ": " + e.what());
    }
}

} // namespace omad
