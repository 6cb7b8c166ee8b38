#include "omad/featsel.hpp"

#include "omad/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>

namespace omad {

double pearson(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size() && x.size() >= 2, ErrorCode::PreconditionViolation,
            "pearson needs equal lengths >= 2");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    require(sxx > 0.0 && syy > 0.0, ErrorCode::ZeroVariance, "pearson input is constant");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double x, double a, double b) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) {
        d = kTiny;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) {
            break;
        }
    }
    return h;
}

} // namespace

double incomplete_beta(double x, double a, double b) {
    require(a > 0.0 && b > 0.0, ErrorCode::PreconditionViolation, "incomplete beta needs a, b > 0");
    if (x <= 0.0) {
        return 0.0;
    }
    if (x >= 1.0) {
        return 1.0;
    }
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_continued_fraction(x, a, b) / a;
    }
    return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

double student_t_two_sided(double t, double df) {
    require(df > 0.0, ErrorCode::PreconditionViolation, "degrees of freedom must be positive");
    if (std::isinf(t)) {
        return 0.0;
    }
    return incomplete_beta(df / (df + t * t), df / 2.0, 0.5);
}

WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
    require(a.size() >= 2 && b.size() >= 2, ErrorCode::PreconditionViolation,
            "welch_t needs at least 2 samples per group");
    auto moments = [](std::span<const double> v) {
        double m = 0.0;
        for (double x : v) {
            m += x;
        }
        m /= static_cast<double>(v.size());
        double s = 0.0;
        for (double x : v) {
            s += (x - m) * (x - m);
        }
        return std::pair{m, s / static_cast<double>(v.size() - 1)};
    };
    const auto [ma, va] = moments(a);
    const auto [mb, vb] = moments(b);
    const double qa = va / static_cast<double>(a.size());
    const double qb = vb / static_cast<double>(b.size());
    const double se2 = qa + qb;
    WelchResult r;
    if (se2 <= 0.0) {
        require(ma != mb, ErrorCode::ZeroVariance, "both groups constant with equal means");
        r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p = 0.0;
        r.df = static_cast<double>(a.size() + b.size() - 2);
        return r;
    }
    r.t = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 / (qa * qa / static_cast<double>(a.size() - 1) + qb * qb / static_cast<double>(b.size() - 1));
    r.p = student_t_two_sided(r.t, r.df);
    return r;
}

namespace {

// Centred, unit-norm copy of each column (empty when the column is constant)
// so that r reduces to a dot product.
std::vector<std::vector<double>> normalised_columns(const FeatureMatrix& m) {
    std::vector<std::vector<double>> cols(m.width());
    const auto n = m.size();
    for (std::size_t c = 0; c < m.width(); ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            mean += m.rows[r][c];
        }
        mean /= static_cast<double>(n);
        std::vector<double> z(n);
        double ss = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            z[r] = m.rows[r][c] - mean;
            ss += z[r] * z[r];
        }
        if (ss > 0.0) {
            const double inv = 1.0 / std::sqrt(ss);
            for (auto& v : z) {
                v *= inv;
            }
            cols[c] = std::move(z);
        }
    }
    return cols;
}

} // namespace

std::vector<std::size_t> correlation_pass(const FeatureMatrix& matrix, double corr_threshold) {
    require(matrix.size() >= 2 && matrix.width() >= 1, ErrorCode::PreconditionViolation,
            "feature matrix needs >= 2 rows and >= 1 column");
    const auto cols = normalised_columns(matrix);
    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        bool redundant = false;
        if (!cols[c].empty()) {
            for (auto k : kept) {
                if (cols[k].empty()) {
                    continue;
                }
                double r = 0.0;
                for (std::size_t i = 0; i < cols[c].size(); ++i) {
                    r += cols[c][i] * cols[k][i];
                }
                if (std::abs(r) > corr_threshold) {
                    redundant = true;
                    break;
                }
            }
        }
        if (!redundant) {
            kept.push_back(c);
        }
    }
    return kept;
}

std::vector<std::string> SelectionResult::kept_names() const {
    std::vector<std::string> out;
    for (auto i : kept_indices) {
        out.push_back(stats[i].name);
    }
    return out;
}

SelectionResult select_features(const FeatureMatrix& matrix, std::span<const int> labels, double corr_threshold,
                                double p_threshold) {
    require(matrix.size() >= 2 && matrix.width() >= 1, ErrorCode::PreconditionViolation,
            "feature matrix must be non-empty");
    require(labels.size() == matrix.size(), ErrorCode::LengthMismatch, "one label per row required");
    const auto n_pos = std::count(labels.begin(), labels.end(), 1);
    require(n_pos >= 1 && static_cast<std::size_t>(n_pos) < labels.size(), ErrorCode::PreconditionViolation,
            "both classes must be present");

    SelectionResult res;
    res.corr_threshold = corr_threshold;
    res.p_threshold = p_threshold;
    const auto cols = normalised_columns(matrix);
    const auto d = matrix.width();
    res.stats.resize(d);

    std::vector<bool> survived(d, false);
    std::vector<std::size_t> kept1;
    for (std::size_t c = 0; c < d; ++c) {
        res.stats[c].name = matrix.columns[c];
        double max_r = 0.0;
        if (!cols[c].empty()) {
            for (auto k : kept1) {
                if (cols[k].empty()) {
                    continue;
                }
                double r = 0.0;
                for (std::size_t i = 0; i < cols[c].size(); ++i) {
                    r += cols[c][i] * cols[k][i];
                }
                max_r = std::max(max_r, std::min(1.0, std::abs(r)));
                if (max_r > corr_threshold) {
                    break;
                }
            }
        }
        res.stats[c].max_abs_r = max_r;
        if (max_r > corr_threshold) {
            res.dropped_by_correlation.push_back(c);
        } else {
            kept1.push_back(c);
            survived[c] = true;
        }
    }

    std::vector<double> a;
    std::vector<double> b;
    for (std::size_t c = 0; c < d; ++c) {
        a.clear();
        b.clear();
        for (std::size_t r = 0; r < matrix.size(); ++r) {
            (labels[r] == 1 ? a : b).push_back(matrix.rows[r][c]);
        }
        auto& st = res.stats[c];
        if (a.size() >= 2 && b.size() >= 2) {
            try {
                const auto w = welch_t(a, b);
                st.t = w.t;
                st.p = w.p;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::ZeroVariance) {
                    throw;
                }
                st.t = 0.0;
                st.p = 1.0;
            }
        }
        if (survived[c]) {
            (st.p < p_threshold ? res.kept_indices : res.dropped_by_ttest).push_back(c);
        }
    }
    require(!res.kept_indices.empty(), ErrorCode::AllDropped,
            "no feature survived corr_threshold=" + std::to_string(corr_threshold) +
                " p_threshold=" + std::to_string(p_threshold));
    return res;
}

nlohmann::json to_json(const SelectionResult& r) {
    nlohmann::json j;
    j["corr_threshold"] = r.corr_threshold;
    j["p_threshold"] = r.p_threshold;
    j["kept"] = r.kept_names();
    auto& feats = j["features"] = nlohmann::json::array();
    std::vector<const char*> fate(r.stats.size(), "kept");
    for (auto i : r.dropped_by_correlation) {
        fate[i] = "correlation";
    }
    for (auto i : r.dropped_by_ttest) {
        fate[i] = "ttest";
    }
    for (std::size_t i = 0; i < r.stats.size(); ++i) {
        const auto& s = r.stats[i];
        // JSON has no infinity; a saturated statistic is stored as +-1e308.
        const double t = std::isinf(s.t) ? std::copysign(1e308, s.t) : s.t;
        feats.push_back({{"name", s.name}, {"t", t}, {"p", s.p}, {"max_abs_r", s.max_abs_r}, {"status", fate[i]}});
    }
    return j;
}

SelectionResult selection_from_json(const nlohmann::json& j) {
    SelectionResult r;
    try {
        r.corr_threshold = j.at("corr_threshold").get<double>();
        r.p_threshold = j.at("p_threshold").get<double>();
        const auto& feats = j.at("features");
        for (std::size_t i = 0; i < feats.size(); ++i) {
            const auto& f = feats[i];
            r.stats.push_back({f.at("name").get<std::string>(), f.at("max_abs_r").get<double>(),
                               f.at("t").get<double>(), f.at("p").get<double>()});
            const auto status = f.at("status").get<std::string>();
            if (status == "kept") {
                r.kept_indices.push_back(i);
            } else if (status == "correlation") {
                r.dropped_by_correlation.push_back(i);
            } else if (status == "ttest") {
                r.dropped_by_ttest.push_back(i);
            } else {
                throw Error(ErrorCode::MalformedHeader, "unknown feature status '" + status + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedHeader, std::string("selection json: ") + e.what());
    }
    return r;
}

void save_selection(const SelectionResult& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
    out << to_json(r).dump(2) << '\n';
}

SelectionResult load_selection(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::FileNotFound, path.string());
    try {
        return selection_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::MalformedHeader, std::string("selection json: ") + e.what());
    }
}

std::vector<std::size_t> column_indices(const std::vector<std::string>& columns,
                                        const std::vector<std::string>& names) {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        pos.emplace(columns[i], i);
    }
    std::vector<std::size_t> out;
    for (const auto& n : names) {
        auto it = pos.find(n);
        require(it != pos.end(), ErrorCode::ShapeMismatch, "feature '" + n + "' not present");
        out.push_back(it->second);
    }
    return out;
}

} // namespace omad
