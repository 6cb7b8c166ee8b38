#include "doctest.h"

#include "omad/error.hpp"
#include "omad/featsel.hpp"
#include "omad/random.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace omad;

namespace {

ErrorCode code_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an omad::Error");
    return ErrorCode::PreconditionViolation;
}

double boost_two_sided(double t, double df) {
    boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

FeatureMatrix matrix_from_columns(const std::vector<std::vector<double>>& cols) {
    FeatureMatrix m;
    for (std::size_t j = 0; j < cols.size(); ++j) {
        m.columns.push_back("f" + std::to_string(j));
    }
    const std::size_t n = cols.front().size();
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row;
        for (const auto& c : cols) {
            row.push_back(c[i]);
        }
        m.rows.push_back(row);
        m.group_labels.emplace_back();
        m.artifact_labels.emplace_back();
        m.source_ids.push_back("s");
        m.trial_numbers.push_back(static_cast<int>(i));
    }
    return m;
}

std::vector<double> noise(Rng& rng, std::size_t n) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = d(rng);
    }
    return v;
}

} // namespace

TEST_CASE("pearson on exact linear relations") {
    const std::vector<double> x{1, 2, 3};
    CHECK(pearson(x, std::vector<double>{2, 4, 6}) == doctest::Approx(1.0));
    CHECK(pearson(x, std::vector<double>{3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(code_of([&] { pearson(std::vector<double>{1, 1, 1}, x); }) == ErrorCode::ZeroVariance);
}

TEST_CASE("welch t on the hand-computed fixture") {
    const std::vector<double> a{1, 2, 3, 4, 5};
    const std::vector<double> b{2, 3, 4, 5, 6};
    const auto r = welch_t(a, b);
    CHECK(r.t == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(r.df == doctest::Approx(8.0).epsilon(1e-12));
    // scipy.stats.ttest_ind(a, b, equal_var=False).pvalue
    CHECK(r.p == doctest::Approx(0.34659350708733416).epsilon(1e-10));
    CHECK(r.p == doctest::Approx(boost_two_sided(-1.0, 8.0)).epsilon(1e-12));
}

TEST_CASE("welch t edge cases") {
    const std::vector<double> a{1.5, 2.0, 7.25, 3.0};
    const auto same = welch_t(a, a);
    CHECK(same.t == 0.0);
    CHECK(same.p == doctest::Approx(1.0));
    CHECK(code_of([] { welch_t(std::vector<double>{0, 0}, std::vector<double>{0, 0}); }) ==
          ErrorCode::ZeroVariance);
    const auto apart = welch_t(std::vector<double>{0, 0}, std::vector<double>{1, 1});
    CHECK(std::isinf(apart.t));
    CHECK(apart.p == 0.0);
}

TEST_CASE("welch t swaps sign with the groups and keeps p") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        auto a = noise(rng, 5 + trial % 7);
        auto b = noise(rng, 4 + trial % 5);
        for (auto& v : b) {
            v += 0.3;
        }
        const auto ab = welch_t(a, b);
        const auto ba = welch_t(b, a);
        CHECK(ab.t == doctest::Approx(-ba.t));
        CHECK(ab.p == doctest::Approx(ba.p));
        CHECK(ab.p == doctest::Approx(boost_two_sided(ab.t, ab.df)).epsilon(1e-10));
    }
}

TEST_CASE("student t tail matches frozen scipy values and the boost oracle") {
    // 2 * scipy.stats.t.sf(|t|, df)
    CHECK(student_t_two_sided(2.5, 3.7) == doctest::Approx(0.07182202291182675).epsilon(1e-10));
    CHECK(student_t_two_sided(0.3, 120.5) == doctest::Approx(0.7646940598579268).epsilon(1e-10));
    CHECK(student_t_two_sided(7.0, 2.2) == doctest::Approx(0.015283762765380899).epsilon(1e-10));
    Rng rng(8);
    std::uniform_real_distribution<double> tdist(-12.0, 12.0), dfdist(1.0, 300.0);
    for (int i = 0; i < 500; ++i) {
        const double t = tdist(rng);
        const double df = dfdist(rng);
        CHECK(student_t_two_sided(t, df) == doctest::Approx(boost_two_sided(t, df)).epsilon(1e-9));
    }
}

TEST_CASE("incomplete beta agrees with boost") {
    Rng rng(9);
    std::uniform_real_distribution<double> x(0.0, 1.0), ab(0.1, 60.0);
    for (int i = 0; i < 500; ++i) {
        const double xv = x(rng), a = ab(rng), b = ab(rng);
        CHECK(incomplete_beta(xv, a, b) == doctest::Approx(boost::math::ibeta(a, b, xv)).epsilon(1e-9));
    }
    CHECK(incomplete_beta(0.0, 2.0, 3.0) == 0.0);
    CHECK(incomplete_beta(1.0, 2.0, 3.0) == 1.0);
}

TEST_CASE("duplicate columns drop the later copy") {
    Rng rng(1);
    const auto a = noise(rng, 40);
    std::vector<int> labels(40);
    for (std::size_t i = 0; i < 40; ++i) {
        labels[i] = static_cast<int>(i % 2);
    }
    const auto m = matrix_from_columns({a, a});
    const auto r = select_features(m, labels, 0.9, 1.0);
    CHECK(r.dropped_by_correlation == std::vector<std::size_t>{1});
    CHECK(r.kept_indices == std::vector<std::size_t>{0});
    CHECK(r.stats[1].max_abs_r == doctest::Approx(1.0));
}

TEST_CASE("a column equal to the label is kept") {
    Rng rng(5);
    std::vector<int> labels(60);
    std::vector<double> label_col(60);
    for (std::size_t i = 0; i < 60; ++i) {
        labels[i] = static_cast<int>(i % 2);
        label_col[i] = labels[i];
    }
    const auto m = matrix_from_columns({noise(rng, 60), label_col});
    const auto r = select_features(m, labels, 0.9, 0.05);
    CHECK(std::find(r.kept_indices.begin(), r.kept_indices.end(), 1) != r.kept_indices.end());
    CHECK(r.stats[1].p < 1e-12);
}

TEST_CASE("pure noise under a tiny p threshold leaves nothing") {
    Rng rng(17);
    std::vector<int> labels(80);
    for (std::size_t i = 0; i < 80; ++i) {
        labels[i] = static_cast<int>(i % 2);
    }
    const auto m = matrix_from_columns({noise(rng, 80), noise(rng, 80), noise(rng, 80)});
    CHECK(code_of([&] { select_features(m, labels, 0.9, 1e-12); }) == ErrorCode::AllDropped);
}

TEST_CASE("selection partitions the columns and ignores row order") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 50;
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = static_cast<int>(i % 2);
        }
        std::vector<std::vector<double>> cols;
        for (int j = 0; j < 8; ++j) {
            auto c = noise(rng, n);
            if (j % 3 == 0) {
                for (std::size_t i = 0; i < n; ++i) {
                    c[i] += labels[i] * 1.5;
                }
            }
            if (j == 5) {
                c = cols[0];
                for (auto& v : c) {
                    v = 2.0 * v + 0.01 * noise(rng, 1)[0];
                }
            }
            cols.push_back(c);
        }
        const auto m = matrix_from_columns(cols);
        SelectionResult r;
        try {
            r = select_features(m, labels, 0.9, 0.05);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::AllDropped);
            continue;
        }
        std::vector<std::size_t> all;
        all.insert(all.end(), r.kept_indices.begin(), r.kept_indices.end());
        all.insert(all.end(), r.dropped_by_correlation.begin(), r.dropped_by_correlation.end());
        all.insert(all.end(), r.dropped_by_ttest.begin(), r.dropped_by_ttest.end());
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> expect(m.width());
        for (std::size_t j = 0; j < expect.size(); ++j) {
            expect[j] = j;
        }
        CHECK(all == expect);
        CHECK(std::is_sorted(r.kept_indices.begin(), r.kept_indices.end()));

        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) {
            perm[i] = i;
        }
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<int> shuffled_labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            shuffled_labels[i] = labels[perm[i]];
        }
        const auto shuffled = select_features(m.select_rows(perm), shuffled_labels, 0.9, 0.05);
        CHECK(shuffled.kept_indices == r.kept_indices);
        CHECK(shuffled.dropped_by_correlation == r.dropped_by_correlation);
    }
}

TEST_CASE("correlation pass keeps a maximal set of weakly correlated columns") {
    // Greedy in-order pruning is not monotone in the threshold: a column
    // dropped at a lower threshold can no longer knock out a later one.
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 30;
        const auto base = noise(rng, n);
        std::vector<std::vector<double>> cols;
        std::uniform_real_distribution<double> mix(0.0, 1.0);
        for (int j = 0; j < 10; ++j) {
            const double w = mix(rng);
            auto own = noise(rng, n);
            for (std::size_t i = 0; i < n; ++i) {
                own[i] = w * base[i] + (1.0 - w) * own[i];
            }
            cols.push_back(own);
        }
        const auto m = matrix_from_columns(cols);
        CHECK(correlation_pass(m, 1.0).size() == cols.size());
        for (double tau : {0.95, 0.8, 0.6, 0.4, 0.2, 0.05}) {
            const auto kept = correlation_pass(m, tau);
            REQUIRE(!kept.empty());
            CHECK(kept.front() == 0);
            for (std::size_t a = 0; a < kept.size(); ++a) {
                for (std::size_t b = a + 1; b < kept.size(); ++b) {
                    CHECK(std::abs(pearson(cols[kept[a]], cols[kept[b]])) <= tau + 1e-12);
                }
            }
            for (std::size_t c = 0; c < cols.size(); ++c) {
                if (std::find(kept.begin(), kept.end(), c) != kept.end()) {
                    continue;
                }
                const bool explained = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
                    return k < c && std::abs(pearson(cols[k], cols[c])) > tau - 1e-12;
                });
                CHECK(explained);
            }
        }
    }
}

TEST_CASE("selection json round trip") {
    SelectionResult r;
    r.kept_indices = {0, 3};
    r.dropped_by_correlation = {1};
    r.dropped_by_ttest = {2};
    r.stats = {{"a", 0.1, 2.0, 0.01}, {"b", 0.95, 0.0, 1.0}, {"c", 0.2, 0.5, 0.6}, {"d", 0.3, -4.0, 1e-5}};
    const auto path = std::filesystem::temp_directory_path() / "omad_selection.json";
    save_selection(r, path);
    const auto back = load_selection(path);
    CHECK(back.kept_indices == r.kept_indices);
    CHECK(back.kept_names() == std::vector<std::string>{"a", "d"});
    CHECK(back.stats[3].t == -4.0);
    CHECK(column_indices({"a", "b", "c", "d"}, {"d", "b"}) == std::vector<std::size_t>{3, 1});
    CHECK(code_of([] { column_indices({"a"}, {"z"}); }) == ErrorCode::ShapeMismatch);
}
