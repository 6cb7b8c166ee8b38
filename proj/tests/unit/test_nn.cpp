#include "doctest.h"

#include "checks.hpp"

#include "omad/error.hpp"
#include "omad/nn.hpp"

#include <cmath>

using namespace omad;
using omad::testing::gaussian_batch;

namespace {

Mat<float> rows_of(std::initializer_list<std::initializer_list<float>> rows) {
    Mat<float> m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index r = 0;
    for (const auto& row : rows) {
        Eigen::Index c = 0;
        for (float v : row) {
            m(r, c++) = v;
        }
        ++r;
    }
    return m;
}

// Two Gaussian clusters separated along the first axis.
std::pair<Mat<float>, std::vector<int>> separable(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<float> d(0.0f, 0.5f);
    Mat<float> x(static_cast<Eigen::Index>(n), 2);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<int>(i % 2);
        x(static_cast<Eigen::Index>(i), 0) = (y[i] ? 2.0f : -2.0f) + d(rng);
        x(static_cast<Eigen::Index>(i), 1) = d(rng);
    }
    return {x, y};
}

} // namespace

TEST_CASE("softmax of equal logits is uniform and rows sum to one") {
    const auto p = softmax_rows<float>(rows_of({{0.0f, 0.0f}}));
    CHECK(p(0, 0) == doctest::Approx(0.5));
    CHECK(p(0, 1) == doctest::Approx(0.5));

    Rng rng(5);
    std::uniform_real_distribution<double> wide(-300.0, 300.0);
    Mat<double> logits(50, 4);
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        logits.data()[i] = wide(rng);
    }
    const auto q = softmax_rows<double>(logits);
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
        CHECK(q.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(q.row(r).allFinite());
    }
}

TEST_CASE("cross entropy values") {
    const std::vector<int> zero{0};
    CHECK(cross_entropy<float>(rows_of({{1.0f, 0.0f}}), zero) <= 1e-11);
    CHECK(cross_entropy<float>(rows_of({{0.5f, 0.5f}}), std::vector<int>{1}) == doctest::Approx(std::log(2.0)));
    const double l1 = cross_entropy<double>(Mat<double>{{0.8, 0.2}}, zero);
    const double l2 = cross_entropy<double>(Mat<double>{{0.3, 0.7}}, zero);
    CHECK(cross_entropy<double>(Mat<double>{{0.8, 0.2}, {0.3, 0.7}}, std::vector<int>{0, 0}) ==
          doctest::Approx((l1 + l2) / 2.0));
    CHECK(std::isfinite(cross_entropy<float>(rows_of({{0.0f, 1.0f}}), zero)));
}

TEST_CASE("identity dense layer passes its input through") {
    auto net = Network({LayerSpec::dense(3, 3), LayerSpec::softmax(3)}, 1);
    auto& p = net.mutable_params(0);
    p.weight.setIdentity();
    p.bias.setZero();
    const auto x = rows_of({{0.5f, -1.0f, 2.0f}});
    const auto cache = forward(net, x, Mode::Eval);
    CHECK(cache.inputs[1].isApprox(x));
}

TEST_CASE("eval forward is deterministic and dropout is the identity in eval mode") {
    auto net = main_mlp(10, 0.4, 3, {8, 6});
    Rng rng(1);
    const auto x = omad::testing::float_batch(5, 10, rng);
    const auto a = forward(net, x, Mode::Eval).output;
    const auto b = forward(net, x, Mode::Eval).output;
    CHECK(a == b);
    auto no_dropout = net;
    no_dropout.set_dropout_rate(0.0);
    CHECK(forward(no_dropout, x, Mode::Eval).output == a);
}

TEST_CASE("train-mode dropout uses inverted scaling") {
    auto net = Network({LayerSpec::dropout(4000, 0.25), LayerSpec::softmax(4000)}, 1);
    Mat<float> x = Mat<float>::Ones(1, 4000);
    Rng rng(2);
    const auto cache = forward(net, x, Mode::Train, &rng);
    const auto& m = cache.dropout_masks[0];
    std::size_t kept = 0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        CHECK((m.data()[i] == 0.0f || m.data()[i] == doctest::Approx(1.0 / 0.75)));
        kept += m.data()[i] != 0.0f;
    }
    CHECK(static_cast<double>(kept) / 4000.0 == doctest::Approx(0.75).epsilon(0.05));
}

TEST_CASE("conv1d with same padding keeps the temporal length") {
    const auto spec = LayerSpec::conv1d(3, 5, 17);
    CHECK(spec.input_width() == 51);
    CHECK(spec.output_width() == 85);
    auto net = Network({spec, LayerSpec::dense(85, 2), LayerSpec::softmax(2)}, 4);
    Rng rng(3);
    const auto cache = forward(net, omad::testing::float_batch(2, 51, rng), Mode::Eval);
    CHECK(cache.inputs[1].cols() == 85);
}

TEST_CASE("conv1d matches a direct convolution") {
    const std::size_t cin = 2, cout = 3, len = 7;
    auto net = BasicNetwork<double>({LayerSpec::conv1d(cin, cout, len), LayerSpec::softmax(cout * len)}, 9);
    Rng rng(4);
    const auto x = gaussian_batch(2, cin * len, rng);
    const auto y = forward(net, x, Mode::Eval).inputs[1];
    const auto& p = net.params(0);
    for (Eigen::Index b = 0; b < 2; ++b) {
        for (std::size_t o = 0; o < cout; ++o) {
            for (std::size_t t = 0; t < len; ++t) {
                double acc = p.bias(static_cast<Eigen::Index>(o));
                for (std::size_t c = 0; c < cin; ++c) {
                    for (std::size_t k = 0; k < 3; ++k) {
                        const long src = static_cast<long>(t) + static_cast<long>(k) - 1;
                        if (src < 0 || src >= static_cast<long>(len)) {
                            continue;
                        }
                        acc += p.weight(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c * 3 + k)) *
                               x(b, static_cast<Eigen::Index>(c * len + static_cast<std::size_t>(src)));
                    }
                }
                CHECK(y(b, static_cast<Eigen::Index>(o * len + t)) == doctest::Approx(acc).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("analytic gradients match central differences for every layer kind") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (const auto& c : omad::testing::grad_cases(seed)) {
            BasicNetwork<double> net(c.specs, seed * 31 + 7);
            Rng rng(seed);
            const auto x = gaussian_batch(6, c.input_width, rng);
            const auto y = omad::testing::random_labels(6, static_cast<int>(net.output_width()), rng);
            const auto rep = omad::testing::gradient_check(net, x, y);
            INFO(c.kind << " seed " << seed);
            CHECK(rep.checked > 0);
            CHECK(rep.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("masked weights get zero gradient and zero inputs give zero weight gradient") {
    auto net = BasicNetwork<double>({LayerSpec::dense(4, 3), LayerSpec::relu(3), LayerSpec::dense(3, 2),
                                     LayerSpec::softmax(2)},
                                    2);
    net.mutable_params(0).mask(1, 2) = 0.0;
    net.apply_masks();
    Rng rng(6);
    const auto x = gaussian_batch(5, 4, rng);
    const std::vector<int> y{0, 1, 0, 1, 1};
    const auto cache = forward(net, x, Mode::Train, &rng);
    const auto g = backward(net, cache, y);
    CHECK(g.weight[0](1, 2) == 0.0);
    CHECK(net.params(0).weight(1, 2) == 0.0);

    const Mat<double> zeros = Mat<double>::Zero(5, 4);
    const auto zcache = forward(net, zeros, Mode::Train, &rng);
    CHECK(backward(net, zcache, y).weight[0].isZero(0.0));
}

TEST_CASE("backward rejects a cache from a modified network") {
    auto net = artifact_mlp(8, 1);
    Rng rng(1);
    const auto x = omad::testing::float_batch(3, 8, rng);
    const auto cache = forward(net, x, Mode::Train, &rng);
    net.mutable_params(0).bias(0) += 1.0f;
    try {
        backward(net, cache, std::vector<int>{0, 1, 0});
        FAIL("expected StaleCache");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::StaleCache);
    }
}

TEST_CASE("adam first step moves each weight by the learning rate") {
    auto net = BasicNetwork<double>({LayerSpec::dense(2, 2), LayerSpec::softmax(2)}, 1);
    const auto before = net.params(0).weight;
    Gradients<double> g;
    g.weight = {Mat<double>::Ones(2, 2), Mat<double>()};
    g.weight[0](0, 1) = -1.0;
    g.bias = {Vec<double>::Zero(2), Vec<double>()};
    AdamState<double> state(net);
    adam_step(net, g, state, AdamConfig{}, 1);
    const Mat<double> delta = net.params(0).weight - before;
    // Reference: m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps)
    const double expect = 0.001 * 1.0 / (1.0 + 1e-8);
    CHECK(delta(0, 0) == doctest::Approx(-expect).epsilon(1e-12));
    CHECK(delta(0, 1) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(net.params(0).bias.isZero(0.0));

    auto frozen = BasicNetwork<double>({LayerSpec::dense(2, 2), LayerSpec::softmax(2)}, 1);
    Gradients<double> zero{{Mat<double>::Zero(2, 2), Mat<double>()}, {Vec<double>::Zero(2), Vec<double>()}};
    AdamState<double> s2(frozen);
    const auto w0 = frozen.params(0).weight;
    adam_step(frozen, zero, s2, AdamConfig{}, 1);
    CHECK(frozen.params(0).weight == w0);
}

TEST_CASE("adam leaves masked weights at zero") {
    auto net = BasicNetwork<double>({LayerSpec::dense(3, 2), LayerSpec::softmax(2)}, 5);
    net.mutable_params(0).mask(0, 0) = 0.0;
    net.apply_masks();
    AdamState<double> state(net);
    Gradients<double> g{{Mat<double>::Constant(2, 3, 0.7), Mat<double>()}, {Vec<double>::Ones(2), Vec<double>()}};
    for (long t = 1; t <= 10; ++t) {
        adam_step(net, g, state, AdamConfig{}, t);
    }
    CHECK(net.params(0).weight(0, 0) == 0.0);
}

TEST_CASE("training separates a toy problem and is deterministic") {
    const auto [x, y] = separable(200, 3);
    TrainConfig cfg;
    cfg.epochs = 150;
    cfg.seed = 11;
    auto net = artifact_mlp(2, 4);
    auto twin = net;
    const auto log = train(net, x, y, cfg);
    CHECK(log.size() == 150);
    const auto pred = predict(net, x);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        correct += pred.labels[i] == y[i];
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(y.size()) >= 0.99);

    train(twin, x, y, cfg);
    for (auto i : net.weight_layers()) {
        CHECK(net.params(i).weight == twin.params(i).weight);
        CHECK(net.params(i).bias == twin.params(i).bias);
    }
}

TEST_CASE("training counts steps including the last partial batch") {
    const auto [x, y] = separable(130, 1);
    TrainConfig cfg;
    cfg.epochs = 2;
    auto net = artifact_mlp(2, 1);
    long last = 0;
    train(net, x, y, cfg, [&](long step, Network&) { last = step; });
    CHECK(last == 6);
}

TEST_CASE("training rejects a single-class set") {
    Mat<float> x = Mat<float>::Ones(4, 2);
    auto net = artifact_mlp(2, 1);
    CHECK_THROWS_AS(train(net, x, std::vector<int>{1, 1, 1, 1}, TrainConfig{}), Error);
}

TEST_CASE("predict breaks ties toward class zero and returns one label per row") {
    CHECK(argmax_rows(rows_of({{0.9f, 0.1f}, {0.5f, 0.5f}, {0.2f, 0.8f}})) == std::vector<int>{0, 0, 1});
    auto net = artifact_mlp(4, 2);
    Rng rng(2);
    const auto p = predict(net, omad::testing::float_batch(7, 4, rng));
    CHECK(p.labels.size() == 7);
    CHECK_THROWS_AS(predict(net, omad::testing::float_batch(2, 5, rng)), Error);
}

TEST_CASE("reference architectures have the documented shapes") {
    const auto mlp = main_mlp(128, 0.4, 1);
    CHECK(mlp.weight_layers().size() == 7);
    CHECK(mlp.output_width() == 2);
    const auto det = artifact_mlp(128, 1);
    CHECK(det.weight_layers().size() == 3);
    const auto cnn = main_cnn(1, 128, 1);
    CHECK(cnn.weight_layers().size() == 4);
    CHECK(cnn.specs()[0].kernel == 3);
    CHECK_THROWS_AS(Network({LayerSpec::dense(3, 4), LayerSpec::dense(5, 2), LayerSpec::softmax(2)}, 1), Error);
}
