#pragma once

// Shared fixtures for the unit suites and the acceptance runner.

#include "omad/nn.hpp"
#include "omad/prune.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace omad::testing {

struct GradCase {
    std::string kind;
    std::vector<LayerSpec> specs;
    std::size_t input_width;
};

// One small network per layer kind, shapes varied by the seed.
inline std::vector<GradCase> grad_cases(std::uint64_t seed) {
    const std::size_t a = 3 + seed % 4;
    const std::size_t h = 4 + seed % 3;
    const std::size_t len = 5 + seed % 3;
    std::vector<GradCase> out;
    out.push_back({"dense",
                   {LayerSpec::dense(a, h), LayerSpec::relu(h), LayerSpec::dense(h, 2), LayerSpec::softmax(2)},
                   a});
    out.push_back({"conv1d",
                   {LayerSpec::conv1d(2, 3, len), LayerSpec::relu(3 * len), LayerSpec::conv1d(3, 2, len),
                    LayerSpec::dense(2 * len, 2), LayerSpec::softmax(2)},
                   2 * len});
    out.push_back({"dropout",
                   {LayerSpec::dense(a, h), LayerSpec::relu(h), LayerSpec::dropout(h, 0.0), LayerSpec::dense(h, 2),
                    LayerSpec::softmax(2)},
                   a});
    out.push_back({"softmax_ce", {LayerSpec::dense(a, 3), LayerSpec::softmax(3)}, a});
    return out;
}

struct GradReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

// Central differences of the mean cross-entropy against backward(), in
// double precision. Relative error per parameter tensor is
// ||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-12).
inline GradReport gradient_check(BasicNetwork<double>& net, const Mat<double>& x, const std::vector<int>& y,
                                 double h = 1e-6) {
    Rng rng(0);
    const auto cache = forward(net, x, Mode::Train, &rng);
    const auto g = backward(net, cache, y);
    auto loss = [&] { return cross_entropy(forward(net, x, Mode::Eval).output, y); };

    GradReport rep;
    for (auto i : net.weight_layers()) {
        const auto w_rows = net.params(i).weight.rows();
        const auto w_cols = net.params(i).weight.cols();
        Mat<double> nw(w_rows, w_cols);
        for (Eigen::Index r = 0; r < w_rows; ++r) {
            for (Eigen::Index c = 0; c < w_cols; ++c) {
                const double keep = net.params(i).weight(r, c);
                net.mutable_params(i).weight(r, c) = keep + h;
                const double up = loss();
                net.mutable_params(i).weight(r, c) = keep - h;
                const double down = loss();
                net.mutable_params(i).weight(r, c) = keep;
                nw(r, c) = (up - down) / (2.0 * h);
            }
        }
        Vec<double> nb(net.params(i).bias.size());
        for (Eigen::Index r = 0; r < nb.size(); ++r) {
            const double keep = net.params(i).bias(r);
            net.mutable_params(i).bias(r) = keep + h;
            const double up = loss();
            net.mutable_params(i).bias(r) = keep - h;
            const double down = loss();
            net.mutable_params(i).bias(r) = keep;
            nb(r) = (up - down) / (2.0 * h);
        }
        auto rel = [](const auto& a, const auto& n) {
            return (a - n).norm() / std::max(a.norm() + n.norm(), 1e-12);
        };
        rep.max_rel_error = std::max({rep.max_rel_error, rel(g.weight[i], nw), rel(g.bias[i], nb)});
        rep.checked += static_cast<std::size_t>(nw.size() + nb.size());
    }
    return rep;
}

inline Mat<double> gaussian_batch(std::size_t rows, std::size_t cols, Rng& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    Mat<double> x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x.data()[i] = d(rng);
    }
    return x;
}

inline std::vector<int> random_labels(std::size_t n, int classes, Rng& rng) {
    std::vector<int> y(n);
    for (auto& v : y) {
        v = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
    }
    y[0] = 0;
    y[n > 1 ? 1 : 0] = 1;
    return y;
}

// Random MLP or CNN with every weight layer pruned to a random sparsity.
inline Network random_pruned_net(std::uint64_t seed) {
    Rng rng(seed);
    Network net;
    if (seed % 2 == 0) {
        const std::size_t in = 8 + rng() % 40;
        std::vector<std::size_t> widths{16 + rng() % 48, 8 + rng() % 24};
        net = main_mlp(in, 0.0, seed, widths);
    } else {
        const std::size_t ch = 1 + rng() % 3;
        const std::size_t len = 8 + rng() % 24;
        net = main_cnn(ch, len, seed, {4 + rng() % 8, 4 + rng() % 8, 8 + rng() % 16});
    }
    std::uniform_real_distribution<double> s(0.0, 0.95);
    prune_network(net, s(rng));
    std::normal_distribution<float> b(0.0f, 0.1f);
    for (auto i : net.weight_layers()) {
        auto& p = net.mutable_params(i);
        for (Eigen::Index r = 0; r < p.bias.size(); ++r) {
            p.bias(r) = b(rng);
        }
    }
    return net;
}

inline Mat<float> float_batch(std::size_t rows, std::size_t cols, Rng& rng) {
    return gaussian_batch(rows, cols, rng).cast<float>();
}

} // namespace omad::testing
