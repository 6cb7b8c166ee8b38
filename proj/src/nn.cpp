#include "omad/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace omad {

std::string_view to_string(LayerKind k) {
    switch (k) {
    case LayerKind::Dense: return "Dense";
    case LayerKind::Conv1D: return "Conv1D";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::Dropout: return "Dropout";
    case LayerKind::Softmax: return "Softmax";
    }
    return "?";
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in = in;
    s.out = out;
    return s;
}

LayerSpec LayerSpec::conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t length, std::size_t kernel) {
    LayerSpec s;
    s.kind = LayerKind::Conv1D;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.length = length;
    s.kernel = kernel;
    s.in = in_channels * length;
    s.out = out_channels * length;
    return s;
}

LayerSpec LayerSpec::relu(std::size_t width) {
    LayerSpec s;
    s.kind = LayerKind::ReLU;
    s.in = s.out = width;
    return s;
}

LayerSpec LayerSpec::dropout(std::size_t width, double rate) {
    LayerSpec s;
    s.kind = LayerKind::Dropout;
    s.in = s.out = width;
    s.dropout_rate = rate;
    return s;
}

LayerSpec LayerSpec::softmax(std::size_t width) {
    LayerSpec s;
    s.kind = LayerKind::Softmax;
    s.in = s.out = width;
    return s;
}

std::size_t LayerSpec::input_width() const {
    return in;
}

std::size_t LayerSpec::output_width() const {
    return out;
}

std::size_t LayerSpec::weight_rows() const {
    switch (kind) {
    case LayerKind::Dense: return out;
    case LayerKind::Conv1D: return out_channels;
    default: return 0;
    }
}

std::size_t LayerSpec::weight_cols() const {
    switch (kind) {
    case LayerKind::Dense: return in;
    case LayerKind::Conv1D: return in_channels * kernel;
    default: return 0;
    }
}

template <typename T>
void BasicNetwork<T>::validate(const std::vector<LayerSpec>& specs) {
    require(!specs.empty(), ErrorCode::ShapeMismatch, "network has no layers");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& s = specs[i];
        require(s.in > 0 && s.out > 0, ErrorCode::ShapeMismatch, "layer " + std::to_string(i) + " has zero width");
        if (s.kind == LayerKind::Conv1D) {
            require(s.in_channels > 0 && s.out_channels > 0 && s.length > 0 && s.kernel % 2 == 1 &&
                        s.in == s.in_channels * s.length && s.out == s.out_channels * s.length,
                    ErrorCode::ShapeMismatch, "conv layer " + std::to_string(i) + " has inconsistent dims");
        }
        if (s.kind == LayerKind::Dropout) {
            require(s.dropout_rate >= 0.0 && s.dropout_rate < 1.0, ErrorCode::ShapeMismatch,
                    "dropout rate must be in [0, 1)");
        }
        if (s.kind != LayerKind::Dense && s.kind != LayerKind::Conv1D) {
            require(s.in == s.out, ErrorCode::ShapeMismatch, "element-wise layer changes width");
        }
        if (i > 0) {
            require(specs[i - 1].out == s.in, ErrorCode::ShapeMismatch,
                    "layer " + std::to_string(i) + " expects " + std::to_string(s.in) + " inputs, previous emits " +
                        std::to_string(specs[i - 1].out));
        }
        require(s.kind != LayerKind::Softmax || i + 1 == specs.size(), ErrorCode::ShapeMismatch,
                "softmax must be the last layer");
    }
    require(specs.back().kind == LayerKind::Softmax, ErrorCode::ShapeMismatch, "network must end in softmax");
}

template <typename T>
BasicNetwork<T>::BasicNetwork(std::vector<LayerSpec> specs, std::uint64_t seed) : specs_(std::move(specs)) {
    validate(specs_);
    Rng rng(seed);
    for (const auto& s : specs_) {
        LayerParams<T> p;
        if (s.has_weights()) {
            const auto rows = static_cast<Eigen::Index>(s.weight_rows());
            const auto cols = static_cast<Eigen::Index>(s.weight_cols());
            // He-uniform: U(-sqrt(6 / fan_in), +sqrt(6 / fan_in))
            const double limit = std::sqrt(6.0 / static_cast<double>(cols));
            std::uniform_real_distribution<double> dist(-limit, limit);
            p.weight.resize(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) {
                    p.weight(r, c) = static_cast<T>(dist(rng));
                }
            }
            p.bias = Vec<T>::Zero(rows);
            p.mask = Mat<T>::Ones(rows, cols);
        }
        params_.push_back(std::move(p));
    }
}

template <typename T>
BasicNetwork<T> BasicNetwork<T>::from_parts(std::vector<LayerSpec> specs, std::vector<LayerParams<T>> params) {
    validate(specs);
    require(specs.size() == params.size(), ErrorCode::ShapeMismatch, "one parameter block per layer");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].has_weights()) {
            const auto rows = static_cast<Eigen::Index>(specs[i].weight_rows());
            const auto cols = static_cast<Eigen::Index>(specs[i].weight_cols());
            require(params[i].weight.rows() == rows && params[i].weight.cols() == cols &&
                        params[i].mask.rows() == rows && params[i].mask.cols() == cols && params[i].bias.size() == rows,
                    ErrorCode::ShapeMismatch, "parameter shape mismatch in layer " + std::to_string(i));
        }
    }
    BasicNetwork net;
    net.specs_ = std::move(specs);
    net.params_ = std::move(params);
    return net;
}

template <typename T>
std::size_t BasicNetwork<T>::input_width() const {
    return specs_.front().in;
}

template <typename T>
std::size_t BasicNetwork<T>::output_width() const {
    return specs_.back().out;
}

template <typename T>
std::vector<std::size_t> BasicNetwork<T>::weight_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        if (specs_[i].has_weights()) {
            out.push_back(i);
        }
    }
    return out;
}

template <typename T>
std::size_t BasicNetwork<T>::weight_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += static_cast<std::size_t>(p.weight.size());
    }
    return n;
}

template <typename T>
void BasicNetwork<T>::apply_masks() {
    ++version_;
    for (auto& p : params_) {
        if (p.weight.size() > 0) {
            p.weight = (p.mask.array() != T(0)).select(p.weight, Mat<T>::Zero(p.weight.rows(), p.weight.cols()));
        }
    }
}

template <typename T>
void BasicNetwork<T>::set_dropout_rate(double rate) {
    require(rate >= 0.0 && rate < 1.0, ErrorCode::PreconditionViolation, "dropout rate must be in [0, 1)");
    ++version_;
    for (auto& s : specs_) {
        if (s.kind == LayerKind::Dropout) {
            s.dropout_rate = rate;
        }
    }
}

namespace {

template <typename T>
Mat<T> im2col(const Mat<T>& x, const LayerSpec& s) {
    const auto n = x.rows();
    const auto L = static_cast<Eigen::Index>(s.length);
    const auto k = static_cast<Eigen::Index>(s.kernel);
    const auto pad = k / 2;
    Mat<T> cols = Mat<T>::Zero(static_cast<Eigen::Index>(s.in_channels) * k, n * L);
    for (Eigen::Index b = 0; b < n; ++b) {
        for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(s.in_channels); ++c) {
            const T* src = x.data() + b * x.cols() + c * L;
            for (Eigen::Index j = 0; j < k; ++j) {
                T* dst = cols.data() + (c * k + j) * cols.cols() + b * L;
                for (Eigen::Index t = 0; t < L; ++t) {
                    const auto pos = t + j - pad;
                    if (pos >= 0 && pos < L) {
                        dst[t] = src[pos];
                    }
                }
            }
        }
    }
    return cols;
}

template <typename T>
Mat<T> col2im(const Mat<T>& dcols, const LayerSpec& s, Eigen::Index n) {
    const auto L = static_cast<Eigen::Index>(s.length);
    const auto k = static_cast<Eigen::Index>(s.kernel);
    const auto pad = k / 2;
    Mat<T> dx = Mat<T>::Zero(n, static_cast<Eigen::Index>(s.in));
    for (Eigen::Index b = 0; b < n; ++b) {
        for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(s.in_channels); ++c) {
            T* dst = dx.data() + b * dx.cols() + c * L;
            for (Eigen::Index j = 0; j < k; ++j) {
                const T* src = dcols.data() + (c * k + j) * dcols.cols() + b * L;
                for (Eigen::Index t = 0; t < L; ++t) {
                    const auto pos = t + j - pad;
                    if (pos >= 0 && pos < L) {
                        dst[pos] += src[t];
                    }
                }
            }
        }
    }
    return dx;
}

} // namespace

template <typename T>
Mat<T> softmax_rows(const Mat<T>& logits) {
    Mat<T> out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const T mx = logits.row(r).maxCoeff();
        T sum = 0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            out(r, c) = std::exp(logits(r, c) - mx);
            sum += out(r, c);
        }
        out.row(r) /= sum;
    }
    return out;
}

template <typename T>
ForwardCache<T> forward(const BasicNetwork<T>& net, const Mat<T>& batch, Mode mode, Rng* rng) {
    require(static_cast<std::size_t>(batch.cols()) == net.input_width(), ErrorCode::ShapeMismatch,
            "batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                std::to_string(net.input_width()));
    require(mode == Mode::Eval || rng != nullptr, ErrorCode::PreconditionViolation, "Train mode needs an rng");
    ForwardCache<T> cache;
    cache.version = net.version();
    cache.owner = &net;
    cache.mode = mode;
    cache.inputs.reserve(net.size());
    cache.dropout_masks.resize(net.size());
    Mat<T> x = batch;
    for (std::size_t i = 0; i < net.size(); ++i) {
        const auto& s = net.specs()[i];
        const auto& p = net.params(i);
        cache.inputs.push_back(x);
        switch (s.kind) {
        case LayerKind::Dense: {
            Mat<T> y(x.rows(), static_cast<Eigen::Index>(s.out));
            y.noalias() = x * p.weight.transpose();
            y.rowwise() += p.bias.transpose();
            x = std::move(y);
            break;
        }
        case LayerKind::Conv1D: {
            const Mat<T> cols = im2col(x, s);
            Mat<T> prod(p.weight.rows(), cols.cols());
            prod.noalias() = p.weight * cols;
            const auto L = static_cast<Eigen::Index>(s.length);
            Mat<T> y(x.rows(), static_cast<Eigen::Index>(s.out));
            for (Eigen::Index b = 0; b < x.rows(); ++b) {
                for (Eigen::Index o = 0; o < prod.rows(); ++o) {
                    y.row(b).segment(o * L, L) = prod.row(o).segment(b * L, L).array() + p.bias(o);
                }
            }
            x = std::move(y);
            break;
        }
        case LayerKind::ReLU:
            x = x.cwiseMax(T(0));
            break;
        case LayerKind::Dropout:
            if (mode == Mode::Train && s.dropout_rate > 0.0) {
                std::bernoulli_distribution keep(1.0 - s.dropout_rate);
                const T scale = static_cast<T>(1.0 / (1.0 - s.dropout_rate));
                Mat<T> m(x.rows(), x.cols());
                for (Eigen::Index r = 0; r < m.rows(); ++r) {
                    for (Eigen::Index c = 0; c < m.cols(); ++c) {
                        m(r, c) = keep(*rng) ? scale : T(0);
                    }
                }
                x = x.cwiseProduct(m);
                cache.dropout_masks[i] = std::move(m);
            }
            break;
        case LayerKind::Softmax:
            x = softmax_rows<T>(x);
            break;
        }
    }
    cache.output = std::move(x);
    return cache;
}

template <typename T>
double cross_entropy(const Mat<T>& probabilities, std::span<const int> labels) {
    require(static_cast<std::size_t>(probabilities.rows()) == labels.size() && !labels.empty(),
            ErrorCode::LengthMismatch, "one label per probability row required");
    double total = 0.0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        require(labels[r] >= 0 && labels[r] < probabilities.cols(), ErrorCode::ShapeMismatch, "label out of range");
        const double p = std::clamp(static_cast<double>(probabilities(static_cast<Eigen::Index>(r), labels[r])),
                                    kProbabilityClip, 1.0);
        total -= std::log(p);
    }
    return total / static_cast<double>(labels.size());
}

template <typename T>
Gradients<T> backward(const BasicNetwork<T>& net, const ForwardCache<T>& cache, std::span<const int> labels) {
    require(cache.owner == &net && cache.version == net.version() && cache.inputs.size() == net.size(),
            ErrorCode::StaleCache, "forward cache does not match the current network parameters");
    const auto n = cache.output.rows();
    require(static_cast<std::size_t>(n) == labels.size(), ErrorCode::LengthMismatch, "one label per batch row");

    Gradients<T> g;
    g.weight.resize(net.size());
    g.bias.resize(net.size());

    // Softmax + cross-entropy: d(mean CE)/d(logits) = (p - onehot) / n
    Mat<T> delta = cache.output;
    for (Eigen::Index r = 0; r < n; ++r) {
        delta(r, labels[static_cast<std::size_t>(r)]) -= T(1);
    }
    delta /= static_cast<T>(n);

    for (std::size_t ii = net.size(); ii-- > 0;) {
        const auto& s = net.specs()[ii];
        const auto& p = net.params(ii);
        const auto& x = cache.inputs[ii];
        switch (s.kind) {
        case LayerKind::Softmax:
            break;
        case LayerKind::ReLU:
            delta = delta.cwiseProduct((x.array() > T(0)).template cast<T>().matrix());
            break;
        case LayerKind::Dropout:
            if (cache.dropout_masks[ii].size() > 0) {
                delta = delta.cwiseProduct(cache.dropout_masks[ii]);
            }
            break;
        case LayerKind::Dense: {
            Mat<T> dw(p.weight.rows(), p.weight.cols());
            dw.noalias() = delta.transpose() * x;
            g.weight[ii] = dw.cwiseProduct(p.mask);
            g.bias[ii] = delta.colwise().sum().transpose();
            if (ii > 0) {
                Mat<T> dx(n, x.cols());
                dx.noalias() = delta * p.weight;
                delta = std::move(dx);
            }
            break;
        }
        case LayerKind::Conv1D: {
            const auto L = static_cast<Eigen::Index>(s.length);
            Mat<T> dy(p.weight.rows(), n * L);
            for (Eigen::Index b = 0; b < n; ++b) {
                for (Eigen::Index o = 0; o < dy.rows(); ++o) {
                    dy.row(o).segment(b * L, L) = delta.row(b).segment(o * L, L);
                }
            }
            const Mat<T> cols = im2col(x, s);
            Mat<T> dw(p.weight.rows(), p.weight.cols());
            dw.noalias() = dy * cols.transpose();
            g.weight[ii] = dw.cwiseProduct(p.mask);
            g.bias[ii] = dy.rowwise().sum();
            if (ii > 0) {
                Mat<T> dcols(cols.rows(), cols.cols());
                dcols.noalias() = p.weight.transpose() * dy;
                delta = col2im(dcols, s, n);
            }
            break;
        }
        }
    }
    return g;
}

template <typename T>
AdamState<T>::AdamState(const BasicNetwork<T>& net) {
    for (std::size_t i = 0; i < net.size(); ++i) {
        const auto& p = net.params(i);
        m_weight.push_back(Mat<T>::Zero(p.weight.rows(), p.weight.cols()));
        v_weight.push_back(Mat<T>::Zero(p.weight.rows(), p.weight.cols()));
        m_bias.push_back(Vec<T>::Zero(p.bias.size()));
        v_bias.push_back(Vec<T>::Zero(p.bias.size()));
    }
}

template <typename T>
void adam_step(BasicNetwork<T>& net, const Gradients<T>& grads, AdamState<T>& state, const AdamConfig& cfg, long t) {
    require(t >= 1, ErrorCode::PreconditionViolation, "adam step index starts at 1");
    require(state.m_weight.size() == net.size() && grads.weight.size() == net.size(), ErrorCode::ShapeMismatch,
            "optimizer state does not match network");
    state.step = t;
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T lr = static_cast<T>(cfg.learning_rate);
    const T eps = static_cast<T>(cfg.epsilon);
    const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
    const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
    for (auto i : net.weight_layers()) {
        auto& p = net.mutable_params(i);
        const auto& gw = grads.weight[i];
        const auto& gb = grads.bias[i];
        require(gw.rows() == p.weight.rows() && gw.cols() == p.weight.cols() && gb.size() == p.bias.size(),
                ErrorCode::ShapeMismatch, "gradient shape mismatch in layer " + std::to_string(i));
        auto& mw = state.m_weight[i];
        auto& vw = state.v_weight[i];
        mw = b1 * mw + (T(1) - b1) * gw;
        vw = b2 * vw + (T(1) - b2) * gw.cwiseProduct(gw);
        const Mat<T> step = ((mw.array() / c1) / ((vw.array() / c2).sqrt() + eps)).matrix();
        p.weight.array() -= lr * step.array() * p.mask.array();

        auto& mb = state.m_bias[i];
        auto& vb = state.v_bias[i];
        mb = b1 * mb + (T(1) - b1) * gb;
        vb = b2 * vb + (T(1) - b2) * gb.cwiseProduct(gb);
        p.bias.array() -= lr * (mb.array() / c1) / ((vb.array() / c2).sqrt() + eps);
    }
}

std::vector<int> argmax_rows(const Mat<float>& probabilities) {
    std::vector<int> out(static_cast<std::size_t>(probabilities.rows()));
    for (Eigen::Index r = 0; r < probabilities.rows(); ++r) {
        int best = 0;
        for (Eigen::Index c = 1; c < probabilities.cols(); ++c) {
            if (probabilities(r, c) > probabilities(r, best)) {
                best = static_cast<int>(c);
            }
        }
        out[static_cast<std::size_t>(r)] = best;
    }
    return out;
}

Prediction predict(const Network& net, const Mat<float>& inputs) {
    Prediction p;
    if (inputs.rows() == 0) {
        require(static_cast<std::size_t>(inputs.cols()) == net.input_width(), ErrorCode::ShapeMismatch,
                "input width mismatch");
        p.probabilities.resize(0, static_cast<Eigen::Index>(net.output_width()));
        return p;
    }
    // Chunked so a large evaluation set does not materialise every activation.
    constexpr Eigen::Index kChunk = 1024;
    p.probabilities.resize(inputs.rows(), static_cast<Eigen::Index>(net.output_width()));
    for (Eigen::Index start = 0; start < inputs.rows(); start += kChunk) {
        const auto len = std::min(kChunk, inputs.rows() - start);
        const Mat<float> chunk = inputs.middleRows(start, len);
        p.probabilities.middleRows(start, len) = forward(net, chunk, Mode::Eval).output;
    }
    p.labels = argmax_rows(p.probabilities);
    return p;
}

TrainLog train(Network& net, const Mat<float>& inputs, std::span<const int> labels, const TrainConfig& cfg,
               const StepCallback& on_step) {
    require(inputs.rows() > 0 && static_cast<std::size_t>(inputs.rows()) == labels.size(),
            ErrorCode::PreconditionViolation, "training set is empty or labels do not match rows");
    require(cfg.epochs > 0 && cfg.batch_size > 0 && cfg.adam.learning_rate > 0.0, ErrorCode::PreconditionViolation,
            "epochs, batch size and learning rate must be positive");
    const std::set<int> classes(labels.begin(), labels.end());
    require(classes.size() >= 2, ErrorCode::PreconditionViolation, "training set must contain both classes");
    require(*classes.begin() >= 0 && *classes.rbegin() < static_cast<int>(net.output_width()),
            ErrorCode::ShapeMismatch, "label outside the network's class range");

    const auto n = static_cast<std::size_t>(inputs.rows());
    AdamState<float> adam(net);
    Rng dropout_rng(derive_seed(cfg.seed, {0xd0}));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    TrainLog log;
    long step = 0;
    Mat<float> xb;
    std::vector<int> yb;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, {0x5f, static_cast<std::uint64_t>(epoch)}));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const auto len = std::min(cfg.batch_size, n - start);
            xb.resize(static_cast<Eigen::Index>(len), inputs.cols());
            yb.resize(len);
            for (std::size_t r = 0; r < len; ++r) {
                xb.row(static_cast<Eigen::Index>(r)) = inputs.row(static_cast<Eigen::Index>(order[start + r]));
                yb[r] = labels[order[start + r]];
            }
            const auto cache = forward(net, xb, Mode::Train, &dropout_rng);
            const double loss = cross_entropy(cache.output, yb);
            if (!std::isfinite(loss)) {
                throw DivergedError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                        std::to_string(step + 1),
                                    log);
            }
            loss_sum += loss * static_cast<double>(len);
            const auto pred = argmax_rows(cache.output);
            for (std::size_t r = 0; r < len; ++r) {
                correct += pred[r] == yb[r] ? 1 : 0;
            }
            const auto grads = backward(net, cache, yb);
            ++step;
            adam_step(net, grads, adam, cfg.adam, step);
            if (on_step) {
                on_step(step, net);
            }
        }
        log.push_back({epoch, loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)});
    }
    return log;
}

Network artifact_mlp(std::size_t input_width, std::uint64_t seed) {
    return Network({LayerSpec::dense(input_width, 64), LayerSpec::relu(64), LayerSpec::dense(64, 32),
                    LayerSpec::relu(32), LayerSpec::dense(32, 2), LayerSpec::softmax(2)},
                   seed);
}

Network main_mlp(std::size_t input_width, double dropout, std::uint64_t seed, const std::vector<std::size_t>& widths) {
    require(!widths.empty(), ErrorCode::InvalidConfig, "the MLP needs at least one hidden layer");
    std::vector<LayerSpec> specs;
    std::size_t width = input_width;
    for (std::size_t hidden : widths) {
        specs.push_back(LayerSpec::dense(width, hidden));
        specs.push_back(LayerSpec::relu(hidden));
        specs.push_back(LayerSpec::dropout(hidden, dropout));
        width = hidden;
    }
    specs.push_back(LayerSpec::dense(width, 2));
    specs.push_back(LayerSpec::softmax(2));
    return Network(std::move(specs), seed);
}

Network main_cnn(std::size_t in_channels, std::size_t length, std::uint64_t seed, const CnnWidths& w) {
    return Network({LayerSpec::conv1d(in_channels, w.conv1, length), LayerSpec::relu(w.conv1 * length),
                    LayerSpec::conv1d(w.conv1, w.conv2, length), LayerSpec::relu(w.conv2 * length),
                    LayerSpec::dense(w.conv2 * length, w.dense), LayerSpec::relu(w.dense),
                    LayerSpec::dense(w.dense, 2), LayerSpec::softmax(2)},
                   seed);
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;

#define OMAD_INSTANTIATE(T)                                                                                   \
    template ForwardCache<T> forward<T>(const BasicNetwork<T>&, const Mat<T>&, Mode, Rng*);                  \
    template Mat<T> softmax_rows<T>(const Mat<T>&);                                                            \
    template double cross_entropy<T>(const Mat<T>&, std::span<const int>);                                     \
    template Gradients<T> backward<T>(const BasicNetwork<T>&, const ForwardCache<T>&, std::span<const int>);   \
    template struct AdamState<T>;                                                                              \
    template void adam_step<T>(BasicNetwork<T>&, const Gradients<T>&, AdamState<T>&, const AdamConfig&, long);

OMAD_INSTANTIATE(float)
OMAD_INSTANTIATE(double)

#undef OMAD_INSTANTIATE

} // namespace omad
