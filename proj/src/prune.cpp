#include "omad/prune.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace omad {

void PruningSchedule::validate() const {
    require(initial_sparsity >= 0.0 && initial_sparsity < 1.0 && final_sparsity >= 0.0 && final_sparsity < 1.0,
            ErrorCode::InvalidConfig, "sparsities must be in [0, 1)");
    require(initial_sparsity <= final_sparsity, ErrorCode::InvalidConfig, "initial_sparsity > final_sparsity");
    require(begin_step >= 0 && end_step > begin_step, ErrorCode::InvalidConfig, "need 0 <= begin_step < end_step");
    require(frequency > 0, ErrorCode::InvalidConfig, "frequency must be positive");
}

bool PruningSchedule::is_update_step(long step) const {
    if (step < begin_step || step > end_step) {
        return false;
    }
    return step == end_step || (step - begin_step) % frequency == 0;
}

PruningSchedule PruningSchedule::for_run(long total_steps, double final_sparsity, long frequency) {
    require(total_steps >= 2, ErrorCode::InvalidConfig, "pruning needs at least 2 training steps");
    PruningSchedule s;
    s.final_sparsity = final_sparsity;
    s.begin_step = std::lround(0.2 * static_cast<double>(total_steps));
    s.end_step = std::max(s.begin_step + 1, std::lround(0.8 * static_cast<double>(total_steps)));
    s.frequency = frequency;
    return s;
}

double sparsity_at(long step, const PruningSchedule& s) {
    if (step < s.begin_step) {
        return 0.0;
    }
    if (step >= s.end_step) {
        return s.final_sparsity;
    }
    if (step == s.begin_step) {
        return s.initial_sparsity;
    }
    const double progress =
        static_cast<double>(step - s.begin_step) / static_cast<double>(s.end_step - s.begin_step);
    const double remaining = 1.0 - progress;
    return s.final_sparsity + (s.initial_sparsity - s.final_sparsity) * remaining * remaining * remaining;
}

LayerMask compute_mask(std::span<const float> weights, double target_sparsity) {
    require(target_sparsity >= 0.0 && target_sparsity < 1.0, ErrorCode::PreconditionViolation,
            "target sparsity must be in [0, 1)");
    const std::size_t n = weights.size();
    const auto zeros = static_cast<std::size_t>(std::floor(target_sparsity * static_cast<double>(n)));
    LayerMask m;
    m.keep.assign(n, 1);
    m.zeros = zeros;
    m.realized_sparsity = n == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(n);
    if (zeros == 0) {
        return m;
    }
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    auto smaller = [&](std::uint32_t a, std::uint32_t b) {
        const float ma = std::abs(weights[a]);
        const float mb = std::abs(weights[b]);
        return ma < mb || (ma == mb && a < b);
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(zeros - 1), order.end(), smaller);
    for (std::size_t i = 0; i < zeros; ++i) {
        m.keep[order[i]] = 0;
    }
    return m;
}

void prune_network(Network& net, double target_sparsity) {
    for (auto i : net.weight_layers()) {
        auto& p = net.mutable_params(i);
        const auto m = compute_mask(std::span<const float>(p.weight.data(), static_cast<std::size_t>(p.weight.size())),
                                    target_sparsity);
        for (Eigen::Index k = 0; k < p.mask.size(); ++k) {
            p.mask.data()[k] = static_cast<float>(m.keep[static_cast<std::size_t>(k)]);
        }
    }
    net.apply_masks();
}

double layer_sparsity(const Network& net, std::size_t layer) {
    const auto& m = net.params(layer).mask;
    if (m.size() == 0) {
        return 0.0;
    }
    const auto zeros = (m.array() == 0.0f).count();
    return static_cast<double>(zeros) / static_cast<double>(m.size());
}

double overall_sparsity(const Network& net) {
    std::size_t zeros = 0;
    std::size_t total = 0;
    for (auto i : net.weight_layers()) {
        const auto& m = net.params(i).mask;
        zeros += static_cast<std::size_t>((m.array() == 0.0f).count());
        total += static_cast<std::size_t>(m.size());
    }
    return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
}

PruningCallback::PruningCallback(PruningSchedule schedule) : schedule_(schedule) {
    schedule_.validate();
}

void PruningCallback::operator()(long step, Network& net) {
    if (!schedule_.is_update_step(step)) {
        return;
    }
    const double target = sparsity_at(step, schedule_);
    prune_network(net, target);
    Event e{step, target, {}};
    for (auto i : net.weight_layers()) {
        e.layer_sparsity.push_back(layer_sparsity(net, i));
    }
    events_.push_back(std::move(e));
}

StepCallback PruningCallback::as_step_callback() {
    return [this](long step, Network& net) { (*this)(step, net); };
}

std::size_t dense_payload_bytes(std::size_t weights) {
    return 4 * weights;
}

std::size_t sparse_payload_bytes(std::size_t weights, std::size_t survivors) {
    return (weights + 7) / 8 + 4 * survivors;
}

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) {
            buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(const char* s, std::size_t n) { buf_.insert(buf_.end(), s, s + n); }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto s = b_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        require(pos_ + n <= b_.size(), ErrorCode::IoFailure, "model file truncated");
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v) {
    require(v <= 0xffffffffu, ErrorCode::IoFailure, "dimension does not fit the model format");
    return static_cast<std::uint32_t>(v);
}

} // namespace

std::vector<std::uint8_t> serialize(const Network& net, Encoding encoding) {
    require(net.size() <= 0xffff, ErrorCode::IoFailure, "too many layers");
    Writer w;
    w.bytes("OMAD", 4);
    w.u16(kModelFormatVersion);
    w.u16(static_cast<std::uint16_t>(net.size()));
    for (std::size_t i = 0; i < net.size(); ++i) {
        const auto& s = net.specs()[i];
        w.u8(static_cast<std::uint8_t>(s.kind));
        switch (s.kind) {
        case LayerKind::Dense:
            w.u32(checked_u32(s.in));
            w.u32(checked_u32(s.out));
            break;
        case LayerKind::Conv1D:
            w.u32(checked_u32(s.in_channels));
            w.u32(checked_u32(s.out_channels));
            w.u32(checked_u32(s.length));
            w.u32(checked_u32(s.kernel));
            break;
        case LayerKind::ReLU:
        case LayerKind::Softmax:
            w.u32(checked_u32(s.in));
            break;
        case LayerKind::Dropout:
            w.u32(checked_u32(s.in));
            w.u32(static_cast<std::uint32_t>(std::lround(s.dropout_rate * 1e6)));
            break;
        }
        if (!s.has_weights()) {
            w.u8(0);
            continue;
        }
        const auto& p = net.params(i);
        const auto n = static_cast<std::size_t>(p.weight.size());
        std::size_t survivors = 0;
        for (std::size_t k = 0; k < n; ++k) {
            survivors += p.mask.data()[k] != 0.0f ? 1 : 0;
        }
        bool sparse = encoding == Encoding::Sparse;
        if (encoding == Encoding::Auto) {
            sparse = sparse_payload_bytes(n, survivors) < dense_payload_bytes(n);
        }
        w.u8(sparse ? 1 : 0);
        if (sparse) {
            std::vector<std::uint8_t> bitmap((n + 7) / 8, 0);
            for (std::size_t k = 0; k < n; ++k) {
                if (p.mask.data()[k] != 0.0f) {
                    bitmap[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
                }
            }
            for (auto b : bitmap) {
                w.u8(b);
            }
            for (std::size_t k = 0; k < n; ++k) {
                if (p.mask.data()[k] != 0.0f) {
                    w.f32(p.weight.data()[k]);
                }
            }
        } else {
            for (std::size_t k = 0; k < n; ++k) {
                w.f32(p.mask.data()[k] != 0.0f ? p.weight.data()[k] : 0.0f);
            }
        }
        for (Eigen::Index k = 0; k < p.bias.size(); ++k) {
            w.f32(p.bias(k));
        }
    }
    return w.take();
}

std::size_t serialize(const Network& net, Encoding encoding, const std::filesystem::path& path) {
    const auto bytes = serialize(net, encoding);
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::IoFailure, "write failed for " + path.string());
    return bytes.size();
}

Network deserialize(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const auto magic = r.take(4);
    require(std::memcmp(magic.data(), "OMAD", 4) == 0, ErrorCode::VersionMismatch, "not an OMAD model file");
    const auto version = r.u16();
    require(version == kModelFormatVersion, ErrorCode::VersionMismatch,
            "model format version " + std::to_string(version) + ", expected " + std::to_string(kModelFormatVersion));
    const auto count = r.u16();
    std::vector<LayerSpec> specs;
    std::vector<LayerParams<float>> params;
    for (std::uint16_t i = 0; i < count; ++i) {
        const auto kind = r.u8();
        LayerSpec s;
        switch (static_cast<LayerKind>(kind)) {
        case LayerKind::Dense: {
            const auto in = r.u32();
            const auto out = r.u32();
            s = LayerSpec::dense(in, out);
            break;
        }
        case LayerKind::Conv1D: {
            const auto ic = r.u32();
            const auto oc = r.u32();
            const auto len = r.u32();
            const auto k = r.u32();
            s = LayerSpec::conv1d(ic, oc, len, k);
            break;
        }
        case LayerKind::ReLU:
            s = LayerSpec::relu(r.u32());
            break;
        case LayerKind::Softmax:
            s = LayerSpec::softmax(r.u32());
            break;
        case LayerKind::Dropout: {
            const auto width = r.u32();
            s = LayerSpec::dropout(width, static_cast<double>(r.u32()) / 1e6);
            break;
        }
        default:
            throw Error(ErrorCode::IoFailure, "unknown layer kind " + std::to_string(kind));
        }
        const auto flag = r.u8();
        LayerParams<float> p;
        if (s.has_weights()) {
            const auto rows = static_cast<Eigen::Index>(s.weight_rows());
            const auto cols = static_cast<Eigen::Index>(s.weight_cols());
            const auto n = static_cast<std::size_t>(rows * cols);
            p.weight = Mat<float>::Zero(rows, cols);
            p.mask = Mat<float>::Ones(rows, cols);
            if (flag == 1) {
                const auto bitmap = r.take((n + 7) / 8);
                for (std::size_t k = 0; k < n; ++k) {
                    const bool keep = (bitmap[k / 8] >> (k % 8)) & 1u;
                    p.mask.data()[k] = keep ? 1.0f : 0.0f;
                    if (keep) {
                        p.weight.data()[k] = r.f32();
                    }
                }
            } else {
                require(flag == 0, ErrorCode::IoFailure, "unknown weight encoding " + std::to_string(flag));
                for (std::size_t k = 0; k < n; ++k) {
                    p.weight.data()[k] = r.f32();
                }
            }
            p.bias.resize(rows);
            for (Eigen::Index k = 0; k < rows; ++k) {
                p.bias(k) = r.f32();
            }
        } else {
            require(flag == 0, ErrorCode::IoFailure, "parameter-free layer with a payload flag");
        }
        specs.push_back(s);
        params.push_back(std::move(p));
    }
    require(r.done(), ErrorCode::IoFailure, "trailing bytes after the last layer");
    return Network::from_parts(std::move(specs), std::move(params));
}

Network deserialize(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), ErrorCode::FileNotFound, path.string());
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

InferenceModel::InferenceModel(const Network& net, Backend backend)
    : backend_(backend), input_width_(net.input_width()) {
    for (std::size_t i = 0; i < net.size(); ++i) {
        Layer l;
        l.spec = net.specs()[i];
        if (l.spec.has_weights()) {
            const auto& p = net.params(i);
            l.rows = static_cast<std::size_t>(p.weight.rows());
            l.cols = static_cast<std::size_t>(p.weight.cols());
            l.bias.assign(p.bias.data(), p.bias.data() + p.bias.size());
            if (backend == Backend::Dense) {
                l.dense.resize(l.rows * l.cols);
                for (std::size_t k = 0; k < l.dense.size(); ++k) {
                    l.dense[k] = p.weight.data()[k] * p.mask.data()[k];
                }
            } else {
                l.row_ptr.reserve(l.rows + 1);
                l.row_ptr.push_back(0);
                for (std::size_t r = 0; r < l.rows; ++r) {
                    for (std::size_t c = 0; c < l.cols; ++c) {
                        const auto k = r * l.cols + c;
                        const float w = p.weight.data()[k] * p.mask.data()[k];
                        if (w != 0.0f) {
                            l.col_idx.push_back(static_cast<std::uint32_t>(c));
                            l.values.push_back(w);
                        }
                    }
                    l.row_ptr.push_back(static_cast<std::uint32_t>(l.values.size()));
                }
            }
        }
        layers_.push_back(std::move(l));
    }
}

std::size_t InferenceModel::macs_per_row() const {
    std::size_t macs = 0;
    for (const auto& l : layers_) {
        if (!l.spec.has_weights()) {
            continue;
        }
        const std::size_t nnz = backend_ == Backend::Dense ? l.rows * l.cols : l.values.size();
        macs += l.spec.kind == LayerKind::Conv1D ? nnz * l.spec.length : nnz;
    }
    return macs;
}

namespace {

inline void axpy(float* __restrict y, const float* __restrict x, float a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += a * x[i];
    }
}

} // namespace

// Activations are (width x n): row f holds feature f for every batch row.
void InferenceModel::run_dense(const Layer& l, const float* in, float* out, std::size_t n) const {
    for (std::size_t r = 0; r < l.rows; ++r) {
        float* y = out + r * n;
        std::fill(y, y + n, l.bias[r]);
        if (backend_ == Backend::Dense) {
            const float* w = l.dense.data() + r * l.cols;
            for (std::size_t c = 0; c < l.cols; ++c) {
                axpy(y, in + c * n, w[c], n);
            }
        } else {
            for (auto k = l.row_ptr[r]; k < l.row_ptr[r + 1]; ++k) {
                axpy(y, in + static_cast<std::size_t>(l.col_idx[k]) * n, l.values[k], n);
            }
        }
    }
}

// A tap (c, j) contributes in[c][t + j - pad] to out[o][t]; over the valid
// t range that is one contiguous axpy of (L - |shift|) * n elements.
void InferenceModel::run_conv(const Layer& l, const float* in, float* out, std::size_t n) const {
    const auto L = l.spec.length;
    const auto k = l.spec.kernel;
    const auto pad = static_cast<long>(k / 2);
    auto tap = [&](float* y_o, std::size_t col, float w) {
        const std::size_t c = col / k;
        const long shift = static_cast<long>(col % k) - pad;
        const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        const std::size_t t1 = shift > 0 ? L - static_cast<std::size_t>(shift) : L;
        const float* x = in + (c * L + static_cast<std::size_t>(static_cast<long>(t0) + shift)) * n;
        axpy(y_o + t0 * n, x, w, (t1 - t0) * n);
    };
    for (std::size_t o = 0; o < l.rows; ++o) {
        float* y_o = out + o * L * n;
        std::fill(y_o, y_o + L * n, l.bias[o]);
        if (backend_ == Backend::Dense) {
            for (std::size_t col = 0; col < l.cols; ++col) {
                tap(y_o, col, l.dense[o * l.cols + col]);
            }
        } else {
            for (auto idx = l.row_ptr[o]; idx < l.row_ptr[o + 1]; ++idx) {
                tap(y_o, l.col_idx[idx], l.values[idx]);
            }
        }
    }
}

Mat<float> InferenceModel::forward(const Mat<float>& batch) const {
    require(static_cast<std::size_t>(batch.cols()) == input_width_, ErrorCode::ShapeMismatch,
            "batch has " + std::to_string(batch.cols()) + " columns, model expects " + std::to_string(input_width_));
    const auto n = static_cast<std::size_t>(batch.rows());
    std::vector<float> cur(input_width_ * n);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t f = 0; f < input_width_; ++f) {
            cur[f * n + b] = batch(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(f));
        }
    }
    std::vector<float> next;
    for (const auto& l : layers_) {
        switch (l.spec.kind) {
        case LayerKind::Dense:
            next.assign(l.spec.out * n, 0.0f);
            run_dense(l, cur.data(), next.data(), n);
            cur.swap(next);
            break;
        case LayerKind::Conv1D:
            next.assign(l.spec.out * n, 0.0f);
            run_conv(l, cur.data(), next.data(), n);
            cur.swap(next);
            break;
        case LayerKind::ReLU:
            for (auto& v : cur) {
                v = v > 0.0f ? v : 0.0f;
            }
            break;
        case LayerKind::Dropout:
            break;
        case LayerKind::Softmax: {
            const auto width = l.spec.out;
            for (std::size_t b = 0; b < n; ++b) {
                float mx = cur[b];
                for (std::size_t f = 1; f < width; ++f) {
                    mx = std::max(mx, cur[f * n + b]);
                }
                float sum = 0.0f;
                for (std::size_t f = 0; f < width; ++f) {
                    cur[f * n + b] = std::exp(cur[f * n + b] - mx);
                    sum += cur[f * n + b];
                }
                for (std::size_t f = 0; f < width; ++f) {
                    cur[f * n + b] /= sum;
                }
            }
            break;
        }
        }
    }
    const auto out_width = layers_.back().spec.out;
    Mat<float> out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out_width));
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t f = 0; f < out_width; ++f) {
            out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(f)) = cur[f * n + b];
        }
    }
    return out;
}

Mat<float> sparse_forward(const Network& net, const Mat<float>& batch) {
    return InferenceModel(net, InferenceModel::Backend::Sparse).forward(batch);
}

Mat<float> dense_forward(const Network& net, const Mat<float>& batch) {
    return InferenceModel(net, InferenceModel::Backend::Dense).forward(batch);
}

} // namespace omad
