#pragma once

#include "omad/error.hpp"
#include "omad/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace omad {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class LayerKind : std::uint8_t { Dense = 1, Conv1D = 2, ReLU = 3, Dropout = 4, Softmax = 5 };

std::string_view to_string(LayerKind k);

/// Shape description of one layer. Activations are (batch x width) with a
/// Conv1D input laid out channel-major: width = channels * length.
struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    std::size_t in = 0;  // Dense fan-in; width for element-wise layers
    std::size_t out = 0; // Dense fan-out; width for element-wise layers
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t length = 0;
    std::size_t kernel = 3;
    double dropout_rate = 0.0;

    static LayerSpec dense(std::size_t in, std::size_t out);
    static LayerSpec conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t length,
                            std::size_t kernel = 3);
    static LayerSpec relu(std::size_t width);
    static LayerSpec dropout(std::size_t width, double rate);
    static LayerSpec softmax(std::size_t width);

    std::size_t input_width() const;
    std::size_t output_width() const;
    bool has_weights() const { return kind == LayerKind::Dense || kind == LayerKind::Conv1D; }
    // Weight tensor shape: Dense (out x in), Conv1D (out_channels x in_channels*kernel).
    std::size_t weight_rows() const;
    std::size_t weight_cols() const;

    bool operator==(const LayerSpec&) const = default;
};

/// Weights, biases and a binary mask of the weight's shape. Pruned entries
/// are kept at exactly zero in `weight`, so weight == weight .* mask.
template <typename T>
struct LayerParams {
    Mat<T> weight;
    Vec<T> bias;
    Mat<T> mask;
};

template <typename T>
class BasicNetwork {
public:
    BasicNetwork() = default;
    BasicNetwork(std::vector<LayerSpec> specs, std::uint64_t seed);

    const std::vector<LayerSpec>& specs() const { return specs_; }
    std::size_t size() const { return specs_.size(); }
    const LayerParams<T>& params(std::size_t layer) const { return params_[layer]; }
    // Mutable access invalidates outstanding forward caches.
    LayerParams<T>& mutable_params(std::size_t layer) {
        ++version_;
        return params_[layer];
    }
    std::uint64_t version() const { return version_; }

    std::size_t input_width() const;
    std::size_t output_width() const;
    std::vector<std::size_t> weight_layers() const;
    std::size_t weight_count() const;

    /// Multiplies every weight by its mask (after masks are changed).
    void apply_masks();
    void set_dropout_rate(double rate);

    template <typename U>
    BasicNetwork<U> cast() const {
        BasicNetwork<U> out;
        out.specs_ = specs_;
        for (const auto& p : params_) {
            out.params_.push_back({p.weight.template cast<U>(), p.bias.template cast<U>(), p.mask.template cast<U>()});
        }
        return out;
    }

    static void validate(const std::vector<LayerSpec>& specs);

private:
    template <typename U>
    friend class BasicNetwork;

    std::vector<LayerSpec> specs_;
    std::vector<LayerParams<T>> params_;
    std::uint64_t version_ = 0;

public:
    // Used by deserialisation to install a validated layer list.
    static BasicNetwork from_parts(std::vector<LayerSpec> specs, std::vector<LayerParams<T>> params);
};

using Network = BasicNetwork<float>;

enum class Mode { Train, Eval };

template <typename T>
struct ForwardCache {
    std::vector<Mat<T>> inputs;        // input to each layer
    std::vector<Mat<T>> dropout_masks; // scaled keep-masks, Train mode only
    Mat<T> output;                     // softmax probabilities
    std::uint64_t version = 0;
    const void* owner = nullptr;
    Mode mode = Mode::Eval;
};

/// `rng` drives dropout and is required in Train mode.
template <typename T>
ForwardCache<T> forward(const BasicNetwork<T>& net, const Mat<T>& batch, Mode mode, Rng* rng = nullptr);

template <typename T>
Mat<T> softmax_rows(const Mat<T>& logits);

inline constexpr double kProbabilityClip = 1e-12;

/// Mean categorical cross-entropy with probabilities clipped to [1e-12, 1].
template <typename T>
double cross_entropy(const Mat<T>& probabilities, std::span<const int> labels);

template <typename T>
struct Gradients {
    std::vector<Mat<T>> weight;
    std::vector<Vec<T>> bias;
};

/// Gradients of the mean cross-entropy for the batch that produced `cache`.
/// Weight gradients are multiplied by the layer mask.
template <typename T>
Gradients<T> backward(const BasicNetwork<T>& net, const ForwardCache<T>& cache, std::span<const int> labels);

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
    std::vector<Mat<T>> m_weight, v_weight;
    std::vector<Vec<T>> m_bias, v_bias;
    long step = 0;

    explicit AdamState(const BasicNetwork<T>& net);
};

/// One Adam update with bias correction at step `t` (t >= 1). Masked
/// weights receive no update.
template <typename T>
void adam_step(BasicNetwork<T>& net, const Gradients<T>& grads, AdamState<T>& state, const AdamConfig& cfg, long t);

struct TrainConfig {
    int epochs = 150;
    std::size_t batch_size = 64;
    double dropout = 0.4;
    AdamConfig adam;
    std::uint64_t seed = 0;
};

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;
};

using TrainLog = std::vector<EpochStats>;

/// Raised when the running loss stops being finite; carries the epochs done.
class DivergedError : public Error {
public:
    DivergedError(const std::string& what, TrainLog log) : Error(ErrorCode::Diverged, what), log_(std::move(log)) {}
    const TrainLog& log() const { return log_; }

private:
    TrainLog log_;
};

/// Invoked after every optimizer step with the 1-based global step count.
using StepCallback = std::function<void(long step, Network& net)>;

TrainLog train(Network& net, const Mat<float>& inputs, std::span<const int> labels, const TrainConfig& cfg,
               const StepCallback& on_step = {});

struct Prediction {
    std::vector<int> labels;
    Mat<float> probabilities;
};

/// Argmax of the softmax output; ties resolve to the lower class index.
Prediction predict(const Network& net, const Mat<float>& inputs);
std::vector<int> argmax_rows(const Mat<float>& probabilities);

// Reference architectures.
Network artifact_mlp(std::size_t input_width, std::uint64_t seed);
inline const std::vector<std::size_t> kMainMlpWidths{512, 256, 128, 64, 32, 16};

struct CnnWidths {
    std::size_t conv1 = 16;
    std::size_t conv2 = 32;
    std::size_t dense = 64;
};

Network main_mlp(std::size_t input_width, double dropout, std::uint64_t seed,
                 const std::vector<std::size_t>& widths = kMainMlpWidths);
Network main_cnn(std::size_t in_channels, std::size_t length, std::uint64_t seed, const CnnWidths& widths = {});

extern template class BasicNetwork<float>;
extern template class BasicNetwork<double>;

} // namespace omad
