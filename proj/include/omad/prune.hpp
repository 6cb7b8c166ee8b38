#pragma once

#include "omad/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace omad {

/// Sparsity ramp: nothing before begin_step, a cubic ramp from initial to
/// final sparsity between begin_step and end_step, final sparsity after.
struct PruningSchedule {
    double initial_sparsity = 0.0;
    double final_sparsity = 0.5;
    long begin_step = 0;
    long end_step = 1;
    long frequency = 100;

    void validate() const;
    /// Masks are recomputed at begin_step + k * frequency inside the ramp and
    /// once more at end_step so the final sparsity is always reached.
    bool is_update_step(long step) const;

    /// Defaults relative to the run length: begin at 20%, end at 80%.
    static PruningSchedule for_run(long total_steps, double final_sparsity = 0.5, long frequency = 100);
};

double sparsity_at(long step, const PruningSchedule& schedule);

struct LayerMask {
    std::vector<std::uint8_t> keep; // 1 = weight survives
    std::size_t zeros = 0;
    double realized_sparsity = 0.0;
};

/// Zeroes the floor(s * n) smallest-magnitude weights; equal magnitudes are
/// pruned in ascending flat-index order.
LayerMask compute_mask(std::span<const float> weights, double target_sparsity);

/// Installs a fresh mask at `target_sparsity` on every weight layer and
/// multiplies the weights by it. Biases are never pruned.
void prune_network(Network& net, double target_sparsity);

double layer_sparsity(const Network& net, std::size_t layer);
double overall_sparsity(const Network& net);

/// Train-loop hook: recomputes masks at the schedule's update steps and
/// records the realised per-layer sparsity after each update.
class PruningCallback {
public:
    explicit PruningCallback(PruningSchedule schedule);

    void operator()(long step, Network& net);
    StepCallback as_step_callback();

    struct Event {
        long step;
        double target;
        std::vector<double> layer_sparsity;
    };
    const std::vector<Event>& events() const { return events_; }
    const PruningSchedule& schedule() const { return schedule_; }

private:
    PruningSchedule schedule_;
    std::vector<Event> events_;
};

// ---------------------------------------------------------------------------
// Model file: little-endian "OMAD" container shared by every neural model.
//
//   magic "OMAD" | u16 version | u16 layer count
//   per layer: u8 kind | u32 dims... | u8 encoding | weights | f32 bias[rows]
//
// dims: Dense (in, out); Conv1D (in_channels, out_channels, length, kernel);
// ReLU / Softmax (width); Dropout (width, rate in parts per million).
// encoding 0 = dense f32 weights in row-major order; 1 = sparse: a
// ceil(n/8)-byte keep bitmap (bit i of byte i/8, LSB first) followed by the
// surviving f32 values in flat-index order. Layers without weights carry
// encoding 0 and no payload.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kModelFormatVersion = 1;

enum class Encoding { Auto, Dense, Sparse };

std::size_t dense_payload_bytes(std::size_t weights);
std::size_t sparse_payload_bytes(std::size_t weights, std::size_t survivors);

std::vector<std::uint8_t> serialize(const Network& net, Encoding encoding = Encoding::Auto);
std::size_t serialize(const Network& net, Encoding encoding, const std::filesystem::path& path);
Network deserialize(std::span<const std::uint8_t> bytes);
Network deserialize(const std::filesystem::path& path);

/// Single-threaded inference engine over a transposed (feature x batch)
/// layout. The sparse backend stores each weight layer in compressed rows
/// and only issues multiply-accumulates for surviving weights; the dense
/// backend runs the identical kernel over every weight.
class InferenceModel {
public:
    enum class Backend { Dense, Sparse };

    InferenceModel(const Network& net, Backend backend);

    Mat<float> forward(const Mat<float>& batch) const;
    Backend backend() const { return backend_; }
    std::size_t input_width() const { return input_width_; }
    /// Multiply-accumulates per input row.
    std::size_t macs_per_row() const;

private:
    struct Layer {
        LayerSpec spec;
        std::size_t rows = 0;
        std::size_t cols = 0;
        std::vector<float> dense; // rows x cols, row-major
        std::vector<std::uint32_t> row_ptr;
        std::vector<std::uint32_t> col_idx;
        std::vector<float> values;
        std::vector<float> bias;
    };

    void run_dense(const Layer& l, const float* in, float* out, std::size_t n) const;
    void run_conv(const Layer& l, const float* in, float* out, std::size_t n) const;

    Backend backend_;
    std::size_t input_width_ = 0;
    std::vector<Layer> layers_;
};

Mat<float> sparse_forward(const Network& net, const Mat<float>& batch);
Mat<float> dense_forward(const Network& net, const Mat<float>& batch);

} // namespace omad
