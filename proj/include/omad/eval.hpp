#pragma once

#include "omad/nn.hpp"
#include "omad/prune.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace omad {

struct ConfusionMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Binary metrics with `positive` as the positive class. A zero denominator
/// makes precision or recall 0, and f1 is 0 whenever either is 0.
ConfusionMetrics confusion_metrics(std::span<const int> predicted, std::span<const int> actual, int positive);

struct BenchConfig {
    int warmup = 5;
    int reps = 30;
};

struct LatencyReport {
    double median_ms = 0.0;
    double q1_ms = 0.0;
    double q3_ms = 0.0;
    std::vector<double> samples_ms;
    std::string hardware;

    double iqr_ms() const { return q3_ms - q1_ms; }
};

/// Times `reps` forward passes of `batch` on the calling thread after
/// `warmup` untimed passes.
LatencyReport latency_bench(const InferenceModel& model, const Mat<float>& batch, const BenchConfig& cfg = {});

/// Linear-interpolated quantile of an unsorted sample, q in [0, 1].
double quantile(std::vector<double> values, double q);

/// CPU model name and logical core count, e.g. "Intel(R) Xeon(R) ... x8".
std::string hardware_descriptor();

/// Deterministic 64-row benchmark batch drawn from N(0, 1).
Mat<float> bench_batch(std::size_t width, std::size_t rows = 64, std::uint64_t seed = 0);

struct MetricsReport {
    std::string setting;
    std::string model;
    bool pruned = false;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    double f1 = 0.0;
    std::size_t size_bytes = 0;
    double latency_ms = 0.0;
};

struct SweepRow {
    double sparsity = 0.0;
    std::size_t size_bytes = 0;
    double latency_ms = 0.0;
    double accuracy = 0.0;
    double realized_sparsity = 0.0;
    std::string error; // non-empty when the point failed
};

struct SweepConfig {
    TrainConfig training;
    long frequency = 100;
    BenchConfig bench;
    // Schedule for a run of `steps` optimiser steps ending at `sparsity`;
    // PruningSchedule::for_run when empty.
    std::function<PruningSchedule(long steps, double sparsity)> schedule;
};

/// Trains a copy of `init` per sparsity with a pruning schedule ending at
/// that sparsity, then serialises (Auto encoding), benchmarks and scores it.
/// A failing point is recorded in its row and the sweep continues.
/// `evaluate` maps a trained network to its test accuracy.
std::vector<SweepRow> sparsity_sweep(const Network& init, const Mat<float>& train_x, std::span<const int> train_y,
                                     const std::vector<double>& sparsities, const SweepConfig& cfg,
                                     const std::function<double(const Network&)>& evaluate);

/// Backend matching how a model would be deployed: sparse once any weight
/// has been pruned.
InferenceModel::Backend deployment_backend(const Network& net);

std::string format_fixed(double v, int decimals = 4);

void write_settings_csv(const std::vector<MetricsReport>& rows, const std::filesystem::path& path);
void write_compression_csv(const std::vector<MetricsReport>& rows, const std::filesystem::path& path);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

} // namespace omad
