#include "omad/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

namespace omad {

ConfusionMetrics confusion_metrics(std::span<const int> predicted, std::span<const int> actual, int positive) {
    require(predicted.size() == actual.size(), ErrorCode::LengthMismatch,
            std::to_string(predicted.size()) + " predictions for " + std::to_string(actual.size()) + " labels");
    require(!actual.empty(), ErrorCode::LengthMismatch, "no predictions to score");
    ConfusionMetrics m;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const bool p = predicted[i] == positive;
        const bool a = actual[i] == positive;
        if (p && a) {
            ++m.tp;
        } else if (p) {
            ++m.fp;
        } else if (a) {
            ++m.fn;
        } else {
            ++m.tn;
        }
    }
    auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    m.accuracy = ratio(m.tp + m.tn, actual.size());
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn);
    m.f1 = (m.precision > 0.0 && m.recall > 0.0) ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

double quantile(std::vector<double> values, double q) {
    require(!values.empty(), ErrorCode::PreconditionViolation, "quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::string hardware_descriptor() {
    std::string model = "unknown cpu";
    std::ifstream in("/proc/cpuinfo");
    for (std::string line; std::getline(in, line);) {
        if (line.rfind("model name", 0) == 0) {
            if (auto colon = line.find(':'); colon != std::string::npos) {
                model = line.substr(colon + 1);
                model.erase(0, model.find_first_not_of(' '));
            }
            break;
        }
    }
    return model + " x" + std::to_string(std::max(1u, std::thread::hardware_concurrency()));
}

LatencyReport latency_bench(const InferenceModel& model, const Mat<float>& batch, const BenchConfig& cfg) {
    require(cfg.warmup >= 0 && cfg.reps >= 1, ErrorCode::InvalidConfig, "bench needs warmup >= 0 and reps >= 1");
    using clock = std::chrono::steady_clock;
    volatile float sink = 0.0f;
    for (int i = 0; i < cfg.warmup; ++i) {
        sink = sink + model.forward(batch)(0, 0);
    }
    LatencyReport r;
    r.samples_ms.reserve(static_cast<std::size_t>(cfg.reps));
    for (int i = 0; i < cfg.reps; ++i) {
        const auto t0 = clock::now();
        const auto out = model.forward(batch);
        const auto t1 = clock::now();
        sink = sink + out(0, 0);
        r.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    r.median_ms = quantile(r.samples_ms, 0.5);
    r.q1_ms = quantile(r.samples_ms, 0.25);
    r.q3_ms = quantile(r.samples_ms, 0.75);
    r.hardware = hardware_descriptor();
    return r;
}

Mat<float> bench_batch(std::size_t width, std::size_t rows, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0xbe7c}));
    std::normal_distribution<float> dist(0.0f, 1.0f);
    Mat<float> b(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width));
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        b.data()[i] = dist(rng);
    }
    return b;
}

InferenceModel::Backend deployment_backend(const Network& net) {
    return overall_sparsity(net) > 0.0 ? InferenceModel::Backend::Sparse : InferenceModel::Backend::Dense;
}

std::vector<SweepRow> sparsity_sweep(const Network& init, const Mat<float>& train_x, std::span<const int> train_y,
                                     const std::vector<double>& sparsities, const SweepConfig& cfg,
                                     const std::function<double(const Network&)>& evaluate) {
    for (std::size_t i = 0; i < sparsities.size(); ++i) {
        require(sparsities[i] >= 0.0 && sparsities[i] <= 0.95, ErrorCode::InvalidConfig,
                "sweep sparsities must lie in [0, 0.95]");
        require(i == 0 || sparsities[i] > sparsities[i - 1], ErrorCode::InvalidConfig,
                "sweep sparsities must be strictly ascending");
    }
    const auto n = static_cast<long>(train_x.rows());
    const auto batch = static_cast<long>(cfg.training.batch_size);
    const long total_steps = static_cast<long>(cfg.training.epochs) * ((n + batch - 1) / batch);
    const auto probe = bench_batch(init.input_width());

    std::vector<SweepRow> rows;
    for (double s : sparsities) {
        SweepRow row;
        row.sparsity = s;
        try {
            Network net = init;
            if (s > 0.0) {
                PruningCallback pruner(cfg.schedule ? cfg.schedule(total_steps, s)
                                                    : PruningSchedule::for_run(total_steps, s, cfg.frequency));
                train(net, train_x, train_y, cfg.training, pruner.as_step_callback());
            } else {
                train(net, train_x, train_y, cfg.training);
            }
            row.size_bytes = serialize(net, Encoding::Auto).size();
            row.realized_sparsity = overall_sparsity(net);
            row.latency_ms = latency_bench(InferenceModel(net, deployment_backend(net)), probe, cfg.bench).median_ms;
            row.accuracy = evaluate(net);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
    return out;
}

} // namespace

void write_settings_csv(const std::vector<MetricsReport>& rows, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "setting,model,accuracy,f1\n";
    for (const auto& r : rows) {
        out << r.setting << ',' << r.model << ',' << format_fixed(r.accuracy) << ',' << format_fixed(r.f1) << '\n';
    }
}

void write_compression_csv(const std::vector<MetricsReport>& rows, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "model,pruned,size_bytes,latency_ms,accuracy,f1\n";
    for (const auto& r : rows) {
        out << r.model << ',' << (r.pruned ? "true" : "false") << ',' << r.size_bytes << ','
            << format_fixed(r.latency_ms) << ',' << format_fixed(r.accuracy) << ',' << format_fixed(r.f1) << '\n';
    }
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "sparsity,size_bytes,latency_ms,accuracy\n";
    for (const auto& r : rows) {
        if (!r.error.empty()) {
            out << format_fixed(r.sparsity) << ",,,\n";
            continue;
        }
        out << format_fixed(r.sparsity) << ',' << r.size_bytes << ',' << format_fixed(r.latency_ms) << ','
            << format_fixed(r.accuracy) << '\n';
    }
}

} // namespace omad
