#include "omad/dsp.hpp"

#include "omad/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace omad {

namespace {
constexpr double kPi = std::numbers::pi;
}

std::size_t WindowConfig::stride() const {
    return static_cast<std::size_t>(std::floor((1.0 - overlap_fraction) * static_cast<double>(window_size)));
}

void WindowConfig::validate() const {
    require(window_size >= 1, ErrorCode::PreconditionViolation, "window_size must be positive");
    require(overlap_fraction >= 0.0 && overlap_fraction < 1.0, ErrorCode::PreconditionViolation,
            "overlap_fraction must be in [0, 1)");
    require(stride() >= 1, ErrorCode::PreconditionViolation, "window stride rounds to zero");
}

NotchFilter::NotchFilter(double fs, double f0, double q) {
    require(fs > 0.0 && q > 0.0 && f0 > 0.0, ErrorCode::PreconditionViolation, "notch needs fs, f0, q > 0");
    require(f0 < fs / 2.0, ErrorCode::NyquistViolation,
            "notch at " + std::to_string(f0) + " Hz is not below fs/2 = " + std::to_string(fs / 2.0));
    const double w0 = 2.0 * kPi * f0 / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0_ = 1.0 / a0;
    b1_ = -2.0 * std::cos(w0) / a0;
    b2_ = 1.0 / a0;
    a1_ = -2.0 * std::cos(w0) / a0;
    a2_ = (1.0 - alpha) / a0;
}

double NotchFilter::apply(double x) {
    const double y = b0_ * x + b1_ * x1_ + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
}

void NotchFilter::reset() {
    x1_ = x2_ = y1_ = y2_ = 0.0;
}

std::vector<double> notch_filter(std::span<const double> signal, double fs, double f0, double q) {
    NotchFilter filter(fs, f0, q);
    std::vector<double> out(signal.size());
    std::transform(signal.begin(), signal.end(), out.begin(), [&](double x) { return filter.apply(x); });
    return out;
}

namespace {

// 63-tap Hamming-windowed sinc, DC gain normalised to exactly 1.
const std::vector<double>& half_band_taps() {
    static const std::vector<double> taps = [] {
        constexpr int n = 63;
        constexpr double cutoff = 0.45 * 0.5 * 0.5; // 0.45 * (fs/2), as a fraction of fs
        std::vector<double> h(n);
        const int mid = n / 2;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            const int k = i - mid;
            const double sinc = k == 0 ? 2.0 * cutoff : std::sin(2.0 * kPi * cutoff * k) / (kPi * k);
            const double window = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (n - 1));
            h[i] = sinc * window;
            sum += h[i];
        }
        for (auto& v : h) {
            v /= sum;
        }
        return h;
    }();
    return taps;
}

} // namespace

std::vector<double> resample_half(std::span<const double> signal, double fs) {
    require(signal.size() >= 2, ErrorCode::PreconditionViolation, "resample_half needs at least 2 samples");
    require(fs > 0.0, ErrorCode::PreconditionViolation, "fs must be positive");
    const auto& h = half_band_taps();
    const auto n = static_cast<long>(signal.size());
    const long mid = static_cast<long>(h.size()) / 2;
    // Odd reflection about the end points keeps constants and slopes intact.
    auto at = [&](long i) {
        if (i < 0) {
            const long j = std::min(-i, n - 1);
            return 2.0 * signal[0] - signal[static_cast<std::size_t>(j)];
        }
        if (i >= n) {
            const long j = std::max(2 * (n - 1) - i, 0L);
            return 2.0 * signal[static_cast<std::size_t>(n - 1)] - signal[static_cast<std::size_t>(j)];
        }
        return signal[static_cast<std::size_t>(i)];
    };
    std::vector<double> out(signal.size() / 2);
    for (std::size_t o = 0; o < out.size(); ++o) {
        const long centre = static_cast<long>(2 * o);
        double acc = 0.0;
        for (long k = 0; k < static_cast<long>(h.size()); ++k) {
            acc += h[static_cast<std::size_t>(k)] * at(centre + k - mid);
        }
        out[o] = acc;
    }
    return out;
}

std::vector<std::size_t> window_offsets(std::size_t length, const WindowConfig& cfg) {
    cfg.validate();
    require(length >= cfg.window_size, ErrorCode::TooShort,
            "signal of " + std::to_string(length) + " samples is shorter than window " +
                std::to_string(cfg.window_size));
    const auto stride = cfg.stride();
    const auto count = (length - cfg.window_size) / stride + 1;
    std::vector<std::size_t> offsets(count);
    for (std::size_t i = 0; i < count; ++i) {
        offsets[i] = i * stride;
    }
    return offsets;
}

std::vector<std::vector<double>> make_windows(std::span<const double> signal, const WindowConfig& cfg) {
    std::vector<std::vector<double>> windows;
    for (auto off : window_offsets(signal.size(), cfg)) {
        const auto slice = signal.subspan(off, cfg.window_size);
        windows.emplace_back(slice.begin(), slice.end());
    }
    return windows;
}

const std::array<std::string, kFeatureCount>& FeatureVector::names() {
    static const std::array<std::string, kFeatureCount> n{
        "mean", "variance", "std", "rms", "min", "max", "zero_crossings",
        "delta", "theta", "alpha", "beta", "gamma"};
    return n;
}

const std::array<Band, 5>& eeg_bands() {
    static const std::array<Band, 5> bands{{
        {"delta", 0.5, 4.0},
        {"theta", 4.0, 8.0},
        {"alpha", 8.0, 13.0},
        {"beta", 13.0, 30.0},
        {"gamma", 30.0, 45.0},
    }};
    return bands;
}

std::vector<double> periodogram(std::span<const double> window, double fs) {
    const std::size_t n = window.size();
    const std::size_t bins = n / 2 + 1;
    std::vector<double> p(bins);
    const double norm = static_cast<double>(n) * fs;
    for (std::size_t k = 0; k < bins; ++k) {
        double re = 0.0;
        double im = 0.0;
        const double w = -2.0 * kPi / static_cast<double>(n);
        for (std::size_t t = 0; t < n; ++t) {
            // (k * t) mod n keeps the angle small and exact for large t
            const double angle = w * static_cast<double>((k * t) % n);
            re += window[t] * std::cos(angle);
            im += window[t] * std::sin(angle);
        }
        const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
        p[k] = (edge ? 1.0 : 2.0) * (re * re + im * im) / norm;
    }
    return p;
}

FeatureVector extract_features(std::span<const double> window, double fs) {
    require(window.size() >= 8, ErrorCode::PreconditionViolation, "feature window needs >= 8 samples");
    const auto n = static_cast<double>(window.size());
    FeatureVector f;
    auto& v = f.values;

    double sum = 0.0;
    double sumsq = 0.0;
    double lo = window[0];
    double hi = window[0];
    double crossings = 0.0;
    for (std::size_t i = 0; i < window.size(); ++i) {
        const double x = window[i];
        sum += x;
        sumsq += x * x;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        if (i > 0 && ((window[i - 1] < 0.0) != (x < 0.0))) {
            crossings += 1.0;
        }
    }
    const double mean = sum / n;
    double var = 0.0;
    for (double x : window) {
        var += (x - mean) * (x - mean);
    }
    var /= n;
    v[FeatureVector::Mean] = mean;
    v[FeatureVector::Variance] = var;
    v[FeatureVector::StdDev] = std::sqrt(var);
    v[FeatureVector::Rms] = std::sqrt(sumsq / n);
    v[FeatureVector::Min] = lo;
    v[FeatureVector::Max] = hi;
    v[FeatureVector::ZeroCrossings] = crossings;

    // Only bins up to the top of the gamma band are needed.
    const std::size_t bins_needed =
        std::min(window.size() / 2 + 1, static_cast<std::size_t>(std::ceil(45.0 * n / fs)) + 1);
    const double norm = n * fs;
    for (std::size_t k = 0; k < bins_needed; ++k) {
        const double freq = static_cast<double>(k) * fs / n;
        std::size_t band = 5;
        for (std::size_t b = 0; b < 5; ++b) {
            const auto& bd = eeg_bands()[b];
            const bool inside = b == 4 ? (freq >= bd.lo_hz && freq <= bd.hi_hz)
                                       : (freq >= bd.lo_hz && freq < bd.hi_hz);
            if (inside) {
                band = b;
                break;
            }
        }
        if (band == 5) {
            continue;
        }
        double re = 0.0;
        double im = 0.0;
        const double w = -2.0 * kPi / n;
        for (std::size_t t = 0; t < window.size(); ++t) {
            const double angle = w * static_cast<double>((k * t) % window.size());
            re += window[t] * std::cos(angle);
            im += window[t] * std::sin(angle);
        }
        const bool edge = k == 0 || (window.size() % 2 == 0 && k == window.size() / 2);
        v[FeatureVector::Delta + band] += (edge ? 1.0 : 2.0) * (re * re + im * im) / norm;
    }
    return f;
}

FeatureMatrix FeatureMatrix::select_columns(const std::vector<std::size_t>& keep) const {
    FeatureMatrix out = *this;
    out.columns.clear();
    for (auto c : keep) {
        require(c < columns.size(), ErrorCode::ShapeMismatch, "column index out of range");
        out.columns.push_back(columns[c]);
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.rows[r].clear();
        for (auto c : keep) {
            out.rows[r].push_back(rows[r][c]);
        }
    }
    return out;
}

FeatureMatrix FeatureMatrix::select_rows(const std::vector<std::size_t>& keep) const {
    FeatureMatrix out;
    out.columns = columns;
    for (auto r : keep) {
        require(r < rows.size(), ErrorCode::ShapeMismatch, "row index out of range");
        out.rows.push_back(rows[r]);
        out.group_labels.push_back(group_labels[r]);
        out.artifact_labels.push_back(artifact_labels[r]);
        out.source_ids.push_back(source_ids[r]);
        out.trial_numbers.push_back(trial_numbers[r]);
    }
    return out;
}

FeatureMatrix feature_matrix(const std::vector<WindowedExample>& windows, const std::vector<std::string>& channels,
                             std::size_t window_size, double fs) {
    FeatureMatrix m;
    for (const auto& ch : channels) {
        for (const auto& name : FeatureVector::names()) {
            m.columns.push_back(ch + "_" + name);
        }
    }
    for (const auto& w : windows) {
        require(w.samples.size() == channels.size() * window_size, ErrorCode::ShapeMismatch,
                "window " + w.source_id + " has " + std::to_string(w.samples.size()) + " samples, expected " +
                    std::to_string(channels.size() * window_size));
        std::vector<double> row;
        row.reserve(m.columns.size());
        for (std::size_t c = 0; c < channels.size(); ++c) {
            const auto f = extract_features(std::span(w.samples).subspan(c * window_size, window_size), fs);
            row.insert(row.end(), f.values.begin(), f.values.end());
        }
        m.rows.push_back(std::move(row));
        m.group_labels.push_back(w.group_label);
        m.artifact_labels.push_back(w.artifact_label);
        m.source_ids.push_back(w.source_id);
        m.trial_numbers.push_back(w.trial_number);
    }
    return m;
}

void write_feature_csv(const FeatureMatrix& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
    for (const auto& c : m.columns) {
        out << c << ',';
    }
    out << "group_label,artifact_label\n";
    char buf[40];
    for (std::size_t r = 0; r < m.rows.size(); ++r) {
        for (double v : m.rows[r]) {
            std::snprintf(buf, sizeof buf, "%.17g,", v);
            out << buf;
        }
        if (m.group_labels[r]) {
            out << to_string(*m.group_labels[r]);
        }
        out << ',';
        if (m.artifact_labels[r]) {
            out << (*m.artifact_labels[r] ? '1' : '0');
        }
        out << '\n';
    }
    require(static_cast<bool>(out), ErrorCode::IoFailure, "write failed for " + path.string());
}

FeatureMatrix read_feature_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::FileNotFound, path.string());
    FeatureMatrix m;
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::MalformedHeader, "empty feature csv");
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            m.columns.push_back(cell);
        }
    }
    require(m.columns.size() >= 2 && m.columns[m.columns.size() - 2] == "group_label" &&
                m.columns.back() == "artifact_label",
            ErrorCode::MalformedHeader, "feature csv must end with group_label,artifact_label");
    m.columns.resize(m.columns.size() - 2);
    int row_no = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (!line.empty() && line.back() == ',') {
            cells.emplace_back();
        }
        require(cells.size() == m.columns.size() + 2, ErrorCode::RowArity,
                "feature row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) + " cells");
        std::vector<double> row(m.columns.size());
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] = std::stod(cells[c]);
        }
        m.rows.push_back(std::move(row));
        const auto& g = cells[m.columns.size()];
        m.group_labels.push_back(g.empty() ? std::nullopt
                                           : std::optional<Group>(g == "Alcoholic" ? Group::Alcoholic : Group::Control));
        const auto& a = cells[m.columns.size() + 1];
        m.artifact_labels.push_back(a.empty() ? std::nullopt : std::optional<bool>(a == "1"));
        m.source_ids.push_back("row" + std::to_string(row_no));
        m.trial_numbers.push_back(row_no);
        ++row_no;
    }
    return m;
}

} // namespace omad
