#include "omad/dataset.hpp"

#include "omad/error.hpp"
#include "omad/parallel.hpp"
#include "omad/random.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace omad {

namespace fs = std::filesystem;

std::string_view to_string(Group g) {
    return g == Group::Alcoholic ? "Alcoholic" : "Control";
}

std::string_view to_string(Condition c) {
    switch (c) {
    case Condition::S1Obj: return "S1Obj";
    case Condition::S2Match: return "S2Match";
    case Condition::S2Nomatch: return "S2Nomatch";
    }
    return "?";
}

std::string_view to_string(ArtifactKind k) {
    return k == ArtifactKind::EyeBlink ? "EyeBlink" : "EyebrowRaise";
}

ArtifactKind parse_artifact_kind(std::string_view s) {
    if (s == "EyeBlink") {
        return ArtifactKind::EyeBlink;
    }
    if (s == "EyebrowRaise") {
        return ArtifactKind::EyebrowRaise;
    }
    throw Error(ErrorCode::MalformedHeader, "unknown artifact kind '" + std::string(s) + "'");
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) {
            ++i;
        }
        const std::size_t start = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) {
            ++i;
        }
        if (i > start) {
            out.push_back(s.substr(start, i - start));
        }
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
    const char* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, out);
    return ec == std::errc() && ptr == end;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& ch : out) {
        ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    return out;
}

// Integer that follows `key` in `text`, e.g. "trial 12" -> 12.
bool number_after(std::string_view text, std::string_view key, int& out) {
    const auto pos = text.find(key);
    if (pos == std::string_view::npos) {
        return false;
    }
    auto rest = trim(text.substr(pos + key.size()));
    std::size_t n = 0;
    while (n < rest.size() && std::isdigit(static_cast<unsigned char>(rest[n]))) {
        ++n;
    }
    return n > 0 && parse_number(rest.substr(0, n), out);
}

// Integer preceding `key`, e.g. "64 chans" -> 64.
bool number_before(std::string_view text, std::string_view key, int& out) {
    const auto pos = text.find(key);
    if (pos == std::string_view::npos) {
        return false;
    }
    auto head = trim(text.substr(0, pos));
    std::size_t n = 0;
    while (n < head.size() && std::isdigit(static_cast<unsigned char>(head[head.size() - 1 - n]))) {
        ++n;
    }
    return n > 0 && parse_number(head.substr(head.size() - n), out);
}

void parse_header(const std::vector<std::string>& header, Recording& rec) {
    // Line 1: "# co2a0000364.rd"
    auto id = trim(std::string_view(header[0]).substr(1));
    if (auto dot = id.find(".rd"); dot != std::string_view::npos) {
        id = id.substr(0, dot);
    }
    require(!id.empty() && split_ws(id).size() == 1, ErrorCode::MalformedHeader,
            "subject line: '" + header[0] + "'");
    require(id.size() >= 4, ErrorCode::UnknownGroup, "subject id too short: " + std::string(id));
    rec.subject_id = std::string(id);
    switch (id[3]) {
    case 'a': rec.group = Group::Alcoholic; break;
    case 'c': rec.group = Group::Control; break;
    default:
        throw Error(ErrorCode::UnknownGroup, "4th letter of '" + rec.subject_id + "' is neither a nor c");
    }

    // Line 2: "# 120 trials, 64 chans, 416 samples 368 post_stim samples"
    const std::string_view counts = header[1];
    require(number_before(counts, "trials", rec.declared_trials) &&
                number_before(counts, "chans", rec.declared_channels) &&
                number_before(counts, "samples", rec.declared_samples),
            ErrorCode::MalformedHeader, "count line: '" + header[1] + "'");

    // Line 3: "# 3.906000 msecs uV"
    const auto period_tokens = split_ws(std::string_view(header[2]).substr(1));
    require(period_tokens.size() >= 2 && period_tokens[1] == "msecs" &&
                parse_number(period_tokens[0], rec.sample_period_ms) && rec.sample_period_ms > 0.0,
            ErrorCode::MalformedHeader, "sampling line: '" + header[2] + "'");
    const double fs = 1000.0 / rec.sample_period_ms;
    const double snapped = std::round(fs);
    rec.sample_rate_hz = std::abs(fs - snapped) < 0.05 ? snapped : fs;

    // Line 4: "# S1 obj , trial 0" / "# S2 nomatch err, trial 5"
    const std::string cond = lower(header[3]);
    const auto comma = cond.find(',');
    const std::string_view cond_part = std::string_view(cond).substr(0, comma);
    if (cond_part.find("s1 obj") != std::string_view::npos) {
        rec.condition = Condition::S1Obj;
    } else if (cond_part.find("s2 nomatch") != std::string_view::npos) {
        rec.condition = Condition::S2Nomatch;
    } else if (cond_part.find("s2 match") != std::string_view::npos) {
        rec.condition = Condition::S2Match;
    } else {
        throw Error(ErrorCode::MalformedHeader, "condition line: '" + header[3] + "'");
    }
    rec.condition_error = cond_part.find("err") != std::string_view::npos;
    require(comma != std::string::npos &&
                number_after(std::string_view(cond).substr(comma), "trial", rec.trial_number),
            ErrorCode::MalformedHeader, "trial number: '" + header[3] + "'");
}

} // namespace

Recording parse_rd(std::istream& in) {
    Recording rec;
    std::vector<std::string> header;
    std::unordered_map<std::string, std::size_t> channel_index;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const auto body = trim(line);
        if (body.empty()) {
            continue;
        }
        if (body.front() == '#') {
            if (header.size() < 4) {
                header.emplace_back(body);
                if (header.size() == 4) {
                    parse_header(header, rec);
                }
            }
            // Later '#' lines are per-channel block markers ("# FP1 chan 0").
            continue;
        }
        require(header.size() == 4, ErrorCode::MalformedHeader,
                "data before the 4 header lines (line " + std::to_string(line_no) + ")");
        const auto cols = split_ws(body);
        int trial = 0;
        long index = 0;
        double value = 0.0;
        require(cols.size() == 4 && parse_number(cols[0], trial) && parse_number(cols[2], index) &&
                    parse_number(cols[3], value),
                ErrorCode::RowArity, "line " + std::to_string(line_no) + ": '" + std::string(body) + "'");
        const std::string name(cols[1]);
        auto [it, inserted] = channel_index.try_emplace(name, rec.channels.size());
        if (inserted) {
            rec.channels.push_back(name);
            rec.data.emplace_back();
        }
        auto& row = rec.data[it->second];
        require(index == static_cast<long>(row.size()), ErrorCode::IndexGap,
                "channel " + name + " expected sample " + std::to_string(row.size()) + " got " +
                    std::to_string(index) + " (line " + std::to_string(line_no) + ")");
        row.push_back(value);
    }
    require(header.size() == 4, ErrorCode::MalformedHeader, "fewer than 4 header lines");
    require(!rec.data.empty(), ErrorCode::IndexGap, "no sample rows");
    for (std::size_t c = 0; c < rec.data.size(); ++c) {
        require(rec.data[c].size() == rec.data.front().size(), ErrorCode::IndexGap,
                "channel " + rec.channels[c] + " has " + std::to_string(rec.data[c].size()) +
                    " samples, expected " + std::to_string(rec.data.front().size()));
    }
    return rec;
}

Recording parse_rd(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_rd(in);
}

std::string write_rd(const Recording& rec) {
    std::string out;
    char buf[128];
    out += "# " + rec.subject_id + ".rd\n";
    std::snprintf(buf, sizeof buf, "# %d trials, %d chans, %d samples\n", rec.declared_trials,
                  rec.declared_channels, rec.declared_samples);
    out += buf;
    std::snprintf(buf, sizeof buf, "# %.6f msecs uV\n", rec.sample_period_ms);
    out += buf;
    static constexpr const char* kCondition[] = {"S1 obj", "S2 match", "S2 nomatch"};
    std::snprintf(buf, sizeof buf, "# %s%s, trial %d\n", kCondition[static_cast<int>(rec.condition)],
                  rec.condition_error ? " err" : " ", rec.trial_number);
    out += buf;
    for (std::size_t c = 0; c < rec.channels.size(); ++c) {
        out += "# " + rec.channels[c] + " chan " + std::to_string(c) + "\n";
        for (std::size_t k = 0; k < rec.data[c].size(); ++k) {
            std::snprintf(buf, sizeof buf, "%d %s %zu %.3f\n", rec.trial_number, rec.channels[c].c_str(),
                          k, rec.data[c][k]);
            out += buf;
        }
    }
    return out;
}

Recording read_rd_file(const fs::path& path) {
    require(fs::exists(path), ErrorCode::FileNotFound, path.string());
    gzFile gz = gzopen(path.c_str(), "rb");
    require(gz != nullptr, ErrorCode::IoFailure, "cannot open " + path.string());
    std::string text;
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(gz, buf, sizeof buf)) > 0) {
        text.append(buf, static_cast<std::size_t>(n));
    }
    const bool failed = n < 0;
    gzclose(gz);
    require(!failed, ErrorCode::IoFailure, "decompression failed for " + path.string());
    return parse_rd(text);
}

void write_rd_file(const Recording& rec, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
    out << write_rd(rec);
    require(static_cast<bool>(out), ErrorCode::IoFailure, "write failed for " + path.string());
}

CorpusLoad load_corpus(const fs::path& dir, std::optional<Condition> filter) {
    require(fs::is_directory(dir), ErrorCode::FileNotFound, dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().filename().string().find(".rd") != std::string::npos) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());

    std::vector<std::optional<Recording>> parsed(files.size());
    std::vector<std::string> failures(files.size());
    parallel_for(files.size(), [&](std::size_t i) {
        try {
            parsed[i] = read_rd_file(files[i]);
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });

    CorpusLoad load;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!parsed[i]) {
            load.errors.emplace_back(files[i], failures[i]);
        } else if (!filter || parsed[i]->condition == *filter) {
            load.recordings.push_back(std::move(*parsed[i]));
        }
    }
    std::stable_sort(load.recordings.begin(), load.recordings.end(), [](const Recording& a, const Recording& b) {
        return std::tie(a.subject_id, a.trial_number) < std::tie(b.subject_id, b.trial_number);
    });
    if (load.recordings.empty()) {
        throw Error(ErrorCode::EmptyCorpus, "no recordings parsed under " + dir.string() + " (" +
                                                std::to_string(load.errors.size()) + " files failed)");
    }
    return load;
}

const std::vector<std::string>& emotiv_channels() {
    static const std::vector<std::string> names{"AF3", "F7", "F3", "FC5", "T7", "P7", "O1",
                                                "O2",  "P8", "T8", "FC6", "F4", "F8", "AF4"};
    return names;
}

const std::vector<std::string>& uci_channels() {
    static const std::vector<std::string> names{
        "FP1", "FP2", "F7",  "F8",  "AF1", "AF2", "FZ",  "F4",  "F3",  "FC6", "FC5", "FC2", "FC1",
        "T8",  "T7",  "CZ",  "C3",  "C4",  "CP5", "CP6", "CP1", "CP2", "P3",  "P4",  "PZ",  "P8",
        "P7",  "PO2", "PO1", "O2",  "O1",  "X",   "AF7", "AF8", "F5",  "F6",  "FT7", "FT8", "FPZ",
        "FC4", "FC3", "C6",  "C5",  "F2",  "F1",  "TP8", "TP7", "AFZ", "CP3", "CP4", "P5",  "P6",
        "C1",  "C2",  "PO7", "PO8", "FCZ", "POZ", "OZ",  "P2",  "P1",  "CPZ", "nd",  "Y"};
    return names;
}

bool is_frontal(std::string_view channel) {
    const std::string up = [&] {
        std::string s(channel);
        for (auto& ch : s) {
            ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        }
        return s;
    }();
    return up.starts_with("FP") || up.starts_with("AF") ||
           (up.starts_with("F") && !up.starts_with("FC") && !up.starts_with("FT"));
}

std::vector<double> synth_background(std::size_t samples, double fs, double rms, std::uint64_t seed,
                                     double alpha_gain, double beta_gain) {
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.25);
    constexpr double two_pi = 2.0 * std::numbers::pi;

    struct Tone {
        double freq, amp, phase;
    };
    std::vector<Tone> tones;
    for (int i = 0; i < 12; ++i) {
        const double f = 1.0 + 39.0 * unit(rng);
        tones.push_back({f, (0.5 + unit(rng)) / std::sqrt(f), two_pi * unit(rng)});
    }
    for (int i = 0; i < 3; ++i) {
        tones.push_back({8.0 + 5.0 * unit(rng), 0.35 * alpha_gain, two_pi * unit(rng)});
    }
    for (int i = 0; i < 3; ++i) {
        tones.push_back({13.0 + 17.0 * unit(rng), 0.2 * beta_gain, two_pi * unit(rng)});
    }

    std::vector<double> x(samples, 0.0);
    for (std::size_t k = 0; k < samples; ++k) {
        const double t = static_cast<double>(k) / fs;
        double v = noise(rng);
        for (const auto& tone : tones) {
            v += tone.amp * std::sin(two_pi * tone.freq * t + tone.phase);
        }
        x[k] = v;
    }
    double mean = 0.0;
    for (double v : x) {
        mean += v;
    }
    mean /= static_cast<double>(samples);
    double ss = 0.0;
    for (auto& v : x) {
        v -= mean;
        ss += v * v;
    }
    const double scale = ss > 0.0 ? rms / std::sqrt(ss / static_cast<double>(samples)) : 0.0;
    for (auto& v : x) {
        v *= scale;
    }
    return x;
}

void overlay_artifact(SignalMatrix& data, const std::vector<std::string>& channels, double fs,
                      ArtifactKind kind, double start_s, double end_s, double baseline_rms,
                      std::uint64_t seed) {
    require(data.size() == channels.size(), ErrorCode::ShapeMismatch, "channel names vs data rows");
    require(start_s >= 0.0 && end_s > start_s, ErrorCode::PreconditionViolation, "artifact interval");
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const auto n = data.empty() ? std::size_t{0} : data.front().size();
    const auto first = static_cast<std::size_t>(std::lround(start_s * fs));
    const auto last = std::min(n, static_cast<std::size_t>(std::lround(end_s * fs)));
    if (first >= last) {
        return;
    }
    const std::size_t span = last - first;

    std::vector<double> gain(channels.size());
    for (std::size_t c = 0; c < channels.size(); ++c) {
        gain[c] = is_frontal(channels[c]) ? 1.6 : 1.0;
    }

    if (kind == ArtifactKind::EyeBlink) {
        // Train of raised-cosine deflections, 200-400 ms each, shared timing
        // across channels. The first starts at the interval start and the
        // last is clipped to end with the interval.
        std::vector<double> envelope(span, 0.0);
        double t = 0.0;
        const double length = static_cast<double>(span) / fs;
        while (t < length - 0.05) {
            double d = 0.2 + 0.2 * unit(rng);
            if (length - t - d < 0.2) {
                d = length - t;
            }
            const double amp = 5.5 + 1.5 * unit(rng);
            const auto b0 = static_cast<std::size_t>(std::lround(t * fs));
            const auto b1 = std::min(span, static_cast<std::size_t>(std::lround((t + d) * fs)));
            for (std::size_t k = b0; k < b1; ++k) {
                const double u = (static_cast<double>(k - b0) + 0.5) / static_cast<double>(b1 - b0);
                envelope[k] = amp * 0.5 * (1.0 - std::cos(two_pi * u));
            }
            t += d + 0.03 + 0.05 * unit(rng);
        }
        for (std::size_t c = 0; c < data.size(); ++c) {
            for (std::size_t k = 0; k < span; ++k) {
                data[c][first + k] += gain[c] * baseline_rms * envelope[k];
            }
        }
        return;
    }

    // Eyebrow raise: broadband 20-60 Hz muscle burst with 40 ms edge tapers.
    const double nyquist = fs / 2.0;
    const double taper = 0.04 * fs;
    for (std::size_t c = 0; c < data.size(); ++c) {
        std::vector<double> burst(span, 0.0);
        for (int f = 20; f <= 60 && f < nyquist; ++f) {
            const double phase = two_pi * unit(rng);
            for (std::size_t k = 0; k < span; ++k) {
                burst[k] += std::sin(two_pi * f * static_cast<double>(k) / fs + phase);
            }
        }
        double ss = 0.0;
        for (double v : burst) {
            ss += v * v;
        }
        const double scale = 4.0 * gain[c] * baseline_rms / std::sqrt(ss / static_cast<double>(span));
        for (std::size_t k = 0; k < span; ++k) {
            const double edge = std::min(static_cast<double>(k), static_cast<double>(span - 1 - k));
            const double w = edge < taper ? 0.5 * (1.0 - std::cos(std::numbers::pi * edge / taper)) : 1.0;
            data[c][first + k] += scale * w * burst[k];
        }
    }
}

std::string ArtifactRecording::source_id() const {
    return subject_id + "/" + std::string(to_string(kind));
}

std::vector<ArtifactRecording> generate_artifact_corpus(const ArtifactCorpusConfig& cfg, std::uint64_t seed) {
    require(cfg.subjects >= 1 && cfg.trials_per_kind >= 1, ErrorCode::PreconditionViolation,
            "subjects and trials_per_kind must be >= 1");
    const auto samples = static_cast<std::size_t>(kArtifactTrialSeconds * kArtifactSampleRate);
    const auto& names = emotiv_channels();
    std::vector<ArtifactRecording> corpus;
    for (int s = 0; s < cfg.subjects; ++s) {
        Rng subject_rng(derive_seed(seed, {0x5b, static_cast<std::uint64_t>(s)}));
        const double subject_rms = kBaselineRmsUv * std::uniform_real_distribution<double>(0.8, 1.25)(subject_rng);
        char id[16];
        std::snprintf(id, sizeof id, "sub%02d", s + 1);
        for (auto kind : {ArtifactKind::EyeBlink, ArtifactKind::EyebrowRaise}) {
            for (int t = 0; t < cfg.trials_per_kind; ++t) {
                const auto rec_seed = derive_seed(seed, {static_cast<std::uint64_t>(s),
                                                         static_cast<std::uint64_t>(kind),
                                                         static_cast<std::uint64_t>(t)});
                ArtifactRecording rec;
                rec.subject_id = id;
                rec.kind = kind;
                rec.trial_number = t;
                rec.sample_rate_hz = kArtifactSampleRate;
                rec.channels = names;
                rec.artifact_interval_s = {4.0, 7.0};
                for (std::size_t c = 0; c < names.size(); ++c) {
                    rec.data.push_back(synth_background(samples, kArtifactSampleRate, subject_rms,
                                                        derive_seed(rec_seed, {c})));
                }
                overlay_artifact(rec.data, rec.channels, rec.sample_rate_hz, kind, 4.0, 7.0, subject_rms,
                                 derive_seed(rec_seed, {0xa7}));
                corpus.push_back(std::move(rec));
            }
        }
    }
    return corpus;
}

namespace {

std::string artifact_stem(const ArtifactRecording& rec) {
    return rec.subject_id + "_" + std::string(to_string(rec.kind)) + "_t" + std::to_string(rec.trial_number);
}

std::string format_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_artifact_csv(const ArtifactRecording& rec, const fs::path& dir) {
    fs::create_directories(dir);
    const auto stem = artifact_stem(rec);
    {
        std::ofstream out(dir / (stem + ".csv"), std::ios::binary);
        require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + (dir / stem).string());
        out << "channel";
        for (std::size_t k = 0; k < rec.samples(); ++k) {
            out << ",t" << k;
        }
        out << '\n';
        char buf[32];
        for (std::size_t c = 0; c < rec.channels.size(); ++c) {
            out << rec.channels[c];
            for (double v : rec.data[c]) {
                std::snprintf(buf, sizeof buf, ",%.6f", v);
                out << buf;
            }
            out << '\n';
        }
    }
    std::ofstream meta(dir / (stem + ".meta"), std::ios::binary);
    require(static_cast<bool>(meta), ErrorCode::IoFailure, "cannot write sidecar for " + stem);
    meta << "subject=" << rec.subject_id << ",kind=" << to_string(rec.kind) << ",trial=" << rec.trial_number
         << ",sample_rate_hz=" << format_g(rec.sample_rate_hz)
         << ",interval_start_s=" << format_g(rec.artifact_interval_s.first)
         << ",interval_end_s=" << format_g(rec.artifact_interval_s.second) << '\n';
}

ArtifactRecording read_artifact_csv(const fs::path& csv_path) {
    require(fs::exists(csv_path), ErrorCode::FileNotFound, csv_path.string());
    auto meta_path = csv_path;
    meta_path.replace_extension(".meta");
    require(fs::exists(meta_path), ErrorCode::FileNotFound, meta_path.string());

    ArtifactRecording rec;
    {
        std::ifstream meta(meta_path);
        std::string line;
        std::getline(meta, line);
        std::map<std::string, std::string> kv;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto eq = item.find('=');
            require(eq != std::string::npos, ErrorCode::MalformedHeader, "sidecar entry '" + item + "'");
            kv[item.substr(0, eq)] = item.substr(eq + 1);
        }
        for (const char* key : {"subject", "kind", "trial", "sample_rate_hz", "interval_start_s", "interval_end_s"}) {
            require(kv.contains(key), ErrorCode::MalformedHeader, std::string("sidecar missing ") + key);
        }
        rec.subject_id = kv["subject"];
        rec.kind = parse_artifact_kind(kv["kind"]);
        require(parse_number(kv["trial"], rec.trial_number) &&
                    parse_number(kv["sample_rate_hz"], rec.sample_rate_hz) &&
                    parse_number(kv["interval_start_s"], rec.artifact_interval_s.first) &&
                    parse_number(kv["interval_end_s"], rec.artifact_interval_s.second),
                ErrorCode::MalformedHeader, "sidecar values in " + meta_path.string());
    }

    std::ifstream in(csv_path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line.starts_with("channel"), ErrorCode::MalformedHeader,
            "csv header in " + csv_path.string());
    const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    while (std::getline(in, line)) {
        if (trim(line).empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        rec.channels.push_back(cell);
        auto& row = rec.data.emplace_back();
        row.reserve(columns);
        while (std::getline(ss, cell, ',')) {
            double v = 0.0;
            require(parse_number(trim(cell), v), ErrorCode::RowArity, "bad value '" + cell + "'");
            row.push_back(v);
        }
        require(row.size() == columns, ErrorCode::RowArity,
                "channel " + rec.channels.back() + " has " + std::to_string(row.size()) + " values");
    }
    return rec;
}

std::vector<ArtifactRecording> load_artifact_corpus(const fs::path& dir) {
    require(fs::is_directory(dir), ErrorCode::FileNotFound, dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<ArtifactRecording> out;
    for (const auto& f : files) {
        out.push_back(read_artifact_csv(f));
    }
    require(!out.empty(), ErrorCode::EmptyCorpus, "no artifact recordings under " + dir.string());
    std::stable_sort(out.begin(), out.end(), [](const ArtifactRecording& a, const ArtifactRecording& b) {
        return std::make_tuple(a.subject_id, a.kind, a.trial_number) <
               std::make_tuple(b.subject_id, b.kind, b.trial_number);
    });
    return out;
}

std::vector<Recording> generate_eeg_corpus(const EegCorpusConfig& cfg, std::uint64_t seed) {
    require(cfg.subjects_per_group >= 1 && cfg.trials_per_subject >= 1 && cfg.channels >= 1 &&
                cfg.channels <= static_cast<int>(uci_channels().size()) && cfg.samples >= 8 &&
                cfg.sample_rate_hz > 0.0,
            ErrorCode::PreconditionViolation, "invalid synthetic corpus configuration");
    std::vector<Recording> corpus;
    const auto& names = uci_channels();
    for (auto group : {Group::Alcoholic, Group::Control}) {
        for (int s = 0; s < cfg.subjects_per_group; ++s) {
            Rng subject_rng(derive_seed(seed, {static_cast<std::uint64_t>(group), static_cast<std::uint64_t>(s)}));
            std::normal_distribution<double> jitter(0.0, 1.0);
            std::uniform_real_distribution<double> level(0.8, 1.25);
            const double effect = group == Group::Alcoholic ? cfg.group_effect : 0.0;
            const double alpha = std::max(0.1, 1.0 - 0.35 * effect + 0.15 * jitter(subject_rng));
            const double beta = std::max(0.1, 1.0 + 0.8 * effect + 0.25 * jitter(subject_rng));
            const double rms = kBaselineRmsUv * level(subject_rng);
            char id[32];
            std::snprintf(id, sizeof id, "co2%c00003%02d", group == Group::Alcoholic ? 'a' : 'c', s);
            for (int t = 0; t < cfg.trials_per_subject; ++t) {
                const auto trial_seed = derive_seed(seed, {static_cast<std::uint64_t>(group),
                                                           static_cast<std::uint64_t>(s),
                                                           static_cast<std::uint64_t>(t), 0x7e});
                Recording rec;
                rec.subject_id = id;
                rec.group = group;
                rec.condition = static_cast<Condition>(t % 3);
                rec.trial_number = t;
                rec.sample_rate_hz = cfg.sample_rate_hz;
                rec.sample_period_ms = 1000.0 / cfg.sample_rate_hz;
                rec.declared_trials = cfg.trials_per_subject;
                rec.declared_channels = cfg.channels;
                rec.declared_samples = cfg.samples;
                for (int c = 0; c < cfg.channels; ++c) {
                    rec.channels.push_back(names[static_cast<std::size_t>(c)]);
                    rec.data.push_back(synth_background(static_cast<std::size_t>(cfg.samples), cfg.sample_rate_hz,
                                                        rms, derive_seed(trial_seed, {static_cast<std::uint64_t>(c)}),
                                                        alpha, beta));
                }
                Rng blink_rng(derive_seed(trial_seed, {0xb1}));
                std::uniform_real_distribution<double> u(0.0, 1.0);
                const double duration = cfg.samples / cfg.sample_rate_hz;
                if (cfg.artifact_fraction > 0.0 && u(blink_rng) < cfg.artifact_fraction && duration > 0.5) {
                    const double length = std::min(0.6, 0.5 * duration);
                    const double start = u(blink_rng) * (duration - length);
                    overlay_artifact(rec.data, rec.channels, cfg.sample_rate_hz, ArtifactKind::EyeBlink, start,
                                     start + length, rms, derive_seed(trial_seed, {0xb2}));
                }
                // .rd files carry three decimals.
                for (auto& channel : rec.data) {
                    for (auto& v : channel) {
                        v = std::round(v * 1000.0) / 1000.0;
                    }
                }
                corpus.push_back(std::move(rec));
            }
        }
    }
    std::stable_sort(corpus.begin(), corpus.end(), [](const Recording& a, const Recording& b) {
        return std::tie(a.subject_id, a.trial_number) < std::tie(b.subject_id, b.trial_number);
    });
    return corpus;
}

Split split(const std::vector<WindowedExample>& examples, double test_fraction, std::uint64_t seed) {
    require(test_fraction > 0.0 && test_fraction < 1.0, ErrorCode::PreconditionViolation,
            "test_fraction must be in (0, 1)");
    using Key = std::pair<std::string, int>;
    // stratum -> ordered set of trial keys
    std::map<int, std::vector<Key>> strata;
    std::map<Key, int> stratum_of;
    for (const auto& ex : examples) {
        const int stratum = ex.group_label ? static_cast<int>(*ex.group_label) : -1;
        Key key{ex.source_id, ex.trial_number};
        auto [it, inserted] = stratum_of.try_emplace(key, stratum);
        if (inserted) {
            strata[stratum].push_back(key);
        } else {
            require(it->second == stratum, ErrorCode::PreconditionViolation,
                    "trial " + key.first + "#" + std::to_string(key.second) + " mixes group labels");
        }
    }
    require(!strata.empty(), ErrorCode::DegenerateSplit, "no examples");

    std::map<Key, bool> in_test;
    for (auto& [stratum, keys] : strata) {
        std::sort(keys.begin(), keys.end());
        const auto n = keys.size();
        require(n >= 2, ErrorCode::DegenerateSplit,
                "stratum " + std::to_string(stratum) + " has " + std::to_string(n) + " trial(s)");
        auto n_test = static_cast<std::size_t>(std::lround(static_cast<double>(n) * test_fraction));
        n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(stratum + 1)}));
        std::shuffle(keys.begin(), keys.end(), rng);
        for (std::size_t i = 0; i < n; ++i) {
            in_test[keys[i]] = i < n_test;
        }
    }

    Split out;
    for (const auto& ex : examples) {
        (in_test.at({ex.source_id, ex.trial_number}) ? out.test : out.train).push_back(ex);
    }
    return out;
}

} // namespace omad
