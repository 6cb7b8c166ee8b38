#include "doctest.h"

#include "omad/dataset.hpp"
#include "omad/error.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace omad;
namespace fs = std::filesystem;

namespace {

const char* kExampleRecording =
    "# co2a0000364.rd\n"
    "# 120 trials, 64 chans, 416 samples 368 post_stim samples\n"
    "# 3.906000 msecs uV\n"
    "# S1 obj , trial 0\n"
    "# FP1 chan 0\n"
    "0 FP1 0 -8.921\n"
    "0 FP1 1 -8.433\n"
    "0 FP1 2 -2.574\n"
    "0 FP1 3 5.239\n";

ErrorCode code_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an omad::Error");
    return ErrorCode::PreconditionViolation;
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("omad_dataset_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<WindowedExample> trials(int per_class) {
    std::vector<WindowedExample> out;
    for (int g = 0; g < 2; ++g) {
        for (int t = 0; t < per_class; ++t) {
            for (std::size_t w = 0; w < 3; ++w) {
                WindowedExample ex;
                ex.source_id = g == 0 ? "co2c000001" : "co2a000002";
                ex.trial_number = t;
                ex.offset = w * 25;
                ex.samples.assign(4, 0.0);
                ex.group_label = g == 0 ? Group::Control : Group::Alcoholic;
                out.push_back(ex);
            }
        }
    }
    return out;
}

} // namespace

TEST_CASE("rd parser reproduces the example recording fields") {
    const auto rec = parse_rd(kExampleRecording);
    CHECK(rec.subject_id == "co2a0000364");
    CHECK(rec.group == Group::Alcoholic);
    CHECK(rec.condition == Condition::S1Obj);
    CHECK(rec.trial_number == 0);
    CHECK(rec.declared_trials == 120);
    CHECK(rec.declared_channels == 64);
    CHECK(rec.declared_samples == 416);
    CHECK(rec.sample_period_ms == doctest::Approx(3.906));
    CHECK(rec.sample_rate_hz == 256.0);
    REQUIRE(rec.channels == std::vector<std::string>{"FP1"});
    REQUIRE(rec.samples() == 4);
    CHECK(rec.data[0][0] == -8.921);
    CHECK(rec.data[0][1] == -8.433);
    CHECK(rec.data[0][2] == -2.574);
    CHECK(rec.data[0][3] == 5.239);
}

TEST_CASE("rd parser rejects malformed input") {
    std::string bad_row = kExampleRecording;
    bad_row += "0 FP1 two -2.574\n";
    CHECK(code_of([&] { parse_rd(bad_row); }) == ErrorCode::RowArity);

    std::string gap = kExampleRecording;
    gap += "0 FP1 5 1.0\n";
    CHECK(code_of([&] { parse_rd(gap); }) == ErrorCode::IndexGap);

    std::string group = kExampleRecording;
    group.replace(group.find("co2a"), 4, "co2x");
    CHECK(code_of([&] { parse_rd(group); }) == ErrorCode::UnknownGroup);

    CHECK(code_of([] { parse_rd("# co2a0000364.rd\n0 FP1 0 1.0\n"); }) == ErrorCode::MalformedHeader);

    std::string unequal = kExampleRecording;
    unequal += "# FP2 chan 1\n0 FP2 0 1.0\n";
    CHECK(code_of([&] { parse_rd(unequal); }) == ErrorCode::IndexGap);
}

TEST_CASE("rd parser reads control subjects and S2 conditions") {
    std::string text = kExampleRecording;
    text.replace(text.find("co2a"), 4, "co2c");
    text.replace(text.find("S1 obj"), 6, "S2 nomatch err");
    const auto rec = parse_rd(text);
    CHECK(rec.group == Group::Control);
    CHECK(rec.condition == Condition::S2Nomatch);
    CHECK(rec.condition_error);
}

TEST_CASE("rd round trip is exact") {
    EegCorpusConfig cfg;
    cfg.subjects_per_group = 1;
    cfg.trials_per_subject = 2;
    cfg.channels = 4;
    cfg.samples = 64;
    for (const auto& rec : generate_eeg_corpus(cfg, 3)) {
        CHECK(parse_rd(write_rd(rec)) == rec);
    }
    const auto example = parse_rd(kExampleRecording);
    CHECK(parse_rd(write_rd(example)) == example);
}

TEST_CASE("rd files load plain and gzip compressed") {
    const auto dir = scratch("gzip");
    const auto rec = parse_rd(kExampleRecording);
    write_rd_file(rec, dir / "a.rd.000");
    write_rd_file(rec, dir / "b.rd.001.gz");
    CHECK(read_rd_file(dir / "a.rd.000") == rec);
    CHECK(read_rd_file(dir / "b.rd.001.gz") == rec);
}

TEST_CASE("load_corpus sorts, isolates errors and rejects empty directories") {
    const auto dir = scratch("corpus");
    EegCorpusConfig cfg;
    cfg.subjects_per_group = 1;
    cfg.trials_per_subject = 2;
    cfg.channels = 2;
    cfg.samples = 16;
    auto recs = generate_eeg_corpus(cfg, 11);
    REQUIRE(recs.size() == 4);
    for (std::size_t i = 0; i < 3; ++i) {
        write_rd_file(recs[i], dir / (recs[i].subject_id + ".rd." + std::to_string(i)));
    }
    auto loaded = load_corpus(dir);
    CHECK(loaded.recordings.size() == 3);
    CHECK(loaded.errors.empty());
    for (std::size_t i = 1; i < loaded.recordings.size(); ++i) {
        const auto& a = loaded.recordings[i - 1];
        const auto& b = loaded.recordings[i];
        CHECK(std::tie(a.subject_id, a.trial_number) < std::tie(b.subject_id, b.trial_number));
    }

    std::ofstream(dir / "broken.rd.9") << "# nothing useful\n";
    loaded = load_corpus(dir);
    CHECK(loaded.recordings.size() == 3);
    CHECK(loaded.errors.size() == 1);

    const auto empty = scratch("empty");
    CHECK(code_of([&] { load_corpus(empty); }) == ErrorCode::EmptyCorpus);
}

TEST_CASE("artifact corpus follows the collection protocol") {
    const auto corpus = generate_artifact_corpus({3, 2}, 7);
    REQUIRE(corpus.size() == 12);
    std::set<std::pair<std::string, int>> ids;
    for (const auto& rec : corpus) {
        CHECK(rec.channels.size() == 14);
        CHECK(rec.data.size() == 14);
        CHECK(rec.samples() == 1280);
        CHECK(rec.sample_rate_hz == 128.0);
        CHECK(rec.artifact_interval_s == std::pair<double, double>{4.0, 7.0});
        ids.emplace(rec.source_id(), rec.trial_number);

        double rest = 0.0, burst = 0.0;
        for (const auto& ch : rec.data) {
            for (std::size_t i = 0; i < 384; ++i) {
                rest += ch[i] * ch[i];
            }
            for (std::size_t i = 512; i < 896; ++i) {
                burst += ch[i] * ch[i];
            }
        }
        CHECK(burst > rest);
    }
    CHECK(ids.size() == 12);
    CHECK(generate_artifact_corpus({3, 2}, 7) == corpus);
    CHECK_FALSE(generate_artifact_corpus({3, 2}, 8) == corpus);
}

TEST_CASE("artifact amplitudes exceed the baseline by the protocol factors") {
    for (const auto& rec : generate_artifact_corpus({1, 1}, 21)) {
        double peak = 0.0;
        for (std::size_t c = 0; c < rec.channels.size(); ++c) {
            for (std::size_t i = 512; i < 896; ++i) {
                peak = std::max(peak, std::abs(rec.data[c][i]));
            }
        }
        const double factor = rec.kind == ArtifactKind::EyeBlink ? 5.0 : 3.0;
        CHECK(peak >= factor * kBaselineRmsUv);
    }
}

TEST_CASE("artifact csv round trip") {
    const auto dir = scratch("csv");
    const auto corpus = generate_artifact_corpus({1, 1}, 5);
    for (const auto& rec : corpus) {
        write_artifact_csv(rec, dir);
    }
    const auto back = load_artifact_corpus(dir);
    REQUIRE(back.size() == corpus.size());
    for (const auto& rec : corpus) {
        bool found = false;
        for (const auto& b : back) {
            if (b.source_id() == rec.source_id()) {
                found = true;
                CHECK(b.kind == rec.kind);
                CHECK(b.channels == rec.channels);
                CHECK(b.artifact_interval_s == rec.artifact_interval_s);
                REQUIRE(b.samples() == rec.samples());
                for (std::size_t c = 0; c < rec.data.size(); ++c) {
                    for (std::size_t i = 0; i < rec.samples(); ++i) {
                        CHECK(std::abs(b.data[c][i] - rec.data[c][i]) <= 5e-7);
                    }
                }
            }
        }
        CHECK(found);
    }
}

TEST_CASE("split is trial-level and stratified") {
    const auto ex = trials(10);
    const auto s = split(ex, 0.3, 1);
    std::set<std::pair<std::string, int>> train_keys, test_keys;
    int test_control = 0, test_alcoholic = 0;
    for (const auto& e : s.train) {
        train_keys.insert({e.source_id, e.trial_number});
    }
    for (const auto& e : s.test) {
        if (test_keys.insert({e.source_id, e.trial_number}).second) {
            (*e.group_label == Group::Control ? test_control : test_alcoholic)++;
        }
    }
    CHECK(train_keys.size() == 14);
    CHECK(test_keys.size() == 6);
    CHECK(test_control == 3);
    CHECK(test_alcoholic == 3);
    for (const auto& k : test_keys) {
        CHECK(train_keys.count(k) == 0);
    }
    CHECK(s.train.size() + s.test.size() == ex.size());

    const auto again = split(ex, 0.3, 1);
    REQUIRE(again.test.size() == s.test.size());
    for (std::size_t i = 0; i < s.test.size(); ++i) {
        CHECK(again.test[i].source_id == s.test[i].source_id);
        CHECK(again.test[i].trial_number == s.test[i].trial_number);
    }
}

TEST_CASE("split rejects degenerate inputs") {
    auto one = trials(1);
    one.resize(1);
    CHECK(code_of([&] { split(one, 0.3, 0); }) == ErrorCode::DegenerateSplit);
    CHECK(code_of([&] { split(trials(5), 1.0, 0); }) == ErrorCode::PreconditionViolation);
}

TEST_CASE("synthetic main corpus is deterministic and labelled by subject id") {
    EegCorpusConfig cfg;
    cfg.subjects_per_group = 2;
    cfg.trials_per_subject = 3;
    cfg.channels = 8;
    const auto a = generate_eeg_corpus(cfg, 9);
    CHECK(a.size() == 12);
    CHECK(a == generate_eeg_corpus(cfg, 9));
    for (const auto& r : a) {
        CHECK(r.samples() == 256);
        CHECK(r.group == (r.subject_id[3] == 'a' ? Group::Alcoholic : Group::Control));
    }
}
