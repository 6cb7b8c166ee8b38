#include "omad/dataset.hpp"
#include "omad/dsp.hpp"
#include "omad/eval.hpp"
#include "omad/featsel.hpp"
#include "omad/nn.hpp"
#include "omad/pipeline.hpp"
#include "omad/prune.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace omad;

namespace {

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 1) {
        throw py::value_error("expected a 1-D array");
    }
    return {a.data(), a.data() + a.size()};
}

py::array_t<double> to_array(const std::vector<double>& v) {
    return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

py::array_t<double> to_array(const SignalMatrix& m) {
    const auto rows = m.size();
    const auto cols = rows == 0 ? 0 : m.front().size();
    py::array_t<double> out({rows, cols});
    auto w = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            w(i, j) = m[i][j];
        }
    }
    return out;
}

py::dict recording_dict(const Recording& r) {
    py::dict d;
    d["subject_id"] = r.subject_id;
    d["group"] = std::string(to_string(r.group));
    d["condition"] = std::string(to_string(r.condition));
    d["condition_error"] = r.condition_error;
    d["trial_number"] = r.trial_number;
    d["sample_rate_hz"] = r.sample_rate_hz;
    d["channels"] = r.channels;
    d["data"] = to_array(r.data);
    return d;
}

// Python-facing network: weights live in float32, batches are row-major.
struct PyNetwork {
    Network net;

    Mat<float> predict_proba(const Mat<float>& x) const { return predict(net, x).probabilities; }
    std::vector<int> predict_labels(const Mat<float>& x) const { return predict(net, x).labels; }

    std::vector<EpochStats> fit(const Mat<float>& x, const std::vector<int>& y, int epochs, std::size_t batch,
                                double lr, std::uint64_t seed) {
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.adam.learning_rate = lr;
        cfg.seed = seed;
        return train(net, x, y, cfg);
    }

    py::bytes to_bytes(const std::string& encoding) const {
        const auto b = serialize(net, encoding == "dense"    ? Encoding::Dense
                                      : encoding == "sparse" ? Encoding::Sparse
                                                             : Encoding::Auto);
        return {reinterpret_cast<const char*>(b.data()), b.size()};
    }

    static PyNetwork from_bytes(const py::bytes& data) {
        const std::string s = data;
        return {deserialize(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()))};
    }

    double latency_ms(bool sparse, int reps) const {
        BenchConfig cfg;
        cfg.reps = reps;
        const InferenceModel m(net, sparse ? InferenceModel::Backend::Sparse : InferenceModel::Backend::Dense);
        return latency_bench(m, bench_batch(net.input_width()), cfg).median_ms;
    }
};

} // namespace

PYBIND11_MODULE(_omad, m) {
    m.doc() = "EEG anomaly detection with pruned on-device networks";

    py::register_exception<Error>(m, "OmadError", PyExc_ValueError);

    m.def("parse_rd", [](const std::string& text) { return recording_dict(parse_rd(text)); }, py::arg("text"),
          "Parse one .rd recording into a dict with a (channels, samples) array.");
    m.def(
        "notch_filter",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, double fs, double f0, double q) {
            return to_array(notch_filter(to_vector(x), fs, f0, q));
        },
        py::arg("signal"), py::arg("fs"), py::arg("f0") = kDefaultNotchHz, py::arg("q") = kDefaultNotchQ);
    m.def(
        "make_windows",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, std::size_t size, double overlap) {
            return make_windows(to_vector(x), {size, overlap});
        },
        py::arg("signal"), py::arg("window_size") = 128, py::arg("overlap") = 0.8);
    m.def(
        "extract_features",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, double fs) {
            const auto f = extract_features(to_vector(x), fs);
            return std::vector<double>(f.values.begin(), f.values.end());
        },
        py::arg("window"), py::arg("fs"));
    m.def("feature_names", [] {
        const auto& n = FeatureVector::names();
        return std::vector<std::string>(n.begin(), n.end());
    });
    m.def(
        "welch_t",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
            const auto r = welch_t(to_vector(a), to_vector(b));
            return py::make_tuple(r.t, r.p, r.df);
        },
        py::arg("a"), py::arg("b"), "Welch two-sample t-test; returns (t, p, df).");
    m.def(
        "compute_mask",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& w, double s) {
            const auto mask = compute_mask(std::span(w.data(), static_cast<std::size_t>(w.size())), s);
            py::array_t<std::uint8_t> out(static_cast<py::ssize_t>(mask.keep.size()), mask.keep.data());
            return out.reshape(std::vector<py::ssize_t>(w.shape(), w.shape() + w.ndim()));
        },
        py::arg("weights"), py::arg("sparsity"), "Keep-mask (1 = survives) pruning the smallest magnitudes.");
    m.def(
        "sparsity_at",
        [](long step, double initial, double final, long begin, long end, long frequency) {
            return sparsity_at(step, PruningSchedule{initial, final, begin, end, frequency});
        },
        py::arg("step"), py::arg("initial"), py::arg("final"), py::arg("begin"), py::arg("end"),
        py::arg("frequency") = 100);
    m.def(
        "generate_artifact_corpus",
        [](int subjects, int trials, std::uint64_t seed) {
            py::list out;
            for (const auto& r : generate_artifact_corpus({subjects, trials}, seed)) {
                py::dict d;
                d["subject_id"] = r.subject_id;
                d["kind"] = std::string(to_string(r.kind));
                d["trial_number"] = r.trial_number;
                d["sample_rate_hz"] = r.sample_rate_hz;
                d["channels"] = r.channels;
                d["data"] = to_array(r.data);
                d["artifact_interval_s"] = r.artifact_interval_s;
                out.append(d);
            }
            return out;
        },
        py::arg("subjects") = 3, py::arg("trials_per_kind") = 2, py::arg("seed") = 0);

    py::class_<EpochStats>(m, "EpochStats")
        .def_readonly("epoch", &EpochStats::epoch)
        .def_readonly("loss", &EpochStats::loss)
        .def_readonly("accuracy", &EpochStats::accuracy);

    py::class_<PyNetwork>(m, "Network")
        .def_property_readonly("input_width", [](const PyNetwork& n) { return n.net.input_width(); })
        .def_property_readonly("output_width", [](const PyNetwork& n) { return n.net.output_width(); })
        .def_property_readonly("weight_count", [](const PyNetwork& n) { return n.net.weight_count(); })
        .def_property_readonly("sparsity", [](const PyNetwork& n) { return overall_sparsity(n.net); })
        .def("predict_proba", &PyNetwork::predict_proba, py::arg("x"))
        .def("predict", &PyNetwork::predict_labels, py::arg("x"))
        .def("fit", &PyNetwork::fit, py::arg("x"), py::arg("y"), py::arg("epochs") = 10, py::arg("batch_size") = 64,
             py::arg("learning_rate") = 1e-3, py::arg("seed") = 0)
        .def("prune", [](PyNetwork& n, double s) { prune_network(n.net, s); }, py::arg("sparsity"))
        .def("sparse_forward", [](const PyNetwork& n, const Mat<float>& x) { return sparse_forward(n.net, x); })
        .def("to_bytes", &PyNetwork::to_bytes, py::arg("encoding") = "auto")
        .def_static("from_bytes", &PyNetwork::from_bytes)
        .def("latency_ms", &PyNetwork::latency_ms, py::arg("sparse") = false, py::arg("reps") = 30);

    m.def(
        "main_mlp",
        [](std::size_t width, double dropout, std::uint64_t seed, std::vector<std::size_t> widths) {
            return PyNetwork{main_mlp(width, dropout, seed, widths)};
        },
        py::arg("input_width"), py::arg("dropout") = 0.4, py::arg("seed") = 0, py::arg("widths") = kMainMlpWidths);
    m.def(
        "main_cnn",
        [](std::size_t channels, std::size_t length, std::uint64_t seed) {
            return PyNetwork{main_cnn(channels, length, seed)};
        },
        py::arg("channels"), py::arg("length") = 128, py::arg("seed") = 0);
    m.def(
        "load_model",
        [](const std::filesystem::path& path) {
            auto [net, meta] = load_model(path);
            return py::make_tuple(PyNetwork{std::move(net)}, py::module_::import("json").attr("loads")(
                                                                  to_json(meta).dump()));
        },
        py::arg("path"), "Load a model file and its metadata dict.");
}
