#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>

#include "smtm/errors.hpp"
#include "smtm/fixtures.hpp"
#include "smtm/harness.hpp"
#include "smtm/pipeline.hpp"
#include "smtm/priming_memory.hpp"
#include "smtm/semantic.hpp"

namespace py = pybind11;
using namespace smtm;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FeatureMap to_map(const FloatArray& a) {
    if (a.ndim() != 3) throw ShapeError("expected a (channels, height, width) array");
    const Shape s{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                  static_cast<std::size_t>(a.shape(2))};
    return FeatureMap(s, std::vector<float>(a.data(), a.data() + a.size()));
}

std::vector<FeatureMap> to_maps(const FloatArray& a) {
    if (a.ndim() != 4) throw ShapeError("expected a (frames, channels, height, width) array");
    std::vector<FeatureMap> out;
    const Shape s{static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(2)),
                  static_cast<std::size_t>(a.shape(3))};
    for (py::ssize_t i = 0; i < a.shape(0); ++i) {
        const float* p = a.data(i);
        out.emplace_back(s, std::vector<float>(p, p + s.size()));
    }
    return out;
}

FloatArray stack(const std::vector<FeatureMap>& maps, const Shape& s) {
    FloatArray out({maps.size(), s.channels, s.height, s.width});
    float* dst = out.mutable_data();
    for (const auto& fm : maps) dst = std::copy(fm.data().begin(), fm.data().end(), dst);
    return out;
}

py::object to_py(const nlohmann::json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

EngineConfig config_from(const py::object& overrides) {
    if (overrides.is_none()) return {};
    py::dict doc(overrides);
    if (doc.contains("tau") && py::isinstance<py::float_>(doc["tau"]) && std::isinf(doc["tau"].cast<double>())) {
        doc["tau"] = "inf";
    }
    const std::string text = py::str(py::module_::import("json").attr("dumps")(doc));
    return config_from_json(nlohmann::json::parse(text));
}

Trace make_trace(const FloatArray& frames, const std::optional<std::vector<ClassId>>& labels) {
    Trace t;
    t.frames = to_maps(frames);
    if (!t.frames.empty()) t.frame_shape = t.frames.front().shape();
    if (labels) {
        t.has_labels = true;
        t.labels = *labels;
    }
    return t;
}

py::dict trace_dict(const Trace& t) {
    py::dict d;
    d["frames"] = stack(t.frames, t.frame_shape);
    d["labels"] = t.has_labels ? py::cast(t.labels) : py::none();
    return d;
}

py::dict frame_dict(const FrameResult& f) {
    py::dict d;
    d["frame_id"] = f.frame_id;
    d["predicted"] = f.predicted;
    d["exit_layer"] = f.exit_layer;
    d["confidence"] = format_confidence(f.ac);
    d["executed_flops"] = f.executed_flops;
    d["ground_truth"] = f.ground_truth;
    d["fast_memory"] = f.fast_memory_snapshot;
    return d;
}

py::dict run_dict(const RunResult& r) {
    py::dict d;
    d["metrics"] = to_py(metrics_to_json(r.metrics));
    py::list frames;
    for (const auto& f : r.frames) frames.append(frame_dict(f));
    d["frames"] = frames;
    return d;
}

}  // namespace

PYBIND11_MODULE(_smtm, m) {
    m.doc() = "Streaming early-exit inference with semantic center memory";

    py::register_exception<Error>(m, "SmtmError", PyExc_ValueError);

    py::class_<ModelGraph>(m, "Model")
        .def_property_readonly("name", &ModelGraph::name)
        .def_property_readonly("num_exit_points", &ModelGraph::num_exit_points)
        .def_property_readonly("exit_channels", &ModelGraph::exit_channels)
        .def_property_readonly("total_flops", &ModelGraph::total_flops)
        .def_property_readonly("raw_feature_map_bytes", &raw_feature_map_bytes)
        .def("manifest", [](const ModelGraph& g) { return to_py(nlohmann::json::parse(manifest_json(g))); })
        .def("save", &save_model, py::arg("manifest_path"), py::arg("weights_path"));

    py::class_<GlobalMemory>(m, "CenterStore")
        .def_property_readonly("num_classes", &GlobalMemory::num_classes)
        .def_property_readonly("layer_channels", &GlobalMemory::layer_channels)
        .def("class_initialized", &GlobalMemory::class_initialized)
        .def(
            "center",
            [](const GlobalMemory& g, ClassId cls, std::size_t layer) {
                const auto& c = g.center(cls, layer);
                return py::make_tuple(c.values, c.update_count);
            },
            py::arg("cls"), py::arg("layer_id"))
        .def("save", [](const GlobalMemory& g, const std::filesystem::path& p) { save_centers(g, p); });

    m.def(
        "fixture_model",
        [](std::size_t base_width, std::size_t head_classes, std::uint64_t seed) {
            FixtureModelOptions o;
            o.base_width = base_width;
            o.head_classes = head_classes;
            o.seed = seed;
            return fixture_model(o);
        },
        py::arg("base_width") = 32, py::arg("head_classes") = 0, py::arg("seed") = 7);
    m.def("load_model", &load_model, py::arg("manifest_path"), py::arg("weights_path"));
    m.def("load_centers", &load_centers, py::arg("path"));

    m.def(
        "make_scenario",
        [](const std::string& kind, std::size_t num_classes, std::size_t frames, std::size_t warmup_per_class,
           float noise, float drift_strength, std::uint64_t seed) {
            ScenarioOptions o;
            o.kind = parse_scenario_kind(kind);
            o.num_classes = num_classes;
            o.frames = frames;
            o.warmup_per_class = warmup_per_class;
            o.noise = noise;
            o.drift_strength = drift_strength;
            o.seed = seed;
            const auto sc = make_scenario(o);
            py::dict d;
            d["templates"] = stack(sc.templates, sc.stream.frame_shape);
            d["warmup"] = trace_dict(sc.warmup);
            d["stream"] = trace_dict(sc.stream);
            return d;
        },
        py::arg("kind") = "longtail", py::arg("num_classes") = 10, py::arg("frames") = 1442,
        py::arg("warmup_per_class") = 20, py::arg("noise") = 0.5f, py::arg("drift_strength") = 0.3f,
        py::arg("seed") = 11);

    m.def(
        "warm_up",
        [](const ModelGraph& model, const FloatArray& samples, const std::vector<ClassId>& labels,
           std::size_t num_classes, std::optional<std::uint64_t> cap) {
            WarmupOptions o;
            o.update_count_cap = cap;
            const auto maps = to_maps(samples);
            return warm_up(model, maps, labels, num_classes, o);
        },
        py::arg("model"), py::arg("samples"), py::arg("labels"), py::arg("num_classes"), py::arg("cap") = py::none());

    m.def(
        "run_stream",
        [](const ModelGraph& model, const GlobalMemory& centers, const FloatArray& frames,
           const std::optional<std::vector<ClassId>>& labels, const py::object& config) {
            return run_dict(run_stream(config_from(config), model, centers, make_trace(frames, labels)));
        },
        py::arg("model"), py::arg("centers"), py::arg("frames"), py::arg("labels") = py::none(),
        py::arg("config") = py::none(), "config: dict of engine settings, same keys as config.json");

    m.def(
        "baseline_run",
        [](const ModelGraph& model, const GlobalMemory& centers, const FloatArray& frames,
           const std::optional<std::vector<ClassId>>& labels) {
            return run_dict(baseline_run(model, make_trace(frames, labels), centers));
        },
        py::arg("model"), py::arg("centers"), py::arg("frames"), py::arg("labels") = py::none());

    m.def(
        "sweep_tau",
        [](const ModelGraph& model, const GlobalMemory& centers, const FloatArray& frames,
           const std::optional<std::vector<ClassId>>& labels, const std::vector<double>& taus,
           const py::object& config) {
            const auto report = sweep_tau(config_from(config), model, centers, make_trace(frames, labels), taus);
            return to_py(sweep_to_json(report));
        },
        py::arg("model"), py::arg("centers"), py::arg("frames"), py::arg("labels") = py::none(),
        py::arg("taus") = std::vector<double>{0.25, 0.5, 1.0, 1.5, 2.0}, py::arg("config") = py::none());

    m.def(
        "ablation_run",
        [](const ModelGraph& model, const GlobalMemory& centers, const FloatArray& frames,
           const std::optional<std::vector<ClassId>>& labels, const py::object& config) {
            return to_py(ablation_to_json(ablation_run(config_from(config), model, centers, make_trace(frames, labels))));
        },
        py::arg("model"), py::arg("centers"), py::arg("frames"), py::arg("labels") = py::none(),
        py::arg("config") = py::none());

    m.def(
        "encode_gap", [](const FloatArray& fm) { return encode_gap(to_map(fm)).values; }, py::arg("feature_map"));
    m.def(
        "encode_all_exits",
        [](const ModelGraph& model, const FloatArray& frame) {
            std::vector<std::vector<float>> out;
            for (auto& sv : encode_all_exits(model, to_map(frame))) out.push_back(std::move(sv.values));
            return out;
        },
        py::arg("model"), py::arg("frame"));
    m.def(
        "cosine_similarity",
        [](const std::vector<float>& a, const std::vector<float>& b) { return cosine_similarity(a, b); },
        py::arg("a"), py::arg("b"));
    m.def("class_score", &class_score, py::arg("frequency"), py::arg("absent"), py::arg("window"),
          py::arg("decay_base") = kDefaultDecayBase);
    m.def(
        "adaptive_cache_size",
        [](const std::vector<double>& scores, double cl, std::size_t k_min, std::size_t k_max) {
            return adaptive_cache_size(scores, cl, k_min, k_max);
        },
        py::arg("scores"), py::arg("confidence_level"), py::arg("k_min"), py::arg("k_max"));
    m.def(
        "center_memory_bytes",
        [](const GlobalMemory& g, std::size_t fast_size) {
            FastMemory fast;
            for (std::size_t i = 0; i < fast_size; ++i) fast.classes.push_back(static_cast<ClassId>(i));
            return center_memory_bytes(g, fast);
        },
        py::arg("centers"), py::arg("fast_size"));
    m.def("default_config", [] { return to_py(config_to_json(EngineConfig{})); });
}
