#include "smtm/harness.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "smtm/errors.hpp"

namespace smtm {

using nlohmann::json;

namespace {

json optional_real(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string optional_csv(const std::optional<double>& v) { return v ? format_real(*v) : "NA"; }

std::string_view mode_name(CacheSizeMode mode) { return mode == CacheSizeMode::Constant ? "constant" : "adaptive"; }

}  // namespace

SweepReport sweep_tau(const EngineConfig& config, const ModelGraph& model, const GlobalMemory& warmed,
                      const Trace& trace, std::span<const double> taus) {
    if (taus.empty()) throw ConfigError("tau list is empty");
    SweepReport report;
    report.baseline = baseline_run(model, trace, warmed).metrics;
    for (double tau : taus) {
        EngineConfig cfg = config;
        cfg.tau = tau;
        const auto m = run_stream(cfg, model, warmed, trace).metrics;
        SweepRow row;
        row.tau = tau;
        row.accuracy = m.top1_accuracy;
        if (m.top1_accuracy && report.baseline.top1_accuracy) {
            row.accuracy_drop = *report.baseline.top1_accuracy - *m.top1_accuracy;
        }
        row.latency_reduction = 1.0 - m.mean_flops_fraction;
        row.exit_ratio = m.exit_ratio;
        row.hit_ratio = m.hit_ratio;
        report.rows.push_back(row);
    }
    return report;
}

const AblationCell& AblationReport::cell(CacheSizeMode mode, bool adaptive_centers) const {
    for (const auto& c : cells) {
        if (c.cache_size_mode == mode && c.adaptive_centers == adaptive_centers) return c;
    }
    throw RangeError("ablation cell not present");
}

AblationReport ablation_run(const EngineConfig& config, const ModelGraph& model, const GlobalMemory& warmed,
                            const Trace& trace) {
    AblationReport report;
    report.baseline = baseline_run(model, trace, warmed).metrics;
    for (auto mode : {CacheSizeMode::Constant, CacheSizeMode::Adaptive}) {
        for (bool adaptive_centers : {false, true}) {
            EngineConfig cfg = config;
            cfg.cache_size_mode = mode;
            cfg.adaptive_centers = adaptive_centers;
            report.cells.push_back({mode, adaptive_centers, run_stream(cfg, model, warmed, trace).metrics});
        }
    }
    return report;
}

std::string format_real(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string format_tau(double tau) { return format_real(tau); }

double parse_tau(std::string_view text) {
    if (text == "inf" || text == "infinity" || text == "+inf") return kNeverExit;
    double v = 0.0;
    std::istringstream in{std::string(text)};
    if (!(in >> v) || !in.eof() || std::isnan(v) || v < 0.0) {
        throw ConfigError("tau must be a real >= 0 or 'inf', got '" + std::string(text) + "'");
    }
    return v;
}

std::string format_confidence(const Confidence& c) {
    switch (c.kind) {
        case Confidence::Kind::Finite: return format_real(c.value);
        case Confidence::Kind::Infinite: return "inf";
        case Confidence::Kind::None: return "none";
    }
    return "none";
}

json metrics_to_json(const RunMetrics& m) {
    json doc;
    doc["frames"] = m.frames;
    doc["labeled_frames"] = m.labeled_frames;
    doc["top1_accuracy"] = optional_real(m.top1_accuracy);
    json hist = json::object();
    for (std::size_t i = 0; i + 1 < m.exit_histogram.size(); ++i) hist[std::to_string(i + 1)] = m.exit_histogram[i];
    if (!m.exit_histogram.empty()) hist["FULL"] = m.exit_histogram.back();
    doc["exit_histogram"] = std::move(hist);
    doc["exit_ratio"] = m.exit_ratio;
    doc["hit_ratio"] = optional_real(m.hit_ratio);
    doc["mean_flops_fraction"] = m.mean_flops_fraction;
    doc["latency_reduction"] = 1.0 - m.mean_flops_fraction;
    doc["mean_fast_memory_size"] = m.mean_fast_memory_size;
    doc["total_model_flops"] = m.total_model_flops;
    doc["center_memory_bytes"] = m.center_memory_bytes;
    return doc;
}

std::string frames_csv(std::span<const FrameResult> frames) {
    std::string out = "frame_id,gt,pred,exit_layer,ac,flops,fast_mem\n";
    for (const auto& f : frames) {
        out += std::to_string(f.frame_id) + ",";
        out += (f.ground_truth ? std::to_string(*f.ground_truth) : std::string("NA")) + ",";
        out += std::to_string(f.predicted) + ",";
        out += (f.exit_layer ? std::to_string(*f.exit_layer) : std::string("FULL")) + ",";
        out += format_confidence(f.ac) + ",";
        out += std::to_string(f.executed_flops) + ",";
        for (std::size_t i = 0; i < f.fast_memory_snapshot.size(); ++i) {
            if (i > 0) out += ";";
            out += std::to_string(f.fast_memory_snapshot[i]);
        }
        out += "\n";
    }
    return out;
}

std::string sweep_csv(const SweepReport& report) {
    std::string out = "tau,accuracy,accuracy_drop,latency_reduction,exit_ratio,hit_ratio\n";
    for (const auto& r : report.rows) {
        out += format_tau(r.tau) + "," + optional_csv(r.accuracy) + "," + optional_csv(r.accuracy_drop) + "," +
               format_real(r.latency_reduction) + "," + format_real(r.exit_ratio) + "," + optional_csv(r.hit_ratio) +
               "\n";
    }
    return out;
}

json sweep_to_json(const SweepReport& report) {
    json doc;
    doc["baseline"] = metrics_to_json(report.baseline);
    json rows = json::array();
    for (const auto& r : report.rows) {
        json row;
        row["tau"] = std::isinf(r.tau) ? json("inf") : json(r.tau);
        row["accuracy"] = optional_real(r.accuracy);
        row["accuracy_drop"] = optional_real(r.accuracy_drop);
        row["latency_reduction"] = r.latency_reduction;
        row["exit_ratio"] = r.exit_ratio;
        row["hit_ratio"] = optional_real(r.hit_ratio);
        rows.push_back(std::move(row));
    }
    doc["rows"] = std::move(rows);
    return doc;
}

std::string ablation_csv(const AblationReport& report) {
    std::string out = "cache_size,centers,hit_ratio,accuracy,latency_reduction,exit_ratio,mean_fast_memory_size\n";
    for (const auto& c : report.cells) {
        out += std::string(mode_name(c.cache_size_mode)) + "," + (c.adaptive_centers ? "adaptive" : "frozen") + "," +
               optional_csv(c.metrics.hit_ratio) + "," + optional_csv(c.metrics.top1_accuracy) + "," +
               format_real(1.0 - c.metrics.mean_flops_fraction) + "," + format_real(c.metrics.exit_ratio) + "," +
               format_real(c.metrics.mean_fast_memory_size) + "\n";
    }
    return out;
}

json ablation_to_json(const AblationReport& report) {
    json doc;
    doc["baseline"] = metrics_to_json(report.baseline);
    json cells = json::array();
    for (const auto& c : report.cells) {
        json cell;
        cell["cache_size"] = std::string(mode_name(c.cache_size_mode));
        cell["centers"] = c.adaptive_centers ? "adaptive" : "frozen";
        cell["metrics"] = metrics_to_json(c.metrics);
        cells.push_back(std::move(cell));
    }
    doc["cells"] = std::move(cells);
    return doc;
}

json config_to_json(const EngineConfig& c) {
    json doc;
    doc["tau"] = std::isinf(c.tau) ? json("inf") : json(c.tau);
    doc["window"] = c.window;
    doc["confidence_level"] = c.confidence_level;
    doc["k_min"] = c.k_min;
    doc["k_max"] = c.k_max;
    doc["cache_size_mode"] = std::string(mode_name(c.cache_size_mode));
    doc["cache_size"] = c.cache_size;
    doc["adaptive_centers"] = c.adaptive_centers;
    doc["persistent_decay"] = c.persistent_decay;
    doc["replacement_period"] = c.replacement_period;
    doc["decay_base"] = c.decay_base;
    doc["update_full_only"] = c.update_full_only;
    doc["update_exit_layer"] = c.update_exit_layer;
    return doc;
}

EngineConfig config_from_json(const json& doc, EngineConfig c) {
    try {
        if (doc.contains("tau")) {
            const auto& t = doc["tau"];
            c.tau = t.is_string() ? parse_tau(t.get<std::string>()) : t.get<double>();
        }
        if (doc.contains("window")) c.window = doc["window"].get<std::size_t>();
        if (doc.contains("confidence_level")) c.confidence_level = doc["confidence_level"].get<double>();
        if (doc.contains("k_min")) c.k_min = doc["k_min"].get<std::size_t>();
        if (doc.contains("k_max")) c.k_max = doc["k_max"].get<std::size_t>();
        if (doc.contains("cache_size_mode")) {
            const auto mode = doc["cache_size_mode"].get<std::string>();
            if (mode == "constant") {
                c.cache_size_mode = CacheSizeMode::Constant;
            } else if (mode == "adaptive") {
                c.cache_size_mode = CacheSizeMode::Adaptive;
            } else {
                throw ConfigError("cache_size_mode must be 'constant' or 'adaptive', got '" + mode + "'");
            }
        }
        if (doc.contains("cache_size")) c.cache_size = doc["cache_size"].get<std::size_t>();
        if (doc.contains("adaptive_centers")) c.adaptive_centers = doc["adaptive_centers"].get<bool>();
        if (doc.contains("persistent_decay")) c.persistent_decay = doc["persistent_decay"].get<bool>();
        if (doc.contains("replacement_period")) c.replacement_period = doc["replacement_period"].get<std::size_t>();
        if (doc.contains("decay_base")) c.decay_base = doc["decay_base"].get<double>();
        if (doc.contains("update_full_only")) c.update_full_only = doc["update_full_only"].get<bool>();
        if (doc.contains("update_exit_layer")) c.update_exit_layer = doc["update_exit_layer"].get<bool>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("engine config: ") + e.what());
    }
    return c;
}

}  // namespace smtm
