#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "smtm/pipeline.hpp"

namespace smtm {

struct SweepRow {
    double tau = 0.0;
    std::optional<double> accuracy;
    std::optional<double> accuracy_drop;  // baseline accuracy minus this run's, as a fraction
    double latency_reduction = 0.0;       // 1 - mean FLOPs fraction
    double exit_ratio = 0.0;
    std::optional<double> hit_ratio;
};

struct SweepReport {
    RunMetrics baseline;
    std::vector<SweepRow> rows;
};

/// One run per tau, each starting from the warm-up memory.
SweepReport sweep_tau(const EngineConfig& config, const ModelGraph& model, const GlobalMemory& warmed,
                      const Trace& trace, std::span<const double> taus);

struct AblationCell {
    CacheSizeMode cache_size_mode = CacheSizeMode::Constant;
    bool adaptive_centers = false;
    RunMetrics metrics;
};

struct AblationReport {
    RunMetrics baseline;
    std::vector<AblationCell> cells;  // {constant, adaptive} x {frozen, adaptive centers}

    const AblationCell& cell(CacheSizeMode mode, bool adaptive_centers) const;
};

AblationReport ablation_run(const EngineConfig& config, const ModelGraph& model, const GlobalMemory& warmed,
                            const Trace& trace);

// Report formatting. Reals use a fixed "%.9g" rendering so reports are
// byte-stable; absent values are written as NA (CSV) or null (JSON).
std::string format_real(double v);
std::string format_tau(double tau);
double parse_tau(std::string_view text);
std::string format_confidence(const Confidence& c);

nlohmann::json metrics_to_json(const RunMetrics& m);
std::string frames_csv(std::span<const FrameResult> frames);
std::string sweep_csv(const SweepReport& report);
nlohmann::json sweep_to_json(const SweepReport& report);
std::string ablation_csv(const AblationReport& report);
nlohmann::json ablation_to_json(const AblationReport& report);

nlohmann::json config_to_json(const EngineConfig& config);
/// Overlays the fields present in `doc` onto `base`.
EngineConfig config_from_json(const nlohmann::json& doc, EngineConfig base = {});

}  // namespace smtm
