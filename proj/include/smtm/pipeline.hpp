#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "smtm/exit_controller.hpp"
#include "smtm/memory.hpp"
#include "smtm/model.hpp"
#include "smtm/priming_memory.hpp"
#include "smtm/semantic.hpp"
#include "smtm/trace.hpp"

namespace smtm {

enum class CacheSizeMode { Constant, Adaptive };

struct EngineConfig {
    double tau = 1.0;                     // +inf disables early exit
    std::size_t window = 30;              // W, frames per forgetting period
    double confidence_level = 0.95;       // CL for the adaptive cache size
    std::size_t k_min = 2;
    std::size_t k_max = 0;                // 0: number of classes
    CacheSizeMode cache_size_mode = CacheSizeMode::Adaptive;
    std::size_t cache_size = 5;           // k in constant mode
    bool adaptive_centers = true;
    bool persistent_decay = true;
    std::size_t replacement_period = 1;
    double decay_base = kDefaultDecayBase;
    bool update_full_only = false;        // restrict center updates to full-inference frames
    bool update_exit_layer = true;        // include the exit point itself in center updates

    /// Throws ConfigError when the settings are inconsistent for `num_classes`.
    void validate(std::size_t num_classes) const;
    std::size_t effective_k_max(std::size_t num_classes) const { return k_max == 0 ? num_classes : k_max; }
};

inline constexpr double kNeverExit = std::numeric_limits<double>::infinity();

struct FrameResult {
    std::size_t frame_id = 0;
    ClassId predicted = 0;
    std::optional<std::size_t> exit_layer;  // nullopt: full inference
    Confidence ac;                          // last confidence evaluated for the frame
    std::uint64_t executed_flops = 0;
    std::optional<ClassId> ground_truth;
    std::vector<ClassId> fast_memory_snapshot;  // fast memory when the frame arrived
};

struct RunMetrics {
    std::size_t frames = 0;
    std::size_t labeled_frames = 0;
    std::optional<double> top1_accuracy;
    /// Entry l-1 counts exits at exit point l (l < L); the last entry counts
    /// full inferences.
    std::vector<std::size_t> exit_histogram;
    double exit_ratio = 0.0;               // early-exit fraction
    std::optional<double> hit_ratio;       // ground truth resident in fast memory; nullopt without a cache
    double mean_flops_fraction = 0.0;
    double mean_fast_memory_size = 0.0;
    std::uint64_t total_model_flops = 0;
    std::uint64_t center_memory_bytes = 0;
    double wall_clock_seconds = 0.0;       // informational, never written to reports
};

struct RunResult {
    RunMetrics metrics;
    std::vector<FrameResult> frames;
};

/// Optional taps into a run, used for the diagnostic CSV exports.
struct RunHooks {
    std::function<void(std::size_t frame_id, const SimilarityRow& row)> on_similarity;
    std::function<void(std::size_t frame_id, const FrequencyTable&, const TimeStampTable&,
                       std::span<const double> scores)>
        on_replacement;
};

/// Nearest-centroid head: argmax cosine similarity against every
/// initialized final-exit center, ties to the smaller class id.
ClassId predict_full(const GlobalMemory& global, const SemanticVector& final_sv);

/// Argmax of a model head's output, ties to the smaller index.
ClassId argmax_class(const FeatureMap& head_output);

/// Stateful per-stream engine. Frames must be fed in stream order.
class Engine {
public:
    Engine(const ModelGraph& model, GlobalMemory warmed, EngineConfig config);

    FrameResult process_frame(const FeatureMap& frame, std::optional<ClassId> ground_truth = std::nullopt,
                              const RunHooks* hooks = nullptr);

    const EngineConfig& config() const { return config_; }
    const GlobalMemory& global_memory() const { return global_; }
    const FastMemory& fast_memory() const { return fast_; }
    const FrequencyTable& frequency_table() const { return ft_; }
    const TimeStampTable& time_stamp_table() const { return ts_; }
    std::size_t frames_processed() const { return frames_; }

private:
    ClassId classify_full(const FinalOutput& out, const SemanticVector& final_sv) const;
    void after_frame(ClassId predicted, std::span<const SemanticVector> vectors, bool exited, const RunHooks* hooks);

    const ModelGraph* model_;
    EngineConfig config_;
    GlobalMemory global_;
    GlobalMemory head_;  // frozen warm-up centers backing the full-inference head
    FastMemory fast_;
    FrequencyTable ft_;
    TimeStampTable ts_;
    std::size_t frames_ = 0;
    bool warmed_ = false;
};

RunResult run_stream(const EngineConfig& config, const ModelGraph& model, const GlobalMemory& warmed,
                     const Trace& trace, const RunHooks* hooks = nullptr);

/// Full inference for every frame, no memory evolution.
RunResult baseline_run(const ModelGraph& model, const Trace& trace, const GlobalMemory& warmed);

/// n * sum_l C_l * 4 for the centers + 4 bytes per fast-memory entry +
/// 8 bytes per class for each of the two tables.
std::uint64_t center_memory_bytes(const GlobalMemory& global, const FastMemory& fast);

/// Bytes needed to cache every exit point's raw feature map for one frame.
std::uint64_t raw_feature_map_bytes(const ModelGraph& model);

RunMetrics summarize(std::span<const FrameResult> frames, const ModelGraph& model, bool has_cache);

}  // namespace smtm
