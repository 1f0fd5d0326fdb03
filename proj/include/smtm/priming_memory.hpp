#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smtm/feature_map.hpp"
#include "smtm/memory.hpp"
#include "smtm/model.hpp"
#include "smtm/semantic.hpp"

namespace smtm {

/// Per-class occurrence counts. Real-valued because persistent forgetting
/// scales them by powers of the decay base.
struct FrequencyTable {
    std::vector<double> counts;

    explicit FrequencyTable(std::size_t num_classes = 0) : counts(num_classes, 0.0) {}
};

/// Per-class count of consecutive frames in which the class was not observed.
struct TimeStampTable {
    std::vector<std::uint64_t> absent;
    std::size_t window = 30;

    explicit TimeStampTable(std::size_t num_classes = 0, std::size_t window_frames = 30)
        : absent(num_classes, 0), window(window_frames) {}
};

inline constexpr double kDefaultDecayBase = 0.25;

struct WarmupOptions {
    std::optional<std::uint64_t> update_count_cap;  // caps m after warm-up
};

/// Centers as per-class means of semantic vectors. `vectors[i]` holds the
/// encodings of sample i at every exit point. Classes without samples stay
/// uninitialized and are listed in `missing` when provided.
GlobalMemory warm_up_from_vectors(std::size_t num_classes, std::span<const std::size_t> layer_channels,
                                  std::span<const std::vector<SemanticVector>> vectors,
                                  std::span<const ClassId> labels, const WarmupOptions& options = {},
                                  std::vector<ClassId>* missing = nullptr);

/// Runs every sample through the model and groups its exit-point encodings.
GlobalMemory warm_up(const ModelGraph& model, std::span<const FeatureMap> samples, std::span<const ClassId> labels,
                     std::size_t num_classes, const WarmupOptions& options = {},
                     std::vector<ClassId>* missing = nullptr);

/// Encodes all exit points of one input.
std::vector<SemanticVector> encode_all_exits(const ModelGraph& model, const FeatureMap& input);

/// FT[cls] += 1, TS[cls] = 0, every other TS += 1.
void record_observation(FrequencyTable& ft, TimeStampTable& ts, ClassId cls);

/// FT_i *= base^floor(TS_i / W) for every class.
void apply_forgetting(FrequencyTable& ft, const TimeStampTable& ts, double decay_base = kDefaultDecayBase);

/// FT_i * base^floor(TS_i / W).
double class_score(double frequency, std::uint64_t absent, std::size_t window,
                   double decay_base = kDefaultDecayBase);

std::vector<double> class_scores(const FrequencyTable& ft, const TimeStampTable& ts,
                                 double decay_base = kDefaultDecayBase);

/// Smallest k whose top-k share of the total score reaches `confidence_level`,
/// clamped to [k_min, k_max]. All-zero scores give k_min.
std::size_t adaptive_cache_size(std::span<const double> scores, double confidence_level, std::size_t k_min,
                                std::size_t k_max);

/// Top-k classes by score, ties by ascending id. Zero-score classes and
/// classes without initialized centers are never cached.
FastMemory select_fast_memory(const GlobalMemory& global, std::span<const double> scores, std::size_t k);

/// Running-mean update SC' = (SC m + SV) / (m + 1) for exit points
/// 1..vectors.size(); deeper centers are untouched.
void update_centers(GlobalMemory& global, ClassId cls, std::span<const SemanticVector> vectors);

// Binary center store: "SMTMCTR1", u32 n, u32 L, u32 C_l per exit, then per
// (class, exit) in class-major order a u32 m followed by C_l float32 values.
// All little-endian.
std::string serialize_centers(const GlobalMemory& global);
GlobalMemory deserialize_centers(std::string_view bytes);
void save_centers(const GlobalMemory& global, const std::filesystem::path& path);
GlobalMemory load_centers(const std::filesystem::path& path);

}  // namespace smtm
