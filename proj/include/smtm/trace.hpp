#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smtm/feature_map.hpp"
#include "smtm/memory.hpp"

namespace smtm {

/// Sequence of input frames with optional ground-truth labels.
///
/// On disk: "SMTMTRC1", u32 C, u32 H, u32 W, u64 frame count, u32 flags
/// (bit 0 = labels present), then per frame an optional u32 label followed
/// by C*H*W float32 values. Little-endian throughout; the file length must
/// equal exactly what the header implies.
struct Trace {
    Shape frame_shape;
    bool has_labels = false;
    std::vector<FeatureMap> frames;
    std::vector<ClassId> labels;  // empty unless has_labels

    std::size_t size() const { return frames.size(); }

    friend bool operator==(const Trace&, const Trace&) = default;
};

inline constexpr std::size_t kTraceHeaderBytes = 32;

std::string serialize_trace(const Trace& trace);
Trace deserialize_trace(std::string_view bytes);
void save_trace(const Trace& trace, const std::filesystem::path& path);
Trace load_trace(const std::filesystem::path& path);

/// A stretch of the stream with its own class marginal.
struct StreamPhase {
    std::size_t frames = 0;
    std::vector<double> frequencies;
};

struct StreamSpec {
    std::size_t num_classes = 10;
    double zipf_exponent = 1.0;
    std::vector<double> frequencies;   // explicit marginal, overrides the zipf exponent
    std::vector<StreamPhase> phases;   // piecewise marginals, override both of the above
    double mean_run_length = 1.0;      // mean length of same-class bursts
    std::size_t frames = 1000;
    float noise = 0.0f;                // std-dev of additive Gaussian noise
    std::uint64_t seed = 1;
};

/// p_i proportional to 1 / (i+1)^exponent over the first `active` classes,
/// zero for the rest.
std::vector<double> zipf_frequencies(std::size_t num_classes, double exponent, std::size_t active = 0);

/// Synthetic frames are mosaics of small tiles drawn from one fixed
/// vocabulary. Tiles [0, kBackgroundTiles) are shared by every class; each
/// class also owns kTilesPerClass of the remaining ones.
inline constexpr std::size_t kTileSize = 4;
inline constexpr std::size_t kVocabularySize = 32;
inline constexpr std::size_t kBackgroundTiles = 4;
inline constexpr std::size_t kTilesPerClass = 2;
inline constexpr double kBackgroundShare = 0.5;
inline constexpr std::uint64_t kVocabularySeed = 0x7113u;

/// kVocabularySize tiles of shape channels x kTileSize x kTileSize, N(0, 1)
/// texels. Depends only on `channels`.
std::vector<FeatureMap> texture_vocabulary(std::size_t channels);

/// One mosaic template per class.
std::vector<FeatureMap> make_templates(std::size_t num_classes, const Shape& shape, std::uint64_t seed);

/// Copies of the templates where each tile cell is, with probability
/// `strength`, repainted with a uniformly chosen vocabulary tile.
std::vector<FeatureMap> perturb_templates(std::span<const FeatureMap> templates, float strength,
                                          std::uint64_t seed);

/// Bursty long-tail stream: run classes drawn from the marginal, run
/// lengths geometric with the configured mean, frame = template + noise.
Trace generate_longtail_trace(const StreamSpec& spec, std::span<const FeatureMap> templates);

/// `per_class` noisy copies of every template, class-major order.
Trace generate_labeled_set(std::span<const FeatureMap> templates, std::size_t per_class, float noise,
                           std::uint64_t seed);

}  // namespace smtm
