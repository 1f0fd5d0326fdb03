#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "smtm/feature_map.hpp"
#include "smtm/memory.hpp"

namespace smtm {

/// Channel-mean encoding of an exit point's feature map.
struct SemanticVector {
    std::size_t layer_id = 0;  // 1-based exit index
    std::vector<float> values;

    friend bool operator==(const SemanticVector&, const SemanticVector&) = default;
};

/// Global average pooling: one mean per channel, accumulated in double.
SemanticVector encode_gap(const FeatureMap& fm, std::size_t layer_id = 0);

/// Vectors whose norm falls below this are treated as carrying no direction.
inline constexpr double kZeroNorm = 1e-12;

/// dot(a, b) / (|a| |b|), clamped to [-1, 1]; 0 when either norm is below
/// kZeroNorm. Throws ShapeError on length mismatch.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

struct SimilarityRow {
    std::size_t layer_id = 0;
    std::vector<std::pair<ClassId, double>> entries;  // in fast-memory order
};

/// Cosine similarity of `sv` against every fast-memory class's center at
/// `layer_id`. A cached class with an uninitialized center is an IntegrityError.
SimilarityRow match_layer(const SemanticVector& sv, const FastMemory& fast, const GlobalMemory& global,
                          std::size_t layer_id);

enum class SeparabilityStatus { Ok, NegativeDenominator, Undefined };

struct Separability {
    double value = 0.0;
    SeparabilityStatus status = SeparabilityStatus::Ok;
};

/// (best - runner_up) / runner_up over one row. Diagnostic only; the exit
/// decision uses the accumulated score. Undefined when runner_up == 0;
/// a negative runner_up is reported raw and flagged.
Separability single_layer_separability(const SimilarityRow& row);

}  // namespace smtm
