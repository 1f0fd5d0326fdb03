#include "smtm/semantic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "smtm/errors.hpp"

namespace smtm {

SemanticVector encode_gap(const FeatureMap& fm, std::size_t layer_id) {
    SemanticVector sv;
    sv.layer_id = layer_id;
    sv.values.resize(fm.channels());
    const auto area = static_cast<double>(fm.shape().plane());
    for (std::size_t c = 0; c < fm.channels(); ++c) {
        double acc = 0.0;
        for (float v : fm.channel(c)) acc += v;
        sv.values[c] = static_cast<float>(acc / area);
    }
    return sv;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw ShapeError("cosine similarity of vectors with lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    const double norm_a = std::sqrt(na);
    const double norm_b = std::sqrt(nb);
    if (norm_a < kZeroNorm || norm_b < kZeroNorm) return 0.0;
    return std::clamp(dot / (norm_a * norm_b), -1.0, 1.0);
}

SimilarityRow match_layer(const SemanticVector& sv, const FastMemory& fast, const GlobalMemory& global,
                          std::size_t layer_id) {
    SimilarityRow row;
    row.layer_id = layer_id;
    row.entries.reserve(fast.size());
    for (ClassId cls : fast.classes) {
        const auto& center = global.center(cls, layer_id);
        if (!center.initialized()) {
            throw IntegrityError("fast memory holds class " + std::to_string(cls) +
                                 " without an initialized center at exit " + std::to_string(layer_id));
        }
        row.entries.emplace_back(cls, cosine_similarity(sv.values, center.values));
    }
    return row;
}

Separability single_layer_separability(const SimilarityRow& row) {
    if (row.entries.size() < 2) {
        throw ArityError("separability needs at least two similarities, got " + std::to_string(row.entries.size()));
    }
    double best = -std::numeric_limits<double>::infinity();
    double second = -std::numeric_limits<double>::infinity();
    for (const auto& [cls, s] : row.entries) {
        if (s > best) {
            second = best;
            best = s;
        } else if (s > second) {
            second = s;
        }
    }
    if (second == 0.0) return {0.0, SeparabilityStatus::Undefined};
    const double value = (best - second) / second;
    return {value, second < 0.0 ? SeparabilityStatus::NegativeDenominator : SeparabilityStatus::Ok};
}

}  // namespace smtm
