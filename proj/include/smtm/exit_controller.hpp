#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "smtm/memory.hpp"
#include "smtm/semantic.hpp"

namespace smtm {

/// Cross-layer cumulative similarity, stored normalised: after l exit points
/// accumulator j holds sum_{i<=l} s_j^i 2^(i-1) divided by 2^(l-1). The
/// division leaves the confidence ratio unchanged and keeps values in [-2, 2].
struct CumulativeState {
    std::vector<ClassId> candidates;
    std::vector<double> accumulators;
    std::size_t layers_seen = 0;
};

CumulativeState init_cumulative(std::span<const ClassId> candidates);

/// N_j <- s_j + N_j / 2. The row must cover exactly the candidate set, in order.
void accumulate(CumulativeState& state, const SimilarityRow& row);

struct Confidence {
    enum class Kind { Finite, Infinite, None };
    Kind kind = Kind::None;
    double value = 0.0;

    static Confidence finite(double v) { return {Kind::Finite, v}; }
    static Confidence infinite() { return {Kind::Infinite, 0.0}; }
    static Confidence none() { return {Kind::None, 0.0}; }
};

/// (best - runner_up) / runner_up over the accumulators. Infinite when the
/// runner-up is <= 0 but the best is positive; None when the best is <= 0.
/// Throws ArityError with fewer than two candidates or before any layer.
Confidence accumulated_confidence(const CumulativeState& state);

struct ExitDecision {
    bool exit = false;
    ClassId class_id = 0;
    std::size_t exit_layer = 0;
    Confidence confidence;
};

/// Exit with the argmax candidate when confidence >= tau. tau = +inf, fewer
/// than two candidates, or no layers seen all mean continue.
ExitDecision decide(const CumulativeState& state, double tau);

}  // namespace smtm
