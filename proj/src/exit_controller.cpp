#include "smtm/exit_controller.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "smtm/errors.hpp"

namespace smtm {

namespace {

struct TopTwo {
    std::size_t best = 0;
    double best_value = 0.0;
    double second_value = 0.0;
};

// Highest accumulator (ties to the smaller class id) and the runner-up value.
TopTwo top_two(const CumulativeState& state) {
    TopTwo t;
    t.best_value = -std::numeric_limits<double>::infinity();
    t.second_value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < state.accumulators.size(); ++i) {
        const double v = state.accumulators[i];
        const bool better = v > t.best_value ||
                            (v == t.best_value && state.candidates[i] < state.candidates[t.best]);
        if (better) {
            t.second_value = t.best_value;
            t.best = i;
            t.best_value = v;
        } else if (v > t.second_value) {
            t.second_value = v;
        }
    }
    return t;
}

}  // namespace

CumulativeState init_cumulative(std::span<const ClassId> candidates) {
    if (candidates.empty()) throw ArityError("cumulative similarity needs at least one candidate");
    CumulativeState state;
    state.candidates.assign(candidates.begin(), candidates.end());
    state.accumulators.assign(candidates.size(), 0.0);
    return state;
}

void accumulate(CumulativeState& state, const SimilarityRow& row) {
    if (row.entries.size() != state.candidates.size()) {
        throw IntegrityError("similarity row has " + std::to_string(row.entries.size()) + " classes, state has " +
                             std::to_string(state.candidates.size()));
    }
    for (std::size_t i = 0; i < row.entries.size(); ++i) {
        if (row.entries[i].first != state.candidates[i]) {
            throw IntegrityError("similarity row class " + std::to_string(row.entries[i].first) +
                                 " does not match candidate " + std::to_string(state.candidates[i]));
        }
    }
    for (std::size_t i = 0; i < row.entries.size(); ++i) {
        state.accumulators[i] = row.entries[i].second + state.accumulators[i] / 2.0;
    }
    ++state.layers_seen;
}

Confidence accumulated_confidence(const CumulativeState& state) {
    if (state.candidates.size() < 2) {
        throw ArityError("accumulated confidence needs at least two candidates, got " +
                         std::to_string(state.candidates.size()));
    }
    if (state.layers_seen == 0) throw ArityError("accumulated confidence needs at least one layer");
    const auto t = top_two(state);
    if (t.best_value <= 0.0) return Confidence::none();
    if (t.second_value <= 0.0) return Confidence::infinite();
    return Confidence::finite((t.best_value - t.second_value) / t.second_value);
}

ExitDecision decide(const CumulativeState& state, double tau) {
    ExitDecision d;
    if (state.candidates.size() < 2 || state.layers_seen == 0) return d;
    d.confidence = accumulated_confidence(state);
    if (std::isinf(tau) && tau > 0) return d;
    const bool confident = d.confidence.kind == Confidence::Kind::Infinite ||
                           (d.confidence.kind == Confidence::Kind::Finite && d.confidence.value >= tau);
    if (confident) {
        d.exit = true;
        d.class_id = state.candidates[top_two(state).best];
        d.exit_layer = state.layers_seen;
    }
    return d;
}

}  // namespace smtm
