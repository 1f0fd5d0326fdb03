#pragma once

#include <cstdint>

#include "smtm/model.hpp"
#include "smtm/trace.hpp"

namespace smtm {

struct FixtureModelOptions {
    std::size_t base_width = 32;  // channels of the first block; doubles every two blocks
    std::size_t head_classes = 0; // > 0 appends a dense + softmax head
    std::uint64_t seed = 7;
    /// Stem bias as a fraction of the tile norm: a stem channel fires when
    /// the input patch projects onto its tile by more than this share.
    float stem_selectivity = 0.5f;
    /// Relative scale of the random cross-channel weights in later convs.
    float crosstalk = 0.1f;
};

/// MobileNet-style 3x32x32 network with six exit points. The stem holds
/// matched filters for the synthetic tile vocabulary (standing in for
/// trained first-layer filters); depthwise and pointwise convs follow, two
/// blocks with residual connections, ending in global average pooling.
ModelGraph fixture_model(const FixtureModelOptions& options = {});

/// Ready-made inputs for the fixture model: class templates, a labeled
/// warm-up set drawn from the original templates, and a test stream.
struct Scenario {
    std::vector<FeatureMap> templates;
    Trace warmup;
    Trace stream;
};

enum class ScenarioKind {
    LongTail,  // zipf(1) marginal over 10 classes, bursts of mean length 10
    Shift,     // active classes 3 -> 10 -> 3, no bursts
    Drift,     // long-tail stream over perturbed templates
};

struct ScenarioOptions {
    ScenarioKind kind = ScenarioKind::LongTail;
    std::size_t num_classes = 10;
    std::size_t frames = 1442;
    std::size_t warmup_per_class = 20;
    float noise = 0.5f;
    float drift_strength = 0.3f;
    std::uint64_t seed = 11;
};

Scenario make_scenario(const ScenarioOptions& options = {});

std::string_view to_string(ScenarioKind kind);
ScenarioKind parse_scenario_kind(std::string_view name);

}  // namespace smtm
