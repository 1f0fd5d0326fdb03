#include "smtm/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "smtm/errors.hpp"

namespace smtm {

namespace {

// Stem: channel c < kVocabularySize is the unit-norm matched filter of
// vocabulary tile c, biased so it fires only on that tile. Extra channels
// get random unit filters with the same bias rule.
void stem_weights(const LayerSpec& spec, std::span<float> params, float selectivity, std::mt19937_64& rng) {
    const auto vocab = texture_vocabulary(spec.input_shape.channels);
    const std::size_t per_channel = spec.input_shape.channels * spec.kernel * spec.kernel;
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    for (std::size_t c = 0; c < spec.out_channels; ++c) {
        std::span<float> w = params.subspan(c * per_channel, per_channel);
        if (c < vocab.size() && vocab[c].size() == per_channel) {
            std::copy(vocab[c].data().begin(), vocab[c].data().end(), w.begin());
        } else {
            for (float& v : w) v = gauss(rng);
        }
        double norm = 0.0;
        for (float v : w) norm += static_cast<double>(v) * v;
        norm = std::sqrt(norm);
        for (float& v : w) v = static_cast<float>(v / norm);
        params[spec.out_channels * per_channel + c] = static_cast<float>(-selectivity * norm);
    }
}

// Later convs pass each input channel through at the kernel centre and add
// small random crosstalk; outputs beyond a group's input width are random
// He-normal mixtures.
void body_weights(const LayerSpec& spec, std::span<float> params, float crosstalk, std::mt19937_64& rng) {
    const std::size_t in = spec.input_shape.channels / spec.groups;
    const std::size_t out_per_group = spec.out_channels / spec.groups;
    const std::size_t taps = spec.kernel * spec.kernel;
    const std::size_t per_channel = in * taps;
    std::normal_distribution<float> he(0.0f, std::sqrt(2.0f / static_cast<float>(per_channel)));
    std::normal_distribution<float> small(0.0f, crosstalk / std::sqrt(static_cast<float>(per_channel)));
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
        std::span<float> w = params.subspan(o * per_channel, per_channel);
        const std::size_t local = o % out_per_group;
        if (local < in) {
            for (float& v : w) v = small(rng);
            w[local * taps + taps / 2] += 1.0f;
        } else {
            for (float& v : w) v = he(rng);
        }
        params[spec.out_channels * per_channel + o] = 0.0f;
    }
}

}  // namespace

ModelGraph fixture_model(const FixtureModelOptions& options) {
    const std::size_t w1 = options.base_width;
    const std::size_t w2 = 2 * w1;
    const std::size_t w3 = 4 * w1;

    std::vector<LayerSpec> layers = {
        conv2d(w1, kTileSize, 1, 1),        //  0
        exit_point(relu()),                 //  1  exit 1: w1 x 31 x 31
        max_pool(2, 2),                     //  2
        conv2d(w1, 3, 1, 1, w1),            //  3  depthwise
        exit_point(relu()),                 //  4  exit 2: w1 x 15 x 15
        conv2d(w2, 1),                      //  5  pointwise
        exit_point(relu()),                 //  6  exit 3: w2 x 15 x 15
        conv2d(w2, 3, 1, 1, w2),            //  7  depthwise
        residual_add(6),                    //  8
        relu(),                             //  9
        exit_point(max_pool(2, 2)),         // 10  exit 4: w2 x 7 x 7
        conv2d(w3, 1),                      // 11  pointwise
        exit_point(relu()),                 // 12  exit 5: w3 x 7 x 7
        conv2d(w3, 3, 1, 1, w3),            // 13  depthwise
        residual_add(12),                   // 14
        relu(),                             // 15
        exit_point(global_avg_pool()),      // 16  exit 6: w3 x 1 x 1
    };
    if (options.head_classes > 0) {
        layers.push_back(dense(options.head_classes));
        layers.push_back(softmax());
    }

    const Shape input{3, 32, 32};
    Shape shape = input;
    std::mt19937_64 rng(options.seed);
    std::vector<float> weights;
    for (const auto& l : layers) {
        const auto spec = resolve_layer(l, shape);
        shape = spec.output_shape;
        if (spec.param_count == 0) continue;
        const std::size_t offset = weights.size();
        weights.resize(offset + spec.param_count, 0.0f);
        std::span<float> params(weights.data() + offset, spec.param_count);
        if (spec.kind == LayerKind::Conv2d) {
            if (offset == 0) {
                stem_weights(spec, params, options.stem_selectivity, rng);
            } else {
                body_weights(spec, params, options.crosstalk, rng);
            }
        } else {
            std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(spec.input_shape.size())));
            for (std::size_t i = 0; i < spec.param_count - spec.out_channels; ++i) params[i] = dist(rng);
        }
    }
    return ModelGraph::build("fixture6", input, std::move(layers), std::move(weights));
}

Scenario make_scenario(const ScenarioOptions& options) {
    const Shape input{3, 32, 32};
    Scenario out;
    out.templates = make_templates(options.num_classes, input, options.seed);
    out.warmup = generate_labeled_set(out.templates, options.warmup_per_class, options.noise, options.seed + 1);

    StreamSpec spec;
    spec.num_classes = options.num_classes;
    spec.frames = options.frames;
    spec.noise = options.noise;
    spec.seed = options.seed + 2;
    switch (options.kind) {
        case ScenarioKind::LongTail:
            spec.zipf_exponent = 1.0;
            spec.mean_run_length = 10.0;
            out.stream = generate_longtail_trace(spec, out.templates);
            break;
        case ScenarioKind::Shift: {
            const std::size_t n = options.num_classes;
            const std::size_t few = std::min<std::size_t>(3, n);
            const std::size_t third = options.frames / 3;
            spec.phases = {{third, zipf_frequencies(n, 1.0, few)},
                           {third, zipf_frequencies(n, 0.0, n)},
                           {options.frames - 2 * third, zipf_frequencies(n, 1.0, few)}};
            out.stream = generate_longtail_trace(spec, out.templates);
            break;
        }
        case ScenarioKind::Drift: {
            spec.zipf_exponent = 1.0;
            spec.mean_run_length = 10.0;
            const auto drifted = perturb_templates(out.templates, options.drift_strength, options.seed + 3);
            out.stream = generate_longtail_trace(spec, drifted);
            break;
        }
    }
    return out;
}

std::string_view to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::LongTail: return "longtail";
        case ScenarioKind::Shift: return "shift";
        case ScenarioKind::Drift: return "drift";
    }
    return "?";
}

ScenarioKind parse_scenario_kind(std::string_view name) {
    if (name == "longtail") return ScenarioKind::LongTail;
    if (name == "shift") return ScenarioKind::Shift;
    if (name == "drift") return ScenarioKind::Drift;
    throw ConfigError("unknown scenario '" + std::string(name) + "', expected longtail, shift or drift");
}

}  // namespace smtm
