#include "smtm/trace.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>
#include <random>

#include "smtm/binary_io.hpp"
#include "smtm/errors.hpp"

namespace smtm {

namespace {

constexpr std::string_view kTraceMagic = "SMTMTRC1";
constexpr std::uint32_t kHasLabels = 1u;

void add_noise(FeatureMap& fm, float noise, std::mt19937_64& rng) {
    if (noise <= 0.0f) return;
    std::normal_distribution<float> dist(0.0f, noise);
    for (float& v : fm.data()) v += dist(rng);
}

// Overwrites grid cell (r, q) of `fm` with `tile`, clipped at the frame edge.
void paint_cell(FeatureMap& fm, const FeatureMap& tile, std::size_t r, std::size_t q) {
    const auto& shape = fm.shape();
    for (std::size_t c = 0; c < shape.channels; ++c) {
        for (std::size_t y = 0; y < kTileSize && r * kTileSize + y < shape.height; ++y) {
            for (std::size_t x = 0; x < kTileSize && q * kTileSize + x < shape.width; ++x) {
                fm.at(c, r * kTileSize + y, q * kTileSize + x) = tile.at(c, y, x);
            }
        }
    }
}

std::size_t grid_cols(const Shape& shape) { return (shape.width + kTileSize - 1) / kTileSize; }

std::size_t cell_count(const Shape& shape) {
    return ((shape.height + kTileSize - 1) / kTileSize) * ((shape.width + kTileSize - 1) / kTileSize);
}

// Fixed composition, shuffled placement: kBackgroundShare of the cells
// cycle through the shared background tiles, the rest through the class's
// own tiles.
std::vector<std::size_t> class_cells(std::size_t cells, std::span<const std::size_t> own, std::mt19937_64& rng) {
    const auto background = static_cast<std::size_t>(std::lround(kBackgroundShare * static_cast<double>(cells)));
    std::vector<std::size_t> out(cells);
    for (std::size_t i = 0; i < cells; ++i) {
        out[i] = i < background ? i % kBackgroundTiles : own[(i - background) % own.size()];
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}


void check_marginal(const std::vector<double>& p, std::size_t num_classes) {
    if (p.size() != num_classes) {
        throw ConfigError("got " + std::to_string(p.size()) + " class frequencies for " +
                          std::to_string(num_classes) + " classes");
    }
    double total = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) throw ConfigError("class frequencies must be non-negative");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-6) {
        throw ConfigError("class frequencies sum to " + std::to_string(total) + ", expected 1");
    }
}

}  // namespace

std::string serialize_trace(const Trace& trace) {
    io::Writer w;
    w.bytes(kTraceMagic);
    w.u32(static_cast<std::uint32_t>(trace.frame_shape.channels));
    w.u32(static_cast<std::uint32_t>(trace.frame_shape.height));
    w.u32(static_cast<std::uint32_t>(trace.frame_shape.width));
    w.u64(trace.frames.size());
    w.u32(trace.has_labels ? kHasLabels : 0u);
    if (trace.has_labels && trace.labels.size() != trace.frames.size()) {
        throw SizeError("trace has " + std::to_string(trace.frames.size()) + " frames but " +
                        std::to_string(trace.labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < trace.frames.size(); ++i) {
        if (trace.frames[i].shape() != trace.frame_shape) {
            throw ShapeError("frame " + std::to_string(i) + " has shape " + trace.frames[i].shape().str() +
                             ", trace declares " + trace.frame_shape.str());
        }
        if (trace.has_labels) w.u32(trace.labels[i]);
        w.f32s(trace.frames[i].data());
    }
    return w.str();
}

Trace deserialize_trace(std::string_view bytes) {
    if (bytes.size() < kTraceHeaderBytes || bytes.substr(0, kTraceMagic.size()) != kTraceMagic) {
        throw ParseError("trace does not start with a SMTMTRC1 header");
    }
    io::Reader r(bytes);
    r.bytes(kTraceMagic.size());
    Trace trace;
    trace.frame_shape.channels = r.u32();
    trace.frame_shape.height = r.u32();
    trace.frame_shape.width = r.u32();
    const std::uint64_t count = r.u64();
    const std::uint32_t flags = r.u32();
    if ((flags & ~kHasLabels) != 0) throw ParseError("trace header has unknown flag bits");
    trace.has_labels = (flags & kHasLabels) != 0;

    const std::uint64_t record = (trace.has_labels ? 4 : 0) + 4ull * trace.frame_shape.size();
    const std::uint64_t expected = kTraceHeaderBytes + count * record;
    if (bytes.size() != expected) {
        throw SizeError("trace is " + std::to_string(bytes.size()) + " bytes, header implies " +
                        std::to_string(expected));
    }
    trace.frames.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        if (trace.has_labels) trace.labels.push_back(r.u32());
        FeatureMap fm(trace.frame_shape);
        r.f32s(fm.data());
        trace.frames.push_back(std::move(fm));
    }
    return trace;
}

void save_trace(const Trace& trace, const std::filesystem::path& path) { io::write_file(path, serialize_trace(trace)); }

Trace load_trace(const std::filesystem::path& path) { return deserialize_trace(io::read_file(path)); }

std::vector<double> zipf_frequencies(std::size_t num_classes, double exponent, std::size_t active) {
    if (active == 0 || active > num_classes) active = num_classes;
    std::vector<double> p(num_classes, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < active; ++i) {
        p[i] = 1.0 / std::pow(static_cast<double>(i + 1), exponent);
        total += p[i];
    }
    for (auto& v : p) v /= total;
    return p;
}

std::vector<FeatureMap> texture_vocabulary(std::size_t channels) {
    std::mt19937_64 rng(kVocabularySeed);
    std::normal_distribution<float> texel(0.0f, 1.0f);
    std::vector<FeatureMap> vocab;
    vocab.reserve(kVocabularySize);
    for (std::size_t t = 0; t < kVocabularySize; ++t) {
        FeatureMap tile({channels, kTileSize, kTileSize});
        for (float& v : tile.data()) v = texel(rng);
        vocab.push_back(std::move(tile));
    }
    return vocab;
}

std::vector<FeatureMap> make_templates(std::size_t num_classes, const Shape& shape, std::uint64_t seed) {
    const auto vocab = texture_vocabulary(shape.channels);
    std::mt19937_64 rng(seed);
    // Own tiles are dealt from a shuffled pool so classes overlap only once
    // the pool runs out.
    std::vector<std::size_t> pool(kVocabularySize - kBackgroundTiles);
    std::iota(pool.begin(), pool.end(), kBackgroundTiles);
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<FeatureMap> out;
    out.reserve(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<std::size_t> own(kTilesPerClass);
        for (std::size_t i = 0; i < own.size(); ++i) own[i] = pool[(c * kTilesPerClass + i) % pool.size()];
        const auto cells = class_cells(cell_count(shape), own, rng);
        FeatureMap fm(shape);
        for (std::size_t i = 0; i < cells.size(); ++i) {
            paint_cell(fm, vocab[cells[i]], i / grid_cols(shape), i % grid_cols(shape));
        }
        out.push_back(std::move(fm));
    }
    return out;
}

std::vector<FeatureMap> perturb_templates(std::span<const FeatureMap> templates, float strength,
                                          std::uint64_t seed) {
    if (!(strength >= 0.0f && strength <= 1.0f)) throw ConfigError("perturbation strength must be in [0, 1]");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution replace(strength);
    std::uniform_int_distribution<std::size_t> any(0, kVocabularySize - 1);
    std::vector<FeatureMap> out;
    out.reserve(templates.size());
    for (const auto& t : templates) {
        const auto& shape = t.shape();
        const auto vocab = texture_vocabulary(shape.channels);
        FeatureMap shifted = t;
        for (std::size_t i = 0; i < cell_count(shape); ++i) {
            if (replace(rng)) paint_cell(shifted, vocab[any(rng)], i / grid_cols(shape), i % grid_cols(shape));
        }
        out.push_back(std::move(shifted));
    }
    return out;
}

Trace generate_longtail_trace(const StreamSpec& spec, std::span<const FeatureMap> templates) {
    if (templates.size() != spec.num_classes) {
        throw ConfigError("got " + std::to_string(templates.size()) + " templates for " +
                          std::to_string(spec.num_classes) + " classes");
    }
    if (spec.num_classes == 0) throw ConfigError("stream needs at least one class");
    if (!(spec.mean_run_length >= 1.0)) throw ConfigError("mean run length must be at least 1");
    if (spec.noise < 0.0f) throw ConfigError("noise level must be non-negative");

    std::vector<StreamPhase> phases = spec.phases;
    if (phases.empty()) {
        auto p = spec.frequencies.empty() ? zipf_frequencies(spec.num_classes, spec.zipf_exponent)
                                          : spec.frequencies;
        phases.push_back({spec.frames, std::move(p)});
    }
    for (const auto& phase : phases) check_marginal(phase.frequencies, spec.num_classes);

    Trace trace;
    trace.frame_shape = templates.front().shape();
    trace.has_labels = true;
    std::mt19937_64 rng(spec.seed);
    const bool bursty = spec.mean_run_length > 1.0;
    std::geometric_distribution<std::size_t> extra_length(bursty ? 1.0 / spec.mean_run_length : 0.5);

    for (const auto& phase : phases) {
        std::discrete_distribution<std::size_t> pick(phase.frequencies.begin(), phase.frequencies.end());
        std::size_t produced = 0;
        while (produced < phase.frames) {
            const auto cls = static_cast<ClassId>(pick(rng));
            std::size_t run = 1 + (bursty ? extra_length(rng) : 0);
            run = std::min(run, phase.frames - produced);
            for (std::size_t i = 0; i < run; ++i) {
                FeatureMap frame = templates[cls];
                add_noise(frame, spec.noise, rng);
                trace.frames.push_back(std::move(frame));
                trace.labels.push_back(cls);
            }
            produced += run;
        }
    }
    return trace;
}

Trace generate_labeled_set(std::span<const FeatureMap> templates, std::size_t per_class, float noise,
                           std::uint64_t seed) {
    if (templates.empty()) throw ConfigError("labeled set needs at least one template");
    Trace trace;
    trace.frame_shape = templates.front().shape();
    trace.has_labels = true;
    std::mt19937_64 rng(seed);
    for (std::size_t c = 0; c < templates.size(); ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            FeatureMap frame = templates[c];
            add_noise(frame, noise, rng);
            trace.frames.push_back(std::move(frame));
            trace.labels.push_back(static_cast<ClassId>(c));
        }
    }
    return trace;
}

}  // namespace smtm
