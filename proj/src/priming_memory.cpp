#include "smtm/priming_memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string_view>

#include "smtm/binary_io.hpp"
#include "smtm/errors.hpp"

namespace smtm {

namespace {

constexpr std::string_view kCenterMagic = "SMTMCTR1";

void check_class(const FrequencyTable& ft, const TimeStampTable& ts, ClassId cls) {
    if (ft.counts.size() != ts.absent.size()) {
        throw IntegrityError("frequency table has " + std::to_string(ft.counts.size()) +
                             " classes, time-stamp table has " + std::to_string(ts.absent.size()));
    }
    if (cls >= ft.counts.size()) {
        throw RangeError("class id " + std::to_string(cls) + " outside [0, " + std::to_string(ft.counts.size()) +
                         ")");
    }
}

}  // namespace

GlobalMemory warm_up_from_vectors(std::size_t num_classes, std::span<const std::size_t> layer_channels,
                                  std::span<const std::vector<SemanticVector>> vectors,
                                  std::span<const ClassId> labels, const WarmupOptions& options,
                                  std::vector<ClassId>* missing) {
    if (vectors.size() != labels.size()) {
        throw SizeError("warm-up has " + std::to_string(vectors.size()) + " samples but " +
                        std::to_string(labels.size()) + " labels");
    }
    const std::size_t num_layers = layer_channels.size();
    std::vector<std::vector<double>> sums(num_classes * num_layers);
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t l = 0; l < num_layers; ++l) sums[c * num_layers + l].assign(layer_channels[l], 0.0);
    }
    std::vector<std::uint64_t> counts(num_classes, 0);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        const ClassId cls = labels[i];
        if (cls >= num_classes) {
            throw RangeError("warm-up sample " + std::to_string(i) + " has class " + std::to_string(cls) +
                             " outside [0, " + std::to_string(num_classes) + ")");
        }
        if (vectors[i].size() != num_layers) {
            throw ShapeError("warm-up sample " + std::to_string(i) + " has " + std::to_string(vectors[i].size()) +
                             " exit encodings, expected " + std::to_string(num_layers));
        }
        for (std::size_t l = 0; l < num_layers; ++l) {
            const auto& values = vectors[i][l].values;
            auto& sum = sums[cls * num_layers + l];
            if (values.size() != sum.size()) {
                throw ShapeError("warm-up sample " + std::to_string(i) + " exit " + std::to_string(l + 1) + " has " +
                                 std::to_string(values.size()) + " channels, expected " +
                                 std::to_string(sum.size()));
            }
            for (std::size_t k = 0; k < values.size(); ++k) sum[k] += values[k];
        }
        ++counts[cls];
    }

    GlobalMemory global(num_classes, std::vector<std::size_t>(layer_channels.begin(), layer_channels.end()));
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (counts[c] == 0) {
            if (missing != nullptr) missing->push_back(static_cast<ClassId>(c));
            continue;
        }
        std::uint64_t m = counts[c];
        if (options.update_count_cap) m = std::min(m, std::max<std::uint64_t>(*options.update_count_cap, 1));
        for (std::size_t l = 0; l < num_layers; ++l) {
            auto& center = global.center(static_cast<ClassId>(c), l + 1);
            const auto& sum = sums[c * num_layers + l];
            for (std::size_t k = 0; k < sum.size(); ++k) {
                center.values[k] = static_cast<float>(sum[k] / static_cast<double>(counts[c]));
            }
            center.update_count = m;
        }
    }
    return global;
}

std::vector<SemanticVector> encode_all_exits(const ModelGraph& model, const FeatureMap& input) {
    std::vector<SemanticVector> out;
    out.reserve(model.num_exit_points());
    ForwardSession session(model, input);
    while (!session.finished()) {
        auto step = session.advance();
        if (auto* e = std::get_if<ExitOutput>(&step)) {
            out.push_back(encode_gap(e->features, e->exit_index));
        } else {
            out.push_back(encode_gap(std::get<FinalOutput>(step).features, model.num_exit_points()));
        }
    }
    return out;
}

GlobalMemory warm_up(const ModelGraph& model, std::span<const FeatureMap> samples, std::span<const ClassId> labels,
                     std::size_t num_classes, const WarmupOptions& options, std::vector<ClassId>* missing) {
    std::vector<std::vector<SemanticVector>> vectors;
    vectors.reserve(samples.size());
    for (const auto& s : samples) vectors.push_back(encode_all_exits(model, s));
    const auto channels = model.exit_channels();
    return warm_up_from_vectors(num_classes, channels, vectors, labels, options, missing);
}

void record_observation(FrequencyTable& ft, TimeStampTable& ts, ClassId cls) {
    check_class(ft, ts, cls);
    ft.counts[cls] += 1.0;
    for (std::size_t i = 0; i < ts.absent.size(); ++i) {
        if (i == cls) {
            ts.absent[i] = 0;
        } else {
            ++ts.absent[i];
        }
    }
}

double class_score(double frequency, std::uint64_t absent, std::size_t window, double decay_base) {
    if (window == 0) throw ConfigError("observation window must be at least 1 frame");
    const auto periods = absent / window;
    if (frequency == 0.0 || periods == 0) return frequency;
    return frequency * std::pow(decay_base, static_cast<double>(periods));
}

void apply_forgetting(FrequencyTable& ft, const TimeStampTable& ts, double decay_base) {
    if (ft.counts.size() != ts.absent.size()) {
        throw IntegrityError("frequency and time-stamp tables disagree on the class count");
    }
    for (std::size_t i = 0; i < ft.counts.size(); ++i) {
        ft.counts[i] = class_score(ft.counts[i], ts.absent[i], ts.window, decay_base);
    }
}

std::vector<double> class_scores(const FrequencyTable& ft, const TimeStampTable& ts, double decay_base) {
    if (ft.counts.size() != ts.absent.size()) {
        throw IntegrityError("frequency and time-stamp tables disagree on the class count");
    }
    std::vector<double> scores(ft.counts.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = class_score(ft.counts[i], ts.absent[i], ts.window, decay_base);
    }
    return scores;
}

std::size_t adaptive_cache_size(std::span<const double> scores, double confidence_level, std::size_t k_min,
                                std::size_t k_max) {
    if (k_min > k_max) {
        throw ConfigError("k_min " + std::to_string(k_min) + " exceeds k_max " + std::to_string(k_max));
    }
    std::vector<double> sorted(scores.begin(), scores.end());
    for (double s : sorted) {
        if (!(s >= 0.0)) throw RangeError("class scores must be non-negative");
    }
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
    if (total <= 0.0) return k_min;

    std::size_t k = sorted.size();
    double covered = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        covered += sorted[i];
        if (covered / total >= confidence_level) {
            k = i + 1;
            break;
        }
    }
    return std::clamp(k, k_min, k_max);
}

FastMemory select_fast_memory(const GlobalMemory& global, std::span<const double> scores, std::size_t k) {
    if (scores.size() != global.num_classes()) {
        throw IntegrityError("got " + std::to_string(scores.size()) + " scores for " +
                             std::to_string(global.num_classes()) + " classes");
    }
    std::vector<ClassId> eligible;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > 0.0 && global.class_initialized(static_cast<ClassId>(i))) {
            eligible.push_back(static_cast<ClassId>(i));
        }
    }
    const std::size_t take = std::min(k, eligible.size());
    std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(take), eligible.end(),
                      [&](ClassId a, ClassId b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
    eligible.resize(take);
    return FastMemory{std::move(eligible)};
}

void update_centers(GlobalMemory& global, ClassId cls, std::span<const SemanticVector> vectors) {
    if (vectors.size() > global.num_layers()) {
        throw ShapeError("got " + std::to_string(vectors.size()) + " exit encodings for a memory with " +
                         std::to_string(global.num_layers()) + " exit points");
    }
    for (std::size_t l = 0; l < vectors.size(); ++l) {
        if (vectors[l].values.size() != global.layer_channels()[l]) {
            throw ShapeError("exit " + std::to_string(l + 1) + " encoding has " +
                             std::to_string(vectors[l].values.size()) + " channels, expected " +
                             std::to_string(global.layer_channels()[l]));
        }
    }
    for (std::size_t l = 0; l < vectors.size(); ++l) {
        auto& center = global.center(cls, l + 1);
        const auto m = static_cast<double>(center.update_count);
        for (std::size_t k = 0; k < center.values.size(); ++k) {
            center.values[k] = static_cast<float>((static_cast<double>(center.values[k]) * m + vectors[l].values[k]) /
                                                  (m + 1.0));
        }
        ++center.update_count;
    }
}

std::string serialize_centers(const GlobalMemory& global) {
    io::Writer w;
    w.bytes(kCenterMagic);
    w.u32(static_cast<std::uint32_t>(global.num_classes()));
    w.u32(static_cast<std::uint32_t>(global.num_layers()));
    for (auto c : global.layer_channels()) w.u32(static_cast<std::uint32_t>(c));
    for (std::size_t c = 0; c < global.num_classes(); ++c) {
        for (std::size_t l = 1; l <= global.num_layers(); ++l) {
            const auto& center = global.center(static_cast<ClassId>(c), l);
            if (center.update_count > std::numeric_limits<std::uint32_t>::max()) {
                throw RangeError("update count of class " + std::to_string(c) + " does not fit the center store");
            }
            w.u32(static_cast<std::uint32_t>(center.update_count));
            w.f32s(center.values);
        }
    }
    return w.str();
}

GlobalMemory deserialize_centers(std::string_view bytes) {
    io::Reader r(bytes);
    if (r.remaining() < kCenterMagic.size() || r.bytes(kCenterMagic.size()) != kCenterMagic) {
        throw ParseError("center store does not start with SMTMCTR1");
    }
    const std::size_t n = r.u32();
    const std::size_t layers = r.u32();
    std::vector<std::size_t> channels(layers);
    std::size_t per_class = 0;
    for (auto& c : channels) {
        c = r.u32();
        per_class += 4 + 4 * c;
    }
    if (r.remaining() != n * per_class) {
        throw SizeError("center store body has " + std::to_string(r.remaining()) + " bytes, header implies " +
                        std::to_string(n * per_class));
    }
    GlobalMemory global(n, channels);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t l = 1; l <= layers; ++l) {
            auto& center = global.center(static_cast<ClassId>(c), l);
            center.update_count = r.u32();
            r.f32s(center.values);
        }
    }
    return global;
}

void save_centers(const GlobalMemory& global, const std::filesystem::path& path) {
    io::write_file(path, serialize_centers(global));
}

GlobalMemory load_centers(const std::filesystem::path& path) { return deserialize_centers(io::read_file(path)); }

}  // namespace smtm
