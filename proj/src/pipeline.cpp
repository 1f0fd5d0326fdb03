#include "smtm/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "smtm/errors.hpp"

namespace smtm {

void EngineConfig::validate(std::size_t num_classes) const {
    if (std::isnan(tau) || tau < 0.0) throw ConfigError("tau must be >= 0 or inf");
    if (window == 0) throw ConfigError("window must be at least 1 frame");
    if (!(confidence_level > 0.0 && confidence_level < 1.0)) throw ConfigError("confidence level must be in (0, 1)");
    if (!(decay_base > 0.0 && decay_base < 1.0)) throw ConfigError("decay base must be in (0, 1)");
    if (replacement_period == 0) throw ConfigError("replacement period must be at least 1 frame");
    const auto kmax = effective_k_max(num_classes);
    if (k_min > kmax || kmax > num_classes) {
        throw ConfigError("need k_min <= k_max <= n, got k_min=" + std::to_string(k_min) +
                          " k_max=" + std::to_string(kmax) + " n=" + std::to_string(num_classes));
    }
    if (cache_size_mode == CacheSizeMode::Constant && cache_size > num_classes) {
        throw ConfigError("cache size " + std::to_string(cache_size) + " exceeds " + std::to_string(num_classes) +
                          " classes");
    }
}

ClassId predict_full(const GlobalMemory& global, const SemanticVector& final_sv) {
    const std::size_t last = global.num_layers();
    bool found = false;
    ClassId best = 0;
    double best_sim = 0.0;
    for (std::size_t c = 0; c < global.num_classes(); ++c) {
        const auto& center = global.center(static_cast<ClassId>(c), last);
        if (!center.initialized()) continue;
        const double sim = cosine_similarity(final_sv.values, center.values);
        if (!found || sim > best_sim) {
            found = true;
            best = static_cast<ClassId>(c);
            best_sim = sim;
        }
    }
    if (!found) throw StateError("no class has an initialized final-exit center");
    return best;
}

ClassId argmax_class(const FeatureMap& head_output) {
    const auto values = head_output.data();
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return static_cast<ClassId>(best);
}

Engine::Engine(const ModelGraph& model, GlobalMemory warmed, EngineConfig config)
    : model_(&model),
      config_(config),
      global_(std::move(warmed)),
      head_(global_),
      ft_(global_.num_classes()),
      ts_(global_.num_classes(), config.window) {
    config_.validate(global_.num_classes());
    if (global_.layer_channels() != model.exit_channels()) {
        throw IntegrityError("center store exit channels do not match the model's exit points");
    }
    for (std::size_t c = 0; c < global_.num_classes() && !warmed_; ++c) {
        warmed_ = global_.center(static_cast<ClassId>(c), global_.num_layers()).initialized();
    }
}

ClassId Engine::classify_full(const FinalOutput& out, const SemanticVector& final_sv) const {
    if (out.head) {
        const auto cls = argmax_class(*out.head);
        if (cls >= global_.num_classes()) {
            throw RangeError("model head predicted class " + std::to_string(cls) + " outside the memory's " +
                             std::to_string(global_.num_classes()) + " classes");
        }
        return cls;
    }
    return predict_full(head_, final_sv);
}

FrameResult Engine::process_frame(const FeatureMap& frame, std::optional<ClassId> ground_truth, const RunHooks* hooks) {
    if (!warmed_) throw StateError("engine has not been warmed up");

    FrameResult result;
    result.frame_id = frames_;
    result.ground_truth = ground_truth;
    result.fast_memory_snapshot = fast_.classes;

    const bool stepwise = fast_.size() >= 2;
    std::optional<CumulativeState> state;
    if (stepwise) state = init_cumulative(fast_.classes);

    std::vector<SemanticVector> vectors;
    vectors.reserve(model_->num_exit_points());
    ForwardSession session(*model_, frame);
    bool exited = false;
    while (!session.finished()) {
        auto step = session.advance();
        if (auto* exit = std::get_if<ExitOutput>(&step)) {
            vectors.push_back(encode_gap(exit->features, exit->exit_index));
            if (!stepwise) continue;
            auto row = match_layer(vectors.back(), fast_, global_, exit->exit_index);
            if (hooks && hooks->on_similarity) hooks->on_similarity(result.frame_id, row);
            accumulate(*state, row);
            const auto decision = decide(*state, config_.tau);
            result.ac = decision.confidence;
            if (decision.exit) {
                result.predicted = decision.class_id;
                result.exit_layer = exit->exit_index;
                exited = true;
                break;
            }
        } else {
            auto& final_out = std::get<FinalOutput>(step);
            vectors.push_back(encode_gap(final_out.features, model_->num_exit_points()));
            result.predicted = classify_full(final_out, vectors.back());
        }
    }
    result.executed_flops = session.executed_flops();
    after_frame(result.predicted, vectors, exited, hooks);
    return result;
}

void Engine::after_frame(ClassId predicted, std::span<const SemanticVector> vectors, bool exited,
                         const RunHooks* hooks) {
    record_observation(ft_, ts_, predicted);
    if (config_.adaptive_centers && !(config_.update_full_only && exited)) {
        std::size_t count = vectors.size();
        if (exited && !config_.update_exit_layer) --count;
        update_centers(global_, predicted, vectors.first(count));
    }
    ++frames_;
    if (config_.persistent_decay && frames_ % config_.window == 0) {
        apply_forgetting(ft_, ts_, config_.decay_base);
    }
    if (frames_ % config_.replacement_period == 0) {
        const auto scores = class_scores(ft_, ts_, config_.decay_base);
        const std::size_t k =
            config_.cache_size_mode == CacheSizeMode::Constant
                ? config_.cache_size
                : adaptive_cache_size(scores, config_.confidence_level, config_.k_min,
                                      config_.effective_k_max(global_.num_classes()));
        fast_ = select_fast_memory(global_, scores, k);
        if (hooks && hooks->on_replacement) hooks->on_replacement(frames_ - 1, ft_, ts_, scores);
    }
}

namespace {

void check_trace(const ModelGraph& model, const Trace& trace) {
    if (trace.frames.empty()) throw ConfigError("trace has no frames");
    for (std::size_t i = 0; i < trace.frames.size(); ++i) {
        if (trace.frames[i].shape() != model.input_shape()) {
            throw ShapeError("frame " + std::to_string(i) + ": expected " + model.input_shape().str() + ", got " +
                             trace.frames[i].shape().str());
        }
    }
}

std::optional<ClassId> label_of(const Trace& trace, std::size_t i) {
    if (!trace.has_labels) return std::nullopt;
    return trace.labels[i];
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

RunResult run_stream(const EngineConfig& config, const ModelGraph& model, const GlobalMemory& warmed,
                     const Trace& trace, const RunHooks* hooks) {
    check_trace(model, trace);
    const auto start = std::chrono::steady_clock::now();
    Engine engine(model, warmed, config);
    RunResult out;
    out.frames.reserve(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out.frames.push_back(engine.process_frame(trace.frames[i], label_of(trace, i), hooks));
    }
    out.metrics = summarize(out.frames, model, true);
    out.metrics.center_memory_bytes = center_memory_bytes(engine.global_memory(), engine.fast_memory());
    out.metrics.wall_clock_seconds = seconds_since(start);
    return out;
}

RunResult baseline_run(const ModelGraph& model, const Trace& trace, const GlobalMemory& warmed) {
    check_trace(model, trace);
    if (warmed.layer_channels() != model.exit_channels()) {
        throw IntegrityError("center store exit channels do not match the model's exit points");
    }
    const auto start = std::chrono::steady_clock::now();
    RunResult out;
    out.frames.reserve(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        FrameResult r;
        r.frame_id = i;
        r.ground_truth = label_of(trace, i);
        auto final_out = run_full(model, trace.frames[i]);
        if (final_out.head) {
            r.predicted = argmax_class(*final_out.head);
        } else {
            r.predicted = predict_full(warmed, encode_gap(final_out.features, model.num_exit_points()));
        }
        r.executed_flops = model.total_flops();
        out.frames.push_back(std::move(r));
    }
    out.metrics = summarize(out.frames, model, false);
    out.metrics.center_memory_bytes = 0;
    out.metrics.wall_clock_seconds = seconds_since(start);
    return out;
}

std::uint64_t center_memory_bytes(const GlobalMemory& global, const FastMemory& fast) {
    std::uint64_t channels = 0;
    for (auto c : global.layer_channels()) channels += c;
    const std::uint64_t n = global.num_classes();
    return n * channels * sizeof(float) + fast.size() * sizeof(ClassId) + 2 * n * 8;
}

std::uint64_t raw_feature_map_bytes(const ModelGraph& model) {
    std::uint64_t elements = 0;
    for (auto layer : model.exit_layers()) elements += model.layers()[layer].output_shape.size();
    return elements * sizeof(float);
}

RunMetrics summarize(std::span<const FrameResult> frames, const ModelGraph& model, bool has_cache) {
    RunMetrics m;
    const std::size_t num_exits = model.num_exit_points();
    m.frames = frames.size();
    m.exit_histogram.assign(num_exits, 0);
    m.total_model_flops = model.total_flops();
    std::size_t correct = 0;
    std::size_t hits = 0;
    std::size_t early = 0;
    double flops_fraction = 0.0;
    double fast_size = 0.0;
    for (const auto& f : frames) {
        if (f.exit_layer) {
            ++m.exit_histogram[*f.exit_layer - 1];
            ++early;
        } else {
            ++m.exit_histogram[num_exits - 1];
        }
        if (f.ground_truth) {
            ++m.labeled_frames;
            if (f.predicted == *f.ground_truth) ++correct;
            for (auto cls : f.fast_memory_snapshot) {
                if (cls == *f.ground_truth) {
                    ++hits;
                    break;
                }
            }
        }
        flops_fraction += static_cast<double>(f.executed_flops) / static_cast<double>(m.total_model_flops);
        fast_size += static_cast<double>(f.fast_memory_snapshot.size());
    }
    if (m.frames > 0) {
        m.exit_ratio = static_cast<double>(early) / static_cast<double>(m.frames);
        m.mean_flops_fraction = flops_fraction / static_cast<double>(m.frames);
        m.mean_fast_memory_size = fast_size / static_cast<double>(m.frames);
    }
    if (m.labeled_frames > 0) {
        m.top1_accuracy = static_cast<double>(correct) / static_cast<double>(m.labeled_frames);
        if (has_cache) m.hit_ratio = static_cast<double>(hits) / static_cast<double>(m.labeled_frames);
    }
    return m;
}

}  // namespace smtm
