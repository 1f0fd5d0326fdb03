#include "smtm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "smtm/binary_io.hpp"
#include "smtm/errors.hpp"

namespace smtm {

namespace {

using json = nlohmann::json;

std::string shape_mismatch(const Shape& expected, const Shape& actual) {
    return "expected " + expected.str() + ", got " + actual.str();
}

std::size_t pooled_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (in + 2 * pad < kernel) return 0;
    return (in + 2 * pad - kernel) / stride + 1;
}

void conv2d_forward(const LayerSpec& spec, const FeatureMap& in, std::span<const float> params, FeatureMap& out) {
    const std::size_t k = spec.kernel;
    const std::size_t cin_per_group = spec.input_shape.channels / spec.groups;
    const std::size_t cout_per_group = spec.out_channels / spec.groups;
    const std::size_t kernel_count = spec.out_channels * cin_per_group * k * k;
    const auto in_h = static_cast<std::ptrdiff_t>(in.height());
    const auto in_w = static_cast<std::ptrdiff_t>(in.width());
    const auto out_h = static_cast<std::ptrdiff_t>(out.height());
    const auto out_w = static_cast<std::ptrdiff_t>(out.width());
    const auto stride = static_cast<std::ptrdiff_t>(spec.stride);
    const auto pad = static_cast<std::ptrdiff_t>(spec.padding);

    // Every output element accumulates bias, then (in-channel, kernel-row,
    // kernel-col) in that order. Looping the spatial plane innermost keeps
    // that per-element order while letting the row loop vectorise.
    for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
        const std::size_t group = oc / cout_per_group;
        auto out_plane = out.channel(oc);
        std::fill(out_plane.begin(), out_plane.end(), params[kernel_count + oc]);
        for (std::size_t icg = 0; icg < cin_per_group; ++icg) {
            const auto in_plane = in.channel(group * cin_per_group + icg);
            for (std::size_t kr = 0; kr < k; ++kr) {
                for (std::size_t kc = 0; kc < k; ++kc) {
                    const float w = params[((oc * cin_per_group + icg) * k + kr) * k + kc];
                    const auto dc = static_cast<std::ptrdiff_t>(kc) - pad;
                    // Output columns whose input column ow*stride + dc is in range.
                    std::ptrdiff_t ow_begin = dc >= 0 ? 0 : (-dc + stride - 1) / stride;
                    std::ptrdiff_t ow_end = in_w - dc <= 0 ? 0 : (in_w - dc - 1) / stride + 1;
                    ow_end = std::min(ow_end, out_w);
                    if (ow_begin >= ow_end) continue;
                    for (std::ptrdiff_t oh = 0; oh < out_h; ++oh) {
                        const std::ptrdiff_t ih = oh * stride + static_cast<std::ptrdiff_t>(kr) - pad;
                        if (ih < 0 || ih >= in_h) continue;
                        float* orow = out_plane.data() + oh * out_w;
                        const float* irow = in_plane.data() + ih * in_w;
                        if (stride == 1) {
                            for (std::ptrdiff_t ow = ow_begin; ow < ow_end; ++ow) orow[ow] += w * irow[ow + dc];
                        } else {
                            for (std::ptrdiff_t ow = ow_begin; ow < ow_end; ++ow)
                                orow[ow] += w * irow[ow * stride + dc];
                        }
                    }
                }
            }
        }
    }
}

void pool_forward(const LayerSpec& spec, const FeatureMap& in, FeatureMap& out, bool is_max) {
    const std::size_t k = spec.kernel;
    const float inv = 1.0f / static_cast<float>(k * k);
    for (std::size_t c = 0; c < out.channels(); ++c) {
        for (std::size_t oh = 0; oh < out.height(); ++oh) {
            for (std::size_t ow = 0; ow < out.width(); ++ow) {
                float acc = is_max ? -std::numeric_limits<float>::infinity() : 0.0f;
                for (std::size_t r = 0; r < k; ++r) {
                    for (std::size_t s = 0; s < k; ++s) {
                        const float v = in.at(c, oh * spec.stride + r, ow * spec.stride + s);
                        acc = is_max ? std::max(acc, v) : acc + v;
                    }
                }
                out.at(c, oh, ow) = is_max ? acc : acc * inv;
            }
        }
    }
}

}  // namespace

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::AvgPool: return "avgpool";
        case LayerKind::Gap: return "gap";
        case LayerKind::Dense: return "dense";
        case LayerKind::ResidualAdd: return "residual-add";
        case LayerKind::Softmax: return "softmax";
    }
    return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
    for (auto kind : {LayerKind::Conv2d, LayerKind::Relu, LayerKind::MaxPool, LayerKind::AvgPool, LayerKind::Gap,
                      LayerKind::Dense, LayerKind::ResidualAdd, LayerKind::Softmax}) {
        if (to_string(kind) == name) return kind;
    }
    throw ParseError("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec conv2d(std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t padding,
                 std::size_t groups) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.out_channels = out_channels;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    s.groups = groups;
    return s;
}

LayerSpec relu() { return LayerSpec{}; }

LayerSpec max_pool(std::size_t kernel, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool;
    s.kernel = kernel;
    s.stride = stride;
    return s;
}

LayerSpec avg_pool(std::size_t kernel, std::size_t stride) {
    LayerSpec s = max_pool(kernel, stride);
    s.kind = LayerKind::AvgPool;
    return s;
}

LayerSpec global_avg_pool() {
    LayerSpec s;
    s.kind = LayerKind::Gap;
    return s;
}

LayerSpec dense(std::size_t out_features) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.out_channels = out_features;
    return s;
}

LayerSpec residual_add(std::size_t skip_source) {
    LayerSpec s;
    s.kind = LayerKind::ResidualAdd;
    s.skip_source = skip_source;
    return s;
}

LayerSpec softmax() {
    LayerSpec s;
    s.kind = LayerKind::Softmax;
    return s;
}

LayerSpec exit_point(LayerSpec spec) {
    spec.is_exit_point = true;
    return spec;
}

LayerSpec resolve_layer(LayerSpec spec, const Shape& input) {
    if (input.size() == 0) throw ShapeError("layer input must be non-empty, got " + input.str());
    spec.input_shape = input;
    spec.param_count = 0;
    switch (spec.kind) {
        case LayerKind::Conv2d: {
            if (spec.kernel == 0 || spec.stride == 0 || spec.out_channels == 0 || spec.groups == 0) {
                throw ShapeError("conv2d needs positive kernel, stride, out_channels and groups");
            }
            if (input.channels % spec.groups != 0 || spec.out_channels % spec.groups != 0) {
                throw ShapeError("conv2d groups=" + std::to_string(spec.groups) + " must divide in_channels=" +
                                 std::to_string(input.channels) + " and out_channels=" +
                                 std::to_string(spec.out_channels));
            }
            const auto oh = pooled_extent(input.height, spec.kernel, spec.stride, spec.padding);
            const auto ow = pooled_extent(input.width, spec.kernel, spec.stride, spec.padding);
            if (oh == 0 || ow == 0) throw ShapeError("conv2d kernel larger than padded input " + input.str());
            spec.output_shape = {spec.out_channels, oh, ow};
            spec.param_count =
                spec.out_channels * (input.channels / spec.groups) * spec.kernel * spec.kernel + spec.out_channels;
            break;
        }
        case LayerKind::MaxPool:
        case LayerKind::AvgPool: {
            if (spec.kernel == 0 || spec.stride == 0) throw ShapeError("pooling needs positive kernel and stride");
            const auto oh = pooled_extent(input.height, spec.kernel, spec.stride, 0);
            const auto ow = pooled_extent(input.width, spec.kernel, spec.stride, 0);
            if (oh == 0 || ow == 0) throw ShapeError("pooling window larger than input " + input.str());
            spec.output_shape = {input.channels, oh, ow};
            break;
        }
        case LayerKind::Gap:
            spec.output_shape = {input.channels, 1, 1};
            break;
        case LayerKind::Dense:
            if (spec.out_channels == 0) throw ShapeError("dense needs positive out_features");
            spec.output_shape = {spec.out_channels, 1, 1};
            spec.param_count = spec.out_channels * input.size() + spec.out_channels;
            break;
        case LayerKind::Relu:
        case LayerKind::ResidualAdd:
        case LayerKind::Softmax:
            spec.output_shape = input;
            break;
    }
    spec.flops = layer_flops(spec);
    return spec;
}

std::uint64_t layer_flops(const LayerSpec& spec) {
    const auto& out = spec.output_shape;
    switch (spec.kind) {
        case LayerKind::Conv2d:
            return 2ull * spec.kernel * spec.kernel * (spec.input_shape.channels / spec.groups) * spec.out_channels *
                   out.height * out.width;
        case LayerKind::Dense:
            return 2ull * spec.input_shape.size() * spec.out_channels;
        default:
            return spec.input_shape.size();
    }
}

FeatureMap apply_layer(const LayerSpec& spec, const FeatureMap& input, std::span<const float> params,
                       const FeatureMap* skip) {
    if (input.shape() != spec.input_shape) {
        throw ShapeError(std::string(to_string(spec.kind)) + " input shape mismatch: " +
                         shape_mismatch(spec.input_shape, input.shape()));
    }
    if (params.size() != spec.param_count) {
        throw SizeError(std::string(to_string(spec.kind)) + " expects " + std::to_string(spec.param_count) +
                        " parameters, got " + std::to_string(params.size()));
    }
    FeatureMap out(spec.output_shape);
    switch (spec.kind) {
        case LayerKind::Conv2d:
            conv2d_forward(spec, input, params, out);
            break;
        case LayerKind::Relu: {
            auto src = input.data();
            auto dst = out.data();
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
            break;
        }
        case LayerKind::MaxPool:
            pool_forward(spec, input, out, true);
            break;
        case LayerKind::AvgPool:
            pool_forward(spec, input, out, false);
            break;
        case LayerKind::Gap:
            for (std::size_t c = 0; c < input.channels(); ++c) {
                double acc = 0.0;
                for (float v : input.channel(c)) acc += v;
                out.data()[c] = static_cast<float>(acc / static_cast<double>(input.shape().plane()));
            }
            break;
        case LayerKind::Dense: {
            const auto x = input.data();
            const std::size_t n_in = x.size();
            const std::size_t bias_at = spec.out_channels * n_in;
            for (std::size_t o = 0; o < spec.out_channels; ++o) {
                float acc = params[bias_at + o];
                const float* row = params.data() + o * n_in;
                for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * x[i];
                out.data()[o] = acc;
            }
            break;
        }
        case LayerKind::ResidualAdd: {
            if (skip == nullptr) throw StateError("residual-add requires its skip-source activation");
            if (skip->shape() != input.shape()) {
                throw ShapeError("residual-add skip shape mismatch: " + shape_mismatch(input.shape(), skip->shape()));
            }
            auto a = input.data();
            auto b = skip->data();
            auto dst = out.data();
            for (std::size_t i = 0; i < a.size(); ++i) dst[i] = a[i] + b[i];
            break;
        }
        case LayerKind::Softmax: {
            auto src = input.data();
            auto dst = out.data();
            const float peak = *std::max_element(src.begin(), src.end());
            double total = 0.0;
            for (std::size_t i = 0; i < src.size(); ++i) {
                dst[i] = std::exp(src[i] - peak);
                total += dst[i];
            }
            for (float& v : dst) v = static_cast<float>(v / total);
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// ModelGraph

ModelGraph ModelGraph::build(std::string name, Shape input, std::vector<LayerSpec> layers,
                             std::vector<float> weights) {
    ModelGraph g;
    g.name_ = std::move(name);
    g.input_ = input;
    if (input.size() == 0) throw ShapeError("model input shape must be positive, got " + input.str());

    Shape current = input;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& layer = layers[i];
        if (layer.kind == LayerKind::ResidualAdd) {
            if (layer.skip_source >= i) {
                throw ShapeError("layer " + std::to_string(i) + ": residual-add source " +
                                 std::to_string(layer.skip_source) + " must be an earlier layer");
            }
            if (layers[layer.skip_source].output_shape != current) {
                throw ShapeError("layer " + std::to_string(i) + ": residual-add source shape mismatch: " +
                                 shape_mismatch(current, layers[layer.skip_source].output_shape));
            }
        }
        try {
            layer = resolve_layer(layer, current);
        } catch (const ShapeError& e) {
            throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
        }
        layer.param_offset = offset;
        offset += layer.param_count;
        current = layer.output_shape;
        if (layer.is_exit_point) g.exits_.push_back(i);
    }
    if (g.exits_.empty()) throw ShapeError("model must contain at least one exit point");

    const std::size_t final_exit = g.exits_.back();
    std::size_t last_gap = layers.size();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::Gap) last_gap = i;
    }
    if (last_gap != final_exit) {
        throw ShapeError("the last exit point must be the final gap layer (last exit is layer " +
                         std::to_string(final_exit) + ")");
    }
    for (std::size_t i = final_exit + 1; i < layers.size(); ++i) {
        const auto kind = layers[i].kind;
        if (kind != LayerKind::Dense && kind != LayerKind::Relu && kind != LayerKind::Softmax) {
            throw ShapeError("layer " + std::to_string(i) + ": only dense, relu and softmax may follow the final exit");
        }
    }
    if (weights.size() != offset) {
        throw SizeError("weight count mismatch: expected " + std::to_string(offset * 4) + " bytes (" +
                        std::to_string(offset) + " floats), got " + std::to_string(weights.size() * 4) + " bytes");
    }

    g.skip_sources_.assign(layers.size(), false);
    for (const auto& layer : layers) {
        if (layer.kind == LayerKind::ResidualAdd) g.skip_sources_[layer.skip_source] = true;
    }
    g.cumulative_flops_.resize(layers.size());
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        total += layers[i].flops;
        g.cumulative_flops_[i] = total;
    }
    g.total_flops_ = total;
    g.layers_ = std::move(layers);
    g.weights_ = std::move(weights);
    return g;
}

std::span<const float> ModelGraph::layer_params(std::size_t layer) const {
    const auto& spec = layers_.at(layer);
    return std::span<const float>(weights_).subspan(spec.param_offset, spec.param_count);
}

const Shape& ModelGraph::exit_shape(std::size_t exit_index) const {
    if (exit_index == 0 || exit_index > exits_.size()) {
        throw RangeError("exit index " + std::to_string(exit_index) + " outside [1, " +
                         std::to_string(exits_.size()) + "]");
    }
    return layers_[exits_[exit_index - 1]].output_shape;
}

std::vector<std::size_t> ModelGraph::exit_channels() const {
    std::vector<std::size_t> out;
    out.reserve(exits_.size());
    for (auto i : exits_) out.push_back(layers_[i].output_shape.channels);
    return out;
}

// ---------------------------------------------------------------------------
// Manifest I/O

namespace {

std::size_t field(const json& layer, const char* key, std::size_t fallback, std::size_t index) {
    if (!layer.contains(key)) return fallback;
    const auto& v = layer.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        throw ParseError("layer " + std::to_string(index) + ": field '" + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

std::size_t required(const json& layer, const char* key, std::size_t index) {
    if (!layer.contains(key)) {
        throw ParseError("layer " + std::to_string(index) + ": missing field '" + key + "'");
    }
    return field(layer, key, 0, index);
}

}  // namespace

ModelGraph parse_model(std::string_view manifest, std::span<const float> weights) {
    json doc;
    try {
        doc = json::parse(manifest);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("input") || !doc.contains("layers") || !doc["layers"].is_array()) {
        throw ParseError("manifest needs an 'input' object and a 'layers' array");
    }
    const auto& in = doc["input"];
    Shape input;
    try {
        input = {in.at("channels").get<std::size_t>(), in.at("height").get<std::size_t>(),
                 in.at("width").get<std::size_t>()};
    } catch (const json::exception& e) {
        throw ParseError(std::string("manifest input shape: ") + e.what());
    }

    std::vector<LayerSpec> layers;
    std::size_t index = 0;
    for (const auto& entry : doc["layers"]) {
        if (!entry.is_object() || !entry.contains("kind") || !entry["kind"].is_string()) {
            throw ParseError("layer " + std::to_string(index) + ": expected an object with a string 'kind'");
        }
        LayerSpec spec;
        try {
            spec.kind = parse_layer_kind(entry["kind"].get<std::string>());
        } catch (const ParseError& e) {
            throw ParseError("layer " + std::to_string(index) + ": " + e.what());
        }
        switch (spec.kind) {
            case LayerKind::Conv2d:
                spec.out_channels = required(entry, "out_channels", index);
                spec.kernel = required(entry, "kernel", index);
                spec.stride = field(entry, "stride", 1, index);
                spec.padding = field(entry, "padding", 0, index);
                spec.groups = field(entry, "groups", 1, index);
                break;
            case LayerKind::MaxPool:
            case LayerKind::AvgPool:
                spec.kernel = required(entry, "kernel", index);
                spec.stride = field(entry, "stride", spec.kernel, index);
                break;
            case LayerKind::Dense:
                spec.out_channels = required(entry, "out_features", index);
                break;
            case LayerKind::ResidualAdd:
                spec.skip_source = required(entry, "source", index);
                break;
            default:
                break;
        }
        if (entry.contains("exit")) {
            if (!entry["exit"].is_boolean()) {
                throw ParseError("layer " + std::to_string(index) + ": field 'exit' must be a boolean");
            }
            spec.is_exit_point = entry["exit"].get<bool>();
        }
        layers.push_back(spec);
        ++index;
    }
    if (layers.empty()) throw ParseError("model must contain at least one exit point");

    auto name = doc.value("name", std::string("model"));
    auto graph = ModelGraph::build(std::move(name), input, std::move(layers),
                                   std::vector<float>(weights.begin(), weights.end()));
    // Optional declared in_channels are checked against the resolved shapes.
    index = 0;
    for (const auto& entry : doc["layers"]) {
        if (entry.contains("in_channels")) {
            const auto declared = field(entry, "in_channels", 0, index);
            if (declared != graph.layers()[index].input_shape.channels) {
                throw ShapeError("layer " + std::to_string(index) + ": declared in_channels " +
                                 std::to_string(declared) + " but input has " +
                                 std::to_string(graph.layers()[index].input_shape.channels));
            }
        }
        ++index;
    }
    return graph;
}

ModelGraph load_model(const std::filesystem::path& manifest_path, const std::filesystem::path& weights_path) {
    const auto manifest = io::read_file(manifest_path);
    const auto blob = io::read_file(weights_path);
    if (blob.size() % 4 != 0) {
        throw SizeError("weight blob " + weights_path.string() + " has " + std::to_string(blob.size()) +
                        " bytes, not a multiple of 4");
    }
    std::vector<float> weights(blob.size() / 4);
    io::Reader reader(blob);
    reader.f32s(weights);
    return parse_model(manifest, weights);
}

std::string manifest_json(const ModelGraph& model) {
    json doc;
    doc["name"] = model.name();
    doc["input"] = {{"channels", model.input_shape().channels},
                    {"height", model.input_shape().height},
                    {"width", model.input_shape().width}};
    json layers = json::array();
    for (const auto& spec : model.layers()) {
        json entry;
        entry["kind"] = std::string(to_string(spec.kind));
        switch (spec.kind) {
            case LayerKind::Conv2d:
                entry["in_channels"] = spec.input_shape.channels;
                entry["out_channels"] = spec.out_channels;
                entry["kernel"] = spec.kernel;
                entry["stride"] = spec.stride;
                entry["padding"] = spec.padding;
                entry["groups"] = spec.groups;
                break;
            case LayerKind::MaxPool:
            case LayerKind::AvgPool:
                entry["kernel"] = spec.kernel;
                entry["stride"] = spec.stride;
                break;
            case LayerKind::Dense:
                entry["out_features"] = spec.out_channels;
                break;
            case LayerKind::ResidualAdd:
                entry["source"] = spec.skip_source;
                break;
            default:
                break;
        }
        entry["exit"] = spec.is_exit_point;
        layers.push_back(std::move(entry));
    }
    doc["layers"] = std::move(layers);
    return doc.dump(2) + "\n";
}

void save_model(const ModelGraph& model, const std::filesystem::path& manifest_path,
                const std::filesystem::path& weights_path) {
    io::write_file(manifest_path, manifest_json(model));
    io::Writer w;
    w.f32s(model.weights());
    io::write_file(weights_path, w.str());
}

// ---------------------------------------------------------------------------
// Stepwise execution

ForwardSession::ForwardSession(const ModelGraph& model, FeatureMap input)
    : model_(&model), current_(std::move(input)), saved_(model.layers().size()) {
    if (current_.shape() != model.input_shape()) {
        throw ShapeError("input shape mismatch: " + shape_mismatch(model.input_shape(), current_.shape()));
    }
}

FeatureMap ForwardSession::run_layer(std::size_t index) {
    const auto& spec = model_->layers()[index];
    const FeatureMap* skip = nullptr;
    if (spec.kind == LayerKind::ResidualAdd) skip = &*saved_[spec.skip_source];
    auto out = apply_layer(spec, current_, model_->layer_params(index), skip);
    executed_flops_ += spec.flops;
    if (model_->is_skip_source(index)) saved_[index] = out;
    return out;
}

ForwardStep ForwardSession::advance() {
    if (finished_) throw StateError("forward session already finished");
    const auto& exits = model_->exit_layers();
    const std::size_t target = exits[next_exit_ - 1];
    while (next_layer_ <= target) current_ = run_layer(next_layer_++);

    if (next_exit_ < exits.size()) {
        ExitOutput step{next_exit_, target, current_};
        ++next_exit_;
        return step;
    }
    FinalOutput final_out{current_, std::nullopt};
    if (model_->has_head()) {
        while (next_layer_ < model_->layers().size()) current_ = run_layer(next_layer_++);
        final_out.head = current_;
    }
    finished_ = true;
    saved_.clear();
    return final_out;
}

ForwardSession begin_forward(const ModelGraph& model, FeatureMap input) { return ForwardSession(model, std::move(input)); }

ForwardStep advance_to_next_exit(ForwardSession& session) { return session.advance(); }

FinalOutput run_full(const ModelGraph& model, FeatureMap input) {
    ForwardSession session(model, std::move(input));
    while (true) {
        auto step = session.advance();
        if (auto* final_out = std::get_if<FinalOutput>(&step)) return std::move(*final_out);
    }
}

}  // namespace smtm
