#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "smtm/feature_map.hpp"

namespace smtm {

enum class LayerKind { Conv2d, Relu, MaxPool, AvgPool, Gap, Dense, ResidualAdd, Softmax };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

/// One layer of a sequential CNN. The shape, parameter and FLOPs fields
/// below the blank line are derived by resolve_layer().
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    std::size_t out_channels = 0;  // conv2d output channels, dense output features
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;
    std::size_t skip_source = 0;  // residual-add: index of the earlier layer whose output is added
    bool is_exit_point = false;

    Shape input_shape;
    Shape output_shape;
    std::size_t param_offset = 0;
    std::size_t param_count = 0;
    std::uint64_t flops = 0;
};

// Builders for in-code model definitions.
LayerSpec conv2d(std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
                 std::size_t padding = 0, std::size_t groups = 1);
LayerSpec relu();
LayerSpec max_pool(std::size_t kernel, std::size_t stride);
LayerSpec avg_pool(std::size_t kernel, std::size_t stride);
LayerSpec global_avg_pool();
LayerSpec dense(std::size_t out_features);
LayerSpec residual_add(std::size_t skip_source);
LayerSpec softmax();
LayerSpec exit_point(LayerSpec spec);

/// Fills in input/output shapes, parameter count and FLOPs for `spec`
/// applied to `input`. Throws ShapeError when the layer cannot consume it.
LayerSpec resolve_layer(LayerSpec spec, const Shape& input);

/// conv2d: 2*k^2*(Cin/groups)*Cout*Hout*Wout; dense: 2*in*out;
/// element-wise, pooling and softmax layers: input element count.
std::uint64_t layer_flops(const LayerSpec& spec);

/// Runs one resolved layer. `params` is the layer's own parameter slice,
/// kernels (out, in/groups, row, col) followed by biases. `skip` is the
/// residual-add source activation.
FeatureMap apply_layer(const LayerSpec& spec, const FeatureMap& input, std::span<const float> params,
                       const FeatureMap* skip = nullptr);

class ModelGraph {
public:
    /// Resolves and validates a layer list against `input`.
    static ModelGraph build(std::string name, Shape input, std::vector<LayerSpec> layers,
                            std::vector<float> weights);

    const std::string& name() const { return name_; }
    const Shape& input_shape() const { return input_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    std::span<const float> weights() const { return weights_; }
    std::span<const float> layer_params(std::size_t layer) const;

    /// Layer indices of the exit points, in order. Exit index l (1-based)
    /// lives at exit_layers()[l - 1].
    const std::vector<std::size_t>& exit_layers() const { return exits_; }
    std::size_t num_exit_points() const { return exits_.size(); }
    const Shape& exit_shape(std::size_t exit_index) const;
    std::vector<std::size_t> exit_channels() const;

    /// Layers after the final exit point (dense/relu/softmax only).
    bool has_head() const { return exits_.back() + 1 < layers_.size(); }
    const Shape& output_shape() const { return layers_.back().output_shape; }

    std::uint64_t total_flops() const { return total_flops_; }
    std::uint64_t flops_through_layer(std::size_t layer) const { return cumulative_flops_[layer]; }
    bool is_skip_source(std::size_t layer) const { return skip_sources_[layer]; }

private:
    std::string name_;
    Shape input_;
    std::vector<LayerSpec> layers_;
    std::vector<std::size_t> exits_;
    std::vector<float> weights_;
    std::vector<std::uint64_t> cumulative_flops_;
    std::vector<bool> skip_sources_;
    std::uint64_t total_flops_ = 0;
};

/// Reads a JSON manifest and its little-endian float32 weight blob.
ModelGraph load_model(const std::filesystem::path& manifest_path, const std::filesystem::path& weights_path);
ModelGraph parse_model(std::string_view manifest_json, std::span<const float> weights);
std::string manifest_json(const ModelGraph& model);
void save_model(const ModelGraph& model, const std::filesystem::path& manifest_path,
                const std::filesystem::path& weights_path);

struct ExitOutput {
    std::size_t exit_index = 0;  // 1-based
    std::size_t layer_index = 0;
    FeatureMap features;
};

struct FinalOutput {
    FeatureMap features;              // output of the final GAP exit point
    std::optional<FeatureMap> head;   // output of the trailing head layers, if any
};

using ForwardStep = std::variant<ExitOutput, FinalOutput>;

/// Stepwise execution of one input. Dropping the session part way through
/// is how the remaining layers get skipped.
class ForwardSession {
public:
    ForwardSession(const ModelGraph& model, FeatureMap input);

    /// Executes up to and including the next exit point. The last exit
    /// point runs the rest of the model and yields FinalOutput.
    ForwardStep advance();

    bool finished() const { return finished_; }
    std::size_t next_exit() const { return next_exit_; }
    std::uint64_t executed_flops() const { return executed_flops_; }

private:
    FeatureMap run_layer(std::size_t index);

    const ModelGraph* model_;
    FeatureMap current_;
    std::size_t next_layer_ = 0;
    std::size_t next_exit_ = 1;
    std::uint64_t executed_flops_ = 0;
    bool finished_ = false;
    std::vector<std::optional<FeatureMap>> saved_;
};

ForwardSession begin_forward(const ModelGraph& model, FeatureMap input);
ForwardStep advance_to_next_exit(ForwardSession& session);

/// Full traversal in one call.
FinalOutput run_full(const ModelGraph& model, FeatureMap input);

}  // namespace smtm
