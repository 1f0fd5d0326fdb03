#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace smtm {

using ClassId = std::uint32_t;

/// Running-average semantic vector of one class at one exit point.
/// update_count == 0 marks an uninitialized center.
struct SemanticCenter {
    ClassId class_id = 0;
    std::size_t layer_id = 0;  // 1-based exit index
    std::vector<float> values;
    std::uint64_t update_count = 0;

    bool initialized() const { return update_count > 0; }

    friend bool operator==(const SemanticCenter&, const SemanticCenter&) = default;
};

/// Complete center store: one slot per (class, exit point).
class GlobalMemory {
public:
    GlobalMemory() = default;
    GlobalMemory(std::size_t num_classes, std::vector<std::size_t> layer_channels);

    std::size_t num_classes() const { return num_classes_; }
    std::size_t num_layers() const { return channels_.size(); }
    const std::vector<std::size_t>& layer_channels() const { return channels_; }

    SemanticCenter& center(ClassId cls, std::size_t layer_id);
    const SemanticCenter& center(ClassId cls, std::size_t layer_id) const;

    /// True when the class has initialized centers at every exit point.
    bool class_initialized(ClassId cls) const;

    friend bool operator==(const GlobalMemory&, const GlobalMemory&) = default;

private:
    std::size_t num_classes_ = 0;
    std::vector<std::size_t> channels_;
    std::vector<SemanticCenter> centers_;  // class-major
};

/// Hot subset of the global memory consulted during inference. Holds class
/// ids only; centers are always read from the owning GlobalMemory.
struct FastMemory {
    std::vector<ClassId> classes;  // descending score, ties by ascending id

    std::size_t size() const { return classes.size(); }
    bool empty() const { return classes.empty(); }
    bool contains(ClassId cls) const;

    friend bool operator==(const FastMemory&, const FastMemory&) = default;
};

}  // namespace smtm
