#include "smtm/memory.hpp"

#include <algorithm>
#include <string>

#include "smtm/errors.hpp"

namespace smtm {

GlobalMemory::GlobalMemory(std::size_t num_classes, std::vector<std::size_t> layer_channels)
    : num_classes_(num_classes), channels_(std::move(layer_channels)) {
    centers_.reserve(num_classes_ * channels_.size());
    for (std::size_t c = 0; c < num_classes_; ++c) {
        for (std::size_t l = 0; l < channels_.size(); ++l) {
            SemanticCenter center;
            center.class_id = static_cast<ClassId>(c);
            center.layer_id = l + 1;
            center.values.assign(channels_[l], 0.0f);
            centers_.push_back(std::move(center));
        }
    }
}

SemanticCenter& GlobalMemory::center(ClassId cls, std::size_t layer_id) {
    return const_cast<SemanticCenter&>(std::as_const(*this).center(cls, layer_id));
}

const SemanticCenter& GlobalMemory::center(ClassId cls, std::size_t layer_id) const {
    if (cls >= num_classes_) {
        throw RangeError("class id " + std::to_string(cls) + " outside [0, " + std::to_string(num_classes_) + ")");
    }
    if (layer_id == 0 || layer_id > channels_.size()) {
        throw RangeError("exit index " + std::to_string(layer_id) + " outside [1, " +
                         std::to_string(channels_.size()) + "]");
    }
    return centers_[cls * channels_.size() + (layer_id - 1)];
}

bool GlobalMemory::class_initialized(ClassId cls) const {
    for (std::size_t l = 1; l <= channels_.size(); ++l) {
        if (!center(cls, l).initialized()) return false;
    }
    return true;
}

bool FastMemory::contains(ClassId cls) const {
    return std::find(classes.begin(), classes.end(), cls) != classes.end();
}

}  // namespace smtm
