#include "smtm/feature_map.hpp"

#include <algorithm>
#include <cmath>

#include "smtm/errors.hpp"

namespace smtm {

std::string Shape::str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

FeatureMap::FeatureMap(Shape shape) : shape_(shape), data_(shape.size(), 0.0f) {
    if (shape.channels == 0 || shape.height == 0 || shape.width == 0) {
        throw ShapeError("feature map dimensions must be positive, got " + shape.str());
    }
}

FeatureMap::FeatureMap(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
    if (shape.channels == 0 || shape.height == 0 || shape.width == 0) {
        throw ShapeError("feature map dimensions must be positive, got " + shape.str());
    }
    if (data_.size() != shape.size()) {
        throw SizeError("feature map " + shape.str() + " needs " + std::to_string(shape.size()) +
                        " values, got " + std::to_string(data_.size()));
    }
}

bool FeatureMap::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace smtm
