#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace smtm {

struct Shape {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const { return channels * height * width; }
    std::size_t plane() const { return height * width; }
    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense channels x height x width activation tensor, row-major.
class FeatureMap {
public:
    FeatureMap() = default;
    explicit FeatureMap(Shape shape);
    FeatureMap(Shape shape, std::vector<float> data);

    const Shape& shape() const { return shape_; }
    std::size_t channels() const { return shape_.channels; }
    std::size_t height() const { return shape_.height; }
    std::size_t width() const { return shape_.width; }
    std::size_t size() const { return data_.size(); }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    std::span<float> channel(std::size_t c) { return data().subspan(c * shape_.plane(), shape_.plane()); }
    std::span<const float> channel(std::size_t c) const {
        return data().subspan(c * shape_.plane(), shape_.plane());
    }

    float& at(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * shape_.height + y) * shape_.width + x];
    }
    float at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * shape_.height + y) * shape_.width + x];
    }

    bool all_finite() const;

    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

}  // namespace smtm
