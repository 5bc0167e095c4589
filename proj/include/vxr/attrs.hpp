#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace vxr {

// Structured caption for a synthetic stimulus: one shape, one color, a cell
// on a 4x4 grid, a size class, and a background texture.
struct AttributeVector {
    std::uint8_t shape_id = 0;       // circle, square, triangle, bar
    std::uint8_t color_id = 0;       // 8-color palette
    std::uint8_t pos_row = 0;        // 0..3
    std::uint8_t pos_col = 0;        // 0..3
    std::uint8_t scale_id = 0;       // small, large
    std::uint8_t background_id = 0;  // 4 textures

    static constexpr std::size_t kShapes = 4;
    static constexpr std::size_t kColors = 8;
    static constexpr std::size_t kGrid = 4;
    static constexpr std::size_t kScales = 2;
    static constexpr std::size_t kBackgrounds = 4;
    static constexpr std::size_t kCombinations = kShapes * kColors * kGrid * kGrid * kScales * kBackgrounds;

    void validate() const {
        if (shape_id >= kShapes || color_id >= kColors || pos_row >= kGrid || pos_col >= kGrid ||
            scale_id >= kScales || background_id >= kBackgrounds)
            throw std::out_of_range("attribute id out of range");
    }

    // Dense index over the full attribute grid; inverse of from_index.
    std::size_t index() const {
        return ((((std::size_t)shape_id * kColors + color_id) * kGrid + pos_row) * kGrid + pos_col) *
                   kScales * kBackgrounds +
               (std::size_t)scale_id * kBackgrounds + background_id;
    }

    static AttributeVector from_index(std::size_t idx) {
        if (idx >= kCombinations) throw std::out_of_range("attribute index out of range");
        AttributeVector a;
        a.background_id = (std::uint8_t)(idx % kBackgrounds);
        idx /= kBackgrounds;
        a.scale_id = (std::uint8_t)(idx % kScales);
        idx /= kScales;
        a.pos_col = (std::uint8_t)(idx % kGrid);
        idx /= kGrid;
        a.pos_row = (std::uint8_t)(idx % kGrid);
        idx /= kGrid;
        a.color_id = (std::uint8_t)(idx % kColors);
        idx /= kColors;
        a.shape_id = (std::uint8_t)idx;
        return a;
    }

    bool operator==(const AttributeVector&) const = default;
};

}  // namespace vxr
