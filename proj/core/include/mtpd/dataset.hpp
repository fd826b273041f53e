#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mtpd/tensor.hpp"

namespace mtpd {

/// Normalised box: centre and size as fractions of the image side.
struct Box {
    double cx = 0, cy = 0, w = 0, h = 0;
};

struct SyntheticSample {
    Tensor image;      // [3, H, W] in [0, 1]
    Box box;           // the one detection target
    int label = 0;     // 0: red object, 1: blue object
    Tensor da_mask;    // [1, H, W] drivable area, 0/1
    Tensor lane_mask;  // [1, H, W] lane markings, 0/1
};

inline constexpr std::size_t synthetic_image_size = 64;

/// Road scenes: a trapezoidal road region at the bottom, one to three thin
/// near-vertical lane lines on it, and a coloured rectangle above. Pure in `seed`.
std::vector<SyntheticSample> generate_dataset(std::uint64_t seed, std::size_t n,
                                              std::size_t image_size = synthetic_image_size);

struct Batch {
    Tensor images;            // [B, 3, H, W]
    Tensor boxes;             // [B, 4]
    std::vector<int> labels;  // [B]
    Tensor da_masks;          // [B, 1, H, W]
    Tensor lane_masks;        // [B, 1, H, W]

    std::size_t size() const { return labels.size(); }
};

Batch make_batch(std::span<const SyntheticSample> samples, std::span<const std::size_t> indices);
Batch make_batch(std::span<const SyntheticSample> samples);

}  // namespace mtpd
