#include "mtpd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mtpd/error.hpp"

namespace mtpd {

namespace {

class SceneRng {
public:
    explicit SceneRng(std::uint64_t seed) : engine_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
    double normal(double sd) { return std::normal_distribution<double>(0.0, sd)(engine_); }

private:
    std::mt19937_64 engine_;
};

SyntheticSample render_scene(SceneRng& rng, std::size_t size) {
    const int S = static_cast<int>(size);
    const double unit = static_cast<double>(S) / 64.0;
    SyntheticSample s;
    s.image = Tensor({3, size, size});
    s.da_mask = Tensor({1, size, size});
    s.lane_mask = Tensor({1, size, size});
    auto img = s.image.data();
    auto da = s.da_mask.data();
    auto lane = s.lane_mask.data();
    auto px = [&](int c, int y, int x) -> double& { return img[(static_cast<std::size_t>(c) * size + y) * size + x]; };
    auto at = [&](std::span<double> m, int y, int x) -> double& { return m[static_cast<std::size_t>(y) * size + x]; };

    // Sky-to-ground gradient.
    const double tint = rng.uniform(-0.08, 0.08);
    for (int y = 0; y < S; ++y) {
        const double t = static_cast<double>(y) / S;
        for (int x = 0; x < S; ++x) {
            px(0, y, x) = 0.55 - 0.25 * t + tint;
            px(1, y, x) = 0.65 - 0.20 * t + tint;
            px(2, y, x) = 0.80 - 0.45 * t;
        }
    }

    // Road trapezoid from the horizon row down to the bottom edge.
    const int horizon = static_cast<int>(std::lround(rng.uniform(28.0, 40.0) * unit));
    const double road_centre = rng.uniform(24.0, 40.0) * unit;
    const double top_half = rng.uniform(4.0, 10.0) * unit;
    const double bottom_half = rng.uniform(24.0, 32.0) * unit;
    const double grey = rng.uniform(0.35, 0.5);
    auto road_half = [&](int y) {
        const double t = static_cast<double>(y - horizon) / std::max(1, S - 1 - horizon);
        return top_half + t * (bottom_half - top_half);
    };
    for (int y = horizon; y < S; ++y) {
        const double hw = road_half(y);
        for (int x = 0; x < S; ++x) {
            if (std::abs(x + 0.5 - road_centre) <= hw) {
                for (int c = 0; c < 3; ++c) px(c, y, x) = grey;
                at(da, y, x) = 1.0;
            }
        }
    }

    // Lane markings: thin lines with |dx/dy| <= 0.4, clipped to the road.
    const int lanes = rng.integer(1, 3);
    for (int i = 0; i < lanes; ++i) {
        const double offset = rng.uniform(-0.8, 0.8);
        const double slope = rng.uniform(-0.4, 0.4);
        const bool yellow = rng.uniform(0.0, 1.0) < 0.3;
        for (int y = horizon; y < S; ++y) {
            const double x_bottom = road_centre + offset * bottom_half;
            const int x = static_cast<int>(std::floor(x_bottom + slope * (y - (S - 1))));
            if (x < 0 || x >= S || at(da, y, x) == 0.0) continue;
            px(0, y, x) = 0.95;
            px(1, y, x) = yellow ? 0.85 : 0.95;
            px(2, y, x) = yellow ? 0.2 : 0.95;
            at(lane, y, x) = 1.0;
        }
    }

    // Detection target, drawn last so it occludes the masks.
    const int w = static_cast<int>(std::lround(rng.uniform(8.0, 20.0) * unit));
    const int h = static_cast<int>(std::lround(rng.uniform(6.0, 16.0) * unit));
    const int x0 = rng.integer(0, S - w);
    const int y0 = rng.integer(0, std::max(0, horizon + static_cast<int>(4 * unit) - h));
    s.label = rng.integer(0, 1);
    const double colour[2][3] = {{0.9, 0.15, 0.1}, {0.1, 0.2, 0.9}};
    for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) {
            for (int c = 0; c < 3; ++c) px(c, y, x) = colour[s.label][c];
            at(da, y, x) = 0.0;
            at(lane, y, x) = 0.0;
        }
    }
    s.box = {(x0 + w / 2.0) / S, (y0 + h / 2.0) / S, static_cast<double>(w) / S, static_cast<double>(h) / S};

    for (double& v : img) v = std::clamp(v + rng.normal(0.03), 0.0, 1.0);
    return s;
}

}  // namespace

std::vector<SyntheticSample> generate_dataset(std::uint64_t seed, std::size_t n, std::size_t image_size) {
    if (n == 0) throw ConfigError("generate_dataset: n must be at least 1");
    if (image_size < 32) throw ConfigError("generate_dataset: image_size must be at least 32");
    SceneRng rng(seed);
    std::vector<SyntheticSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(render_scene(rng, image_size));
    return out;
}

Batch make_batch(std::span<const SyntheticSample> samples, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ConfigError("make_batch: empty batch");
    const std::size_t B = indices.size();
    const std::size_t H = samples[indices[0]].image.dim(1), W = samples[indices[0]].image.dim(2);
    Batch b;
    b.images = Tensor({B, 3, H, W});
    b.boxes = Tensor({B, 4});
    b.da_masks = Tensor({B, 1, H, W});
    b.lane_masks = Tensor({B, 1, H, W});
    b.labels.reserve(B);
    for (std::size_t i = 0; i < B; ++i) {
        const auto& s = samples[indices[i]];
        std::copy(s.image.data().begin(), s.image.data().end(), b.images.data().begin() + i * 3 * H * W);
        std::copy(s.da_mask.data().begin(), s.da_mask.data().end(), b.da_masks.data().begin() + i * H * W);
        std::copy(s.lane_mask.data().begin(), s.lane_mask.data().end(), b.lane_masks.data().begin() + i * H * W);
        const double box[4] = {s.box.cx, s.box.cy, s.box.w, s.box.h};
        std::copy(box, box + 4, b.boxes.data().begin() + i * 4);
        b.labels.push_back(s.label);
    }
    return b;
}

Batch make_batch(std::span<const SyntheticSample> samples) {
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    return make_batch(samples, idx);
}

}  // namespace mtpd
