#pragma once

#include <cstddef>
#include <vector>

#include "mtpd/tensor.hpp"

namespace mtpd::ops {

// Layer primitives. Image tensors are NCHW.

/// weight [Cout, Cin, k, k]; bias [Cout] or an empty tensor for no bias.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);
Tensor relu(const Tensor& x);
Tensor maxpool2x2(const Tensor& x);
/// Bilinear resize with half-pixel centres (align_corners = false), edge-clamped.
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);
Tensor upsample_bilinear(const Tensor& x, std::size_t scale);
Tensor global_avg_pool(const Tensor& x);
/// x [B, in], weight [out, in], bias [out] or empty.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Elementwise and reductions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Columns [begin, end) of a rank-2 tensor.
Tensor slice_columns(const Tensor& x, std::size_t begin, std::size_t end);

// Losses, all mean-reduced to a scalar.
Tensor mse_loss(const Tensor& a, const Tensor& b);
/// Targets are constants in {0, 1}. Logits are clamped to +-bce_logit_clamp, which
/// puts the probability in [1e-7, 1 - 1e-7].
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);
/// logits [B, K], labels in [0, K).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

inline constexpr double bce_probability_floor = 1e-7;
extern const double bce_logit_clamp;

}  // namespace mtpd::ops
