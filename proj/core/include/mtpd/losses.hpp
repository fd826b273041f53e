#pragma once

#include <array>

#include "mtpd/dataset.hpp"
#include "mtpd/model.hpp"

namespace mtpd {

struct TaskLosses {
    std::array<Tensor, task_count> values;

    Tensor& operator[](Task t) { return values[task_index(t)]; }
    const Tensor& operator[](Task t) const { return values[task_index(t)]; }
    /// Sum of the three task losses, on the tape.
    Tensor total() const;
};

/// det: box MSE plus class cross-entropy; da/lane: per-pixel BCE on logits.
/// Throws DivergenceError if any loss is not finite.
TaskLosses task_losses(const Predictions& predictions, const Batch& batch);
TaskLosses task_losses(const Model& model, const Batch& batch);

void check_finite(const Tensor& loss, const char* what);

}  // namespace mtpd
