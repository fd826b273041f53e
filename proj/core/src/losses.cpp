#include "mtpd/losses.hpp"

#include <cmath>
#include <string>

#include "mtpd/error.hpp"
#include "mtpd/ops.hpp"

namespace mtpd {

Tensor TaskLosses::total() const { return ops::add(ops::add(values[0], values[1]), values[2]); }

void check_finite(const Tensor& loss, const char* what) {
    for (double v : loss.data()) {
        if (!std::isfinite(v)) throw DivergenceError(std::string("non-finite ") + what + " loss");
    }
}

TaskLosses task_losses(const Predictions& p, const Batch& batch) {
    if (batch.size() == 0) throw ConfigError("task_losses: empty batch");
    if (p.det.rank() != 2 || p.det.dim(0) != batch.size() || p.det.dim(1) != 6) {
        throw DimensionError("det head output must be [B, 6], got " + shape_str(p.det.shape()));
    }
    TaskLosses l;
    const Tensor box = ops::slice_columns(p.det, 0, 4);
    const Tensor logits = ops::slice_columns(p.det, 4, 6);
    l[Task::det] = ops::add(ops::mse_loss(box, batch.boxes), ops::cross_entropy(logits, batch.labels));
    l[Task::da] = ops::bce_with_logits(p.da, batch.da_masks);
    l[Task::lane] = ops::bce_with_logits(p.lane, batch.lane_masks);
    for (Task t : all_tasks) check_finite(l[t], std::string(task_name(t)).c_str());
    return l;
}

TaskLosses task_losses(const Model& model, const Batch& batch) {
    return task_losses(model.forward(batch.images).predictions, batch);
}

}  // namespace mtpd
