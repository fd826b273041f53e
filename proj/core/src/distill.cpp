#include "mtpd/distill.hpp"

#include <cmath>

#include "mtpd/error.hpp"
#include "mtpd/half.hpp"
#include "mtpd/ops.hpp"
#include "mtpd/training.hpp"

namespace mtpd {

ProjectionPair ProjectionPair::embedding(std::size_t student_channels, std::size_t teacher_channels, std::size_t dim,
                                         std::span<const std::size_t> student_to_teacher) {
    if (dim == 0) throw ConfigError("projection dimension must be positive");
    if (!student_to_teacher.empty() && student_to_teacher.size() != student_channels) {
        throw ConfigError("projection: channel map has " + std::to_string(student_to_teacher.size()) +
                          " entries for " + std::to_string(student_channels) + " student channels");
    }
    ProjectionPair p{Tensor({dim, student_channels, 1, 1}, true), Tensor({dim, teacher_channels, 1, 1}, true)};
    auto s = p.student_proj.data();
    for (std::size_t j = 0; j < student_channels; ++j) {
        const std::size_t row = student_to_teacher.empty() ? j : student_to_teacher[j];
        if (row < dim) s[row * student_channels + j] = 1.0;
    }
    auto t = p.teacher_proj.data();
    for (std::size_t i = 0; i < std::min(dim, teacher_channels); ++i) t[i * teacher_channels + i] = 1.0;
    return p;
}

Tensor align_teacher_feature(const Tensor& teacher_feature, std::size_t height, std::size_t width) {
    if (teacher_feature.rank() != 4) {
        throw DimensionError("align_teacher_feature: expected [B, C, H, W], got " + shape_str(teacher_feature.shape()));
    }
    if (teacher_feature.dim(2) == height && teacher_feature.dim(3) == width) return teacher_feature;
    return ops::resize_bilinear(teacher_feature, height, width);
}

Tensor kd_loss(std::span<const Tensor> student_feats, std::span<const Tensor> teacher_feats,
               std::span<const ProjectionPair> projections) {
    if (projections.empty()) throw ConfigError("kd_loss: the distillation layer set is empty");
    if (student_feats.size() != projections.size() || teacher_feats.size() != projections.size()) {
        throw ConfigError("kd_loss: feature and projection counts differ");
    }
    const Tensor no_bias;
    Tensor acc;
    for (std::size_t i = 0; i < projections.size(); ++i) {
        const Tensor& s = student_feats[i];
        const Tensor& t = teacher_feats[i];
        if (s.rank() != 4 || t.rank() != 4 || s.dim(0) != t.dim(0)) {
            throw ConfigError("kd_loss: pair " + std::to_string(i) + " has incompatible shapes " + shape_str(s.shape()) +
                              " / " + shape_str(t.shape()));
        }
        if (projections[i].student_proj.dim(1) != s.dim(1) || projections[i].teacher_proj.dim(1) != t.dim(1) ||
            projections[i].teacher_proj.dim(0) != projections[i].student_proj.dim(0)) {
            throw ConfigError("kd_loss: projection widths do not match the features of pair " + std::to_string(i));
        }
        const Tensor aligned = align_teacher_feature(t, s.dim(2), s.dim(3));
        const Tensor sp = ops::conv2d(s, projections[i].student_proj, no_bias, 1, 0);
        const Tensor tp = ops::conv2d(aligned, projections[i].teacher_proj, no_bias, 1, 0);
        const Tensor term = ops::mse_loss(sp, tp);
        acc = i == 0 ? term : ops::add(acc, term);
    }
    return ops::scale(acc, 1.0 / static_cast<double>(projections.size()));
}

Tensor total_loss(const TaskLosses& losses, const Tensor& kd, double beta) {
    for (Task t : all_tasks) check_finite(losses[t], "task");
    check_finite(kd, "distillation");
    if (!std::isfinite(beta)) throw DivergenceError("non-finite distillation weight");
    const Tensor tasks = losses.total();
    if (beta == 0.0) return tasks;
    const Tensor total = ops::add(tasks, ops::scale(kd, beta));
    check_finite(total, "total");
    return total;
}

double effective_beta(std::size_t epoch, std::size_t warmup_epochs, double beta) {
    return epoch <= warmup_epochs ? 0.0 : beta;
}

Distiller::Distiller(const Model& teacher, DistillConfig config,
                     std::vector<std::vector<std::size_t>> student_to_teacher)
    : teacher_(teacher.clone()), config_(std::move(config)), student_to_teacher_(std::move(student_to_teacher)) {
    teacher_.set_requires_grad(false);
    if (config_.beta < 0.0) throw ConfigError("distill: beta must be non-negative");
    if (config_.beta > 0.0 && config_.layer_set.empty()) {
        throw ConfigError("distill: knowledge distillation enabled with an empty layer set");
    }
    if (!student_to_teacher_.empty() && student_to_teacher_.size() != config_.layer_set.size()) {
        throw ConfigError("distill: one channel map per distillation pair is required");
    }
    for (const auto& p : config_.layer_set) {
        if (!teacher_.graph().is_tap_point(p.teacher_tap)) {
            throw ConfigError("distill: teacher has no tap point '" + p.teacher_tap + "'");
        }
        student_taps_.push_back(p.student_tap);
        teacher_taps_.push_back(p.teacher_tap);
    }
}

void Distiller::ensure_projections(const Model& student) {
    if (!projections_.empty() || config_.layer_set.empty()) return;
    for (std::size_t i = 0; i < config_.layer_set.size(); ++i) {
        const auto& pair = config_.layer_set[i];
        if (!student.graph().is_tap_point(pair.student_tap)) {
            throw ConfigError("distill: student has no tap point '" + pair.student_tap + "'");
        }
        const std::size_t cs = student.graph().layer(pair.student_tap).out_channels;
        const std::size_t ct = teacher_.graph().layer(pair.teacher_tap).out_channels;
        const std::size_t dim = config_.projection_dim.value_or(ct);
        std::span<const std::size_t> map;
        if (!student_to_teacher_.empty()) map = student_to_teacher_[i];
        projections_.push_back(ProjectionPair::embedding(cs, ct, dim, map));
    }
}

Tensor Distiller::compute(const Model& student, const Batch& batch, double beta_effective,
                          DistillStepResult& breakdown) {
    ensure_projections(student);
    // Student pass: predictions and tapped features together.
    const ForwardResult s = student.forward(batch.images, student_taps_);
    const TaskLosses losses = task_losses(s.predictions, batch);

    Tensor kd = Tensor::scalar(0.0);
    if (!config_.layer_set.empty()) {
        std::vector<Tensor> teacher_feats;
        {
            NoGradGuard no_grad;
            const ForwardResult t = teacher_.forward(batch.images, teacher_taps_);
            for (const auto& id : teacher_taps_) {
                teacher_feats.push_back(config_.teacher_half_precision ? to_half_precision(t.taps.at(id))
                                                                       : t.taps.at(id).detach());
            }
        }
        std::vector<Tensor> student_feats;
        for (const auto& id : student_taps_) student_feats.push_back(s.taps.at(id));
        if (beta_effective > 0.0) {
            kd = kd_loss(student_feats, teacher_feats, projections_);
        } else {
            NoGradGuard no_grad;
            kd = kd_loss(student_feats, teacher_feats, projections_);
        }
    }

    const Tensor total = total_loss(losses, kd, beta_effective);
    for (Task t : all_tasks) breakdown.task[task_index(t)] = losses[t].item();
    breakdown.kd = kd.item();
    breakdown.total = total.item();
    breakdown.beta_effective = beta_effective;
    return total;
}

DistillStepResult Distiller::step(Model& student, const Batch& batch, double beta_effective) {
    DistillStepResult r;
    const Tensor total = compute(student, batch, beta_effective, r);
    total.backward();
    auto params = student.parameter_list();
    for (auto& p : projections_) {
        params.push_back(p.student_proj);
        params.push_back(p.teacher_proj);
    }
    sgd_step(params, config_.lr);
    return r;
}

}  // namespace mtpd
