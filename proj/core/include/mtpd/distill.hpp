#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtpd/dataset.hpp"
#include "mtpd/losses.hpp"
#include "mtpd/model.hpp"

namespace mtpd {

struct DistillPair {
    std::string student_tap;
    std::string teacher_tap;

    bool operator==(const DistillPair&) const = default;
};

struct DistillConfig {
    std::vector<DistillPair> layer_set;
    double beta = 1.0;
    std::size_t warmup_epochs = 0;
    std::optional<std::size_t> projection_dim;  // defaults to the teacher channel count per pair
    bool teacher_half_precision = true;
    double lr = 0.05;
};

/// Learned 1x1 maps of student and teacher features into a shared width D.
/// Weights are [D, C, 1, 1]; there is no bias.
struct ProjectionPair {
    Tensor student_proj;
    Tensor teacher_proj;

    std::size_t dim() const { return student_proj.dim(0); }

    /// Identity-like start: teacher_proj is I (when D == C_t) and student channel j
    /// maps to output row student_to_teacher[j]. Without a map, j maps to j.
    static ProjectionPair embedding(std::size_t student_channels, std::size_t teacher_channels, std::size_t dim,
                                    std::span<const std::size_t> student_to_teacher = {});
};

/// Bilinear (half-pixel) resize of teacher features to the student's spatial size.
Tensor align_teacher_feature(const Tensor& teacher_feature, std::size_t height, std::size_t width);

/// Mean over pairs of mean-reduced MSE between projected student features and
/// projected, aligned teacher features.
Tensor kd_loss(std::span<const Tensor> student_feats, std::span<const Tensor> teacher_feats,
               std::span<const ProjectionPair> projections);

/// Sum of task losses plus beta * kd.
Tensor total_loss(const TaskLosses& losses, const Tensor& kd, double beta);

/// Epochs are 1-based; the first `warmup_epochs` run without distillation.
double effective_beta(std::size_t epoch, std::size_t warmup_epochs, double beta);

struct DistillStepResult {
    PerTask<double> task{};
    double kd = 0;
    double total = 0;
    double beta_effective = 0;
};

/// Owns the frozen teacher and the projections; updates the student in place.
class Distiller {
public:
    /// `student_to_teacher` gives, per pair, the original channel index of each
    /// surviving student channel (from the pruning plan); empty means identity.
    Distiller(const Model& teacher, DistillConfig config,
              std::vector<std::vector<std::size_t>> student_to_teacher = {});

    const DistillConfig& config() const { return config_; }
    const Model& teacher() const { return teacher_; }
    std::vector<ProjectionPair>& projections() { return projections_; }
    const std::vector<ProjectionPair>& projections() const { return projections_; }

    /// Task losses, teacher features and KD term for one batch, without any update.
    /// Returns the total on the tape when gradients are enabled.
    Tensor compute(const Model& student, const Batch& batch, double beta_effective, DistillStepResult& breakdown);

    /// compute() followed by backward and one SGD step on student and projections.
    DistillStepResult step(Model& student, const Batch& batch, double beta_effective);

private:
    void ensure_projections(const Model& student);

    Model teacher_;
    DistillConfig config_;
    std::vector<std::vector<std::size_t>> student_to_teacher_;
    std::vector<ProjectionPair> projections_;
    std::vector<std::string> student_taps_;
    std::vector<std::string> teacher_taps_;
};

}  // namespace mtpd
