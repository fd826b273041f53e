#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mtpd/dataset.hpp"
#include "mtpd/losses.hpp"
#include "mtpd/model.hpp"

namespace mtpd {

/// Plain SGD: p -= lr * grad, then zero the gradient. With fp32_storage the
/// updated value is rounded to binary32, which keeps checkpoints lossless.
void sgd_step(std::span<Tensor> params, double lr, bool fp32_storage = true);

/// Mini-batch index lists for one epoch, shuffled by (seed, epoch).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch);

/// Batches in dataset order, last one possibly short.
std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch_size);

struct EpochLosses {
    PerTask<double> task{};  // epoch mean per task
    double total = 0;

    EpochLosses& operator+=(const EpochLosses& other);
};

struct EvalMetrics {
    PerTask<double> task_loss{};
    double total_task_loss = 0;
    double box_mse = 0;            // mean squared error of (cx, cy, w, h)
    double class_accuracy = 0;
    double da_pixel_accuracy = 0;  // sigmoid(logit) > 0.5 vs mask
    double lane_pixel_accuracy = 0;
    std::size_t parameters = 0;
};

/// Full pass over `samples` without recording a tape.
EvalMetrics evaluate(const Model& model, std::span<const SyntheticSample> samples, std::size_t batch_size);

struct TrainOptions {
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    double lr = 0.05;
    std::uint64_t seed = 7;
};

/// One epoch of SGD on the summed task loss; returns the epoch-mean losses.
EpochLosses train_epoch(Model& model, std::span<const SyntheticSample> samples, const TrainOptions& options,
                        std::size_t epoch);

}  // namespace mtpd
