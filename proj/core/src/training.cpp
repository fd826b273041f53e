#include "mtpd/training.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "mtpd/error.hpp"
#include "mtpd/ops.hpp"

namespace mtpd {

void sgd_step(std::span<Tensor> params, double lr, bool fp32_storage) {
    for (Tensor& p : params) {
        if (!p.has_grad()) continue;
        auto d = p.data();
        const auto g = p.grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lr * g[i];
        if (fp32_storage) p.round_to_float();
        p.zero_grad();
    }
}

std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        std::vector<std::size_t> b(std::min(batch_size, n - start));
        std::iota(b.begin(), b.end(), start);
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    auto batches = sequential_batches(n, batch_size);
    for (auto& b : batches)
        for (auto& i : b) i = order[i];
    return batches;
}

EpochLosses& EpochLosses::operator+=(const EpochLosses& other) {
    for (std::size_t t = 0; t < task_count; ++t) task[t] += other.task[t];
    total += other.total;
    return *this;
}

EvalMetrics evaluate(const Model& model, std::span<const SyntheticSample> samples, std::size_t batch_size) {
    if (samples.empty()) throw ConfigError("evaluate: no samples");
    NoGradGuard no_grad;
    EvalMetrics m;
    std::size_t seg_pixels = 0, seg_correct[2] = {0, 0}, correct_labels = 0;
    double box_sq = 0.0;
    for (const auto& idx : sequential_batches(samples.size(), batch_size)) {
        const Batch batch = make_batch(samples, idx);
        const auto out = model.forward(batch.images);
        const auto losses = task_losses(out.predictions, batch);
        const double w = static_cast<double>(batch.size()) / static_cast<double>(samples.size());
        for (Task t : all_tasks) m.task_loss[task_index(t)] += losses[t].item() * w;

        const auto det = out.predictions.det.data();
        const auto boxes = batch.boxes.data();
        for (std::size_t b = 0; b < batch.size(); ++b) {
            for (std::size_t k = 0; k < 4; ++k) {
                const double d = det[b * 6 + k] - boxes[b * 4 + k];
                box_sq += d * d;
            }
            const int predicted = det[b * 6 + 5] > det[b * 6 + 4] ? 1 : 0;
            correct_labels += predicted == batch.labels[b];
        }
        const Tensor* logits[2] = {&out.predictions.da, &out.predictions.lane};
        const Tensor* masks[2] = {&batch.da_masks, &batch.lane_masks};
        for (int s = 0; s < 2; ++s) {
            const auto z = logits[s]->data();
            const auto y = masks[s]->data();
            for (std::size_t i = 0; i < z.size(); ++i) seg_correct[s] += (z[i] > 0.0) == (y[i] > 0.5);
        }
        seg_pixels += batch.da_masks.numel();
    }
    m.total_task_loss = m.task_loss[0] + m.task_loss[1] + m.task_loss[2];
    m.box_mse = box_sq / static_cast<double>(4 * samples.size());
    m.class_accuracy = static_cast<double>(correct_labels) / static_cast<double>(samples.size());
    m.da_pixel_accuracy = static_cast<double>(seg_correct[0]) / static_cast<double>(seg_pixels);
    m.lane_pixel_accuracy = static_cast<double>(seg_correct[1]) / static_cast<double>(seg_pixels);
    m.parameters = model.parameter_count();
    return m;
}

EpochLosses train_epoch(Model& model, std::span<const SyntheticSample> samples, const TrainOptions& options,
                        std::size_t epoch) {
    EpochLosses acc;
    auto params = model.parameter_list();
    for (const auto& idx : epoch_batches(samples.size(), options.batch_size, options.seed, epoch)) {
        const Batch batch = make_batch(samples, idx);
        const auto losses = task_losses(model, batch);
        const Tensor total = losses.total();
        total.backward();
        sgd_step(params, options.lr);
        const double w = static_cast<double>(batch.size()) / static_cast<double>(samples.size());
        for (Task t : all_tasks) acc.task[task_index(t)] += losses[t].item() * w;
        acc.total += total.item() * w;
    }
    return acc;
}

}  // namespace mtpd
