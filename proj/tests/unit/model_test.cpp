#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "mtpd/checkpoint.hpp"
#include "mtpd/dataset.hpp"
#include "mtpd/error.hpp"
#include "mtpd/losses.hpp"
#include "mtpd/model.hpp"
#include "mtpd/ops.hpp"
#include "mtpd/training.hpp"
#include "test_support.hpp"

namespace {

using namespace mtpd;

bool same_values(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

TEST(Graph, ReferenceParameterCountMatchesFormula) {
    const ModelGraph g = ModelGraph::reference();
    std::size_t expected = 0;
    for (const auto& l : g.layers()) {
        if (l.kind == LayerKind::conv2d) expected += l.out_channels * l.in_channels * l.kernel * l.kernel + l.out_channels;
        if (l.kind == LayerKind::linear) expected += l.out_channels * l.in_channels + l.out_channels;
    }
    // 3x16x9+16, 16x32x9+32, 32x64x9+64, 64x64x9+64, 64x6+6, two heads of (64x16x9+16 + 16+1).
    EXPECT_EQ(expected, 448u + 4640u + 18496u + 36928u + 390u + 2u * (9232u + 17u));
    EXPECT_EQ(g.parameter_count(), expected);
    EXPECT_EQ(Model::initialize(g, 1).parameter_count(), expected);
}

TEST(Graph, PrunableLayersAreTheBackboneConvs) {
    const ModelGraph g = ModelGraph::reference();
    EXPECT_EQ(g.prunable_layers(), (std::vector<std::string>{"b1", "b2", "b3"}));
    for (const auto& l : g.layers()) {
        if (l.prunable) {
            EXPECT_EQ(l.kind, LayerKind::conv2d);
            EXPECT_EQ(l.role, LayerRole::backbone);
        }
    }
    for (const auto& t : g.tap_points()) EXPECT_TRUE(g.contains(t));
    EXPECT_EQ(g.feature_point("b2"), "b2_relu");
}

TEST(Graph, ValidateRejectsPrunableNonConv) {
    ModelGraph g = ModelGraph::reference();
    g.mutable_layer("b1_relu").prunable = true;
    EXPECT_THROW(g.validate(), StructuralError);
}

TEST(Graph, JsonRoundTrip) {
    const ModelGraph g = ModelGraph::reference();
    EXPECT_EQ(ModelGraph::from_json(g.to_json()), g);
}

TEST(Dataset, DeterministicUnderSeed) {
    const auto a = generate_dataset(7, 5);
    const auto b = generate_dataset(7, 5);
    ASSERT_EQ(a.size(), 5u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_TRUE(same_values(a[i].image, b[i].image));
        EXPECT_TRUE(same_values(a[i].da_mask, b[i].da_mask));
        EXPECT_TRUE(same_values(a[i].lane_mask, b[i].lane_mask));
        EXPECT_EQ(a[i].label, b[i].label);
        EXPECT_EQ(a[i].box.cx, b[i].box.cx);
    }
    EXPECT_FALSE(same_values(generate_dataset(8, 1)[0].image, a[0].image));
    EXPECT_THROW(generate_dataset(7, 0), ConfigError);
}

TEST(Dataset, MasksAndBoxesAreWellFormed) {
    const auto samples = generate_dataset(21, 100);
    for (const auto& s : samples) {
        EXPECT_EQ(s.image.shape(), (Shape{3, 64, 64}));
        double da = 0, lane = 0;
        for (double v : s.da_mask.data()) {
            EXPECT_TRUE(v == 0.0 || v == 1.0);
            da += v;
        }
        for (double v : s.lane_mask.data()) {
            EXPECT_TRUE(v == 0.0 || v == 1.0);
            lane += v;
        }
        da /= 64.0 * 64.0;
        lane /= 64.0 * 64.0;
        EXPECT_GT(da, 0.0);
        EXPECT_LT(da, 1.0);
        EXPECT_LT(lane, da);
        EXPECT_GE(s.box.cx - s.box.w / 2, 0.0);
        EXPECT_LE(s.box.cx + s.box.w / 2, 1.0);
        EXPECT_GE(s.box.cy - s.box.h / 2, 0.0);
        EXPECT_LE(s.box.cy + s.box.h / 2, 1.0);
        EXPECT_TRUE(s.label == 0 || s.label == 1);
        for (double v : s.image.data()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Losses, PerfectOutputsHitTheClampFloor) {
    const auto samples = generate_dataset(7, 3);
    const Batch batch = make_batch(samples);
    Predictions p;
    p.det = Tensor::zeros({3, 6});
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t k = 0; k < 4; ++k) p.det.data()[b * 6 + k] = batch.boxes.data()[b * 4 + k];
    auto to_logits = [](const Tensor& mask) {
        Tensor z(mask.shape());
        for (std::size_t i = 0; i < z.numel(); ++i) z.data()[i] = mask.data()[i] > 0.5 ? 1e3 : -1e3;
        return z;
    };
    p.da = to_logits(batch.da_masks);
    p.lane = to_logits(batch.lane_masks);
    const auto box = ops::mse_loss(ops::slice_columns(p.det, 0, 4), batch.boxes);
    EXPECT_EQ(box.item(), 0.0);
    const auto l = task_losses(p, batch);
    EXPECT_NEAR(l[Task::da].item(), -std::log1p(-1e-7), 1e-15);
    EXPECT_NEAR(l[Task::lane].item(), -std::log1p(-1e-7), 1e-15);
}

TEST(Losses, ZeroLogitGivesLnTwo) {
    const auto samples = generate_dataset(7, 2);
    const Batch batch = make_batch(samples);
    EXPECT_NEAR(ops::bce_with_logits(Tensor::zeros(batch.da_masks.shape()), batch.da_masks).item(), std::log(2.0),
                1e-12);
}

TEST(Losses, RandomInitIsFiniteAndPositive) {
    const Model m = Model::initialize(ModelGraph::reference(), 7);
    const auto samples = generate_dataset(7, 4);
    const auto l = task_losses(m, make_batch(samples));
    for (Task t : all_tasks) {
        EXPECT_TRUE(std::isfinite(l[t].item()));
        EXPECT_GT(l[t].item(), 0.0);
    }
}

TEST(Losses, NonFiniteRaisesDivergence) {
    const auto samples = generate_dataset(7, 1);
    const Batch batch = make_batch(samples);
    Predictions p;
    p.det = Tensor::full({1, 6}, std::nan(""));
    p.da = Tensor::zeros(batch.da_masks.shape());
    p.lane = Tensor::zeros(batch.lane_masks.shape());
    EXPECT_THROW(task_losses(p, batch), DivergenceError);
}

TEST(Model, ForwardWithTaps) {
    const Model m = Model::initialize(ModelGraph::reference(), 7);
    const auto samples = generate_dataset(7, 2);
    const Batch batch = make_batch(samples);
    const auto plain = m.forward(batch.images);
    EXPECT_TRUE(plain.taps.empty());
    EXPECT_EQ(plain.predictions.det.shape(), (Shape{2, 6}));
    EXPECT_EQ(plain.predictions.da.shape(), (Shape{2, 1, 64, 64}));
    EXPECT_EQ(plain.predictions.lane.shape(), (Shape{2, 1, 64, 64}));

    const std::vector<std::string> taps{"enc", "b2_relu"};
    const auto a = m.forward(batch.images, taps);
    const auto b = m.forward(batch.images, taps);
    EXPECT_EQ(a.taps.at("enc").shape(), (Shape{2, 64, 8, 8}));
    EXPECT_EQ(a.taps.at("b2_relu").shape(), (Shape{2, 32, 16, 16}));
    EXPECT_TRUE(same_values(a.taps.at("enc"), b.taps.at("enc")));
    EXPECT_TRUE(same_values(a.predictions.det, plain.predictions.det));
    const std::vector<std::string> bad{"nope"};
    EXPECT_THROW(m.forward(batch.images, bad), ConfigError);
}

TEST(Model, InputChannelMismatch) {
    const Model m = Model::initialize(ModelGraph::reference(), 7);
    const Tensor wrong = Tensor::zeros({1, 4, 64, 64});
    try {
        m.forward(wrong);
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        EXPECT_NE(std::string(e.what()).find("[B, 3, H, W]"), std::string::npos) << e.what();
    }
}

TEST(Model, DetLossAloneMovesTheSharedBackbone) {
    Model m = Model::initialize(ModelGraph::reference(), 7);
    const Tensor before = m.parameters().at("b1.weight").clone();
    const auto samples = generate_dataset(7, 4);
    task_losses(m, make_batch(samples))[Task::det].backward();
    auto params = m.parameter_list();
    sgd_step(params, 0.05);
    EXPECT_FALSE(same_values(before, m.parameters().at("b1.weight")));
}

TEST(Checkpoint, RoundTripIsBitExact) {
    Model m = Model::initialize(ModelGraph::reference(), 3);
    CheckpointMetadata meta;
    meta.step = 12;
    meta.seed = 3;
    meta.plan_hash = "abc";
    meta.extra = {{"note", "x"}};
    const std::string bytes = serialize_checkpoint(m, meta);
    EXPECT_EQ(bytes.substr(0, 4), "MTPD");
    const Checkpoint c = deserialize_checkpoint(bytes);
    EXPECT_EQ(c.metadata, meta);
    EXPECT_EQ(c.model.graph(), m.graph());
    ASSERT_EQ(c.model.parameters().size(), m.parameters().size());
    for (const auto& [name, t] : m.parameters()) EXPECT_TRUE(same_values(t, c.model.parameters().at(name))) << name;
    EXPECT_EQ(serialize_checkpoint(c.model, c.metadata), bytes);
}

TEST(Checkpoint, FileErrors) {
    mtpd::testing::ScratchDir dir("ckpt");
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), DependencyError);
    std::ofstream(dir / "bad.ckpt") << "garbage";
    EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), ConfigError);
    const Model m = Model::initialize(ModelGraph::reference(), 4);
    save_checkpoint(dir / "ok.ckpt", m, {});
    EXPECT_EQ(load_checkpoint(dir / "ok.ckpt").model.checksum(), m.checksum());
}

}  // namespace
