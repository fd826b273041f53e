#include <gtest/gtest.h>

#include <cmath>

#include "mtpd/distill.hpp"
#include "mtpd/error.hpp"
#include "mtpd/ops.hpp"
#include "mtpd/pipeline.hpp"
#include "test_support.hpp"

namespace {

using namespace mtpd;

ProjectionPair identity_pair(std::size_t c) { return ProjectionPair::embedding(c, c, c); }

TEST(Align, PassThroughAndConstant) {
    std::mt19937_64 rng(2);
    const Tensor t = mtpd::testing::random_tensor({2, 3, 4, 4}, rng);
    const Tensor same = align_teacher_feature(t, 4, 4);
    EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), same.data().begin()));
    const Tensor c = align_teacher_feature(Tensor::full({1, 1, 2, 2}, 3.0), 7, 5);
    EXPECT_EQ(c.shape(), (Shape{1, 1, 7, 5}));
    for (double v : c.data()) EXPECT_DOUBLE_EQ(v, 3.0);
    const Tensor r = align_teacher_feature(Tensor({1, 1, 1, 4}, {0, 1, 2, 3}), 1, 2);
    EXPECT_DOUBLE_EQ(r.data()[0], 0.5);
    EXPECT_DOUBLE_EQ(r.data()[1], 2.5);
}

TEST(KdLoss, Examples) {
    std::mt19937_64 rng(4);
    const Tensor f = mtpd::testing::random_tensor({2, 3, 4, 4}, rng);
    const std::vector<Tensor> fs{f};
    const std::vector<ProjectionPair> id3{identity_pair(3)};
    EXPECT_EQ(kd_loss(fs, fs, id3).item(), 0.0);

    const std::vector<Tensor> s{Tensor({1, 1, 1, 1}, std::vector<double>{0.0})}, t{Tensor({1, 1, 1, 1}, std::vector<double>{2.0})};
    const std::vector<ProjectionPair> id1{identity_pair(1)};
    EXPECT_DOUBLE_EQ(kd_loss(s, t, id1).item(), 4.0);

    // Pair MSEs of 1 and 3.
    const std::vector<Tensor> s2{Tensor({1, 1, 1, 1}, std::vector<double>{0.0}), Tensor({1, 1, 1, 1}, std::vector<double>{0.0})};
    const std::vector<Tensor> t2{Tensor({1, 1, 1, 1}, std::vector<double>{1.0}), Tensor({1, 1, 1, 1}, std::vector<double>{std::sqrt(3.0)})};
    const std::vector<ProjectionPair> ids{identity_pair(1), identity_pair(1)};
    EXPECT_NEAR(kd_loss(s2, t2, ids).item(), 2.0, 1e-15);

    EXPECT_THROW(kd_loss({}, {}, {}), ConfigError);
}

TEST(KdLoss, NonNegativeAndTeacherGetsNoGradient) {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 20; ++i) {
        const Tensor s = mtpd::testing::random_tensor({1, 2, 3, 3}, rng, -1, 1, true);
        const Tensor t = mtpd::testing::random_tensor({1, 4, 5, 5}, rng);
        ProjectionPair p{mtpd::testing::random_tensor({3, 2, 1, 1}, rng, -1, 1, true),
                         mtpd::testing::random_tensor({3, 4, 1, 1}, rng, -1, 1, true)};
        const std::vector<Tensor> ss{s}, ts{t};
        const std::vector<ProjectionPair> ps{p};
        const Tensor l = kd_loss(ss, ts, ps);
        EXPECT_GE(l.item(), 0.0);
        l.backward();
        EXPECT_TRUE(s.has_grad());
        EXPECT_TRUE(p.student_proj.has_grad());
        EXPECT_TRUE(p.teacher_proj.has_grad());
        EXPECT_FALSE(t.has_grad());
    }
}

TEST(TotalLoss, Examples) {
    TaskLosses l;
    l[Task::det] = Tensor::scalar(1);
    l[Task::da] = Tensor::scalar(2);
    l[Task::lane] = Tensor::scalar(3);
    EXPECT_DOUBLE_EQ(total_loss(l, Tensor::scalar(0.5), 1.0).item(), 6.5);
    EXPECT_DOUBLE_EQ(total_loss(l, Tensor::scalar(0.5), 0.0).item(), 6.0);
    EXPECT_DOUBLE_EQ(total_loss(l, Tensor::scalar(0.0), 1.0).item(), 6.0);
    EXPECT_THROW(total_loss(l, Tensor::scalar(std::nan("")), 1.0), DivergenceError);
    l[Task::da] = Tensor::scalar(INFINITY);
    EXPECT_THROW(total_loss(l, Tensor::scalar(0.0), 1.0), DivergenceError);
}

TEST(Warmup, EffectiveBeta) {
    for (std::size_t e = 1; e <= 5; ++e) EXPECT_EQ(effective_beta(e, 5, 1.0), 0.0);
    EXPECT_EQ(effective_beta(6, 5, 1.0), 1.0);
    EXPECT_EQ(effective_beta(40, 5, 0.7), 0.7);
    EXPECT_EQ(effective_beta(1, 0, 1.0), 1.0);
    DistillSection d;
    d.epochs = 20;
    EXPECT_EQ(d.resolved_warmup_epochs(), 1u);
    d.epochs = 125;
    EXPECT_EQ(d.resolved_warmup_epochs(), 5u);
    d.warmup_epochs = 3;
    EXPECT_EQ(d.resolved_warmup_epochs(), 3u);
}

TEST(Projection, EmbeddingFollowsChannelMap) {
    const std::vector<std::size_t> map{0, 2, 5};
    const auto p = ProjectionPair::embedding(3, 6, 6, map);
    EXPECT_EQ(p.student_proj.shape(), (Shape{6, 3, 1, 1}));
    EXPECT_EQ(p.teacher_proj.shape(), (Shape{6, 6, 1, 1}));
    EXPECT_EQ(p.dim(), 6u);
    for (std::size_t d = 0; d < 6; ++d)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(p.student_proj.data()[d * 3 + j], d == map[j] ? 1.0 : 0.0);
    EXPECT_THROW(ProjectionPair::embedding(2, 6, 6, map), ConfigError);
}

struct Small {
    PipelineConfig config;
    std::vector<SyntheticSample> train;
    Model teacher;

    Small() {
        config.dataset.n_train = 16;
        config.dataset.batch_size = 8;
        config.distill.epochs = 2;
        train = generate_dataset(1, config.dataset.n_train);
        teacher = Model::initialize(ModelGraph::reference(), 2);
    }
};

TEST(Distiller, SelfDistillationIsAFixedPoint) {
    Small s;
    DistillConfig dc = s.config.distill.to_distill_config();
    dc.teacher_half_precision = false;
    Distiller d(s.teacher, dc);
    DistillStepResult r;
    const Batch batch = make_batch(s.train);
    d.compute(s.teacher, batch, 1.0, r);
    EXPECT_EQ(r.kd, 0.0);
    EXPECT_DOUBLE_EQ(r.total, r.task[0] + r.task[1] + r.task[2]);
}

TEST(Distiller, TeacherStaysFrozen) {
    Small s;
    const std::uint64_t before = s.teacher.checksum();
    Model student = s.teacher.clone();
    Distiller d(s.teacher, s.config.distill.to_distill_config());
    const Batch batch = make_batch(s.train);
    for (int i = 0; i < 2; ++i) d.step(student, batch, 1.0);
    EXPECT_EQ(d.teacher().checksum(), before);
    EXPECT_EQ(s.teacher.checksum(), before);
    for (const auto& [name, t] : d.teacher().parameters()) {
        EXPECT_FALSE(t.requires_grad()) << name;
        EXPECT_FALSE(t.has_grad()) << name;
    }
    EXPECT_NE(student.checksum(), before);
}

TEST(Distiller, ConfigErrors) {
    Small s;
    DistillConfig dc = s.config.distill.to_distill_config();
    dc.layer_set.clear();
    EXPECT_THROW(Distiller(s.teacher, dc), ConfigError);
    dc.beta = 0.0;
    EXPECT_NO_THROW(Distiller(s.teacher, dc));
    dc = s.config.distill.to_distill_config();
    dc.layer_set = {{"b2_relu", "det_fc"}};
    EXPECT_THROW(Distiller(s.teacher, dc), ConfigError);
    dc.layer_set = {{"nonexistent", "b2_relu"}};
    Distiller d(s.teacher, dc);
    Model student = s.teacher.clone();
    EXPECT_THROW(d.step(student, make_batch(s.train), 1.0), ConfigError);
}

TEST(Distiller, ZeroBetaMatchesPlainFineTuning) {
    Small s;
    s.config.distill.beta = 0.0;
    Model a = s.teacher.clone(), b = s.teacher.clone();
    const PruningPlan none;
    const auto log = distill_student(s.teacher, a, none, s.train, s.config);
    const auto plain = fine_tune(b, s.train, s.config);
    ASSERT_EQ(log.size(), plain.size());
    for (std::size_t e = 0; e < log.size(); ++e) EXPECT_EQ(log[e].total, plain[e].total);
    ASSERT_EQ(a.parameters().size(), b.parameters().size());
    for (const auto& [name, t] : a.parameters()) {
        const auto& u = b.parameters().at(name);
        EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), u.data().begin())) << name;
    }
}

}  // namespace
