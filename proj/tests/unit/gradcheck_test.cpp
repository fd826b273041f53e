#include <gtest/gtest.h>

#include "gradcheck_cases.hpp"
#include "mtpd/model.hpp"
#include "mtpd/losses.hpp"
#include "mtpd/dataset.hpp"

namespace {

using namespace mtpd;

class LayerGradcheck : public ::testing::TestWithParam<std::string> {};

TEST_P(LayerGradcheck, MatchesCentralDifferences) {
    const auto fn = mtpd::testing::layer_gradcheck_cases().at(GetParam());
    std::mt19937_64 rng(1234);
    for (int i = 0; i < 5; ++i) {
        const auto r = fn(rng);
        EXPECT_GT(r.elements, 0u);
        EXPECT_LE(r.max_rel_error, 1e-4) << "case " << i;
    }
}

INSTANTIATE_TEST_SUITE_P(AllKinds, LayerGradcheck,
                         ::testing::Values("conv2d", "relu", "maxpool2x2", "bilinear_upsample", "bilinear_resize",
                                           "linear", "global_avg_pool", "task_losses"));

TEST(Gradcheck, KdLoss) {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 5; ++i) EXPECT_LE(mtpd::testing::gradcheck_kd_loss(rng).max_rel_error, 1e-4);
}

// Small random conv net: every parameter against finite differences.
TEST(Gradcheck, RandomConvNetParameters) {
    ArchitectureConfig arch;
    arch.image_size = 32;
    arch.backbone_channels = {2, 3, 4};
    arch.encoder_channels = 3;
    arch.head_channels = 2;
    const Model model = Model::initialize(ModelGraph::reference(arch), 5);
    const auto samples = generate_dataset(3, 2, 32);
    const Batch batch = make_batch(samples);
    // Zero biases over flat image regions put ReLU inputs exactly on the kink.
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> jitter(-0.1, 0.1);
    std::vector<std::string> names;
    std::vector<Tensor> inputs;
    for (const auto& [name, t] : model.parameters()) {
        names.push_back(name);
        inputs.push_back(t.clone());
        for (double& v : inputs.back().data()) v += jitter(rng);
    }
    const auto r = mtpd::testing::gradcheck(
        [&](const std::vector<Tensor>& x) {
            ParameterMap p;
            for (std::size_t i = 0; i < x.size(); ++i) p.emplace(names[i], x[i]);
            return task_losses(Model(model.graph(), p), batch).total();
        },
        inputs);
    EXPECT_LE(r.max_rel_error, 1e-4);
}

}  // namespace
