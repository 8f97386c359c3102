#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gepc/core/grad_check.hpp"
#include "gepc/graph/stgcn.hpp"
#include "test_util.hpp"

using namespace gepc;
using gepc::test_support::probe_loss;
using gepc::test_support::random_param;
using gepc::test_support::random_tensor;

namespace {

// Batch norm that is exactly the identity in infer mode.
void freeze_identity(BatchNormLayer& bn) {
    bn.stats.mean.zero();
    bn.stats.var.fill(1);
    bn.stats.eps = 0;
}

void randomize_stats(BatchNormLayer& bn, Rng& rng) {
    bn.stats.mean = random_tensor(bn.stats.mean.shape(), rng, -0.2, 0.2);
    bn.stats.var = random_tensor(bn.stats.var.shape(), rng, 0.5, 1.5);
    bn.gamma.value() = random_tensor(bn.gamma.shape(), rng, 0.5, 1.5);
    bn.beta.value() = random_tensor(bn.beta.shape(), rng, -0.2, 0.2);
}

void randomize_stats(SagcLayer& l, Rng& rng) {
    if (l.config().branches.static_adj) randomize_stats(l.bn_static, rng);
    if (l.config().branches.global_adj) randomize_stats(l.bn_global, rng);
    if (l.config().branches.inferred_adj) randomize_stats(l.bn_inferred, rng);
}

Tensor chain_adjacency(std::size_t v) {
    Tensor a({v, v});
    for (std::size_t i = 0; i + 1 < v; ++i) a.at(i, i + 1) = a.at(i + 1, i) = 1;
    return a;
}

}  // namespace

TEST(NormalizeAdjacency, SingleNode) { EXPECT_EQ(normalize_adjacency(Tensor({1, 1})), Tensor::from({1, 1}, {1})); }

TEST(NormalizeAdjacency, TwoConnectedNodes) {
    auto n = normalize_adjacency(Tensor::from({2, 2}, {0, 1, 1, 0}));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(n[i], 0.5, 1e-15);
}

TEST(NormalizeAdjacency, IsolatedNodesGiveIdentity) {
    EXPECT_EQ(normalize_adjacency(Tensor({2, 2})), Tensor::identity(2));
}

TEST(NormalizeAdjacency, SymmetricAndStochasticForRegularGraphs) {
    Rng rng(30);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t v = 2 + trial % 5;
        Tensor a({v, v});
        for (std::size_t i = 0; i < v; ++i)
            for (std::size_t j = 0; j < i; ++j) a.at(i, j) = a.at(j, i) = std::uniform_real_distribution<real>(0, 1)(rng) > 0.5;
        auto n = normalize_adjacency(a);
        for (std::size_t i = 0; i < v; ++i)
            for (std::size_t j = 0; j < v; ++j) EXPECT_NEAR(n.at(i, j), n.at(j, i), 1e-15);
        Tensor ones({v, v}, 1.0);
        for (std::size_t i = 0; i < v; ++i) ones.at(i, i) = 0;
        auto m = normalize_adjacency(ones);
        for (std::size_t i = 0; i < v; ++i) {
            real s = 0;
            for (std::size_t j = 0; j < v; ++j) s += m.at(i, j);
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(Gcn, IdentityAdjacencyAndWeight) {
    Rng rng(31);
    Var x(random_tensor({2, 3, 4, 5}, rng, 0.1, 1));
    BatchNormLayer bn(3);
    freeze_identity(bn);
    auto y = gcn_forward(x, Var(Tensor::identity(5)), Var(Tensor::identity(3)), &bn, Mode::infer);
    EXPECT_EQ(y.value(), x.value());
}

TEST(Gcn, ZeroWeight) {
    Rng rng(32);
    Var x(random_tensor({2, 3, 4, 5}, rng));
    auto y = gcn_forward(x, Var(Tensor::identity(5)), Var(Tensor({3, 2})), nullptr, Mode::infer);
    EXPECT_EQ(y.value(), Tensor({2, 2, 4, 5}));
}

TEST(Gcn, HandPropagation) {
    Var x(Tensor::from({1, 1, 1, 2}, {1, 3}));
    auto y = gcn_forward(x, Var(Tensor({2, 2}, 0.5)), Var(Tensor::from({1, 1}, {1})), nullptr, Mode::infer);
    EXPECT_DOUBLE_EQ(y.value()[0], 2.0);
    EXPECT_DOUBLE_EQ(y.value()[1], 2.0);
}

TEST(Gcn, AdjacencyBatchMismatch) {
    Var x(Tensor({2, 1, 1, 3}));
    EXPECT_THROW(gcn_forward(x, Var(Tensor({3, 3, 3})), Var(Tensor({1, 1})), nullptr, Mode::infer), ShapeError);
}

TEST(Gcn, NodePermutationEquivariance) {
    Rng rng(33);
    const std::size_t v = 5;
    Var x(random_tensor({2, 3, 4, v}, rng));
    Tensor a = random_tensor({v, v}, rng, 0, 1);
    Var w(random_tensor({3, 4}, rng));
    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    Tensor xp(x.shape()), ap({v, v});
    for (std::size_t i = 0; i < x.value().size() / v; ++i)
        for (std::size_t j = 0; j < v; ++j) xp[i * v + j] = x.value()[i * v + perm[j]];
    for (std::size_t i = 0; i < v; ++i)
        for (std::size_t j = 0; j < v; ++j) ap.at(i, j) = a.at(perm[i], perm[j]);
    auto y = gcn_forward(x, Var(a), w, nullptr, Mode::infer);
    auto yp = gcn_forward(Var(xp), Var(ap), w, nullptr, Mode::infer);
    for (std::size_t i = 0; i < y.value().size() / v; ++i)
        for (std::size_t j = 0; j < v; ++j) EXPECT_NEAR(yp.value()[i * v + j], y.value()[i * v + perm[j]], 1e-12);
}

TEST(Attention, ZeroWeightsGiveUniformRows) {
    Rng rng(34);
    Var x(random_tensor({2, 3, 4, 5}, rng));
    auto c = infer_attention_adjacency(x, Var(Tensor({3, 2})), Var(Tensor({3, 2})));
    ASSERT_EQ(c.shape(), (Shape{2, 5, 5}));
    for (real p : c.value().vec()) EXPECT_NEAR(p, 0.2, 1e-15);
}

TEST(Attention, ClosedFormSoftmax) {
    // Node features e0, e1, so (X W1)(X W2)ᵀ = W1 W2ᵀ = [[0, ln3], [0, 0]].
    Var x(Tensor::from({1, 2, 1, 2}, {1, 0, 0, 1}));
    Var w1(Tensor::from({2, 2}, {0, 1, 0, 0}));
    Var w2(Tensor::from({2, 2}, {0, 0, 0, std::log(3.0)}));
    auto c = infer_attention_adjacency(x, w1, w2);
    EXPECT_NEAR(c.value()[0], 0.25, 1e-15);
    EXPECT_NEAR(c.value()[1], 0.75, 1e-15);
    EXPECT_NEAR(c.value()[2], 0.5, 1e-15);
    EXPECT_NEAR(c.value()[3], 0.5, 1e-15);
}

TEST(Attention, PermutationEquivariantAndRowStochastic) {
    Rng rng(35);
    const std::size_t v = 4;
    Var x(random_tensor({3, 2, 5, v}, rng));
    Var w1(random_tensor({2, 3}, rng)), w2(random_tensor({2, 3}, rng));
    std::vector<std::size_t> perm{2, 3, 1, 0};
    Tensor xp(x.shape());
    for (std::size_t i = 0; i < x.value().size() / v; ++i)
        for (std::size_t j = 0; j < v; ++j) xp[i * v + j] = x.value()[i * v + perm[j]];
    auto c = infer_attention_adjacency(x, w1, w2);
    auto cp = infer_attention_adjacency(Var(xp), w1, w2);
    for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t i = 0; i < v; ++i) {
            real s = 0;
            for (std::size_t j = 0; j < v; ++j) {
                EXPECT_NEAR(cp.value().at(n, i, j), c.value().at(n, perm[i], perm[j]), 1e-12);
                s += c.value().at(n, i, j);
            }
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
}

TEST(Sagc, AllBranchesDisabledIsConfigError) {
    EXPECT_THROW(BranchMask::parse(""), ConfigError);
    EXPECT_THROW(BranchMask::parse("ax"), ConfigError);
    Rng rng(36);
    SagcConfig cfg;
    cfg.branches = {false, false, false};
    EXPECT_THROW(SagcLayer(2, 2, 3, cfg, rng), ConfigError);
}

TEST(Sagc, StaticOnlyEqualsGcnPlusResidual) {
    Rng rng(37);
    SagcConfig cfg;
    cfg.branches = BranchMask::parse("a");
    SagcLayer layer(3, 3, 5, cfg, rng);
    randomize_stats(layer, rng);
    layer.reduce_w.value() = Tensor::identity(3);
    Var x(random_tensor({2, 3, 4, 5}, rng));
    Var a(normalize_adjacency(chain_adjacency(5)));
    auto y = layer.forward(x, a, Mode::infer);
    auto ref = ops::add(gcn_forward(x, a, layer.w_static, &layer.bn_static, Mode::infer), x);
    EXPECT_LT(max_abs_diff(y.value(), ref.value()), 1e-9);
}

TEST(Sagc, ZeroReductionLeavesResidual) {
    Rng rng(38);
    SagcLayer layer(3, 4, 5, {}, rng);
    layer.reduce_w.value().zero();
    Var x(random_tensor({2, 3, 4, 5}, rng));
    auto y = layer.forward(x, Var(normalize_adjacency(chain_adjacency(5))), Mode::train);
    EXPECT_EQ(y.value(), layer.residual(x).value());
}

TEST(Sagc, IdenticalBranchesGiveIdenticalHalves) {
    Rng rng(39);
    SagcConfig cfg;
    cfg.branches = BranchMask::parse("ab");
    SagcLayer layer(3, 2, 4, cfg, rng);
    Tensor a = normalize_adjacency(chain_adjacency(4));
    layer.global_adj.value() = a;
    layer.w_global.value() = layer.w_static.value();
    Var x(random_tensor({2, 3, 5, 4}, rng));
    auto s = layer.branch_outputs(x, Var(a), Mode::train).value();
    ASSERT_EQ(s.dim(1), 4u);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t t = 0; t < 5; ++t)
                for (std::size_t v = 0; v < 4; ++v) EXPECT_EQ(s.at(n, c, t, v), s.at(n, c + 2, t, v));
}

TEST(Sagc, GlobalAdjacencyStartsUniform) {
    Rng rng(40);
    SagcLayer layer(2, 2, 6, {}, rng);
    for (real v : layer.global_adj.value().vec()) EXPECT_DOUBLE_EQ(v, 1.0 / 6);
}

TEST(Sagc, InferredAdjacencyRowsSumToOne) {
    Rng rng(41);
    for (bool per_frame : {false, true}) {
        SagcConfig cfg;
        cfg.per_frame_attention = per_frame;
        SagcLayer layer(3, 4, 5, cfg, rng);
        Var x(random_tensor({2, 3, 6, 5}, rng, -3, 3));
        auto c = layer.inferred_adjacency(x).value();
        EXPECT_EQ(c.dim(0), per_frame ? 12u : 2u);
        for (std::size_t r = 0; r < c.size() / 5; ++r) {
            real s = 0;
            for (std::size_t j = 0; j < 5; ++j) s += c[r * 5 + j];
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
        EXPECT_EQ(layer.forward(x, Var(Tensor::identity(5)), Mode::train).shape(), (Shape{2, 4, 6, 5}));
    }
}

TEST(StgcnBlock, IdentityConfiguredDoublesInput) {
    Rng rng(42);
    BlockConfig cfg{3, 3, 1, 3, {}};
    StgcnBlock block(cfg, 4, rng);
    block.spatial.reduce_w.value().zero();  // SAGC reduces to its residual: x
    block.temporal.value().zero();
    for (std::size_t c = 0; c < 3; ++c) block.temporal.value().at(c, c, 1) = 1;
    freeze_identity(block.bn);
    Var x(random_tensor({2, 3, 6, 4}, rng));
    auto y = block.forward(x, Var(Tensor::identity(4)), Mode::infer);
    Tensor twice = x.value();
    twice *= 2;
    EXPECT_LT(max_abs_diff(y.value(), twice), 1e-15);
}

TEST(StgcnBlock, StrideHalvesTime) {
    Rng rng(43);
    StgcnBlock block({3, 8, 2, 9, {}}, 5, rng);
    auto y = block.forward(Var(random_tensor({2, 3, 12, 5}, rng)), Var(Tensor::identity(5)), Mode::train);
    EXPECT_EQ(y.shape(), (Shape{2, 8, 6, 5}));
}

TEST(StgcnBlock, ZeroInputZeroOutput) {
    Rng rng(44);
    StgcnBlock block({3, 4, 1, 3, {}}, 5, rng);
    for (Mode m : {Mode::train, Mode::infer}) {
        auto y = block.forward(Var(Tensor({2, 3, 6, 5})), Var(normalize_adjacency(chain_adjacency(5))), m);
        EXPECT_LT(max_abs_diff(y.value(), Tensor(y.shape())), 1e-12);
    }
}

TEST(StgcnBlock, EvenKernelRejected) {
    Rng rng(45);
    EXPECT_THROW(StgcnBlock({3, 4, 1, 4, {}}, 5, rng), ConfigError);
}

TEST(Upsample, Definition) {
    Var x(Tensor::from({1, 1, 2, 1}, {5, 7}));
    EXPECT_EQ(ops::temporal_upsample(x, 1).value(), x.value());
    EXPECT_EQ(ops::temporal_upsample(x, 3).value(), Tensor::from({1, 1, 6, 1}, {5, 5, 5, 7, 7, 7}));
}

TEST(Upsample, AveragePoolingInvertsIt) {
    Rng rng(46);
    Var x(random_tensor({2, 3, 4, 5}, rng));
    for (std::size_t f : {2u, 3u}) {
        auto back = ops::temporal_avg_pool(ops::temporal_upsample(x, f), f);
        EXPECT_LT(max_abs_diff(back.value(), x.value()), 1e-15);
    }
}

TEST(StgcnBlock, GradientMatchesFiniteDifferences) {
    Rng rng(47);
    for (std::size_t stride : {1u, 2u}) {
        for (bool per_frame : {false, true}) {
            BlockConfig cfg{3, 4, stride, 3, {}};
            cfg.sagc.per_frame_attention = per_frame;
            StgcnBlock block(cfg, 5, rng);
            randomize_stats(block.spatial, rng);
            randomize_stats(block.bn, rng);
            Parameter x = random_param({2, 3, 6, 5}, rng);
            Var a(normalize_adjacency(chain_adjacency(5)));
            Tensor probe = random_tensor({2, 4, (6 + stride - 1) / stride, 5}, rng);
            auto f = [&] { return probe_loss(block.forward(x, a, Mode::infer), probe); };
            std::vector<NamedParameter> params;
            block.parameters("block", params);
            params.push_back({"input", &x});
            for (auto& p : params) EXPECT_LT(grad_check(f, *p.param), 1e-4) << p.name;
        }
    }
}
