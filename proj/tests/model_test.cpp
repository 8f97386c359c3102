#include <gtest/gtest.h>

#include <sstream>

#include "gepc/cluster/dec.hpp"
#include "gepc/core/grad_check.hpp"
#include "gepc/model/checkpoint.hpp"
#include "model_fixtures.hpp"

using namespace gepc;
using namespace gepc::test_support;

namespace {

std::vector<Tensor> snapshot(Stgcae& m) {
    std::vector<Tensor> out;
    for (auto& p : m.all_parameters()) out.push_back(p.param->value());
    for (auto& b : m.buffers()) out.push_back(*b.tensor);
    return out;
}

}  // namespace

TEST(ModelConfig, DefaultsAreValid) {
    ModelConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.total_stride(), 6u);
    EXPECT_EQ(c.coarse_frames(), 2u);
    EXPECT_DOUBLE_EQ(c.lambda, 0.5);
    EXPECT_TRUE(c.warnings().empty());
}

TEST(ModelConfig, JsonRoundTrip) {
    ModelConfig c = tiny_config(7);
    c.branches = BranchMask::parse("ac");
    c.normalize = NormalizeMode::global;
    c.train.augment = false;
    ModelConfig back = model_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(back.layout.name, "chain5");
    EXPECT_EQ(back.branches.str(), "ac");
}

TEST(ModelConfig, Errors) {
    EXPECT_THROW(model_config_from_json(json{{"window", 10}}), ConfigError);         // 6 does not divide 10
    EXPECT_THROW(model_config_from_json(json{{"strides", {1, 2}}}), ConfigError);    // length mismatch
    EXPECT_THROW(model_config_from_json(json{{"clusters", 1}}), ConfigError);
    EXPECT_THROW(model_config_from_json(json{{"windw", 12}}), ConfigError);
    EXPECT_THROW(model_config_from_json(json{{"branches", ""}}), ConfigError);
    EXPECT_THROW(model_config_from_json(json{{"lambda", "big"}}), ConfigError);
    EXPECT_THROW(model_config_from_json(json{{"train", {{"lr", 0}}}}), ConfigError);
    try {
        model_config_from_json(json{{"train", {{"batch_size", "x"}}}});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("train.batch_size"), std::string::npos);
    }
}

TEST(ModelConfig, SmallLatentWarns) {
    ModelConfig c = tiny_config();
    c.latent_dim = 2;
    EXPECT_EQ(c.warnings().size(), 1u);
}

TEST(Stgcae, EncodeDecodeShapes) {
    Rng rng(50);
    for (auto strides : {std::vector<std::size_t>{2, 3}, {1, 1}, {3, 2}, {1, 6}}) {
        ModelConfig c = tiny_config();
        c.strides = strides;
        Stgcae m(c);
        Var x(random_tensor(m.input_shape(3), rng));
        Var z = m.encode(x, Mode::train);
        EXPECT_EQ(z.shape(), (Shape{3, 4}));
        EXPECT_EQ(m.decode(z, Mode::train).shape(), x.shape());
    }
}

TEST(Stgcae, RejectsWrongInput) {
    Stgcae m(tiny_config());
    EXPECT_THROW(m.encode(Var(Tensor({2, 3, 5, 5})), Mode::infer), ShapeError);
    EXPECT_THROW(m.decode(Var(Tensor({2, 3})), Mode::infer), ShapeError);
}

TEST(Stgcae, DeterministicAndBatchEquivariant) {
    Rng rng(51);
    Stgcae m(tiny_config());
    randomize_batch_norm(m, rng);
    Tensor a = random_tensor(m.input_shape(1), rng), b = random_tensor(m.input_shape(1), rng);
    Tensor ab({2, 3, 6, 5}), ba({2, 3, 6, 5}), aa({2, 3, 6, 5});
    std::copy_n(a.data(), a.size(), ab.data());
    std::copy_n(b.data(), b.size(), ab.data() + a.size());
    std::copy_n(b.data(), b.size(), ba.data());
    std::copy_n(a.data(), a.size(), ba.data() + a.size());
    std::copy_n(a.data(), a.size(), aa.data());
    std::copy_n(a.data(), a.size(), aa.data() + a.size());
    Tensor z_ab = m.encode(Var(ab), Mode::infer).value();
    Tensor z_ba = m.encode(Var(ba), Mode::infer).value();
    Tensor z_aa = m.encode(Var(aa), Mode::infer).value();
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(z_ab.at(0, k), z_ba.at(1, k));
        EXPECT_EQ(z_ab.at(1, k), z_ba.at(0, k));
        EXPECT_EQ(z_aa.at(0, k), z_aa.at(1, k));
    }
    EXPECT_EQ(m.decode(Var(z_ab), Mode::infer).value(), m.decode(Var(z_ab), Mode::infer).value());
}

TEST(Stgcae, SameSeedSameWeights) {
    Stgcae a(tiny_config(3)), b(tiny_config(3)), c(tiny_config(4));
    auto sa = snapshot(a), sb = snapshot(b), sc = snapshot(c);
    EXPECT_EQ(sa, sb);
    EXPECT_NE(sa, sc);
}

TEST(Stgcae, ParameterNamesAreUnique) {
    Stgcae m(tiny_config());
    std::set<std::string> names;
    for (auto& p : m.all_parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
    for (auto& b : m.buffers()) EXPECT_TRUE(names.insert(b.name).second) << b.name;
}

TEST(ReconstructionLoss, Examples) {
    Tensor x = Tensor::from({2}, {0, 2});
    EXPECT_DOUBLE_EQ(reconstruction_loss(Var(x), x).item(), 0.0);
    EXPECT_DOUBLE_EQ(reconstruction_loss(Var(Tensor({3, 2}, 1.0)), Tensor({3, 2})).item(), 1.0);
    EXPECT_DOUBLE_EQ(reconstruction_loss(Var(Tensor::from({2}, {1, 1})), x).item(), 1.0);
    EXPECT_THROW(reconstruction_loss(Var(Tensor({3})), x), ShapeError);
}

TEST(Stgcae, DecoderGradient) {
    Rng rng(52);
    Stgcae m(tiny_config());
    randomize_batch_norm(m, rng);
    Parameter z = random_param({2, 4}, rng);
    auto f = [&] {
        Var y = m.decode(z, Mode::infer);
        return ops::sum(ops::mul(y, y));
    };
    EXPECT_LT(grad_check(f, z), 1e-4);
    for (auto& p : m.decoder_parameters()) EXPECT_LT(grad_check(f, *p.param), 1e-4) << p.name;
}

TEST(Stgcae, EncoderGradient) {
    Rng rng(53);
    Stgcae m(tiny_config());
    randomize_batch_norm(m, rng);
    Parameter x = random_param(m.input_shape(3), rng);
    Tensor probe = random_tensor({3, 4}, rng);
    auto f = [&] { return probe_loss(m.encode(x, Mode::infer), probe); };
    EXPECT_LT(grad_check(f, x), 1e-4);
    for (auto& p : m.encoder_parameters()) EXPECT_LT(grad_check(f, *p.param), 1e-4) << p.name;
}

TEST(MakeWindows, NormalizesPerConfig) {
    ModelConfig c = tiny_config();
    PoseSequence s{"v", "p", 0, Tensor({10, 5, 3}), Tensor({10, 5}, 1.0)};
    Rng rng(54);
    s.frames = random_tensor({10, 5, 3}, rng, 0, 100);
    for (std::size_t t = 0; t < 10; ++t)
        for (std::size_t v = 0; v < 5; ++v) s.frames.at(t, v, 2) = 1;
    auto ws = make_windows({s}, c);
    ASSERT_EQ(ws.size(), 4u);  // starts 0, 3, 6, 9
    for (const auto& w : ws) {
        real m = 0;
        for (std::size_t i = 0; i < 30; ++i) m = std::max(m, std::abs(w.data[i]));
        EXPECT_LE(m, 1.0 + 1e-12);
    }
    s.frames = Tensor({10, 4, 3});
    s.confidence = Tensor({10, 4}, 1.0);
    EXPECT_THROW(make_windows({s}, c), SchemaError);
}

TEST(Pretrain, ZeroEpochsLeavesModelUnchanged) {
    Rng rng(55);
    ModelConfig c = tiny_config();
    Stgcae m(c);
    auto before = snapshot(m);
    auto ws = wave_windows(8, rng, c);
    Rng train_rng(1);
    auto report = pretrain(m, ws, 0, train_rng);
    EXPECT_TRUE(report.epochs.empty());
    EXPECT_EQ(snapshot(m), before);
    EXPECT_THROW(pretrain(m, {}, 1, train_rng), ConfigError);
}

TEST(Pretrain, DeterministicAndDecreasing) {
    Rng rng(56);
    ModelConfig c = tiny_config();
    auto ws = wave_windows(32, rng, c);
    std::vector<real> finals;
    for (int run = 0; run < 2; ++run) {
        Stgcae m(c);
        Rng train_rng(9);
        auto r = pretrain(m, ws, 30, train_rng);
        ASSERT_EQ(r.epochs.size(), 30u);
        EXPECT_LT(r.epochs.back().reconstruction, 0.5 * r.epochs.front().reconstruction);
        finals.push_back(r.epochs.back().reconstruction);
    }
    EXPECT_EQ(finals[0], finals[1]);
}

TEST(Pretrain, DivergenceIsReported) {
    Rng rng(57);
    ModelConfig c = tiny_config();
    c.train.lr = real(1e200);
    Stgcae m(c);
    auto ws = wave_windows(8, rng, c);
    Rng train_rng(1);
    try {
        pretrain(m, ws, 5, train_rng);
        FAIL() << "expected divergence";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("train.lr"), std::string::npos);
    }
}

TEST(Finetune, ZeroLambdaMatchesPretrainingBitExactly) {
    Rng rng(58);
    ModelConfig c = tiny_config();
    c.lambda = 0;
    auto ws = wave_windows(20, rng, c);
    Stgcae a(c), b(c);
    Rng init_a(5), init_b(5);
    init_clusters(a, ws, init_a);
    init_clusters(b, ws, init_b);
    Rng ra(11), rb(11);
    pretrain(a, ws, 2, ra);
    finetune(b, ws, 2, rb);
    EXPECT_EQ(snapshot(a), snapshot(b));
}

TEST(Finetune, RequiresInitializedClusters) {
    Rng rng(59);
    ModelConfig c = tiny_config();
    Stgcae m(c);
    auto ws = wave_windows(4, rng, c);
    EXPECT_THROW(finetune(m, ws, 1, rng), ConfigError);
}

TEST(Finetune, DeterministicTheta) {
    Rng rng(60);
    ModelConfig c = tiny_config();
    auto ws = wave_windows(16, rng, c);
    std::vector<Tensor> thetas;
    for (int run = 0; run < 2; ++run) {
        Stgcae m(c);
        Rng r(3);
        init_clusters(m, ws, r);
        auto rep = finetune(m, ws, 3, r);
        EXPECT_EQ(rep.epochs.size(), 3u);
        EXPECT_EQ(rep.estep_entropy.size(), 4u);
        thetas.push_back(m.cluster.theta.value());
    }
    EXPECT_EQ(thetas[0], thetas[1]);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    Rng rng(61);
    ModelConfig c = tiny_config();
    auto ws = wave_windows(12, rng, c);
    Stgcae m(c);
    Rng train_rng(2);
    pretrain(m, ws, 2, train_rng);
    init_clusters(m, ws, train_rng);
    DirichletMixture mix{{0.25, 0.75}, {{1.5, 2.25, 0.1}, {3, 1.0 / 3, 7}}};
    std::stringstream buf;
    save_checkpoint(buf, m, &mix, json{{"seed", 2}});
    const std::string bytes = buf.str();
    EXPECT_EQ(bytes.substr(0, 8), "GEPCCKPT");

    Checkpoint ck = load_checkpoint(buf);
    EXPECT_EQ(snapshot(*ck.model), snapshot(m));
    EXPECT_TRUE(ck.model->cluster.initialized);
    ASSERT_TRUE(ck.mixture);
    EXPECT_EQ(ck.mixture->weights, mix.weights);
    EXPECT_EQ(ck.mixture->alpha, mix.alpha);
    EXPECT_EQ(ck.provenance.at("seed"), 2);
    Tensor x = stack_windows(ws, std::vector<std::size_t>{0, 1, 2});
    EXPECT_EQ(ck.model->encode(Var(x), Mode::infer).value(), m.encode(Var(x), Mode::infer).value());

    std::stringstream again;
    save_checkpoint(again, *ck.model, &*ck.mixture, json{{"seed", 2}});
    EXPECT_EQ(again.str(), bytes);
}

TEST(Checkpoint, WithoutMixture) {
    Stgcae m(tiny_config());
    std::stringstream buf;
    save_checkpoint(buf, m);
    EXPECT_FALSE(load_checkpoint(buf).mixture);
}

TEST(Checkpoint, RejectsCorruptInput) {
    Stgcae m(tiny_config());
    std::stringstream buf;
    save_checkpoint(buf, m);
    std::string bytes = buf.str();

    std::stringstream bad_magic("NOTACKPT" + bytes.substr(8));
    EXPECT_THROW(load_checkpoint(bad_magic), SchemaError);
    std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(load_checkpoint(truncated), SchemaError);
    std::string wrong_version = bytes;
    wrong_version[8] = 9;
    std::stringstream v(wrong_version);
    EXPECT_THROW(load_checkpoint(v), SchemaError);
}
