#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gepc/score/aggregate.hpp"
#include "gepc/score/dirichlet.hpp"

using namespace gepc;

namespace {

Simplex uniform_simplex(std::size_t k, Rng& rng) {
    std::vector<real> ones(k, 1);
    return sample_dirichlet(ones, rng);
}

std::vector<Simplex> draw(const std::vector<real>& alpha, std::size_t n, Rng& rng) {
    std::vector<Simplex> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_dirichlet(alpha, rng));
    return out;
}

real l1(const std::vector<real>& a, const std::vector<real>& b) {
    real s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
}

void expect_monotone(const MixtureFit& fit) {
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i) {
        if (fit.after_structure_change[i]) continue;
        EXPECT_GE(fit.log_likelihood[i], fit.log_likelihood[i - 1] - 1e-7) << "iteration " << i;
    }
}

void expect_valid(const DirichletMixture& m) {
    ASSERT_GE(m.components(), 1u);
    real s = 0;
    for (real w : m.weights) {
        EXPECT_GT(w, 0);
        s += w;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    for (const auto& a : m.alpha)
        for (real v : a) {
            EXPECT_GE(v, kAlphaMin);
            EXPECT_LE(v, kAlphaMax);
        }
}

}  // namespace

TEST(ClampToSimplex, InteriorAndUniformUnchanged) {
    Simplex p{0.2, 0.3, 0.5};
    auto c = clamp_to_simplex(p);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(c[i], p[i], 1e-9);
    Simplex u(4, 0.25);
    EXPECT_EQ(clamp_to_simplex(u), u);
}

TEST(ClampToSimplex, OneHot) {
    auto c = clamp_to_simplex({1, 0});
    EXPECT_GE(c[1], 1e-6);
    EXPECT_NEAR(c[0], 1 - 1e-6, 1e-15);
    EXPECT_NEAR(c[0] + c[1], 1.0, 1e-15);
}

TEST(ClampToSimplex, MinimumEntryHoldsEverywhere) {
    Rng rng(90);
    for (int trial = 0; trial < 500; ++trial) {
        Simplex p = uniform_simplex(6, rng);
        for (std::size_t k = 0; k < 6; ++k)
            if (trial % (k + 2) == 0) p[k] = 0;
        real s = 0;
        for (real v : p) s += v;
        if (s == 0) continue;
        for (auto& v : p) v /= s;
        auto c = clamp_to_simplex(p);
        real t = 0;
        for (real v : c) {
            EXPECT_GE(v, 1e-6);
            t += v;
        }
        EXPECT_NEAR(t, 1.0, 1e-9);
    }
}

TEST(ClampToSimplex, Errors) {
    EXPECT_THROW(clamp_to_simplex({1.5, -0.5}), Error);
    EXPECT_THROW(clamp_to_simplex({0.5, 0.6}), Error);
}

TEST(DirichletLogpdf, ClosedForms) {
    EXPECT_NEAR(dirichlet_logpdf({0.2, 0.3, 0.5}, {1, 1, 1}), std::log(2.0), 1e-9);
    EXPECT_NEAR(dirichlet_logpdf({0.5, 0.5}, {2, 2}), std::log(1.5), 1e-9);
}

TEST(DirichletLogpdf, MatchesReferenceValues) {
    // scipy.stats.dirichlet.logpdf
    EXPECT_NEAR(dirichlet_logpdf({0.2, 0.3, 0.5}, {2.5, 0.7, 4.0}), 0.48713192462249477, 1e-12);
    EXPECT_NEAR(dirichlet_logpdf({0.01, 0.98, 0.01}, {0.5, 0.5, 0.5}), 2.7773944732375053, 1e-12);
    EXPECT_NEAR(dirichlet_logpdf({0.1, 0.2, 0.3, 0.4}, {10, 20, 30, 40}), 7.1505584327445035, 1e-10);
    EXPECT_NEAR(dirichlet_logpdf({0.6, 0.4}, {3, 7}), -0.9899665512654892, 1e-12);
}

TEST(DirichletLogpdf, UniformComponentIsConstant) {
    Rng rng(91);
    std::vector<real> vals;
    for (int i = 0; i < 1000; ++i) vals.push_back(dirichlet_logpdf(clamp_to_simplex(uniform_simplex(3, rng)), {1, 1, 1}));
    real mean = 0, var = 0;
    for (real v : vals) mean += v / 1000;
    for (real v : vals) var += (v - mean) * (v - mean) / 1000;
    EXPECT_LT(var, 1e-18);
}

TEST(DirichletLogpdf, IntegratesToOne) {
    // Mean density over uniform simplex samples estimates (K-1)! times the integral.
    Rng rng(92);
    const std::vector<real> alpha{2, 3, 4};
    const int n = 200000;
    real s = 0;
    for (int i = 0; i < n; ++i) s += std::exp(dirichlet_logpdf(uniform_simplex(3, rng), alpha));
    EXPECT_NEAR(s / n, 2.0, 0.03);
}

TEST(NormalityScore, Examples) {
    DirichletMixture uniform{{1.0}, {{1, 1, 1}}};
    Rng rng(93);
    for (int i = 0; i < 10; ++i)
        EXPECT_NEAR(normality_score(uniform_simplex(3, rng), &uniform, ScoreMethod::dirichlet), std::log(2.0), 1e-9);
    EXPECT_DOUBLE_EQ(normality_score({0.25, 0.25, 0.25, 0.25}, nullptr, ScoreMethod::max_softmax), 0.25);
    DirichletMixture two{{0.5, 0.5}, {{2, 2}, {1, 1}}};
    EXPECT_NEAR(normality_score({0.5, 0.5}, &two, ScoreMethod::dirichlet), std::log(1.25), 1e-9);
}

TEST(NormalityScore, UnfittedMixtureIsAnError) {
    DirichletMixture empty;
    EXPECT_THROW(normality_score({0.5, 0.5}, &empty, ScoreMethod::dirichlet), Error);
    EXPECT_THROW(normality_score({0.5, 0.5}, nullptr, ScoreMethod::dirichlet), Error);
    EXPECT_THROW(score_method_from_string("mean"), ConfigError);
    EXPECT_EQ(score_method_from_string("max"), ScoreMethod::max_softmax);
}

TEST(NormalityScore, ExchangeableUnderRelabeling) {
    Rng rng(94);
    DirichletMixture m{{0.3, 0.7}, {{2, 5, 0.5, 1}, {7, 1, 1, 3}}};
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    DirichletMixture mp = m;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < 4; ++k) mp.alpha[c][k] = m.alpha[c][perm[k]];
    for (int i = 0; i < 50; ++i) {
        Simplex p = uniform_simplex(4, rng), pp(4);
        for (std::size_t k = 0; k < 4; ++k) pp[k] = p[perm[k]];
        EXPECT_NEAR(normality_score(p, &m, ScoreMethod::dirichlet), normality_score(pp, &mp, ScoreMethod::dirichlet),
                    1e-12);
    }
}

TEST(FitMixture, SingleGeneratorConcentrates) {
    Rng rng(95);
    auto pts = draw({5, 5, 5}, 600, rng);
    MixtureOptions opt;
    opt.initial_components = 3;
    auto fit = fit_mixture(pts, opt);
    expect_valid(fit.mixture);
    EXPECT_GT(*std::max_element(fit.mixture.weights.begin(), fit.mixture.weights.end()), 0.9);
    expect_monotone(fit);
}

TEST(FitMixture, SingleComponentRecoversConcentration) {
    Rng rng(96);
    auto pts = draw({2, 6, 12}, 5000, rng);
    MixtureOptions opt;
    opt.initial_components = 1;
    auto fit = fit_mixture(pts, opt);
    ASSERT_EQ(fit.mixture.components(), 1u);
    const std::vector<real> want{2, 6, 12};
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(fit.mixture.alpha[0][k] / want[k], 1.0, 0.08);
}

TEST(FitMixture, TwoSeparatedGenerators) {
    Rng rng(97);
    auto pts = draw({20, 2, 2}, 500, rng);
    auto more = draw({2, 2, 20}, 500, rng);
    pts.insert(pts.end(), more.begin(), more.end());
    MixtureOptions opt;
    opt.initial_components = 5;
    auto fit = fit_mixture(pts, opt);
    ASSERT_EQ(fit.mixture.components(), 2u);
    const std::vector<real> g1{20.0 / 24, 2.0 / 24, 2.0 / 24}, g2{2.0 / 24, 2.0 / 24, 20.0 / 24};
    auto m0 = fit.mixture.mean(0), m1 = fit.mixture.mean(1);
    const real match = std::min(std::max(l1(m0, g1), l1(m1, g2)), std::max(l1(m0, g2), l1(m1, g1)));
    EXPECT_LT(match, 0.1);
    expect_monotone(fit);
}

TEST(FitMixture, LikelihoodNeverDecreases) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(200 + seed);
        std::vector<Simplex> pts;
        const std::size_t k = 2 + seed % 4;
        for (int g = 0; g < 3; ++g) {
            std::vector<real> alpha(k);
            for (auto& a : alpha) a = std::uniform_real_distribution<real>(0.3, 15)(rng);
            auto d = draw(alpha, 60 + 20 * seed, rng);
            pts.insert(pts.end(), d.begin(), d.end());
        }
        MixtureOptions opt;
        opt.initial_components = 4;
        opt.seed = seed;
        auto fit = fit_mixture(pts, opt);
        expect_valid(fit.mixture);
        expect_monotone(fit);
    }
}

TEST(FitMixture, Deterministic) {
    Rng rng(98);
    auto pts = draw({3, 1, 1, 2}, 300, rng);
    auto a = fit_mixture(pts), b = fit_mixture(pts);
    EXPECT_EQ(a.mixture.weights, b.mixture.weights);
    EXPECT_EQ(a.mixture.alpha, b.mixture.alpha);
}

TEST(FitMixture, Errors) {
    EXPECT_THROW(fit_mixture({{0.5, 0.5}}), DegenerateFitError);
    MixtureOptions opt;
    opt.initial_components = 0;
    EXPECT_THROW(fit_mixture({{0.5, 0.5}, {0.4, 0.6}}, opt), ConfigError);
}

TEST(FitMixture, HandlesBoundaryPoints) {
    std::vector<Simplex> pts;
    for (int i = 0; i < 50; ++i) pts.push_back({1, 0, 0});
    for (int i = 0; i < 50; ++i) pts.push_back({0, 0, 1});
    auto fit = fit_mixture(pts);
    expect_valid(fit.mixture);
    EXPECT_TRUE(std::isfinite(fit.mixture.log_density(clamp_to_simplex({1, 0, 0}))));
}

TEST(Aggregate, SingleWindowIsConstant) {
    auto f = aggregate_frame_scores({{"v", "p", 0, 4, 2.5}});
    EXPECT_EQ(f.at("v"), std::vector<real>(4, 2.5));
}

TEST(Aggregate, LeastNormalPersonDominates) {
    auto f = aggregate_frame_scores({{"v", "a", 0, 1, 5}, {"v", "b", 0, 1, 1}});
    EXPECT_EQ(f.at("v")[0], 1);
}

TEST(Aggregate, OverlappingWindowsAverage) {
    auto f = aggregate_frame_scores({{"v", "a", 0, 3, 2}, {"v", "a", 2, 3, 4}});
    EXPECT_EQ(f.at("v"), (std::vector<real>{2, 2, 3, 4, 4}));
}

TEST(Aggregate, EmptyFramesTakeTheMedian) {
    auto f = aggregate_frame_scores({{"v", "a", 0, 1, 1}, {"v", "a", 1, 1, 3}, {"v", "a", 2, 1, 8}},
                                    {{"v", 6}, {"w", 2}});
    EXPECT_EQ(f.at("v"), (std::vector<real>{1, 3, 8, 3, 3, 3}));
    EXPECT_EQ(f.at("w"), (std::vector<real>{3, 3}));  // no person at all: global median
}

TEST(Aggregate, FramesOutsideTheLabelRangeAreDropped) {
    auto f = aggregate_frame_scores({{"v", "a", -2, 6, 1}}, {{"v", 3}});
    EXPECT_EQ(f.at("v"), (std::vector<real>{1, 1, 1}));
}

TEST(ScoresCsv, AnomalyPolarity) {
    std::ostringstream os;
    write_scores_csv(os, {{"v", {1.5, 0}}});
    EXPECT_EQ(os.str(), "video_id,frame,score\nv,0,-1.5\nv,1,0\n");
}
