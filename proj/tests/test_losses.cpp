#include <cmath>

#include <gtest/gtest.h>

#include "prank/losses.hpp"
#include "test_support.hpp"

namespace prank {
namespace {

using testing::random_batch;
using testing::random_params;
using testing::toy_spec;

Embedding unit(std::vector<double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    for (auto& x : v) x /= std::sqrt(n);
    return Embedding(std::move(v));
}

// Copies head 0 (and alpha_0) into every other head.
void tie_heads(ModelParams& p) {
    for (std::size_t k = 1; k < p.spec().m; ++k) {
        for (std::size_t l = 0; l < p.f_head(0).size(); ++l) {
            p.tensor(p.f_head(k)[l].weight) = p.tensor(p.f_head(0)[l].weight);
            p.tensor(p.f_head(k)[l].bias) = p.tensor(p.f_head(0)[l].bias);
        }
        p.set_alpha_raw(k, std::log(p.alpha(0)));
    }
}

TEST(McNormalizer, AlphaZeroIsOne) {
    const std::vector<Embedding> samples{unit({1, 2}), unit({-3, 1}), unit({0, 1})};
    EXPECT_EQ(mc_normalizer(unit({1, 1}), samples, 0.0), 1.0);
}

TEST(McNormalizer, SingleSampleEqualToScene) {
    const auto q = unit({0.3, -0.2, 0.9});
    const std::vector<Embedding> samples{q};
    EXPECT_NEAR(mc_normalizer(q, samples, 2.0), std::exp(2.0), 1e-14);
}

TEST(McNormalizer, WeightedEnumerationIsExactNormalizer) {
    const Matrix g = testing::random_unit_rows(64, 8, 3);
    std::vector<Embedding> samples;
    std::vector<double> h;
    for (Eigen::Index i = 0; i < 64; ++i) {
        samples.emplace_back(testing::row(g, i));
        h.push_back(1.0 / static_cast<double>(1 + i % 5));
    }
    const auto q = Embedding(testing::row(testing::random_unit_rows(1, 8, 4), 0));
    const double alpha = 7.5;
    long double num = 0.0L, den = 0.0L;
    for (std::size_t i = 0; i < 64; ++i) {
        num += h[i] * std::exp(static_cast<long double>(alpha * q.dot(samples[i])));
        den += h[i];
    }
    EXPECT_NEAR(mc_normalizer(q, samples, alpha, h), static_cast<double>(num / den), 1e-12 * static_cast<double>(num / den));
}

TEST(McNormalizer, StableForLargeAlpha) {
    const std::vector<Embedding> samples{unit({1, 0}), unit({0, 1})};
    const double lz = log_mc_normalizer(unit({1, 0}), samples, 5000.0);
    EXPECT_TRUE(std::isfinite(lz));
    EXPECT_NEAR(lz, 5000.0 - std::log(2.0), 1e-9);
}

TEST(NllBase, SingleCandidateIsZero) {
    const auto p = random_params(toy_spec(), 1);
    const auto batch = random_batch(toy_spec(), 1, 1, 2);
    EXPECT_NEAR(nll_base(p, batch), 0.0, 1e-15);
}

TEST(NllBase, AlphaZeroIsLogCandidateCount) {
    auto p = random_params(toy_spec(), 1);
    p.set_alpha_raw(0, -1000.0);  // alpha underflows to exactly zero
    ASSERT_EQ(p.alpha(0), 0.0);
    const auto batch = random_batch(toy_spec(), 4, 20, 2);
    EXPECT_NEAR(nll_base(p, batch), std::log(20.0), 1e-14);
}

TEST(NllBase, MatchesBruteForceCrossEntropy) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = random_params(toy_spec(), seed);
        const auto batch = random_batch(toy_spec(), 4, 16, 10 + seed);
        EXPECT_NEAR(nll_base(p, batch), testing::ref_loss(p, batch, false), 1e-12);
    }
}

TEST(NllBase, EnumeratedSupportWithLogWeights) {
    const auto p = random_params(toy_spec(), 3);
    auto batch = random_batch(toy_spec(), 3, 64, 4);
    batch.candidate_log_weight.resize(64);
    for (Eigen::Index j = 0; j < 64; ++j) batch.candidate_log_weight(j) = -std::log(1.0 + static_cast<double>(j % 7));
    EXPECT_NEAR(nll_base(p, batch), testing::ref_loss(p, batch, false), 1e-12);
}

TEST(NllBase, FiniteForAlphaFifty) {
    auto p = random_params(toy_spec(), 3);
    p.set_alpha_raw(0, std::log(50.0));
    const auto batch = random_batch(toy_spec(), 4, 16, 4);
    const auto lv = loss_and_gradient(p, batch, {});
    EXPECT_TRUE(std::isfinite(lv.loss));
    for (double g : lv.gradient) EXPECT_TRUE(std::isfinite(g));
}

TEST(NllNoise, MatchesBruteForce) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = random_params(toy_spec(), seed);
        const auto batch = random_batch(toy_spec(), 4, 16, 20 + seed);
        EXPECT_NEAR(nll_noise(p, batch), testing::ref_loss(p, batch, true), 1e-12);
    }
}

TEST(NllNoise, LargeBetaApproachesBase) {
    auto p = random_params(toy_spec(), 5);
    p.set_beta_raw(20.0);
    const auto batch = random_batch(toy_spec(), 4, 16, 6);
    EXPECT_NEAR(nll_noise(p, batch), nll_base(p, batch), 1e-3);
}

TEST(NllNoise, SingleSampleEqualToGroundTruth) {
    const auto p = random_params(toy_spec(), 5);
    const auto batch = random_batch(toy_spec(), 1, 1, 7);
    const auto q = encode_scenes(p, batch.scenes, 0);
    const auto g = encode_trajectories(p, batch.candidates);
    const double s = p.alpha(0) * q.row(0).dot(g.row(0));
    // log Z-hat over the single candidate is s itself.
    EXPECT_NEAR(nll_noise(p, batch), -(s - s), 1e-15);
    EXPECT_NEAR(nll_noise(p, batch), nll_base(p, batch), 1e-15);
}

TEST(NllNoise, KernelNormalizerShiftsByAnalyticConstant) {
    const auto p = random_params(toy_spec(), 8);
    const auto batch = random_batch(toy_spec(), 2, 16, 9);
    const double shift = nll_noise(p, batch, true) - nll_noise(p, batch, false);
    EXPECT_NEAR(shift, log_laplace_kernel_constant(10, p.beta()), 1e-10);
    // The constant normalizes exp(-beta r) in one dimension: integral = 2 / beta.
    EXPECT_NEAR(std::exp(log_laplace_kernel_constant(1, 2.5)), 0.8, 1e-14);
    // Two dimensions: 2 pi / beta^2.
    EXPECT_NEAR(std::exp(log_laplace_kernel_constant(2, 2.0)), 2 * std::numbers::pi / 4.0, 1e-13);
}

TEST(NllMixture, SingleModeEqualsUnimodal) {
    const auto p = random_params(toy_spec(1), 3);
    const auto batch = random_batch(toy_spec(1), 4, 16, 3);
    EXPECT_EQ(nll_mixture(p, batch, false), nll_base(p, batch));
    EXPECT_EQ(nll_mixture(p, batch, true), nll_noise(p, batch));
}

TEST(NllMixture, MatchesBruteForce) {
    const auto p = random_params(toy_spec(3), 13);
    const auto batch = random_batch(toy_spec(3), 4, 16, 14);
    EXPECT_NEAR(nll_mixture(p, batch, false), testing::ref_loss(p, batch, false), 1e-12);
    EXPECT_NEAR(nll_mixture(p, batch, true), testing::ref_loss(p, batch, true), 1e-12);
}

TEST(NllMixture, IdenticalHeadsMakeLossIndependentOfPi) {
    auto p = random_params(toy_spec(2), 15);
    tie_heads(p);
    const auto batch = random_batch(toy_spec(2), 4, 16, 16);
    const double base = nll_mixture(p, batch, false);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int trial = 0; trial < 5; ++trial) {
        auto q = p;
        auto w = q.tensor(q.mixture_head().weight);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
        EXPECT_NEAR(nll_mixture(q, batch, false), base, 1e-12);
    }
}

TEST(NllMixture, SingleModeLossesRejectMixtures) {
    const auto p = random_params(toy_spec(2), 1);
    const auto batch = random_batch(toy_spec(2), 1, 4, 1);
    EXPECT_THROW(nll_base(p, batch), ArgumentError);
}

struct GradCase {
    std::size_t m;
    bool noise;
    bool kernel_normalizer;
};

class LossGradient : public ::testing::TestWithParam<GradCase> {};

TEST_P(LossGradient, MatchesCentralDifferences) {
    const auto c = GetParam();
    const auto spec = toy_spec(c.m);
    const auto p = random_params(spec, 31);
    const auto batch = random_batch(spec, 3, 16, 32);
    const LossOptions opt{c.noise, c.kernel_normalizer};
    const auto lv = loss_and_gradient(p, batch, opt);
    EXPECT_EQ(lv.loss, evaluate_loss(p, batch, opt));
    const auto check =
        testing::check_gradient(p, lv.gradient, [&](const ModelParams& q) { return evaluate_loss(q, batch, opt); });
    EXPECT_EQ(check.checked, p.size());
    EXPECT_LE(check.max_rel_error, 1e-4) << "worst parameter " << check.worst;
}

INSTANTIATE_TEST_SUITE_P(AllLosses, LossGradient,
                         ::testing::Values(GradCase{1, false, false}, GradCase{1, true, false},
                                           GradCase{1, true, true}, GradCase{2, false, false},
                                           GradCase{2, true, false}));

TEST(LossGradient, DeterministicAcrossCalls) {
    const auto p = random_params(toy_spec(2), 3);
    const auto batch = random_batch(toy_spec(2), 3, 16, 3);
    const auto a = loss_and_gradient(p, batch, {true, false});
    const auto b = loss_and_gradient(p, batch, {true, false});
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.gradient, b.gradient);
}

}  // namespace
}  // namespace prank
