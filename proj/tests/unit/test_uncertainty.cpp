#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>

#include "gssl/ops.hpp"
#include "gssl/uncertainty.hpp"
#include "support/oracles.hpp"

namespace gssl {
namespace {

using testing::random_tensor;

// 1×K×1×P map from per-pixel score vectors.
Tensor scores_of(const std::vector<std::vector<double>>& px) {
    const std::size_t k = px.front().size(), p = px.size();
    std::vector<double> v(k * p);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t c = 0; c < k; ++c) v[c * p + i] = px[i][c];
    return Tensor::from_vector({1, k, 1, p}, v);
}

PixelMask mask_of(const std::vector<std::uint8_t>& bits) {
    return {1, 1, bits.size(), bits};
}

TEST(ConsistencyMask, IdenticalMapsAgreeEverywhere) {
    Rng rng(1);
    const Tensor s = random_tensor({2, 3, 4, 4}, rng);
    EXPECT_EQ(consistency_mask(s, s).count(), 32u);
}

TEST(ConsistencyMask, FlippedPixelIsTheOnlyZero) {
    Rng rng(2);
    const Tensor a = random_tensor({1, 3, 2, 2}, rng);
    Tensor b = a.clone();
    // Swap the argmax of pixel 2 by lifting another class above it.
    const auto classes = argmax_classes(a);
    const std::size_t other = (classes[2] + 1) % 3;
    b.mutable_data()[other * 4 + 2] = 10.0;
    const PixelMask m = consistency_mask(a, b);
    EXPECT_EQ(m.values, (std::vector<std::uint8_t>{1, 1, 0, 1}));
}

TEST(ConsistencyMask, SingleClassIsAlwaysConsistent) {
    Rng rng(3);
    EXPECT_EQ(consistency_mask(random_tensor({1, 1, 3, 3}, rng), random_tensor({1, 1, 3, 3}, rng)).count(), 9u);
}

TEST(ConsistencyMask, SymmetricAndRejectsMismatch) {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor a = random_tensor({2, 4, 3, 3}, rng);
        const Tensor b = random_tensor({2, 4, 3, 3}, rng);
        EXPECT_EQ(consistency_mask(a, b).values, consistency_mask(b, a).values);
    }
    EXPECT_THROW(consistency_mask(Tensor::zeros({1, 2, 2, 2}), Tensor::zeros({1, 3, 2, 2})),
                 std::invalid_argument);
}

TEST(ConsistencyMask, TiesGoToLowestClass) {
    const Tensor a = scores_of({{0.5, 0.5}});
    const Tensor b = scores_of({{0.5, 0.4}});
    EXPECT_EQ(argmax_classes(a)[0], 0u);
    EXPECT_EQ(consistency_mask(a, b).count(), 1u);
}

TEST(CalculateGamma, HalfConsistentPicksThirdOrderStatistic) {
    const Tensor s = scores_of({{0.9, 0.0}, {0.1, 0.0}, {0.6, 0.0}, {0.4, 0.0}});
    const PixelMask mc = mask_of({1, 0, 1, 0});
    const double gamma = calculate_gamma(mc, s);
    EXPECT_EQ(gamma, 0.6);
    const PixelMask certain = certainty_mask(s, gamma);
    EXPECT_EQ(certain.values, (std::vector<std::uint8_t>{1, 0, 1, 0}));
    EXPECT_EQ(certain.fraction(), 0.5);
}

TEST(CalculateGamma, AllConsistentGivesMinimum) {
    const Tensor s = scores_of({{0.9}, {0.1}, {0.6}, {0.4}});
    const double gamma = calculate_gamma(mask_of({1, 1, 1, 1}), s);
    EXPECT_EQ(gamma, 0.1);
    EXPECT_EQ(certainty_mask(s, gamma).count(), 4u);
}

TEST(CalculateGamma, NoneConsistentClampsToMaximum) {
    const Tensor s = scores_of({{0.9}, {0.1}, {0.9}, {0.4}});
    const double gamma = calculate_gamma(mask_of({0, 0, 0, 0}), s);
    EXPECT_EQ(gamma, 0.9);
    EXPECT_EQ(certainty_mask(s, gamma).values, (std::vector<std::uint8_t>{1, 0, 1, 0}));
}

TEST(CalculateGamma, RejectsEmptyAndMismatchedInput) {
    EXPECT_THROW(calculate_gamma(PixelMask{}, Tensor::zeros({0, 2, 1, 1})), std::invalid_argument);
    EXPECT_THROW(calculate_gamma(mask_of({1, 1}), scores_of({{0.3}})), std::invalid_argument);
}

TEST(CalculateGamma, ProportionIdentityOnRandomInstances) {
    Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        const auto g = testing::random_gamma_instance(rng);
        const std::size_t total = g.consistency.size();
        const PixelMask certain = certainty_mask(g.scores, calculate_gamma(g.consistency, g.scores));
        const long diff = static_cast<long>(certain.count()) - static_cast<long>(g.consistency.count());
        ASSERT_LE(std::labs(diff), 1) << "trial " << trial;
        // Only the clamped p_c = 0 case leaves one pixel of slack.
        if (g.consistency.count() > 0) {
            ASSERT_EQ(diff, 0) << "trial " << trial << " of " << total;
        }
    }
}

TEST(CertaintyMask, ExtremeThresholds) {
    Rng rng(6);
    const Tensor s = ops::l2_normalize(random_tensor({2, 3, 4, 4}, rng), 1);
    EXPECT_EQ(certainty_mask(s, -2.0).count(), 32u);
    EXPECT_EQ(certainty_mask(s, 2.0).count(), 0u);
}

TEST(CertaintyMask, DirectComparison) {
    const Tensor s = scores_of({{0.9, 0.2}, {0.4, 0.2}});
    EXPECT_EQ(certainty_mask(s, 0.5).values, (std::vector<std::uint8_t>{1, 0}));
}

TEST(CertaintyMask, MonotoneInThreshold) {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor s = random_tensor({1, 3, 4, 5}, rng);
        double g1 = rng.uniform(-1, 1), g2 = rng.uniform(-1, 1);
        if (g1 > g2) std::swap(g1, g2);
        const PixelMask lo = certainty_mask(s, g1), hi = certainty_mask(s, g2);
        for (std::size_t i = 0; i < lo.size(); ++i) ASSERT_GE(lo.values[i], hi.values[i]);
    }
}

TEST(SoftCertainty, MinMaxNormalization) {
    const auto two = soft_certainty_mask(scores_of({{0.3, 0.1}, {0.9, 0.05}}));
    EXPECT_EQ(two, (std::vector<double>{0.0, 1.0}));
    const auto three = soft_certainty_mask(scores_of({{0.2, 0.1}, {0.5, 0.1}, {0.8, 0.1}}));
    EXPECT_NEAR(three[0], 0.0, 1e-15);
    EXPECT_NEAR(three[1], 0.5, 1e-15);
    EXPECT_NEAR(three[2], 1.0, 1e-15);
    EXPECT_EQ(soft_certainty_mask(scores_of({{0.4, 0.1}, {0.4, 0.2}})), (std::vector<double>{0.5, 0.5}));
}

TEST(PerClassGamma, SingleClassReducesToScalar) {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        auto g = testing::random_gamma_instance(rng);
        // Force every pixel's argmax onto class 0.
        Tensor s = g.scores.clone();
        const std::size_t n = s.dim(0), k = s.dim(1), hw = s.dim(2) * s.dim(3);
        auto d = s.mutable_data();
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t p = 0; p < hw; ++p) d[b * k * hw + p] += 5.0;
        const auto gammas = calculate_gamma_per_class(g.consistency, s);
        EXPECT_EQ(gammas[0], calculate_gamma(g.consistency, s));
    }
}

TEST(PerClassGamma, BoundaryFractionsGiveClassExtremes) {
    // Class 0 pixels all consistent, class 1 pixels none.
    const Tensor s = scores_of({{0.7, 0.1}, {0.5, 0.2}, {0.1, 0.8}, {0.2, 0.6}, {0.0, 0.9}});
    const PixelMask mc = mask_of({1, 1, 0, 0, 0});
    const auto gammas = calculate_gamma_per_class(mc, s);
    EXPECT_EQ(gammas, (std::vector<double>{0.5, 0.9}));
}

TEST(PerClassGamma, EmptyClassKeepsPreviousValue) {
    const Tensor s = scores_of({{0.7, 0.1, 0.0}, {0.5, 0.2, 0.0}});
    const std::vector<double> previous = {0.0, 0.3, 0.25};
    const auto gammas = calculate_gamma_per_class(mask_of({1, 0}), s, previous);
    EXPECT_EQ(gammas[1], 0.3);
    EXPECT_EQ(gammas[2], 0.25);
}

TEST(PerClassGamma, BalancedTwoClassMatchesBruteForce) {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::vector<double>> px;
        std::vector<std::uint8_t> bits;
        for (std::size_t c = 0; c < 2; ++c) {
            for (int i = 0; i < 6; ++i) {
                const double top = rng.uniform(0.1, 1.0);
                px.push_back(c == 0 ? std::vector<double>{top, top - 0.05}
                                    : std::vector<double>{top - 0.05, top});
                bits.push_back(rng.uniform() < 0.5 ? 1 : 0);
            }
        }
        const Tensor s = scores_of(px);
        const PixelMask mc = mask_of(bits);
        const auto gammas = calculate_gamma_per_class(mc, s);
        for (std::size_t c = 0; c < 2; ++c) {
            std::size_t consistent = 0;
            std::vector<double> tops;
            for (std::size_t i = c * 6; i < c * 6 + 6; ++i) {
                consistent += bits[i];
                tops.push_back(px[i][c]);
            }
            // Smallest candidate threshold whose certain count equals the
            // consistent count; the clamp applies when nothing is consistent.
            double best = *std::max_element(tops.begin(), tops.end());
            if (consistent > 0) {
                for (double t : tops) {
                    const auto certain = std::count_if(tops.begin(), tops.end(), [&](double v) { return v >= t; });
                    if (static_cast<std::size_t>(certain) == consistent) best = t;
                }
            }
            EXPECT_EQ(gammas[c], best) << "trial " << trial << " class " << c;
        }
        const PixelMask certain = certainty_mask_per_class(s, gammas);
        for (std::size_t c = 0; c < 2; ++c) {
            std::size_t cert = 0, cons = 0;
            for (std::size_t i = c * 6; i < c * 6 + 6; ++i) {
                cert += certain.values[i];
                cons += bits[i];
            }
            if (cons > 0) {
                EXPECT_EQ(cert, cons);
            }
        }
    }
}

}  // namespace
}  // namespace gssl
