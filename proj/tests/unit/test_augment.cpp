#include <gtest/gtest.h>

#include <cmath>

#include "gssl/augment.hpp"
#include "support/oracles.hpp"

namespace gssl {
namespace {

using testing::random_tensor;

double area_ratio(const Rect& r, std::size_t h, std::size_t w) {
    return r.height() * r.width() / (static_cast<double>(h - 1) * static_cast<double>(w - 1));
}

bool inside(const Rect& inner, const Rect& outer) {
    constexpr double slack = 1e-9;
    return inner.top >= outer.top - slack && inner.left >= outer.left - slack &&
           inner.bottom <= outer.bottom + slack && inner.right <= outer.right + slack;
}

// Direct per-pixel bilinear sample of channel c at continuous (y, x).
double bilinear(const Tensor& img, std::size_t c, double y, double x) {
    const std::size_t h = img.dim(1), w = img.dim(2);
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const auto x0 = static_cast<std::size_t>(std::floor(x));
    const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
    return (1 - fy) * ((1 - fx) * img.at({c, y0, x0}) + fx * img.at({c, y0, x1})) +
           fy * ((1 - fx) * img.at({c, y1, x0}) + fx * img.at({c, y1, x1}));
}

TEST(ViewPlan, DeterministicPerSeed) {
    const AugmentConfig cfg;
    const ViewPlan a = sample_view_plan(42, 64, 64, cfg);
    const ViewPlan b = sample_view_plan(42, 64, 64, cfg);
    EXPECT_EQ(a.global_crop, b.global_crop);
    EXPECT_EQ(a.local_crop, b.local_crop);
    EXPECT_EQ(a.local_on_first, b.local_on_first);
    EXPECT_EQ(a.color1.hue, b.color1.hue);
    EXPECT_EQ(a.color2.saturation, b.color2.saturation);
    EXPECT_NE(sample_view_plan(43, 64, 64, cfg).local_crop, a.local_crop);
}

TEST(ViewPlan, UnitScaleRangeGivesIdentityGeometry) {
    AugmentConfig cfg;
    cfg.global_scale_min = cfg.global_scale_max = 1.0;
    cfg.local_scale_min = cfg.local_scale_max = 1.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const ViewPlan p = sample_view_plan(seed, 64, 48, cfg);
        EXPECT_EQ(p.global_crop, full_rect(64, 48));
        EXPECT_EQ(p.local_crop, full_rect(64, 48));
    }
}

TEST(ViewPlan, LocalAreaRatioAuditOverTenThousandPlans) {
    const AugmentConfig cfg;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        const ViewPlan p = sample_view_plan(seed, 64, 64, cfg);
        const double ratio = area_ratio(p.local_crop, 64, 64);
        ASSERT_GE(ratio, 0.3 - 1e-12) << seed;
        ASSERT_LE(ratio, 0.8 + 1e-12) << seed;
        ASSERT_TRUE(inside(p.local_crop, full_rect(64, 64))) << seed;
        ASSERT_TRUE(inside(compose_rect(p.global_crop, p.local_crop, 64, 64), p.global_crop)) << seed;
    }
}

TEST(ViewPlan, RejectsTinyImagesAndBadRanges) {
    AugmentConfig cfg;
    EXPECT_THROW(sample_view_plan(1, 4, 64, cfg), std::invalid_argument);
    cfg.local_scale_min = 0.0;
    EXPECT_THROW(sample_view_plan(1, 64, 64, cfg), std::invalid_argument);
    cfg.local_scale_min = 0.9;
    cfg.local_scale_max = 0.5;
    EXPECT_THROW(sample_view_plan(1, 64, 64, cfg), std::invalid_argument);
}

TEST(RenderViews, IdentityGeometryAndColorsGiveEqualViews) {
    Rng rng(1);
    const Tensor img = random_tensor({3, 16, 16}, rng, 0, 1);
    ViewPlan plan;
    plan.view_h = plan.view_w = 16;
    plan.global_crop = plan.local_crop = full_rect(16, 16);
    const auto [v1, v2] = render_views(img, plan);
    EXPECT_EQ(std::vector<double>(v1.data().begin(), v1.data().end()),
              std::vector<double>(v2.data().begin(), v2.data().end()));
    for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_NEAR(v1.data()[i], img.data()[i], 1e-12);
}

TEST(RenderViews, ZeroBrightnessBlanksOnlyThatView) {
    Rng rng(2);
    const Tensor img = random_tensor({3, 16, 16}, rng, 0, 1);
    ViewPlan plan;
    plan.view_h = plan.view_w = 16;
    plan.global_crop = plan.local_crop = full_rect(16, 16);
    plan.color2.brightness = 0.0;
    const auto [v1, v2] = render_views(img, plan);
    for (double v : v2.data()) EXPECT_EQ(v, 0.0);
    for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_NEAR(v1.data()[i], img.data()[i], 1e-12);
}

TEST(RenderViews, LeftHalfCropMatchesPerPixelResampling) {
    Rng rng(3);
    const std::size_t h = 12, w = 16;
    const Tensor img = random_tensor({3, h, w}, rng, 0, 1);
    ViewPlan plan;
    plan.view_h = h;
    plan.view_w = w;
    plan.global_crop = full_rect(h, w);
    plan.local_crop = {0.0, 0.0, h - 1.0, (w - 1.0) / 2.0};
    plan.local_on_first = true;
    const auto [local, full] = render_views(img, plan);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const double sx = plan.local_crop.right * static_cast<double>(j) / (w - 1.0);
                EXPECT_NEAR(local.at({c, i, j}), bilinear(img, c, static_cast<double>(i), sx), 1e-12);
                EXPECT_NEAR(full.at({c, i, j}), img.at({c, i, j}), 1e-12);
            }
}

TEST(RenderViews, OutputsShareExtentAndStayInUnitRange) {
    Rng rng(4);
    const Tensor img = random_tensor({3, 20, 24}, rng, 0, 1);
    const AugmentConfig cfg;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto [a, b] = render_views(img, sample_view_plan(seed, 20, 24, cfg));
        EXPECT_EQ(a.shape(), b.shape());
        EXPECT_EQ(a.shape(), (Shape{3, 20, 24}));
        for (double v : a.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
        for (double v : b.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    }
}

TEST(AlignScores, IdentityCropLeavesMapsUnchanged) {
    Rng rng(5);
    const Tensor a = random_tensor({1, 3, 8, 8}, rng);
    const Tensor b = random_tensor({1, 3, 8, 8}, rng);
    ViewPlan plan;
    plan.view_h = plan.view_w = 8;
    plan.global_crop = plan.local_crop = full_rect(8, 8);
    const ViewPlan plans[] = {plan};
    const auto [x, y] = align_scores(a, b, plans);
    for (std::size_t i = 0; i < a.numel(); ++i) {
        EXPECT_NEAR(x.data()[i], a.data()[i], 1e-12);
        EXPECT_NEAR(y.data()[i], b.data()[i], 1e-12);
    }
}

TEST(AlignScores, ConstantMapsStayConstantAndEqual) {
    const Tensor a = Tensor::full({2, 2, 10, 10}, 0.3);
    std::vector<ViewPlan> plans = {sample_view_plan(7, 10, 10, {}), sample_view_plan(8, 10, 10, {})};
    const auto [x, y] = align_scores(a, a, plans);
    for (double v : x.data()) EXPECT_NEAR(v, 0.3, 1e-12);
    for (double v : y.data()) EXPECT_NEAR(v, 0.3, 1e-12);
}

TEST(AlignScores, LinearRampQuarterCropMatchesClosedForm) {
    const std::size_t h = 9, w = 13;
    std::vector<double> ramp(h * w);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) ramp[i * w + j] = 0.25 * i + 0.1 * j;
    const Tensor map = Tensor::from_vector({1, 1, h, w}, ramp);
    ViewPlan plan;
    plan.view_h = h;
    plan.view_w = w;
    plan.global_crop = full_rect(h, w);
    plan.local_crop = {(h - 1) / 2.0, (w - 1) / 2.0, h - 1.0, w - 1.0};
    plan.local_on_first = false;
    const ViewPlan plans[] = {plan};
    const auto [aligned_full, passthrough] = align_scores(map, map, plans);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double y = plan.local_crop.top + plan.local_crop.height() * i / (h - 1.0);
            const double x = plan.local_crop.left + plan.local_crop.width() * j / (w - 1.0);
            EXPECT_NEAR(aligned_full.at({0, 0, i, j}), 0.25 * y + 0.1 * x, 1e-6);
            EXPECT_EQ(passthrough.at({0, 0, i, j}), map.at({0, 0, i, j}));
        }
}

TEST(AlignScores, RejectsPlanExtentMismatch) {
    const Tensor a = Tensor::zeros({1, 2, 8, 8});
    const ViewPlan plans[] = {sample_view_plan(1, 10, 10, {})};
    EXPECT_THROW(align_scores(a, a, plans), std::invalid_argument);
}

// Renders a 2-channel image of source coordinates through both views and
// checks that aligned pixels point at the same source location.
TEST(AlignScores, AlignedPixelsShareSourceCoordinates) {
    const std::size_t h = 24, w = 32;
    std::vector<double> coords(3 * h * w, 0.0);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            coords[i * w + j] = static_cast<double>(i) / 64.0;
            coords[h * w + i * w + j] = static_cast<double>(j) / 64.0;
        }
    const Tensor source = Tensor::from_vector({3, h, w}, coords);
    AugmentConfig cfg;
    cfg.color = false;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const ViewPlan plan = sample_view_plan(seed, h, w, cfg);
        const auto [v1, v2] = render_views(source, plan);
        const Tensor b1 = ops::reshape(v1, {1, 3, h, w});
        const Tensor b2 = ops::reshape(v2, {1, 3, h, w});
        const ViewPlan plans[] = {plan};
        const auto [a1, a2] = align_scores(b1, b2, plans);
        double worst = 0.0;
        for (std::size_t k = 0; k < 2 * h * w; ++k) {
            worst = std::max(worst, 64.0 * std::abs(a1.data()[k] - a2.data()[k]));
        }
        ASSERT_LT(worst, 0.5) << "seed " << seed;
    }
}

TEST(AlignScores, ColorDoesNotChangeGeometry) {
    Rng rng(9);
    const Tensor s1 = random_tensor({1, 3, 16, 16}, rng);
    const Tensor s2 = random_tensor({1, 3, 16, 16}, rng);
    AugmentConfig with, without;
    without.color = false;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ViewPlan a[] = {sample_view_plan(seed, 16, 16, with)};
        const ViewPlan b[] = {sample_view_plan(seed, 16, 16, without)};
        const auto [x1, y1] = align_scores(s1, s2, a);
        const auto [x2, y2] = align_scores(s1, s2, b);
        EXPECT_EQ(std::vector<double>(x1.data().begin(), x1.data().end()),
                  std::vector<double>(x2.data().begin(), x2.data().end()));
        EXPECT_EQ(std::vector<double>(y1.data().begin(), y1.data().end()),
                  std::vector<double>(y2.data().begin(), y2.data().end()));
    }
}

TEST(AugmentLabelled, LabelsFollowGeometry) {
    const std::size_t h = 16, w = 16;
    std::vector<double> px(3 * h * w);
    std::vector<std::int32_t> labels(h * w);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            labels[i * w + j] = j < w / 2 ? 0 : 1;
            for (std::size_t c = 0; c < 3; ++c) px[c * h * w + i * w + j] = j < w / 2 ? 0.0 : 1.0;
        }
    AugmentConfig cfg;
    cfg.color = false;
    const Tensor img = Tensor::from_vector({3, h, w}, px);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const AugmentedSample s = augment_labelled(img, labels, seed, cfg);
        ASSERT_EQ(s.labels.size(), h * w);
        for (std::size_t k = 0; k < h * w; ++k) {
            const double v = s.image.data()[k];
            if (v < 0.01) {
                EXPECT_EQ(s.labels[k], 0);
            }
            if (v > 0.99) {
                EXPECT_EQ(s.labels[k], 1);
            }
        }
    }
}

}  // namespace
}  // namespace gssl
