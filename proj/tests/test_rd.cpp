#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dynsamp/ingest.hpp"
#include "dynsamp/rd.hpp"
#include "oracles.hpp"

using namespace dynsamp;

namespace {

MeasurementMask random_mask(const GridSpec& g, std::size_t count, std::mt19937_64& rng) {
    MeasurementMask m(g);
    while (m.measured_count() < count) m.set(rng() % g.size());
    return m;
}

std::vector<std::uint8_t> bits(const MeasurementMask& m) { return {m.bits().begin(), m.bits().end()}; }

}  // namespace

TEST(Sigma, Examples) {
    GridSpec g(5, 5);
    MeasurementMask m(g);
    m.set(Cell{0, 0});
    EXPECT_DOUBLE_EQ(sigma({0, 1}, m, 8.0), 1.0 / 8.0);
    EXPECT_EQ(sigma({0, 0}, m, 8.0), 0.0);
    EXPECT_DOUBLE_EQ(sigma({3, 4}, m, 4.0), 5.0 / 4.0);
    EXPECT_THROW(sigma({0, 0}, MeasurementMask(g), 1.0), ValidationError);
}

TEST(GaussianWindow, HandSumOnAllOnesError) {
    GridSpec g(3, 3);
    Plane ones(3, 3, 1.0);
    GaussianWindow w(g, {1, 1}, 1.0, StaticWindow{3});
    EXPECT_NEAR(w.apply(ones), 1.0 + 4.0 * std::exp(-0.5) + 4.0 * std::exp(-1.0), 1e-12);
    // Unnormalised: the centre weight is exactly 1.
    Plane delta(3, 3, 0.0);
    delta(1, 1) = 2.5;
    EXPECT_EQ(w.apply(delta), 2.5);
}

TEST(GaussianWindow, ClippedAtBorder) {
    GridSpec g(3, 3);
    GaussianWindow w(g, {0, 0}, 1.0, StaticWindow{3});
    EXPECT_EQ(w.height(), 2u);
    EXPECT_EQ(w.width(), 2u);
    EXPECT_NEAR(w.apply(Plane(3, 3, 1.0)), 1.0 + 2.0 * std::exp(-0.5) + std::exp(-1.0), 1e-12);
}

TEST(ApproxRd, ZeroErrorGivesZeroMap) {
    GridSpec g(6, 6);
    ChannelStack flat(g, {Plane(6, 6, 0.3), Plane(6, 6, 0.7)}, {1.0, 2.0});
    std::mt19937_64 rng(1);
    auto m = random_mask(g, 5, rng);
    auto rd = approx_rd(flat, apply_mask(flat, m), RdParams{});
    for (const auto& p : rd.per_channel)
        for (double v : p.values()) EXPECT_NEAR(v, 0.0, 1e-14);
}

TEST(ApproxRd, SmallSigmaApproachesLocalError) {
    // Huge c shrinks sigma so only the centre weight survives.
    auto s = generate_phantom(4, GridSpec(10, 10), 1);
    std::mt19937_64 rng(2);
    auto m = random_mask(s.grid(), 12, rng);
    auto mv = apply_mask(s, m);
    auto recon = reconstruct(mv);
    auto rd = approx_rd(s, recon, RdParams{1e6, StaticWindow{5}, {}});
    for (std::size_t i = 0; i < s.grid().size(); ++i) {
        const double err = m.measured(i) ? 0.0 : std::abs(s.channel(0)[i] - recon.channel(0)[i]);
        EXPECT_NEAR(rd.per_channel[0][i], err, 1e-12);
    }
}

TEST(ApproxRd, NonNegativeAndZeroOnMeasured) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        auto s = generate_phantom(rng(), GridSpec(16, 12, 15.0, 10.0), 3);
        auto m = random_mask(s.grid(), 10 + rng() % 30, rng);
        for (RdWindow w : {RdWindow{StaticWindow{15}}, RdWindow{DynamicWindow{3.0}}}) {
            auto rd = approx_rd(s, apply_mask(s, m), RdParams{8.0, w, {}});
            for (std::size_t k = 0; k < 3; ++k)
                for (std::size_t i = 0; i < s.grid().size(); ++i) {
                    EXPECT_GE(rd.per_channel[k][i], 0.0);
                    if (m.measured(i)) { EXPECT_EQ(rd.per_channel[k][i], 0.0); }
                }
            for (std::size_t i = 0; i < s.grid().size(); ++i) {
                const double mean = (rd.per_channel[0][i] + rd.per_channel[1][i] + rd.per_channel[2][i]) / 3.0;
                EXPECT_NEAR(rd.average[i], mean, 1e-12);
            }
        }
    }
}

TEST(ApproxRd, StaticAndDynamicAgreeWhenBothCoverTheKernel) {
    // One measured corner, c large enough that sigma stays below one pixel
    // everywhere on a 5x5 grid: dyn:1 radius is 1 and static:3 covers it.
    GridSpec g(5, 5);
    auto s = generate_phantom(10, g, 1);
    MeasurementMask m(g);
    m.set(Cell{2, 2});
    const double c = 8.0;  // max distance sqrt(8) -> sigma < 0.36
    auto dyn = approx_rd(s, apply_mask(s, m), RdParams{c, DynamicWindow{1.0}, {}});
    auto sta = approx_rd(s, apply_mask(s, m), RdParams{c, StaticWindow{3}, {}});
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(dyn.per_channel[0][i], sta.per_channel[0][i]);
}

TEST(ApproxRd, ChannelSelection) {
    auto s = generate_phantom(5, GridSpec(8, 8), 3);
    std::mt19937_64 rng(4);
    auto m = random_mask(s.grid(), 6, rng);
    auto all = approx_rd(s, apply_mask(s, m), RdParams{});
    auto one = approx_rd(s, apply_mask(s, m), RdParams{8.0, DynamicWindow{3.0}, {2}});
    ASSERT_EQ(one.per_channel.size(), 1u);
    EXPECT_TRUE(one.per_channel[0] == all.per_channel[2]);
    EXPECT_TRUE(one.average == one.per_channel[0]);
    EXPECT_THROW(approx_rd(s, apply_mask(s, m), RdParams{8.0, DynamicWindow{3.0}, {3}}), ValidationError);
}

TEST(RdParams, Validation) {
    EXPECT_THROW(RdParams({0.0, DynamicWindow{3.0}, {}}).validate(), ValidationError);
    EXPECT_THROW(RdParams({4.0, StaticWindow{4}, {}}).validate(), ValidationError);
    EXPECT_THROW(RdParams({4.0, DynamicWindow{0.5}, {}}).validate(), ValidationError);
    EXPECT_EQ(window_to_string(parse_window("static:15")), "static:15");
    EXPECT_EQ(window_to_string(parse_window("dyn:3")), "dyn:3");
    EXPECT_EQ(window_to_string(parse_window("dyn:2.5")), "dyn:2.5");
    EXPECT_THROW(parse_window("static:4"), ValidationError);
    EXPECT_THROW(parse_window("box:3"), ValidationError);
    EXPECT_THROW(parse_window("dyn:x"), ValidationError);
}

TEST(ExactRd, HandCase) {
    ChannelStack s(GridSpec(1, 3), {Plane(1, 3, {0.0, 8.0, 10.0})}, {1.0});
    MeasurementMask m(s.grid());
    m.set(0u);
    m.set(2u);
    auto rd = exact_rd(s, apply_mask(s, m));
    EXPECT_NEAR(rd.per_channel[0][1], 3.0, 1e-12);
    EXPECT_EQ(rd.per_channel[0][0], 0.0);
}

TEST(ExactRd, ConstantFieldIsZero) {
    GridSpec g(6, 7);
    ChannelStack s(g, {Plane(6, 7, 0.42)}, {1.0});
    std::mt19937_64 rng(6);
    auto rd = exact_rd(s, apply_mask(s, random_mask(g, 5, rng)));
    for (double v : rd.per_channel[0].values()) EXPECT_NEAR(v, 0.0, 1e-14);
}

TEST(ExactRd, FullMaskGivesEmptyMap) {
    auto s = generate_phantom(3, GridSpec(3, 3), 1);
    auto rd = exact_rd(s, apply_mask(s, MeasurementMask(s.grid(), std::vector<std::uint8_t>(9, 1))));
    for (double v : rd.average.values()) EXPECT_EQ(v, 0.0);
}

TEST(ExactRd, OptimizedMatchesReferenceBitwise) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 25; ++trial) {
        GridSpec g(3 + rng() % 10, 3 + rng() % 10, 1.0 + double(rng() % 2), 1.0);
        auto s = generate_phantom(rng(), g, 2);
        auto m = random_mask(g, 1 + rng() % (g.size() / 2), rng);
        auto mv = apply_mask(s, m);
        auto fast = exact_rd(s, mv);
        auto ref = exact_rd_reference(s, mv, {0, 1});
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t i = 0; i < g.size(); ++i)
                ASSERT_EQ(fast.per_channel[k][i], ref.per_channel[k][i]) << "trial " << trial << " cell " << i;
    }
}

TEST(ExactRd, MatchesBruteForceOracle) {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 15; ++trial) {
        GridSpec g(4 + rng() % 8, 4 + rng() % 8, 15.0, 10.0);
        auto s = generate_phantom(rng(), g, 1);
        auto m = random_mask(g, 2 + rng() % 20, rng);
        auto fast = exact_rd(s, apply_mask(s, m));
        auto expect = oracle::exact_rd(g, bits(m), s.channel(0));
        for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(fast.per_channel[0][i], expect[i], 1e-10);
    }
}

// Broad single blob (sd 0.25-0.35 of the field of view) at 10% density. The
// rank agreement drops towards 0.35 once the blob narrows to 0.2.
TEST(ApproxRd, RanksLikeExactOnSmoothBlobs) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const GridSpec g(8, 8);
    double sum = 0.0;
    int count = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const double cy = u(rng), cx = u(rng), sd = 0.25 + 0.1 * u(rng);
        Plane p(8, 8);
        for (std::size_t r = 0; r < 8; ++r)
            for (std::size_t c = 0; c < 8; ++c) {
                const double y = (double(r) + 0.5) / 8.0 - cy, x = (double(c) + 0.5) / 8.0 - cx;
                p(r, c) = std::exp(-(y * y + x * x) / (2.0 * sd * sd));
            }
        const ChannelStack s(g, {p}, {1.0});
        const auto mask = random_mask(g, 7, rng);
        const auto recon = reconstruct(apply_mask(s, mask));
        const auto exact = exact_rd(s, recon, {0});
        const auto approx = approx_rd(s, recon, RdParams{8.0, DynamicWindow{3.0}, {}});
        std::vector<double> a, e;
        for (std::size_t t : mask.unmeasured_indices()) {
            a.push_back(approx.average[t]);
            e.push_back(exact.average[t]);
        }
        const double rho = oracle::spearman(a, e);
        if (std::isnan(rho)) continue;
        sum += rho;
        ++count;
    }
    ASSERT_GE(count, 20);
    EXPECT_GT(sum / count, 0.5);
}
