#include <gtest/gtest.h>

#include <random>

#include "dynsamp/core.hpp"

using namespace dynsamp;

namespace {

ChannelStack ramp_stack(std::size_t rows, std::size_t cols, std::size_t d) {
    GridSpec g(rows, cols);
    std::vector<Plane> planes;
    std::vector<double> labels;
    for (std::size_t z = 0; z < d; ++z) {
        Plane p(rows, cols);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = double(i + 10 * z);
        planes.push_back(p);
        labels.push_back(100.0 + double(z));
    }
    return ChannelStack(g, planes, labels);
}

}  // namespace

TEST(GridSpec, RejectsDegenerateShapes) {
    EXPECT_THROW(GridSpec(1, 1), ValidationError);
    EXPECT_THROW(GridSpec(0, 5), ValidationError);
    EXPECT_THROW(GridSpec(4, 4, 0.0, 1.0), ValidationError);
    EXPECT_THROW(GridSpec(4, 4, 1.0, -2.0), ValidationError);
    EXPECT_NO_THROW(GridSpec(1, 3));
}

TEST(ChannelStack, Invariants) {
    GridSpec g(2, 2);
    EXPECT_THROW(ChannelStack(g, {}, {}), ValidationError);
    EXPECT_THROW(ChannelStack(g, {Plane(2, 2), Plane(2, 2)}, {2.0, 1.0}), ValidationError);
    EXPECT_THROW(ChannelStack(g, {Plane(2, 3)}, {1.0}), ValidationError);
    EXPECT_THROW(ChannelStack(g, {Plane(2, 2, -1.0)}, {1.0}), ValidationError);
    EXPECT_THROW(ChannelStack(g, {Plane(2, 2, std::nan(""))}, {1.0}), ValidationError);
}

TEST(ApplyMask, FullMeasurementCopiesEverything) {
    auto s = ramp_stack(3, 4, 2);
    MeasurementMask m(s.grid(), std::vector<std::uint8_t>(12, 1));
    auto mv = apply_mask(s, m);
    ASSERT_EQ(mv.size(), 12u);
    for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(mv.value(z, i), s.channel(z)[i]);
}

TEST(ApplyMask, EmptyMaskGivesNoValues) {
    auto s = ramp_stack(3, 3, 1);
    auto mv = apply_mask(s, MeasurementMask(s.grid()));
    EXPECT_EQ(mv.size(), 0u);
    EXPECT_EQ(mv.mask().measured_count(), 0u);
    EXPECT_THROW((void)mv.value(0, 4), ValidationError);
}

TEST(ApplyMask, SingletonCentre) {
    auto s = ramp_stack(3, 3, 2);
    MeasurementMask m(s.grid());
    m.set(Cell{1, 1});
    auto mv = apply_mask(s, m);
    ASSERT_EQ(mv.size(), 1u);
    EXPECT_EQ(mv.value(0, 4), s.channel(0)(1, 1));
    EXPECT_EQ(mv.value(1, 4), s.channel(1)(1, 1));
}

TEST(ApplyMask, GridMismatchRejected) {
    auto s = ramp_stack(3, 3, 1);
    EXPECT_THROW(apply_mask(s, MeasurementMask(GridSpec(3, 4))), ValidationError);
    EXPECT_THROW(apply_mask(s, MeasurementMask(GridSpec(3, 3, 2.0, 1.0))), ValidationError);
}

TEST(MeasurementMask, PartitionOnRandomMasks) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        GridSpec g(2 + rng() % 20, 2 + rng() % 20);
        std::vector<std::uint8_t> bits(g.size());
        for (auto& b : bits) b = rng() % 3 == 0;
        MeasurementMask m(g, bits);
        auto s = m.measured_indices();
        auto t = m.unmeasured_indices();
        EXPECT_EQ(s.size() + t.size(), g.size());
        EXPECT_EQ(m.measured_count() + m.unmeasured_count(), g.size());
        std::vector<std::uint8_t> seen(g.size(), 0);
        for (auto i : s) seen[i]++;
        for (auto i : t) seen[i]++;
        for (auto v : seen) EXPECT_EQ(v, 1);
    }
}

TEST(PhysicalDistance, Examples) {
    GridSpec g(4, 4, 15.0, 10.0);
    EXPECT_EQ(physical_distance({2, 3}, {2, 3}, g), 0.0);
    EXPECT_DOUBLE_EQ(physical_distance({0, 0}, {0, 1}, g), 15.0);
    // sqrt(15^2 + 10^2)
    EXPECT_NEAR(physical_distance({0, 0}, {1, 1}, g), 18.027756377319946, 1e-12);
    EXPECT_THROW(physical_distance({0, 0}, {4, 0}, g), ValidationError);
}

TEST(PhysicalDistance, MetricProperties) {
    std::mt19937_64 rng(11);
    GridSpec g(30, 40, 7.5, 12.25);
    auto rc = [&] { return Cell{rng() % g.rows, rng() % g.cols}; };
    for (int i = 0; i < 2000; ++i) {
        const Cell a = rc(), b = rc(), c = rc();
        const double ab = physical_distance(a, b, g);
        EXPECT_EQ(ab, physical_distance(b, a, g));
        EXPECT_GE(ab, 0.0);
        EXPECT_EQ(ab == 0.0, a == b);
        EXPECT_LE(physical_distance(a, c, g), ab + physical_distance(b, c, g) + 1e-9);
    }
}
