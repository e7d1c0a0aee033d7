#include <gtest/gtest.h>

#include <random>

#include "dynsamp/features.hpp"
#include "dynsamp/ingest.hpp"

using namespace dynsamp;

namespace {

Reconstruction recon_of(const ChannelStack& s, const MeasurementMask& m) { return reconstruct(apply_mask(s, m)); }

}  // namespace

TEST(Features, ConstantFieldZeroesDifferenceFeatures) {
    GridSpec g(9, 7, 15.0, 10.0);
    ChannelStack s(g, {Plane(9, 7, 0.4)}, {1.0});
    MeasurementMask m(g);
    for (std::size_t i = 0; i < g.size(); i += 5) m.set(i);
    const auto f = extract_features(recon_of(s, m), 0);
    ASSERT_EQ(f.cells.size(), m.unmeasured_count());
    for (Eigen::Index r = 0; r < f.values.rows(); ++r) {
        EXPECT_NEAR(f.values(r, 0), 0.0, 1e-15);
        EXPECT_NEAR(f.values(r, 1), 0.0, 1e-15);
        EXPECT_NEAR(f.values(r, 4), 0.0, 1e-12);
        EXPECT_NEAR(f.values(r, 5), 0.0, 1e-15);
    }
}

TEST(Features, DistanceFeatureIsNearestMeasuredDistance) {
    GridSpec g(6, 6, 15.0, 10.0);
    auto s = generate_phantom(3, g, 1);
    MeasurementMask m(g);
    m.set(Cell{0, 0});
    m.set(Cell{5, 5});
    const auto f = extract_features(recon_of(s, m), 0);
    for (std::size_t r = 0; r < f.cells.size(); ++r) {
        const Cell c = g.cell(f.cells[r]);
        const double expect = std::min(physical_distance(c, {0, 0}, g), physical_distance(c, {5, 5}, g));
        EXPECT_DOUBLE_EQ(f.values(static_cast<Eigen::Index>(r), 2), expect);
    }
}

TEST(Features, DensityLargerInDenselyMeasuredNeighbourhood) {
    GridSpec g(12, 12);
    MeasurementMask sparse(g), dense(g);
    sparse.set(Cell{5, 5});
    for (std::size_t r = 4; r <= 7; ++r)
        for (std::size_t c = 4; c <= 7; ++c)
            if ((r + c) % 2 == 0) dense.set(Cell{r, c});
    const auto ds = measurement_density(sparse);
    const auto dd = measurement_density(dense);
    EXPECT_GT(dd[g.index({5, 6})], ds[g.index({5, 6})]);
    // radius 2 around (5,6) in the dense mask: cells with r+c even within distance 2
    std::size_t count = 0;
    for (std::size_t r = 4; r <= 7; ++r)
        for (std::size_t c = 4; c <= 7; ++c)
            if ((r + c) % 2 == 0 && squared_distance(g, {5, 6}, {r, c}) <= 4.0) ++count;
    EXPECT_DOUBLE_EQ(dd[g.index({5, 6})], static_cast<double>(count) / (std::numbers::pi * 4.0));
}

TEST(Features, HandCaseOnRow) {
    // 1x4 row [0, ?, ?, 9] measured at the ends; t = 1 reconstructs to 1.8.
    GridSpec g(1, 4);
    ChannelStack s(g, {Plane(1, 4, {0.0, 3.0, 6.0, 9.0})}, {1.0});
    MeasurementMask m(g);
    m.set(0u);
    m.set(3u);
    const auto f = extract_features(recon_of(s, m), 0);
    ASSERT_EQ(f.cells, (std::vector<std::size_t>{1, 2}));
    EXPECT_NEAR(f.values(0, 0), (1.0 * 1.8 + 0.25 * 7.2) / 1.25, 1e-12);
    EXPECT_NEAR(f.values(0, 1), 20.25, 1e-12);
    EXPECT_DOUBLE_EQ(f.values(0, 2), 1.0);
    EXPECT_NEAR(f.values(0, 4), (7.2 - 0.0) / 2.0, 1e-12);
    EXPECT_NEAR(f.values(0, 5), (1.8 + 5.4) / 2.0, 1e-12);
}

TEST(Features, FiniteAndNonNegativeDistances) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        GridSpec g(4 + rng() % 20, 4 + rng() % 20, 1.0 + double(rng() % 20), 1.0 + double(rng() % 20));
        auto s = generate_phantom(rng(), g, 2);
        MeasurementMask m(g);
        const std::size_t k = 1 + rng() % (g.size() / 3);
        while (m.measured_count() < k) m.set(rng() % g.size());
        const auto recon = recon_of(s, m);
        for (std::size_t z = 0; z < 2; ++z) {
            const auto f = extract_features(recon, z);
            EXPECT_TRUE(f.values.allFinite());
            EXPECT_GE(f.values.minCoeff(), 0.0);
            EXPECT_GT(f.values.col(2).minCoeff(), 0.0);
        }
    }
}
