#include <gtest/gtest.h>

#include <random>

#include "dynsamp/experiment.hpp"

using namespace dynsamp;

TEST(Psnr, Examples) {
    const Plane truth(1, 2, {0.0, 1.0});
    EXPECT_NEAR(psnr(truth, Plane(1, 2, {0.0, 0.0})), 10.0 * std::log10(2.0), 1e-12);
    EXPECT_NEAR(psnr(truth, Plane(1, 2, {0.0, 0.0})), 3.0103, 1e-4);
    EXPECT_TRUE(std::isinf(psnr(truth, truth)));
    EXPECT_EQ(cap_psnr(psnr(truth, truth)), 99.0);
    EXPECT_THROW(psnr(Plane(1, 2, 0.0), Plane(1, 2, 1.0)), ValidationError);
    EXPECT_THROW(psnr(truth, Plane(2, 1)), ValidationError);
}

TEST(Psnr, ScaleInvariant) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        Plane a(5, 6), b(5, 6);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = u(rng);
            b[i] = u(rng);
        }
        const double alpha = 0.01 + 10.0 * u(rng);
        Plane sa = a, sb = b;
        for (std::size_t i = 0; i < a.size(); ++i) {
            sa[i] *= alpha;
            sb[i] *= alpha;
        }
        EXPECT_NEAR(psnr(a, b), psnr(sa, sb), 1e-9);
    }
}

TEST(Auc, TrapezoidAndMilestones) {
    EXPECT_DOUBLE_EQ(trapezoid_auc({1.0, 3.0, 5.0}), 6.0);
    EXPECT_EQ(trapezoid_auc({7.0}), 0.0);
    EXPECT_EQ(milestone_indices({0.5, 1.0, 1.5, 2.2, 3.9, 4.0}), (std::vector<std::size_t>{1, 3, 4, 5}));
    EXPECT_EQ(milestone_indices({1.1, 3.0}), (std::vector<std::size_t>{0, 1, 1}));
}

TEST(Auc, MonotoneUnderPointwiseDominance) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 40.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(30), b(30);
        for (std::size_t i = 0; i < 30; ++i) {
            b[i] = u(rng);
            a[i] = b[i] + u(rng) * (rng() % 2);
        }
        EXPECT_GE(trapezoid_auc(a), trapezoid_auc(b));
    }
}

TEST(Corpus, CardinalityDensityAndDeterminism) {
    std::vector<ChannelStack> samples{generate_phantom(1, GridSpec(10, 10), 2), generate_phantom(2, GridSpec(10, 10), 2)};
    const auto c = generate_training_corpus(samples, default_densities(), 7, RdParams{});
    ASSERT_EQ(c.entries.size(), 60u);
    for (const auto& e : c.entries) EXPECT_EQ(e.mask.measured_count(), static_cast<std::size_t>(e.density));
    EXPECT_EQ(c.entries[29].density, 30.0);
    EXPECT_EQ(c.entries[29].mask.measured_count(), 30u);

    const auto again = generate_training_corpus(samples, default_densities(), 7, RdParams{});
    for (std::size_t i = 0; i < c.entries.size(); ++i) {
        EXPECT_EQ(c.entries[i].mask, again.entries[i].mask);
        EXPECT_EQ(c.entries[i].rd.average, again.entries[i].rd.average);
    }
    const auto other = generate_training_corpus(samples, default_densities(), 8, RdParams{});
    EXPECT_NE(c.entries[10].mask, other.entries[10].mask);
}

TEST(Corpus, SaveLoadRoundTrip) {
    const fs::path dir = fs::temp_directory_path() / "dynsamp_corpus_test";
    fs::remove_all(dir);
    std::vector<ChannelStack> samples{generate_phantom(3, GridSpec(8, 9, 15.0, 10.0), 3)};
    const auto c = generate_training_corpus(samples, {1.0, 5.0, 20.0}, 4, RdParams{4.0, StaticWindow{15}, {0, 2}});
    save_corpus(dir, c);
    const auto back = load_corpus(dir);
    ASSERT_EQ(back.entries.size(), 3u);
    EXPECT_EQ(window_to_string(back.rd.window), "static:15");
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back.entries[i].mask, c.entries[i].mask);
        EXPECT_EQ(back.entries[i].rd.channels, (std::vector<std::size_t>{0, 2}));
        for (std::size_t k = 0; k < back.entries[i].rd.average.size(); ++k)
            EXPECT_EQ(back.entries[i].rd.average[k], static_cast<double>(static_cast<float>(c.entries[i].rd.average[k])));
    }
    fs::remove_all(dir);
}

TEST(Corpus, ParseDensities) {
    EXPECT_EQ(parse_densities("1:30:1").size(), 30u);
    EXPECT_EQ(parse_densities("1,5,10"), (std::vector<double>{1, 5, 10}));
    EXPECT_EQ(parse_densities("2:10:4"), (std::vector<double>{2, 6, 10}));
    EXPECT_THROW(parse_densities("1:30:0"), ValidationError);
    EXPECT_THROW(parse_densities("abc"), ValidationError);
    EXPECT_THROW(parse_densities("0,5"), ValidationError);
}

TEST(Training, LsAndMlpOnSmallCorpus) {
    std::vector<ChannelStack> samples{generate_phantom(1, GridSpec(16, 16), 2), generate_phantom(2, GridSpec(16, 16), 2)};
    const auto corpus = generate_training_corpus(samples, {2, 5, 10, 20}, 3, RdParams{});
    TrainOptions o;
    const auto ls = train_model(corpus, o);
    EXPECT_EQ(ls.model.kind(), "ls");
    EXPECT_EQ(ls.model.channels, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(ls.rows_used, ls.rows_available);
    o.kind = "mlp";
    o.mlp.epochs = 20;
    o.mlp_max_rows = 500;
    const auto mlp = train_model(corpus, o);
    EXPECT_EQ(mlp.rows_used, 500u);
    EXPECT_LE(mlp.final_loss, mlp.initial_loss);
    o.kind = "svm";
    EXPECT_THROW(train_model(corpus, o), ValidationError);
}

TEST(Baseline, RandomBaselineDeterministic) {
    const auto s = generate_phantom(5, GridSpec(16, 16), 2);
    const double a = random_baseline_auc(s, 30, 3, 1);
    EXPECT_EQ(a, random_baseline_auc(s, 30, 3, 1));
    EXPECT_GT(a, 0.0);
}

TEST(ErdPsnr, OracleCapsAndZeroModelIsLower) {
    auto truth = std::make_shared<const ChannelStack>(generate_phantom(6, GridSpec(14, 14), 2));
    const RdParams rd{};
    AcquisitionConfig cfg;
    cfg.stop_fov = 10.0;
    const auto oracle_run = run_acquisition(*truth, ApproxRdOracle(truth, rd), cfg);
    std::vector<double> curve;
    const double oracle_auc = erd_psnr_auc(oracle_run, *truth, rd, 10, &curve);
    for (double v : curve) EXPECT_EQ(v, kPsnrCap);

    LsModel zero;
    zero.theta = Eigen::VectorXd::Zero(7);
    const auto zero_run = run_acquisition(*truth, LsErd(zero), cfg);
    const double zero_auc = erd_psnr_auc(zero_run, *truth, rd);
    EXPECT_TRUE(std::isfinite(zero_auc));
    EXPECT_LT(zero_auc, oracle_auc);
}

TEST(OptimizeC, SingletonAndOrderInvariance) {
    std::vector<ChannelStack> samples{generate_phantom(7, GridSpec(12, 12), 2)};
    AcquisitionConfig cfg;
    cfg.stop_fov = 15.0;
    const auto single = optimize_c(samples, {4.0}, {DynamicWindow{3.0}}, cfg);
    EXPECT_EQ(single.best_c, 4.0);
    ASSERT_EQ(single.table.size(), 1u);

    const auto a = optimize_c(samples, {1.0, 4.0, 16.0}, {StaticWindow{5}, DynamicWindow{3.0}}, cfg);
    const auto b = optimize_c(samples, {16.0, 1.0, 4.0}, {DynamicWindow{3.0}, StaticWindow{5}}, cfg);
    EXPECT_EQ(a.best_c, b.best_c);
    EXPECT_EQ(window_to_string(a.best_window), window_to_string(b.best_window));
    ASSERT_EQ(a.table.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(a.table[i].auc, b.table[i].auc);
}

TEST(OptimizeC, ArgmaxAgreesWithEmittedCsv) {
    std::vector<ChannelStack> samples{generate_phantom(8, GridSpec(12, 12), 2), generate_phantom(9, GridSpec(12, 12), 2)};
    AcquisitionConfig cfg;
    cfg.stop_fov = 12.0;
    const auto r = optimize_c(samples, {2.0, 8.0, 32.0}, {StaticWindow{7}, DynamicWindow{3.0}}, cfg);
    const fs::path csv = fs::temp_directory_path() / "dynsamp_opt_test.csv";
    write_optimize_csv(csv, r);
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "c,window,avg_psnr_auc,mean_rd_time_s");
    double best = -1.0, best_c = 0.0;
    std::string best_w;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string c, w, auc;
        std::getline(ss, c, ',');
        std::getline(ss, w, ',');
        std::getline(ss, auc, ',');
        if (std::stod(auc) > best) {
            best = std::stod(auc);
            best_c = std::stod(c);
            best_w = w;
        }
    }
    EXPECT_EQ(best_c, r.best_c);
    EXPECT_EQ(best_w, window_to_string(r.best_window));
    fs::remove(csv);
}

TEST(ParallelMap, OrderIndependent) {
    const auto a = parallel_map<std::size_t>(50, [](std::size_t i) { return i * i; }, 4);
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(a[i], i * i);
    EXPECT_THROW(parallel_map<int>(5, [](std::size_t i) -> int { if (i == 3) throw RuntimeFailure("x"); return 0; }, 2),
                 RuntimeFailure);
}

TEST(PhantomSuite, SixTwoTwoSplit) {
    const auto s = make_phantom_suite(100, GridSpec(8, 8), 2);
    EXPECT_EQ(s.train.size(), 6u);
    EXPECT_EQ(s.validation.size(), 2u);
    EXPECT_EQ(s.test.size(), 2u);
    EXPECT_EQ(s.test[1], generate_phantom(109, GridSpec(8, 8), 2));
}
