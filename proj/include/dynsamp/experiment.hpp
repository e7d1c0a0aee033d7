// Training corpora, model training, baselines, c/window optimisation and
// evaluation metrics over simulated acquisitions.
#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include "dynsamp/acquisition.hpp"

namespace dynsamp {

/// Run `fn(i)` for i in [0, n) on a small worker pool. Results are written by
/// index, so the outcome does not depend on scheduling.
template <class T>
std::vector<T> parallel_map(std::size_t n, const std::function<T(std::size_t)>& fn, std::size_t workers = 0) {
    std::vector<T> out(n);
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    out[i] = fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_lock);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

// ---------------------------------------------------------------- phantom suite

struct PhantomSuite {
    std::vector<ChannelStack> train, validation, test;
};

/// 10 phantoms per suite, split 6 / 2 / 2 in generation order.
inline PhantomSuite make_phantom_suite(std::uint64_t seed, const GridSpec& grid, std::size_t d,
                                       std::size_t count = 10) {
    PhantomSuite s;
    for (std::size_t i = 0; i < count; ++i) {
        auto p = generate_phantom(seed + i, grid, d);
        const std::size_t slot = i % 10;
        (slot < 6 ? s.train : slot < 8 ? s.validation : s.test).push_back(std::move(p));
    }
    return s;
}

// ---------------------------------------------------------------- corpus

struct CorpusEntry {
    std::size_t sample = 0;
    double density = 0.0;  // % of FOV
    MeasurementMask mask;
    ChannelStack reconstruction;
    RdMap rd;
};

struct TrainingCorpus {
    std::vector<double> densities;
    std::uint64_t seed = 0;
    RdParams rd;
    std::size_t neighbors = 10;
    std::vector<CorpusEntry> entries;
};

inline std::vector<double> default_densities() {
    std::vector<double> d;
    for (int p = 1; p <= 30; ++p) d.push_back(p);
    return d;
}

/// "a:b:s" inclusive range or a comma-separated list.
inline std::vector<double> parse_densities(const std::string& text) {
    std::vector<double> out;
    try {
        if (std::count(text.begin(), text.end(), ':') == 2) {
            const auto a = text.find(':');
            const auto b = text.find(':', a + 1);
            const double lo = std::stod(text.substr(0, a));
            const double hi = std::stod(text.substr(a + 1, b - a - 1));
            const double step = std::stod(text.substr(b + 1));
            if (!(step > 0.0) || hi < lo) throw ValidationError("density range must be lo:hi:step with step > 0");
            for (double v = lo; v <= hi + 1e-9; v += step) out.push_back(v);
        } else {
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
        }
    } catch (const std::logic_error& e) {
        if (dynamic_cast<const ValidationError*>(&e)) throw;
        throw ValidationError("cannot parse density list '" + text + "'");
    }
    for (double v : out)
        if (!(v > 0.0 && v < 100.0)) throw ValidationError("densities must lie in (0, 100)");
    if (out.empty()) throw ValidationError("empty density list");
    return out;
}

/// Exactly ceil(density·|Ω|) random cells, seeded per (seed, sample, density index).
inline MeasurementMask random_density_mask(const GridSpec& g, double density, std::uint64_t seed,
                                           std::size_t sample, std::size_t slot) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(sample), static_cast<std::uint32_t>(slot)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order(g.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    MeasurementMask m(g);
    const std::size_t count = std::clamp<std::size_t>(percent_count(density, g.size()), 1, g.size() - 1);
    for (std::size_t i = 0; i < count; ++i) m.set(order[i]);
    return m;
}

inline TrainingCorpus generate_training_corpus(const std::vector<ChannelStack>& samples,
                                               const std::vector<double>& densities, std::uint64_t seed,
                                               const RdParams& rd, std::size_t neighbors = 10) {
    rd.validate();
    if (samples.empty()) throw ValidationError("corpus needs at least one sample");
    TrainingCorpus corpus;
    corpus.densities = densities;
    corpus.seed = seed;
    corpus.rd = rd;
    corpus.neighbors = neighbors;
    const std::size_t total = samples.size() * densities.size();
    corpus.entries = parallel_map<CorpusEntry>(total, [&](std::size_t job) {
        const std::size_t s = job / densities.size();
        const std::size_t k = job % densities.size();
        CorpusEntry e;
        e.sample = s;
        e.density = densities[k];
        e.mask = random_density_mask(samples[s].grid(), densities[k], seed, s, k);
        const auto recon = reconstruct(apply_mask(samples[s], e.mask), IdwOptions{neighbors, 2.0}, samples[s].labels());
        e.rd = approx_rd(samples[s], recon, rd);
        e.reconstruction = recon.stack();
        return e;
    });
    return corpus;
}

/// corpus.json plus entry_NNNN/{mask.pgm, recon_<label>.f32, rd_*.f32, rd.json}.
inline void save_corpus(const fs::path& dir, const TrainingCorpus& corpus) {
    fs::create_directories(dir);
    json manifest;
    manifest["densities"] = corpus.densities;
    manifest["seed"] = corpus.seed;
    manifest["rd"] = to_json(corpus.rd);
    manifest["neighbors"] = corpus.neighbors;
    manifest["entries"] = json::array();
    for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
        const auto& e = corpus.entries[i];
        std::ostringstream name;
        name << "entry_" << std::setw(4) << std::setfill('0') << i;
        const fs::path sub = dir / name.str();
        fs::create_directories(sub);
        write_mask_pgm(sub / "mask.pgm", e.mask);
        const auto& labels = e.reconstruction.labels();
        json recon_files = json::array();
        for (std::size_t z = 0; z < labels.size(); ++z) {
            const std::string f = "recon_" + format_label(labels[z]) + ".f32";
            write_plane_f32(sub / f, e.reconstruction.channel(z));
            recon_files.push_back(f);
        }
        save_rd_map(sub, e.rd, corpus.rd, labels);
        const GridSpec& g = e.mask.grid();
        manifest["entries"].push_back({{"dir", name.str()},
                                       {"sample", e.sample},
                                       {"density", e.density},
                                       {"rows", g.rows},
                                       {"cols", g.cols},
                                       {"pixel_width_um", g.pixel_width_um},
                                       {"pixel_height_um", g.pixel_height_um},
                                       {"labels", labels},
                                       {"rd_channels", e.rd.channels},
                                       {"recon", recon_files},
                                       {"measured_cells", e.mask.measured_count()}});
    }
    std::ofstream(dir / "corpus.json") << manifest.dump(1) << '\n';
}

inline TrainingCorpus load_corpus(const fs::path& dir) {
    json manifest;
    {
        std::ifstream in(dir / "corpus.json");
        if (!in) throw ValidationError("missing corpus.json in " + dir.string());
        try {
            manifest = json::parse(in);
        } catch (const json::exception& e) {
            throw ValidationError(dir.string() + "/corpus.json: " + e.what());
        }
    }
    try {
        TrainingCorpus c;
        c.densities = manifest.at("densities").get<std::vector<double>>();
        c.seed = manifest.at("seed").get<std::uint64_t>();
        c.rd = rd_params_from_json(manifest.at("rd"));
        c.neighbors = manifest.value("neighbors", std::size_t{10});
        for (const auto& je : manifest.at("entries")) {
            const fs::path sub = dir / je.at("dir").get<std::string>();
            const GridSpec g(je.at("rows").get<std::size_t>(), je.at("cols").get<std::size_t>(),
                             je.at("pixel_width_um").get<double>(), je.at("pixel_height_um").get<double>());
            CorpusEntry e;
            e.sample = je.at("sample").get<std::size_t>();
            e.density = je.at("density").get<double>();
            e.mask = read_mask_pgm(sub / "mask.pgm", g);
            const auto labels = je.at("labels").get<std::vector<double>>();
            std::vector<Plane> planes;
            for (const auto& f : je.at("recon")) planes.push_back(read_plane_f32(sub / f.get<std::string>(), g.rows, g.cols));
            e.reconstruction = ChannelStack(g, std::move(planes), labels);
            e.rd.channels = je.at("rd_channels").get<std::vector<std::size_t>>();
            for (std::size_t z : e.rd.channels) {
                if (z >= labels.size()) throw ValidationError("corpus RD channel out of range");
                e.rd.per_channel.push_back(read_plane_f32(sub / ("rd_" + format_label(labels[z]) + ".f32"), g.rows, g.cols));
            }
            e.rd.average = read_plane_f32(sub / "rd_average.f32", g.rows, g.cols);
            c.entries.push_back(std::move(e));
        }
        return c;
    } catch (const json::exception& e) {
        throw ValidationError(dir.string() + "/corpus.json: " + e.what());
    }
}

// ---------------------------------------------------------------- training

struct TrainingSet {
    Eigen::MatrixXd features;
    Eigen::VectorXd targets;
    std::size_t total_rows = 0;  // before subsampling
};

/// Feature rows and RD targets pooled over entries and the corpus channels.
/// When more than `max_rows` rows exist a seeded uniform subsample is kept.
inline TrainingSet build_training_set(const TrainingCorpus& corpus, std::size_t max_rows, std::uint64_t seed) {
    std::vector<Eigen::MatrixXd> blocks;
    std::vector<Eigen::VectorXd> targets;
    std::size_t rows = 0;
    for (const auto& e : corpus.entries) {
        auto table = std::make_shared<const NeighborTable>(e.mask, corpus.neighbors);
        const Reconstruction recon(e.reconstruction, table);
        const auto density = measurement_density(e.mask);
        for (std::size_t k = 0; k < e.rd.channels.size(); ++k) {
            FeatureMatrix f = extract_features(recon, e.rd.channels[k], &density);
            Eigen::VectorXd y(static_cast<Eigen::Index>(f.cells.size()));
            for (std::size_t i = 0; i < f.cells.size(); ++i) y(static_cast<Eigen::Index>(i)) = e.rd.per_channel[k][f.cells[i]];
            rows += f.cells.size();
            blocks.push_back(std::move(f.values));
            targets.push_back(std::move(y));
        }
    }
    if (rows == 0) throw ValidationError("training corpus yields no rows");
    std::vector<std::pair<std::size_t, Eigen::Index>> index;
    index.reserve(rows);
    for (std::size_t b = 0; b < blocks.size(); ++b)
        for (Eigen::Index i = 0; i < blocks[b].rows(); ++i) index.emplace_back(b, i);
    if (max_rows > 0 && rows > max_rows) {
        std::mt19937_64 rng(seed);
        std::shuffle(index.begin(), index.end(), rng);
        index.resize(max_rows);
        std::sort(index.begin(), index.end());
    }
    TrainingSet set;
    set.total_rows = rows;
    set.features.resize(static_cast<Eigen::Index>(index.size()), kFeatureCount);
    set.targets.resize(static_cast<Eigen::Index>(index.size()));
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto [b, r] = index[i];
        set.features.row(static_cast<Eigen::Index>(i)) = blocks[b].row(r);
        set.targets(static_cast<Eigen::Index>(i)) = targets[b](r);
    }
    return set;
}

struct TrainOptions {
    std::string kind = "ls";
    std::uint64_t seed = 0;
    std::size_t ls_max_rows = 200000;
    std::size_t mlp_max_rows = 2000;
    MlpOptions mlp;
};

struct TrainOutcome {
    TrainedModel model;
    std::size_t rows_used = 0;
    std::size_t rows_available = 0;
    bool ridge_used = false;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

inline TrainOutcome train_model(const TrainingCorpus& corpus, const TrainOptions& opts) {
    if (opts.kind != "ls" && opts.kind != "mlp") throw ValidationError("model kind must be ls or mlp");
    const bool ls = opts.kind == "ls";
    const TrainingSet set = build_training_set(corpus, ls ? opts.ls_max_rows : opts.mlp_max_rows, opts.seed);
    TrainOutcome out;
    out.rows_used = static_cast<std::size_t>(set.features.rows());
    out.rows_available = set.total_rows;
    out.model.rd = corpus.rd;
    out.model.channels = corpus.entries.front().rd.channels;
    if (ls) {
        const LsFit fit = fit_ls(set.features, set.targets);
        out.model.model = fit.model;
        out.ridge_used = fit.report.ridge_used;
        out.final_loss = fit.report.residual_norm * fit.report.residual_norm / static_cast<double>(set.targets.size());
    } else {
        MlpOptions mo = opts.mlp;
        mo.seed = opts.seed;
        const MlpFit fit = fit_mlp(set.features, set.targets, mo);
        out.model.model = fit.model;
        out.initial_loss = fit.report.initial_loss;
        out.final_loss = fit.report.final_loss;
    }
    return out;
}

// ---------------------------------------------------------------- evaluation

/// Mean over seeds of the capped average-PSNR AUC obtained by measuring a
/// random permutation prefix of ceil(p%·|Ω|) cells at each milestone p.
inline double random_baseline_auc(const ChannelStack& sample, int last_percent, std::size_t seeds = 10,
                                  std::uint64_t seed = 0, std::size_t neighbors = 10) {
    const GridSpec& g = sample.grid();
    double total = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
        std::mt19937_64 rng(seed + s);
        std::vector<std::size_t> order(g.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<double> curve;
        for (int p = 1; p <= last_percent; ++p) {
            MeasurementMask m(g);
            const std::size_t count = std::clamp<std::size_t>(percent_count(p, g.size()), 1, g.size());
            for (std::size_t i = 0; i < count; ++i) m.set(order[i]);
            const auto recon = reconstruct(apply_mask(sample, m), IdwOptions{neighbors, 2.0}, sample.labels());
            double sum = 0.0;
            for (std::size_t z = 0; z < sample.channel_count(); ++z)
                sum += cap_psnr(psnr(sample.channel(z), recon.channel(z)));
            curve.push_back(sum / static_cast<double>(sample.channel_count()));
        }
        total += trapezoid_auc(curve);
    }
    return total / static_cast<double>(seeds);
}

/// ERD quality along a run: at each milestone the ground-truth RD for that
/// mask (with `rd`) is compared with the model's average ERD by PSNR.
inline double erd_psnr_auc(const AcquisitionResult& run, const ChannelStack& sample, const RdParams& rd,
                           std::size_t neighbors = 10, std::vector<double>* curve_out = nullptr) {
    std::vector<double> curve;
    for (std::size_t i : milestone_indices(run.percents())) {
        const StepTrace& s = run.steps[i];
        if (!s.erd) throw ValidationError("erd_psnr_auc: milestone step has no stored ERD");
        RdParams p = rd;
        p.channels = s.erd->channels;
        const auto recon = reconstruct(apply_mask(sample, s.mask), IdwOptions{neighbors, 2.0}, sample.labels());
        const RdMap truth = approx_rd(sample, recon, p);
        curve.push_back(psnr_or_floor(truth.average, s.erd->average));
    }
    if (curve_out) *curve_out = curve;
    return trapezoid_auc(curve);
}

// ---------------------------------------------------------------- c optimisation

struct OptimizeRow {
    double c = 0.0;
    RdWindow window;
    double auc = 0.0;  // mean over samples
    double mean_rd_time_s = 0.0;
};

struct OptimizeResult {
    std::vector<OptimizeRow> table;  // sorted by (c, window string)
    double best_c = 0.0;
    RdWindow best_window;
    double best_auc = 0.0;
};

/// Pointwise scans driven by the approximate RD of each (c, window) candidate
/// against ground truth. Rows are emitted in (c, window) order and the
/// argmax takes the first maximal row, so the answer does not depend on the
/// order the candidates were given in.
inline OptimizeResult optimize_c(const std::vector<ChannelStack>& samples, std::vector<double> c_set,
                                 std::vector<RdWindow> windows, AcquisitionConfig cfg = {},
                                 std::vector<std::size_t> channels = {}, std::size_t workers = 0) {
    if (samples.empty() || c_set.empty() || windows.empty()) throw ValidationError("optimize_c: empty candidate set");
    std::sort(c_set.begin(), c_set.end());
    c_set.erase(std::unique(c_set.begin(), c_set.end()), c_set.end());
    std::sort(windows.begin(), windows.end(),
              [](const RdWindow& a, const RdWindow& b) { return window_to_string(a) < window_to_string(b); });
    windows.erase(std::unique(windows.begin(), windows.end(),
                              [](const RdWindow& a, const RdWindow& b) {
                                  return window_to_string(a) == window_to_string(b);
                              }),
                  windows.end());
    cfg.mode = ScanMode::Pointwise;
    cfg.channels = channels;

    struct Job {
        std::size_t c, w, s;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < c_set.size(); ++c)
        for (std::size_t w = 0; w < windows.size(); ++w)
            for (std::size_t s = 0; s < samples.size(); ++s) jobs.push_back({c, w, s});
    std::vector<std::shared_ptr<const ChannelStack>> truth;
    for (const auto& s : samples) truth.push_back(std::make_shared<const ChannelStack>(s));

    const auto runs = parallel_map<std::pair<double, double>>(
        jobs.size(),
        [&](std::size_t j) {
            const Job& job = jobs[j];
            RdParams p{c_set[job.c], windows[job.w], channels};
            const ApproxRdOracle oracle(truth[job.s], p);
            const auto run = run_acquisition(samples[job.s], oracle, cfg);
            if (run.error) throw RuntimeFailure("optimize_c: " + *run.error);
            return std::make_pair(run.psnr_auc(), run.mean_erd_time());
        },
        workers);

    OptimizeResult out;
    std::size_t j = 0;
    for (std::size_t c = 0; c < c_set.size(); ++c) {
        for (std::size_t w = 0; w < windows.size(); ++w) {
            OptimizeRow row{c_set[c], windows[w], 0.0, 0.0};
            for (std::size_t s = 0; s < samples.size(); ++s, ++j) {
                row.auc += runs[j].first;
                row.mean_rd_time_s += runs[j].second;
            }
            row.auc /= static_cast<double>(samples.size());
            row.mean_rd_time_s /= static_cast<double>(samples.size());
            out.table.push_back(row);
        }
    }
    const auto best = std::max_element(out.table.begin(), out.table.end(),
                                       [](const OptimizeRow& a, const OptimizeRow& b) { return a.auc < b.auc; });
    out.best_c = best->c;
    out.best_window = best->window;
    out.best_auc = best->auc;
    return out;
}

inline void write_optimize_csv(const fs::path& path, const OptimizeResult& r) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write " + path.string());
    out << "c,window,avg_psnr_auc,mean_rd_time_s\n" << std::setprecision(17);
    for (const auto& row : r.table)
        out << row.c << ',' << window_to_string(row.window) << ',' << row.auc << ',' << row.mean_rd_time_s << '\n';
}

}  // namespace dynsamp
