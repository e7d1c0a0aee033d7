// dynsamp: phantom generation, training corpora, c optimisation, model
// training, simulated acquisition and evaluation.
//
// Every subcommand accepts --config FILE.json whose keys mirror the long flag
// names; flags given on the command line take precedence over the file.
// Exit codes: 0 success, 2 invalid input, 3 runtime failure.

#include <CLI11.hpp>

#include <iostream>

#include "dynsamp/dynsamp.hpp"

using namespace dynsamp;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitFailure = 3;

std::vector<fs::path> discover_samples(const fs::path& dir) {
    if (fs::exists(dir / "meta.json")) return {dir};
    if (!fs::is_directory(dir)) throw ValidationError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && fs::exists(e.path() / "meta.json")) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw ValidationError("no sample directories under " + dir.string());
    return out;
}

std::vector<ChannelStack> load_samples(const fs::path& dir) {
    std::vector<ChannelStack> out;
    for (const auto& p : discover_samples(dir)) out.push_back(load_sample(p).stack);
    return out;
}

template <class T>
std::vector<T> parse_list(const std::string& text, T (*convert)(const std::string&)) {
    std::vector<T> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(convert(item));
    if (out.empty()) throw ValidationError("empty list '" + text + "'");
    return out;
}

double to_double(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::logic_error&) {
        throw ValidationError("not a number: '" + s + "'");
    }
}

RdWindow to_window(const std::string& s) { return parse_window(s); }

/// Insert `--key value` pairs from a JSON config for every key the command
/// line does not already set.
std::vector<std::string> expand_config(std::vector<std::string> args) {
    auto it = std::find(args.begin(), args.end(), "--config");
    if (it == args.end()) return args;
    if (it + 1 == args.end()) throw ValidationError("--config needs a file");
    const fs::path file = *(it + 1);
    args.erase(it, it + 2);
    std::ifstream in(file);
    if (!in) throw ValidationError("cannot open config " + file.string());
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(file.string() + ": " + e.what());
    }
    if (!cfg.is_object()) throw ValidationError(file.string() + ": config must be a JSON object");
    // args[0] is the subcommand; insert right after it.
    std::vector<std::string> extra;
    for (const auto& [key, value] : cfg.items()) {
        const std::string flag = "--" + key;
        if (std::find(args.begin(), args.end(), flag) != args.end()) continue;
        auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
        if (value.is_boolean()) {
            if (value.get<bool>()) extra.push_back(flag);
        } else if (value.is_array()) {
            extra.push_back(flag);
            for (const auto& v : value) extra.push_back(scalar(v));
        } else {
            extra.push_back(flag);
            extra.push_back(scalar(value));
        }
    }
    args.insert(args.begin() + (args.empty() ? 0 : 1), extra.begin(), extra.end());
    return args;
}

std::vector<std::size_t> parse_channels(const std::string& text) {
    if (text.empty()) return {};
    return parse_list<std::size_t>(text, [](const std::string& s) {
        const double v = to_double(s);
        if (v < 0 || v != std::floor(v)) throw ValidationError("channel index must be a non-negative integer");
        return static_cast<std::size_t>(v);
    });
}

// ---------------------------------------------------------------- subcommands

struct PhantomArgs {
    std::uint64_t seed = 0;
    std::size_t rows = 64, cols = 64, channels = 4, count = 1;
    double pixel_width = 1.0, pixel_height = 1.0;
    std::string out;
};

int run_phantom(const PhantomArgs& a) {
    const GridSpec g(a.rows, a.cols, a.pixel_width, a.pixel_height);
    for (std::size_t i = 0; i < a.count; ++i) {
        const std::uint64_t seed = a.seed + i;
        const std::string name = "phantom_" + std::to_string(seed);
        save_sample(fs::path(a.out) / name, name, generate_phantom(seed, g, a.channels));
        std::cout << (fs::path(a.out) / name).string() << '\n';
    }
    return 0;
}

struct CorpusArgs {
    std::string samples, out, densities = "1:30:1", window = "dyn:3", channels;
    double c = 8.0;
    std::uint64_t seed = 0;
};

int run_corpus(const CorpusArgs& a) {
    const RdParams rd{a.c, parse_window(a.window), parse_channels(a.channels)};
    rd.validate();
    const auto samples = load_samples(a.samples);
    const auto corpus = generate_training_corpus(samples, parse_densities(a.densities), a.seed, rd);
    save_corpus(a.out, corpus);
    std::cout << "wrote " << corpus.entries.size() << " entries to " << a.out << '\n';
    return 0;
}

struct OptimizeArgs {
    std::string samples, out, c_set = "1,2,4,8,16,32,64,128,256", windows = "static:15,dyn:3", channels;
    double stop_fov = 30.0;
    std::uint64_t seed = 0;
    std::size_t workers = 0;
};

int run_optimize(const OptimizeArgs& a) {
    AcquisitionConfig cfg;
    cfg.stop_fov = a.stop_fov;
    cfg.seed = a.seed;
    const auto result = optimize_c(load_samples(a.samples), parse_list<double>(a.c_set, to_double),
                                   parse_list<RdWindow>(a.windows, to_window), cfg, parse_channels(a.channels),
                                   a.workers);
    write_optimize_csv(a.out, result);
    std::cout << "best c=" << result.best_c << " window=" << window_to_string(result.best_window)
              << " auc=" << result.best_auc << '\n';
    return 0;
}

struct TrainArgs {
    std::string model = "ls", corpus, out;
    std::uint64_t seed = 0;
    std::size_t epochs = 500, max_rows = 0;
};

int run_train(const TrainArgs& a) {
    TrainOptions o;
    o.kind = a.model;
    o.seed = a.seed;
    o.mlp.epochs = a.epochs;
    if (a.max_rows > 0) (a.model == "ls" ? o.ls_max_rows : o.mlp_max_rows) = a.max_rows;
    const auto outcome = train_model(load_corpus(a.corpus), o);
    save_trained_model(a.out, outcome.model);
    std::cout << "trained " << outcome.model.kind() << " on " << outcome.rows_used << " of " << outcome.rows_available
              << " rows";
    if (outcome.ridge_used) std::cout << " (ridge fallback engaged)";
    std::cout << "; final loss " << outcome.final_loss << '\n';
    return 0;
}

struct SimulateArgs {
    std::string sample, model = "oracle", mode = "pointwise", out, channels;
    double stop_fov = 30.0, line_fraction = 30.0, group_fraction = 0.0;
    std::uint64_t seed = 0;
};

int run_simulate(const SimulateArgs& a) {
    auto truth = std::make_shared<const ChannelStack>(load_sample(a.sample).stack);
    AcquisitionConfig cfg;
    cfg.mode = parse_scan_mode(a.mode);
    cfg.stop_fov = a.stop_fov;
    cfg.line_fraction = a.line_fraction;
    if (a.group_fraction > 0.0) cfg.group_fraction = a.group_fraction;
    cfg.seed = a.seed;
    cfg.channels = parse_channels(a.channels);

    std::unique_ptr<ErdModel> model;
    RdParams rd;
    const auto colon = a.model.find(':');
    const std::string kind = a.model.substr(0, colon);
    const std::string file = colon == std::string::npos ? "" : a.model.substr(colon + 1);
    if (kind == "oracle") {
        model = std::make_unique<ExactRdOracle>(truth);
    } else if (kind == "ls" || kind == "mlp") {
        if (file.empty()) throw ValidationError("--model " + kind + ":FILE needs a file");
        const auto trained = load_trained_model(file);
        if (trained.kind() != kind) throw ValidationError(file + " holds a " + trained.kind() + " model");
        model = trained.erd();
        rd = trained.rd;
    } else if (kind == "unet") {
        if (file.empty()) throw ValidationError("--model unet:FILE needs a file");
        model = std::make_unique<UNetErd>(std::make_shared<const UNetModel>(load_unet(file)));
    } else {
        throw ValidationError("--model must be ls:FILE, mlp:FILE, unet:FILE or oracle");
    }

    const auto result = run_acquisition(*truth, *model, cfg);
    json config = to_json(cfg);
    config["model"] = a.model;
    config["sample"] = a.sample;
    config["rd"] = to_json(rd);
    write_trace(a.out, result, *truth, config);
    std::cout << result.steps.size() << " steps, " << result.steps.back().fov_percent << "% measured, stop: "
              << result.stop_reason << ", avg PSNR AUC " << result.psnr_auc() << '\n';
    if (result.error) {
        std::cerr << "error: model failure: " << *result.error << " (partial trace kept)\n";
        return kExitFailure;
    }
    return 0;
}

struct EvaluateArgs {
    std::vector<std::string> runs;
    std::string truth, out;
    std::size_t random_seeds = 10;
};

int run_evaluate(const EvaluateArgs& a) {
    const auto truth = load_sample(a.truth).stack;
    fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream csv(out);
    if (!csv) throw RuntimeFailure("cannot write " + a.out);
    csv << "run,model,mode,steps,final_fov_percent,avg_psnr_auc,erd_psnr_auc,random_psnr_auc,mean_erd_time_s\n"
        << std::setprecision(10);
    for (const auto& dir : a.runs) {
        const auto run = read_trace(dir);
        json cfg;
        std::ifstream(fs::path(dir) / "config.json") >> cfg;
        RdParams rd;
        if (cfg.contains("rd")) rd = rd_params_from_json(cfg.at("rd"));
        if (!(run.final_mask().grid() == truth.grid())) throw ValidationError(dir + ": grid differs from --truth");
        const auto last = static_cast<int>(std::floor(run.steps.back().fov_percent + 1e-9));
        const double auc = run.psnr_auc();
        const double erd_auc = erd_psnr_auc(run, truth, rd);
        const double random_auc = random_baseline_auc(truth, last, a.random_seeds);
        csv << dir << ',' << cfg.value("model", "") << ',' << cfg.value("mode", "") << ',' << run.steps.size() << ','
            << run.steps.back().fov_percent << ',' << auc << ',' << erd_auc << ',' << random_auc << ','
            << run.mean_erd_time() << '\n';
        std::cout << dir << ": avg PSNR AUC " << auc << ", ERD PSNR AUC " << erd_auc << ", random " << random_auc
                  << '\n';
    }
    return 0;
}

struct ParityArgs {
    std::string bundle;
    double tolerance = 1e-4;
};

int run_parity(const ParityArgs& a) {
    const auto dev = check_fixture_bundle(a.bundle);
    double worst = 0.0;
    for (std::size_t i = 0; i < dev.size(); ++i) {
        std::cout << "fixture " << i << ": max abs deviation " << dev[i] << '\n';
        worst = std::max(worst, dev[i]);
    }
    std::cout << (worst <= a.tolerance ? "PASS" : "FAIL") << " (" << dev.size() << " fixtures, worst " << worst
              << ")\n";
    return worst <= a.tolerance ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic sparse sampling simulator for multichannel mass spectrometry imaging", "dynsamp"};
    app.require_subcommand(1);
    const std::string config_help = "JSON file mirroring the flags; flags override it";
    std::string unused_config;

    PhantomArgs ph;
    auto* phantom = app.add_subcommand("phantom", "Write synthetic multichannel samples");
    phantom->add_option("--seed", ph.seed, "First seed");
    phantom->add_option("--rows", ph.rows, "Grid rows")->check(CLI::PositiveNumber);
    phantom->add_option("--cols", ph.cols, "Grid columns")->check(CLI::PositiveNumber);
    phantom->add_option("--channels", ph.channels, "Channels per sample")->check(CLI::PositiveNumber);
    phantom->add_option("--count", ph.count, "Number of samples")->check(CLI::PositiveNumber);
    phantom->add_option("--pixel-width", ph.pixel_width, "Pixel width in µm");
    phantom->add_option("--pixel-height", ph.pixel_height, "Pixel height in µm");
    phantom->add_option("--out", ph.out, "Output directory")->required();

    CorpusArgs co;
    auto* corpus = app.add_subcommand("corpus", "Build a training corpus of masks, reconstructions and RD maps");
    corpus->add_option("--samples", co.samples, "Sample directory or directory of samples")->required();
    corpus->add_option("--densities", co.densities, "lo:hi:step or comma list, % of FOV");
    corpus->add_option("--c", co.c, "RD parameter c");
    corpus->add_option("--window", co.window, "static:N or dyn:N");
    corpus->add_option("--channels", co.channels, "Comma-separated channel indices (default all)");
    corpus->add_option("--seed", co.seed, "Mask seed");
    corpus->add_option("--out", co.out, "Output directory")->required();

    OptimizeArgs op;
    auto* optimize = app.add_subcommand("optimize-c", "Choose c and window by RD-driven simulated scans");
    optimize->add_option("--samples", op.samples, "Sample directory or directory of samples")->required();
    optimize->add_option("--c-set", op.c_set, "Comma-separated candidate c values");
    optimize->add_option("--windows", op.windows, "Comma-separated windows, e.g. static:15,dyn:3");
    optimize->add_option("--channels", op.channels, "Comma-separated channel indices (default all)");
    optimize->add_option("--stop-fov", op.stop_fov, "Stop at this % of FOV");
    optimize->add_option("--seed", op.seed, "Initial mask seed");
    optimize->add_option("--workers", op.workers, "Worker threads (0 = hardware)");
    optimize->add_option("--out", op.out, "Result table CSV")->required();

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Fit an LS or MLP ERD model on a corpus");
    train->add_option("--model", tr.model, "ls or mlp")->check(CLI::IsMember({"ls", "mlp"}));
    train->add_option("--corpus", tr.corpus, "Corpus directory")->required();
    train->add_option("--seed", tr.seed, "Training seed");
    train->add_option("--epochs", tr.epochs, "MLP epochs");
    train->add_option("--max-rows", tr.max_rows, "Subsample training rows to at most this many");
    train->add_option("--out", tr.out, "Model JSON")->required();

    SimulateArgs si;
    auto* simulate = app.add_subcommand("simulate", "Run a simulated acquisition and write its trace");
    simulate->add_option("--sample", si.sample, "Sample directory")->required();
    simulate->add_option("--model", si.model, "ls:FILE, mlp:FILE, unet:FILE or oracle");
    simulate->add_option("--mode", si.mode, "pointwise or linewise")->check(CLI::IsMember({"pointwise", "linewise"}));
    simulate->add_option("--stop-fov", si.stop_fov, "Pointwise stop, % of FOV");
    simulate->add_option("--line-fraction", si.line_fraction, "Linewise % of a row per step");
    simulate->add_option("--group-fraction", si.group_fraction, "Pointwise % of FOV per step (default one cell)");
    simulate->add_option("--channels", si.channels, "Comma-separated ERD channel indices");
    simulate->add_option("--seed", si.seed, "Initial mask seed");
    simulate->add_option("--out", si.out, "Run directory")->required();

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Score run directories against ground truth");
    evaluate->add_option("--runs", ev.runs, "Run directories")->required();
    evaluate->add_option("--truth", ev.truth, "Ground-truth sample directory")->required();
    evaluate->add_option("--random-seeds", ev.random_seeds, "Random-mask baseline repetitions");
    evaluate->add_option("--out", ev.out, "Metrics CSV")->required();

    ParityArgs pa;
    auto* parity = app.add_subcommand("parity", "Check U-Net inference against a fixture bundle");
    parity->add_option("--bundle", pa.bundle, "Fixture bundle directory")->required();
    parity->add_option("--tolerance", pa.tolerance, "Max abs deviation allowed");

    for (auto* sub : app.get_subcommands({})) sub->add_option("--config", unused_config, config_help);

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = expand_config(std::move(args));
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInvalid;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    }

    try {
        if (*phantom) return run_phantom(ph);
        if (*corpus) return run_corpus(co);
        if (*optimize) return run_optimize(op);
        if (*train) return run_train(tr);
        if (*simulate) return run_simulate(si);
        if (*evaluate) return run_evaluate(ev);
        if (*parity) return run_parity(pa);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return 0;
}
