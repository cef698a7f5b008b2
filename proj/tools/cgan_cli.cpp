#include "cgan_cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cgan/conformal.hpp"
#include "cgan/dataset.hpp"
#include "cgan/errors.hpp"
#include "cgan/format.hpp"
#include "cgan/metrics.hpp"
#include "cgan/mlp.hpp"
#include "cgan/train.hpp"

namespace cgan {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

const json& require_field(const json& doc, const std::string& field, const std::string& where) {
    const auto it = doc.find(field);
    if (it == doc.end()) {
        throw ValidationError(where + ": missing field \"" + field + "\"");
    }
    return *it;
}

TrainConfig parse_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ValidationError("config: malformed JSON in " + path + ": " + e.what());
    }
    TrainConfig cfg;
    try {
        cfg.latent_dim = require_field(doc, "latent_dim", "config").get<int>();
        cfg.num_classes = require_field(doc, "num_classes", "config").get<int>();
        cfg.batch_size = require_field(doc, "batch_size", "config").get<std::size_t>();
        cfg.iterations = require_field(doc, "iterations", "config").get<std::size_t>();
        cfg.eta_g = require_field(doc, "eta_g", "config").get<double>();
        cfg.eta_d = require_field(doc, "eta_d", "config").get<double>();
        cfg.lambda_reg = require_field(doc, "lambda_reg", "config").get<double>();
        cfg.mu_conform = require_field(doc, "mu_conform", "config").get<double>();
        const json& w = require_field(doc, "weights", "config");
        if (!w.is_array() || w.size() != 4) {
            throw ValidationError("config: field \"weights\" must be an array of 4 numbers");
        }
        for (std::size_t i = 0; i < 4; ++i) cfg.weights.lambda[i] = w[i].get<double>();
        cfg.k_folds = require_field(doc, "k_folds", "config").get<int>();
        cfg.hidden = require_field(doc, "hidden", "config").get<std::vector<std::size_t>>();
        cfg.seed = require_field(doc, "seed", "config").get<std::uint64_t>();
        cfg.refit_period = require_field(doc, "refit_period", "config").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ValidationError("config: bad field in " + path + ": " + e.what());
    }
    return cfg;
}

ordered_json config_to_json(const TrainConfig& cfg) {
    ordered_json out;
    out["latent_dim"] = cfg.latent_dim;
    out["num_classes"] = cfg.num_classes;
    out["batch_size"] = cfg.batch_size;
    out["iterations"] = cfg.iterations;
    out["eta_g"] = cfg.eta_g;
    out["eta_d"] = cfg.eta_d;
    out["lambda_reg"] = cfg.lambda_reg;
    out["mu_conform"] = cfg.mu_conform;
    out["weights"] = cfg.weights.lambda;
    out["k_folds"] = cfg.k_folds;
    out["hidden"] = cfg.hidden;
    out["seed"] = cfg.seed;
    out["refit_period"] = cfg.refit_period;
    return out;
}

struct RunDir {
    std::string path;
    TrainConfig config;
    bool baseline = false;
    std::string data_csv;
    std::size_t dim = 0;
    Standardizer standardizer;
};

RunDir load_run_dir(const std::string& dir) {
    const std::string path = dir + "/resolved_config.json";
    std::ifstream in(path);
    if (!in) throw ValidationError("run directory: cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ValidationError("run directory: malformed JSON in " + path + ": " + e.what());
    }
    RunDir run;
    run.path = dir;
    try {
        const json& cfg = require_field(doc, "config", path);
        TrainConfig parsed;
        parsed.latent_dim = require_field(cfg, "latent_dim", path).get<int>();
        parsed.num_classes = require_field(cfg, "num_classes", path).get<int>();
        parsed.batch_size = require_field(cfg, "batch_size", path).get<std::size_t>();
        parsed.iterations = require_field(cfg, "iterations", path).get<std::size_t>();
        parsed.eta_g = require_field(cfg, "eta_g", path).get<double>();
        parsed.eta_d = require_field(cfg, "eta_d", path).get<double>();
        parsed.lambda_reg = require_field(cfg, "lambda_reg", path).get<double>();
        parsed.mu_conform = require_field(cfg, "mu_conform", path).get<double>();
        const json& w = require_field(cfg, "weights", path);
        for (std::size_t i = 0; i < 4; ++i) parsed.weights.lambda[i] = w.at(i).get<double>();
        parsed.k_folds = require_field(cfg, "k_folds", path).get<int>();
        parsed.hidden = require_field(cfg, "hidden", path).get<std::vector<std::size_t>>();
        parsed.seed = require_field(cfg, "seed", path).get<std::uint64_t>();
        parsed.refit_period = require_field(cfg, "refit_period", path).get<std::size_t>();
        run.config = parsed;
        run.baseline = require_field(doc, "baseline", path).get<bool>();
        run.data_csv = require_field(doc, "data_csv", path).get<std::string>();
        run.dim = require_field(doc, "dim", path).get<std::size_t>();
        const json& st = require_field(doc, "standardizer", path);
        run.standardizer.mean = require_field(st, "mean", path).get<std::vector<double>>();
        run.standardizer.stddev = require_field(st, "stddev", path).get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ValidationError("run directory: bad field in " + path + ": " + e.what());
    }
    if (run.standardizer.mean.size() != run.dim || run.standardizer.stddev.size() != run.dim) {
        throw ValidationError("run directory: standardizer length does not match dim in " + path);
    }
    return run;
}

LabeledDataset load_standardized(const std::string& csv_path, const RunDir& run) {
    LabeledDataset raw = load_csv(csv_path);
    if (raw.dim() != run.dim) {
        throw ValidationError(csv_path + ": feature count " + std::to_string(raw.dim()) +
                              " does not match run dimension " + std::to_string(run.dim));
    }
    LabeledDataset out;
    out.features = run.standardizer.apply(raw.features);
    out.labels = std::move(raw.labels);
    out.num_classes = raw.num_classes;
    out.standardizer = run.standardizer;
    return out;
}

struct MakeDataArgs {
    int classes = 3;
    int dim = 2;
    std::size_t n = 6000;
    std::uint64_t seed = 1;
    double radius = 4.0;
    double stddev = 1.0;
    std::string out;
};

int cmd_make_data(const MakeDataArgs& a) {
    const MixtureSpec spec =
        default_mixture_spec(a.classes, a.dim, a.n, a.seed, a.radius, a.stddev);
    save_csv(make_gaussian_mixture(spec), a.out);
    std::cout << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string config_path;
    std::string data_csv;
    std::string run_dir;
    bool baseline = false;
};

int cmd_train(const TrainArgs& a) {
    TrainConfig cfg = parse_train_config(a.config_path);
    if (a.baseline) {
        cfg.mu_conform = 0.0;
        cfg.lambda_reg = 0.0;
    }
    const LabeledDataset raw = load_csv(a.data_csv);
    const LabeledDataset data = standardize(raw);
    const TrainResult result = train(data, cfg);

    std::filesystem::create_directories(a.run_dir);
    save_checkpoint(result.gen, a.run_dir + "/gen.json");
    save_checkpoint(result.disc, a.run_dir + "/disc.json");
    write_train_log(result.log, a.run_dir + "/train_log.ndjson");

    ordered_json resolved;
    resolved["config"] = config_to_json(cfg);
    resolved["baseline"] = a.baseline;
    resolved["data_csv"] = a.data_csv;
    resolved["dim"] = data.dim();
    resolved["standardizer"] = {{"mean", data.standardizer->mean},
                                {"stddev", data.standardizer->stddev}};
    std::ofstream out(a.run_dir + "/resolved_config.json");
    if (!out) throw RuntimeFailure("train: cannot write resolved_config.json");
    out << resolved.dump(2) << '\n';
    if (!out) throw RuntimeFailure("train: write failed for resolved_config.json");

    std::cout << a.run_dir << "\n";
    return 0;
}

struct CalibrateArgs {
    std::string run_dir;
    std::string calib_csv;
    std::string train_csv;  // defaults to the run's data_csv
    std::string val_csv;
    std::string out;
    double alpha = 0.1;
    std::vector<double> weights;
    std::string select_mode = "fixed";
    std::size_t fine_tune_iters = 100;
    double grid_step = 0.25;
};

int cmd_calibrate(const CalibrateArgs& a) {
    const RunDir run = load_run_dir(a.run_dir);
    const MlpModel gen = load_checkpoint(a.run_dir + "/gen.json");
    const MlpModel disc = load_checkpoint(a.run_dir + "/disc.json");

    const std::string train_csv = a.train_csv.empty() ? run.data_csv : a.train_csv;
    const LabeledDataset train_data = load_standardized(train_csv, run);
    const LabeledDataset calib_data = load_standardized(a.calib_csv, run);

    const LabeledDataset fake_pool = generate(gen, train_data.size(), run.config.num_classes,
                                              run.config.seed ^ 0xD1B54A32D192ED03ULL);
    const ScorerState scorer = fit_scorer(train_data, disc, run.config.k_folds,
                                          &fake_pool.features, &fake_pool.labels);

    WeightVector weights;
    if (!a.weights.empty()) {
        if (a.weights.size() != 4) {
            throw ValidationError("calibrate: --weights needs exactly 4 values");
        }
        for (std::size_t i = 0; i < 4; ++i) weights.lambda[i] = a.weights[i];
        weights.validate();
    }
    if (a.select_mode == "fixed") {
        // keep the explicit or default weights
    } else if (a.select_mode == "grid") {
        if (a.val_csv.empty()) {
            throw ValidationError("calibrate: --select-weights grid requires --val-csv");
        }
        const LabeledDataset val_data = load_standardized(a.val_csv, run);
        TrainConfig tune_cfg = run.config;
        tune_cfg.iterations = a.fine_tune_iters;
        if (tune_cfg.batch_size > train_data.size()) tune_cfg.batch_size = train_data.size();
        Rng rng(run.config.seed ^ 0x9E3779B97F4A7C15ULL);
        weights = select_weights(
            simplex_grid(a.grid_step), val_data,
            [&](const WeightVector& candidate) {
                TrainConfig cfg = tune_cfg;
                cfg.weights = candidate;
                return train_from(gen, disc, train_data, cfg).gen;
            },
            run.config.latent_dim, rng);
    } else if (a.select_mode == "ece") {
        if (a.val_csv.empty()) {
            throw ValidationError("calibrate: --select-weights ece requires --val-csv");
        }
        const LabeledDataset val_data = load_standardized(a.val_csv, run);
        weights = select_weights_by_ece(simplex_grid(a.grid_step), scorer, calib_data, val_data,
                                        disc);
    } else {
        throw ValidationError("calibrate: unknown --select-weights mode \"" + a.select_mode +
                              "\" (expected fixed, grid, or ece)");
    }

    const CalibratorState cal = calibrate(scorer, weights, calib_data, disc, a.alpha);
    const std::string out = a.out.empty() ? a.run_dir + "/calibrator.json" : a.out;
    save_calibrator(cal, out);
    std::cout << out << "\n";
    return 0;
}

struct GenerateArgs {
    std::string run_dir;
    std::size_t n = 1000;
    std::uint64_t seed = 1;
    std::string out;
    int label = -1;  // -1: uniform labels
    bool filter_region = false;
};

int cmd_generate(const GenerateArgs& a) {
    const RunDir run = load_run_dir(a.run_dir);
    const MlpModel gen = load_checkpoint(a.run_dir + "/gen.json");
    const int num_classes = run.config.num_classes;

    LabeledDataset samples;
    if (a.label >= 0) {
        if (a.label >= num_classes) {
            throw ValidationError("generate: --label " + std::to_string(a.label) +
                                  " out of range for " + std::to_string(num_classes) + " classes");
        }
        samples = generate(gen, std::vector<int>(a.n, a.label), num_classes, a.seed);
    } else {
        samples = generate(gen, a.n, num_classes, a.seed);
    }

    if (a.filter_region) {
        const CalibratorState cal = load_calibrator(a.run_dir + "/calibrator.json");
        const MlpModel disc = load_checkpoint(a.run_dir + "/disc.json");
        LabeledDataset kept;
        kept.num_classes = num_classes;
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < samples.size(); ++r) {
            if (region_contains(cal, samples.features.row(r), samples.labels[r], disc)) {
                rows.push_back(r);
            }
        }
        kept.features = Matrix(rows.size(), samples.dim());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t c = 0; c < samples.dim(); ++c) {
                kept.features(i, c) = samples.features(rows[i], c);
            }
            kept.labels.push_back(samples.labels[rows[i]]);
        }
        samples = std::move(kept);
    }

    LabeledDataset raw;
    raw.features = run.standardizer.invert(samples.features);
    raw.labels = samples.labels;
    raw.num_classes = samples.num_classes;
    save_csv(raw, a.out);
    std::cout << a.out << "\n";
    return 0;
}

struct EvaluateArgs {
    std::string real_csv;
    std::string synth_csv;
    std::string out_dir = ".";
    bool curves = false;
    std::string run_dir;
    std::string calib_csv;
    std::vector<double> levels;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const LabeledDataset real = load_csv(a.real_csv);
    const LabeledDataset synth = load_csv(a.synth_csv);

    MetricsReport report;
    report.has_fidelity = true;
    report.ks_mean = ks_mean(real.features, synth.features);
    report.wasserstein_mean = wasserstein_mean(real.features, synth.features);
    report.downstream_accuracy = downstream_accuracy(synth, real);

    if (a.curves) {
        if (a.run_dir.empty() || a.calib_csv.empty()) {
            throw ValidationError("evaluate: --curves requires --run and --calib-csv");
        }
        const RunDir run = load_run_dir(a.run_dir);
        const CalibratorState cal = load_calibrator(a.run_dir + "/calibrator.json");
        const MlpModel disc = load_checkpoint(a.run_dir + "/disc.json");
        const LabeledDataset real_std = load_standardized(a.real_csv, run);
        const LabeledDataset synth_std = load_standardized(a.synth_csv, run);
        const LabeledDataset calib_std = load_standardized(a.calib_csv, run);

        const std::vector<double> levels =
            a.levels.empty() ? default_coverage_levels() : a.levels;
        report.has_validity = true;
        report.coverage = coverage_report(cal, synth_std, disc, levels);
        report.ece = ece(report.coverage);
        report.efficiency = efficiency(cal);

        std::vector<double> alphas;
        for (int i = 10; i >= 1; --i) alphas.push_back(0.05 * i);
        const std::vector<CurvePoint> fig2 =
            coverage_efficiency_curve(cal, real_std, disc, alphas);
        NamedCurve c2{"fig2_coverage_efficiency", "set_size", "coverage", fig2};

        NamedCurve c3{"fig3_calibration", "nominal_coverage", "empirical_coverage", {}};
        for (const CoveragePoint& p : report.coverage.rows) {
            c3.rows.push_back({p.nominal, p.empirical});
        }

        const WidthDensityCurve wd =
            width_vs_density(cal, calib_std.features, real_std, disc, 10);
        NamedCurve c4{"fig4_width_density", "density", "mean_radius", wd.rows};

        std::filesystem::create_directories(a.out_dir);
        write_curve_csv(c2, a.out_dir + "/fig2_coverage_efficiency.csv");
        write_curve_csv(c3, a.out_dir + "/fig3_calibration.csv");
        write_curve_csv(c4, a.out_dir + "/fig4_width_density.csv");
        report.curves = {std::move(c2), std::move(c3), std::move(c4)};
    } else {
        std::filesystem::create_directories(a.out_dir);
    }

    save_metrics_report(report, a.out_dir + "/report.json");
    std::cout << "ks_mean=" << format_double(report.ks_mean)
              << " wasserstein_mean=" << format_double(report.wasserstein_mean)
              << " downstream_accuracy=" << format_double(report.downstream_accuracy) << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Conditional GAN with conformal calibration"};
    app.require_subcommand(1);

    MakeDataArgs make_args;
    CLI::App* make_cmd = app.add_subcommand("make-data", "Write a Gaussian-mixture dataset CSV");
    make_cmd->add_option("--classes", make_args.classes, "Number of classes")
        ->capture_default_str();
    make_cmd->add_option("--dim", make_args.dim, "Feature dimension")->capture_default_str();
    make_cmd->add_option("--n", make_args.n, "Number of rows")->capture_default_str();
    make_cmd->add_option("--seed", make_args.seed, "RNG seed")->capture_default_str();
    make_cmd->add_option("--radius", make_args.radius, "Class-mean circle radius")
        ->capture_default_str();
    make_cmd->add_option("--std", make_args.stddev, "Per-class standard deviation")
        ->capture_default_str();
    make_cmd->add_option("--out", make_args.out, "Output CSV path")->required();

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "Train the adversarial pair");
    train_cmd->add_option("--config", train_args.config_path, "Training config JSON")->required();
    train_cmd->add_option("--data", train_args.data_csv, "Training data CSV")->required();
    train_cmd->add_option("--run", train_args.run_dir, "Run directory to create")->required();
    train_cmd->add_flag("--baseline", train_args.baseline,
                        "Train the unregularized baseline (mu_conform=0, lambda_reg=0)");

    CalibrateArgs cal_args;
    CLI::App* cal_cmd = app.add_subcommand("calibrate", "Fit scorer states and calibration scores");
    cal_cmd->add_option("--run", cal_args.run_dir, "Run directory")->required();
    cal_cmd->add_option("--calib-csv", cal_args.calib_csv, "Calibration CSV")->required();
    cal_cmd->add_option("--train-csv", cal_args.train_csv,
                        "Scorer fitting CSV (default: the run's training data)");
    cal_cmd->add_option("--val-csv", cal_args.val_csv, "Validation CSV for weight selection");
    cal_cmd->add_option("--alpha", cal_args.alpha, "Significance level")->capture_default_str();
    cal_cmd->add_option("--weights", cal_args.weights, "Fixed method weights")
        ->delimiter(',')
        ->expected(4);
    cal_cmd->add_option("--select-weights", cal_args.select_mode, "fixed, grid, or ece")
        ->capture_default_str();
    cal_cmd->add_option("--fine-tune-iters", cal_args.fine_tune_iters,
                        "Fine-tune iterations per grid candidate")
        ->capture_default_str();
    cal_cmd->add_option("--grid-step", cal_args.grid_step, "Simplex grid step")
        ->capture_default_str();
    cal_cmd->add_option("--out", cal_args.out, "Output path (default: <run>/calibrator.json)");

    GenerateArgs gen_args;
    CLI::App* gen_cmd = app.add_subcommand("generate", "Sample from a trained generator");
    gen_cmd->add_option("--run", gen_args.run_dir, "Run directory")->required();
    gen_cmd->add_option("--n", gen_args.n, "Number of samples")->capture_default_str();
    gen_cmd->add_option("--seed", gen_args.seed, "RNG seed")->capture_default_str();
    gen_cmd->add_option("--label", gen_args.label, "Condition every sample on this class");
    gen_cmd->add_flag("--filter-region", gen_args.filter_region,
                      "Keep only samples inside the calibrated region");
    gen_cmd->add_option("--out", gen_args.out, "Output CSV path")->required();

    EvaluateArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "Fidelity metrics and figure data");
    eval_cmd->add_option("--real-csv", eval_args.real_csv, "Real test CSV")->required();
    eval_cmd->add_option("--synth-csv", eval_args.synth_csv, "Synthetic CSV")->required();
    eval_cmd->add_option("--out-dir", eval_args.out_dir, "Output directory")
        ->capture_default_str();
    eval_cmd->add_flag("--curves", eval_args.curves, "Also emit validity curves");
    eval_cmd->add_option("--run", eval_args.run_dir, "Run directory (required with --curves)");
    eval_cmd->add_option("--calib-csv", eval_args.calib_csv,
                         "Calibration CSV (required with --curves)");
    eval_cmd->add_option("--levels", eval_args.levels, "Calibration-curve nominal levels")
        ->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (make_cmd->parsed()) return cmd_make_data(make_args);
        if (train_cmd->parsed()) return cmd_train(train_args);
        if (cal_cmd->parsed()) return cmd_calibrate(cal_args);
        if (gen_cmd->parsed()) return cmd_generate(gen_args);
        if (eval_cmd->parsed()) return cmd_evaluate(eval_args);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const RuntimeFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<std::string> full;
    full.reserve(args.size() + 1);
    full.push_back("cgan");
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full.size());
    for (const std::string& s : full) argv.push_back(s.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace cgan
