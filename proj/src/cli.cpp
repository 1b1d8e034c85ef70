#include "siggpde/cli.hpp"
#include "siggpde/error.hpp"
#include "siggpde/numfmt.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

namespace siggpde {

namespace {

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    return out;
}

Dataset read_dataset(const std::string& data, const std::string& labels) {
    auto d = open_in(data);
    auto l = open_in(labels);
    return parse_dataset(d, l);
}

std::vector<TimeSeries> read_series(const std::string& data) {
    auto d = open_in(data);
    return parse_series(d);
}

// Flags that override config-file values; unset optionals leave the file alone.
struct Overrides {
    std::optional<int> m_inducing, dyadic_order, batch_size, iterations, quad_points, mc_samples, eval_interval;
    std::optional<double> learning_rate, validation_fraction, theta_init;
    std::optional<std::string> scheme, likelihood, sigma_mode;
    std::optional<std::uint64_t> seed;

    void attach(CLI::App* app) {
        app->add_option("--m-inducing", m_inducing, "number of signature features M");
        app->add_option("--dyadic-order", dyadic_order, "PDE grid refinement");
        app->add_option("--batch-size", batch_size);
        app->add_option("--iterations", iterations);
        app->add_option("--quad-points", quad_points);
        app->add_option("--mc-samples", mc_samples);
        app->add_option("--eval-interval", eval_interval);
        app->add_option("--learning-rate", learning_rate);
        app->add_option("--validation-fraction", validation_fraction);
        app->add_option("--theta-init", theta_init);
        app->add_option("--scheme", scheme, "first_order or second_order");
        app->add_option("--likelihood", likelihood, "auto, bernoulli_logit or softmax_mc");
        app->add_option("--sigma-mode", sigma_mode, "full or diag");
        app->add_option("--seed", seed);
    }

    RunConfig apply(RunConfig c) const {
        if (m_inducing) c.m_inducing = *m_inducing;
        if (dyadic_order) c.dyadic_order = *dyadic_order;
        if (batch_size) c.batch_size = *batch_size;
        if (iterations) c.iterations = *iterations;
        if (quad_points) c.quad_points = *quad_points;
        if (mc_samples) c.mc_samples = *mc_samples;
        if (eval_interval) c.eval_interval = *eval_interval;
        if (learning_rate) c.learning_rate = *learning_rate;
        if (validation_fraction) c.validation_fraction = *validation_fraction;
        if (theta_init) c.theta_init = *theta_init;
        if (scheme) c.scheme = scheme_from_string(*scheme);
        if (likelihood) c.likelihood = *likelihood == "auto" ? "auto" : to_string(likelihood_from_string(*likelihood));
        if (sigma_mode) c.sigma_mode = sigma_mode_from_string(*sigma_mode);
        if (seed) c.seed = *seed;
        c.validate();
        return c;
    }
};

RunConfig resolve_config(const std::string& path, const Overrides& ov) {
    RunConfig base = path.empty() ? RunConfig{} : load_config(path);
    return ov.apply(base);
}

TrainResult train_from(const RunConfig& rc, const Dataset& ds, bool timing) {
    TrainConfig tc = rc.to_train_config();
    tc.record_time = timing;
    TrainResult res = train(ds, tc, rc.seed);
    res.model.config = config_to_json(rc);
    return res;
}

void write_probabilities(std::ostream& out, const GPModel& model, const std::vector<TimeSeries>& series,
                         const Eigen::MatrixXd& p) {
    out << "series_id";
    for (const auto& c : model.class_names) out << ',' << c;
    out << '\n';
    for (std::size_t i = 0; i < series.size(); ++i) {
        out << series[i].id;
        for (Eigen::Index c = 0; c < p.cols(); ++c) out << ',' << format_double(p(static_cast<Eigen::Index>(i), c));
        out << '\n';
    }
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += '"';
        q += ch;
    }
    return q + '"';
}

void write_importance(std::ostream& out, const std::vector<ImportanceEntry>& rows) {
    out << "rank,class,word,name,score\n";
    for (const auto& r : rows)
        out << r.rank << ',' << csv_field(r.class_name) << ',' << csv_field(word_string(r.word)) << ','
            << csv_field(r.name) << ',' << format_double(r.score) << '\n';
}

std::vector<Path> kernel_paths(const std::vector<TimeSeries>& raw, bool with_time, bool scale) {
    std::vector<TimeSeries> s = raw;
    if (scale) {
        const ScalerState st = fit_scaler(s);
        for (auto& x : s) x = apply_scaler(st, x);
    }
    std::vector<Path> out;
    out.reserve(s.size());
    for (const auto& x : s) out.emplace_back(with_time ? augment_time(x) : x);
    return out;
}

}  // namespace

int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"signature-kernel Gaussian process classifier", "siggpde"};
    app.require_subcommand(1);

    // train
    std::string data, labels, config, model_out, log_out, plots_out;
    bool no_timing = false;
    Overrides ov;
    auto* train_cmd = app.add_subcommand("train", "fit a classifier");
    train_cmd->add_option("--data", data)->required();
    train_cmd->add_option("--labels", labels)->required();
    train_cmd->add_option("--config", config);
    train_cmd->add_option("--out", model_out)->required();
    train_cmd->add_option("--log", log_out);
    train_cmd->add_option("--plots", plots_out, "tidy iteration,metric,value CSV");
    train_cmd->add_flag("--no-timing", no_timing, "write 0 in the seconds column so logs are reproducible");
    ov.attach(train_cmd);

    // evaluate / predict / importance share --model
    std::string model_in;
    auto* eval_cmd = app.add_subcommand("evaluate", "print accuracy and NLPP as JSON");
    eval_cmd->add_option("--model", model_in)->required();
    eval_cmd->add_option("--data", data)->required();
    eval_cmd->add_option("--labels", labels)->required();

    auto* pred_cmd = app.add_subcommand("predict", "write class probabilities");
    pred_cmd->add_option("--model", model_in)->required();
    pred_cmd->add_option("--data", data)->required();
    pred_cmd->add_option("--out", model_out)->required();

    int top_k = 10;
    auto* imp_cmd = app.add_subcommand("importance", "rank signature features by |m|");
    imp_cmd->add_option("--model", model_in)->required();
    imp_cmd->add_option("--top-k", top_k)->check(CLI::PositiveNumber);
    imp_cmd->add_option("--out", model_out)->required();

    bool diag = false, with_time = false, scale = false;
    auto* ker_cmd = app.add_subcommand("kernel", "signature-kernel Gram matrix");
    ker_cmd->add_option("--data", data)->required();
    ker_cmd->add_option("--config", config);
    ker_cmd->add_option("--out", model_out)->required();
    ker_cmd->add_flag("--diag", diag, "only k(X_i, X_i)");
    ker_cmd->add_flag("--augment-time", with_time, "prepend normalised time as a channel");
    ker_cmd->add_flag("--scale", scale, "standardise channels first");
    Overrides kov;
    ker_cmd->add_option("--dyadic-order", kov.dyadic_order);
    ker_cmd->add_option("--scheme", kov.scheme);
    ker_cmd->add_option("--theta-init", kov.theta_init);

    bool quick = false;
    auto* self_cmd = app.add_subcommand("selftest", "run oracle suites");
    self_cmd->add_flag("--quick", quick);

    int synth_n = 100;
    std::uint64_t synth_seed = 0;
    std::string synth_prefix = "s";
    auto* synth_cmd = app.add_subcommand("synth", "write the two-class loop-orientation task");
    synth_cmd->add_option("--n", synth_n)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth_seed);
    synth_cmd->add_option("--prefix", synth_prefix);
    synth_cmd->add_option("--data", data)->required();
    synth_cmd->add_option("--labels", labels)->required();

    std::string test_data, test_labels;
    std::vector<int> sweep_m;
    Overrides sov;
    auto* sweep_cmd = app.add_subcommand("sweep", "train once per M and aggregate metrics");
    sweep_cmd->add_option("--data", data)->required();
    sweep_cmd->add_option("--labels", labels)->required();
    sweep_cmd->add_option("--test-data", test_data)->required();
    sweep_cmd->add_option("--test-labels", test_labels)->required();
    sweep_cmd->add_option("--config", config);
    sweep_cmd->add_option("--m", sweep_m, "values of M")->required();
    sweep_cmd->add_option("--out", model_out)->required();
    sov.attach(sweep_cmd);

    std::vector<std::string> rev(argv.rbegin(), argv.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return 0;
        }
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*train_cmd) {
            const RunConfig rc = resolve_config(config, ov);
            const Dataset ds = read_dataset(data, labels);
            const TrainResult res = train_from(rc, ds, !no_timing);
            save_model(res.model, model_out);
            if (!log_out.empty()) {
                auto f = open_out(log_out);
                write_log(f, res.log);
            }
            if (!plots_out.empty()) {
                auto f = open_out(plots_out);
                emit_training_plots(res.log, f);
            }
            out << "initial_elbo " << format_double(res.initial_elbo) << "\nfinal_elbo " << format_double(res.final_elbo)
                << '\n';
        } else if (*eval_cmd) {
            const GPModel model = load_model(model_in);
            const auto series = read_series(data);
            auto l = open_in(labels);
            const auto lab = parse_labels(l);
            out << metrics_to_json(evaluate_metrics(model, series, lab)).dump(2) << '\n';
        } else if (*pred_cmd) {
            const GPModel model = load_model(model_in);
            const auto series = read_series(data);
            const Eigen::MatrixXd p = predict_proba(model, model.prepare(series));
            auto f = open_out(model_out);
            write_probabilities(f, model, series, p);
        } else if (*imp_cmd) {
            const GPModel model = load_model(model_in);
            auto f = open_out(model_out);
            write_importance(f, feature_importance(model, top_k));
        } else if (*ker_cmd) {
            const RunConfig rc = resolve_config(config, kov);
            const auto series = read_series(data);
            const auto paths = kernel_paths(series, with_time, scale);
            const int d = paths.empty() ? 0 : static_cast<int>(paths.front().dim());
            const ScalingVector theta = ScalingVector::Constant(d, rc.theta_init);
            auto f = open_out(model_out);
            if (diag) {
                const Eigen::MatrixXd k = gram(paths, paths, theta, rc.solver(), GramMode::diag);
                f << "series_id,k\n";
                for (std::size_t i = 0; i < series.size(); ++i)
                    f << series[i].id << ',' << format_double(k(static_cast<Eigen::Index>(i), 0)) << '\n';
            } else {
                const Eigen::MatrixXd k = gram(paths, paths, theta, rc.solver(), GramMode::symmetric);
                f << "series_id";
                for (const auto& s : series) f << ',' << s.id;
                f << '\n';
                for (std::size_t i = 0; i < series.size(); ++i) {
                    f << series[i].id;
                    for (std::size_t j = 0; j < series.size(); ++j)
                        f << ',' << format_double(k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
                    f << '\n';
                }
            }
        } else if (*self_cmd) {
            const SelftestReport rep = run_selftest(quick);
            for (const auto& line : rep.lines) out << line << '\n';
            out << "suites passed: " << rep.passed << ", failed: " << rep.failed << '\n';
            return rep.failed == 0 ? 0 : 2;
        } else if (*synth_cmd) {
            const Dataset ds = make_levy_area_dataset(synth_n, synth_seed, 16, 32, synth_prefix);
            auto fd = open_out(data);
            write_series(fd, ds.series);
            auto fl = open_out(labels);
            write_labels(fl, ds);
        } else if (*sweep_cmd) {
            const RunConfig base = resolve_config(config, sov);
            const Dataset ds = read_dataset(data, labels);
            const Dataset test = read_dataset(test_data, test_labels);
            std::vector<SweepRow> rows;
            for (int m : sweep_m) {
                RunConfig rc = base;
                rc.m_inducing = m;
                rc.validate();
                const TrainResult res = train_from(rc, ds, true);
                const MetricsReport mr = evaluate_metrics(res.model, test);
                rows.push_back({m, mr.accuracy, res.iterations > 0 ? res.seconds / res.iterations : 0.0,
                                res.final_elbo});
            }
            auto f = open_out(model_out);
            emit_sweep(rows, f);
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "failure: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

int run_command(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run_command(args, std::cout, std::cerr);
}

}  // namespace siggpde
