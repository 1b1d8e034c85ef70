#pragma once

#include "siggpde/svgp.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace siggpde {

struct RunConfig {
    int m_inducing = 64;
    int dyadic_order = 2;
    Scheme scheme = Scheme::second_order;
    double learning_rate = 1e-3;
    int batch_size = 50;
    int iterations = 3000;
    std::array<double, 3> phase_fractions{1.0 / 3, 1.0 / 3, 1.0 / 3};
    std::string likelihood = "auto";  // auto, bernoulli_logit, softmax_mc
    int quad_points = 20;
    int mc_samples = 32;
    std::uint64_t seed = 0;
    double validation_fraction = 0.2;
    double theta_init = 1.0;
    SigmaMode sigma_mode = SigmaMode::full;
    bool include_empty_word = true;
    int eval_interval = 50;
    bool nesterov = false;

    void validate() const;
    TrainConfig to_train_config() const;
    SolverOptions solver() const;
};

nlohmann::json config_to_json(const RunConfig& c);
// Starts from `base` and overrides the keys present; unknown keys are errors.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::string& path);

struct ClassCount {
    std::string name;
    long support = 0;
    long correct = 0;
};

struct MetricsReport {
    double accuracy = 0.0;
    double nlpp = 0.0;
    std::vector<ClassCount> per_class;
    double seconds = 0.0;
    double iterations_per_sec = 0.0;
};

nlohmann::json metrics_to_json(const MetricsReport& r);

// Metrics from probability rows and true class indices (argmax ties go to
// the lowest index).
MetricsReport metrics_from_probabilities(const Eigen::MatrixXd& probs, const std::vector<int>& labels,
                                         const std::vector<std::string>& class_names);
MetricsReport evaluate_metrics(const GPModel& model, const std::vector<TimeSeries>& series,
                               const std::map<std::string, std::string>& labels);
MetricsReport evaluate_metrics(const GPModel& model, const Dataset& test);

// Tidy rows: iteration,metric,value.
void emit_training_plots(const TrainingLog& log, std::ostream& out);

struct SweepRow {
    int m_inducing = 0;
    double accuracy = 0.0;
    double sec_per_iter = 0.0;
    double elbo = 0.0;
};
void emit_sweep(const std::vector<SweepRow>& rows, std::ostream& out);

struct SelftestReport {
    int passed = 0;
    int failed = 0;
    std::vector<std::string> lines;
};
SelftestReport run_selftest(bool quick);

int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);
int run_command(int argc, char** argv);

}  // namespace siggpde
