#pragma once

#include "siggpde/sigfeatures.hpp"
#include "siggpde/sigkernel.hpp"
#include "siggpde/timeseries.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace siggpde {

enum class Likelihood { bernoulli_logit, softmax_mc };
enum class SigmaMode { full, diag };

struct QuadConfig {
    int gh_points = 20;
    int mc_samples = 32;
};

// Operation-count probe for the dense M x M work done by this module.
struct LinalgCounts {
    long long inversions = 0;  // solves, decompositions, inverses
    long long factor_products = 0;
    long long triangular_matvecs = 0;
};
LinalgCounts linalg_counts();
void reset_linalg_counts();

// q(u) = N(m, L Lᵀ) against the white prior N(0, I).
struct VariationalState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd chol;  // lower triangular, positive diagonal (diagonal only in diag mode)
    SigmaMode mode = SigmaMode::full;

    static VariationalState prior(int m, SigmaMode mode = SigmaMode::full);
    int size() const { return static_cast<int>(mean.size()); }
    Eigen::MatrixXd covariance() const;
    // Lᵀ s
    Eigen::VectorXd factor_transpose_times(const Eigen::VectorXd& s) const;
    void validate() const;
};

double gaussian_kl(const VariationalState& q);

struct GPModel {
    std::vector<std::string> channel_names;  // after time augmentation
    bool augment_time = true;
    FeatureBasis basis;
    ScalingVector theta;
    std::vector<VariationalState> states;  // one per class, or one for binary
    Likelihood likelihood = Likelihood::bernoulli_logit;
    QuadConfig quad;
    ScalerState scaler;
    std::vector<std::string> class_names;
    SolverOptions solver;
    std::uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object();

    int dim() const { return basis.d; }
    int num_classes() const { return static_cast<int>(class_names.size()); }
    int num_latents() const { return static_cast<int>(states.size()); }
    Path prepare(const TimeSeries& raw) const;
    std::vector<Path> prepare(const std::vector<TimeSeries>& raw) const;
    void validate() const;
};

struct PosteriorMarginals {
    Eigen::MatrixXd mean;  // N x latents
    Eigen::MatrixXd var;   // N x latents, clamped to >= 0
};

// Relative slack allowed on k(X,X) - ||S_M(X)||^2 + ||Lᵀ S_M(X)||^2 before
// a negative variance is treated as an inconsistency.
inline constexpr double kVarianceTolerance = 1e-6;

PosteriorMarginals posterior_marginals(const GPModel& model, const std::vector<Path>& batch);
// Same equations from precomputed feature vectors (rows) and diagonals.
PosteriorMarginals posterior_from_features(const GPModel& model, const Eigen::MatrixXd& feats,
                                           const Eigen::VectorXd& kdiag);

// Per-point E_q[log p(y | f)]. `keys` identify points in the Monte Carlo
// seed stream (defaults to positions); binary labels are class indices 0/1.
Eigen::VectorXd expected_log_density(const PosteriorMarginals& marg, const std::vector<int>& labels,
                                     Likelihood lik, const QuadConfig& quad, std::uint64_t seed = 0,
                                     const std::vector<std::uint64_t>& keys = {});

double elbo(const GPModel& model, const std::vector<Path>& batch, const std::vector<int>& labels, double n_total,
            std::uint64_t seed = 0, const std::vector<std::uint64_t>& keys = {});

// Gradient of elbo() in natural coordinates: m, the lower-triangular entries
// of L (diagonal only in diag mode) and θ. Same terms the trainer uses.
struct ElboGradient {
    double value = 0.0;
    std::vector<Eigen::VectorXd> mean;
    std::vector<Eigen::MatrixXd> chol;
    Eigen::VectorXd theta;
};
ElboGradient elbo_gradient(const GPModel& model, const std::vector<Path>& batch, const std::vector<int>& labels,
                           double n_total, std::uint64_t seed = 0, const std::vector<std::uint64_t>& keys = {});

Eigen::MatrixXd predictive_probabilities(const PosteriorMarginals& marg, Likelihood lik, const QuadConfig& quad,
                                         std::uint64_t seed);
Eigen::MatrixXd predict_proba(const GPModel& model, const std::vector<Path>& batch);

struct ImportanceEntry {
    int rank = 0;
    std::string class_name;
    int index = 0;
    Word word;
    std::string name;
    double score = 0.0;
};
std::vector<ImportanceEntry> feature_importance(const GPModel& model, int top_k);

struct TrainConfig {
    int m_inducing = 64;
    SolverOptions solver;
    double learning_rate = 1e-3;
    int batch_size = 50;
    int iterations = 3000;
    std::array<double, 3> phase_fractions{1.0 / 3, 1.0 / 3, 1.0 / 3};
    std::optional<Likelihood> likelihood;  // bernoulli for two classes, softmax otherwise
    QuadConfig quad;
    double validation_fraction = 0.2;
    double theta_init = 1.0;
    SigmaMode sigma_mode = SigmaMode::full;
    bool include_empty_word = true;
    int eval_interval = 50;
    bool nesterov = false;
    bool record_time = true;

    void validate() const;
};

struct LogRow {
    int iteration = 0;
    int phase = 0;
    double elbo = 0.0;
    double val_nlpp = 0.0;  // NaN when not evaluated
    double seconds = 0.0;
};

struct TrainingLog {
    std::vector<LogRow> rows;
};

struct TrainResult {
    GPModel model;
    TrainingLog log;
    double initial_elbo = 0.0;  // full batch over the final training pool
    double final_elbo = 0.0;
    double seconds = 0.0;
    int iterations = 0;
};

TrainResult train(const Dataset& ds, const TrainConfig& cfg, std::uint64_t seed);
GPModel initial_model(const Dataset& train_split, const TrainConfig& cfg, std::uint64_t seed);

void write_log(std::ostream& out, const TrainingLog& log);

nlohmann::json model_to_json(const GPModel& model);
GPModel model_from_json(const nlohmann::json& j);
void save_model(const GPModel& model, const std::string& path);
GPModel load_model(const std::string& path);

std::string to_string(Likelihood l);
std::string to_string(SigmaMode m);
std::string to_string(Scheme s);
Likelihood likelihood_from_string(const std::string& s);
SigmaMode sigma_mode_from_string(const std::string& s);
Scheme scheme_from_string(const std::string& s);

// Two-class toy task: noisy closed 2-d loops traversed counter-clockwise
// ("ccw") or clockwise ("cw"); the class is the sign of the enclosed area.
Dataset make_levy_area_dataset(int n, std::uint64_t seed, int min_knots = 16, int max_knots = 32,
                               const std::string& id_prefix = "s");

// Gauss–Hermite nodes and weights for weight exp(-x²).
void gauss_hermite(int q, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace siggpde
