#pragma once

#include "siggpde/sigfeatures.hpp"

#include <functional>
#include <random>

namespace siggpde {

struct OracleConfig {
    int level = 12;
    double fd_step = 1e-4;
    std::size_t coordinate_cap = kDefaultSignatureCap;
};

// Running sum with a Neumaier correction term.
class CompensatedSum {
public:
    void add(double v);
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0, comp_ = 0.0;
};

// Sum over all words up to `level` of S_θ(X)^α S_θ(Y)^α.
double kernel_series_oracle(const Path& x, const Path& y, const ScalingVector& theta, int level,
                            std::size_t cap = kDefaultSignatureCap);
double kernel_series_oracle(const Path& x, const Path& y, const ScalingVector& theta, const OracleConfig& cfg);

// Σ_{j=0}^{n_terms} c^j / (j!)^2.
double linear_path_kernel_closed_form(double c, int n_terms);

Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& point, double eps);

// Random piecewise-linear path with unit knot spacing whose channel c has
// total variation variation(c) (each drawn uniformly in (0, max_variation]
// when `uniform_variation` is set, otherwise exactly max_variation).
Path random_path(std::mt19937_64& rng, int d, int segments, double max_variation, bool uniform_variation = true);

}  // namespace siggpde
