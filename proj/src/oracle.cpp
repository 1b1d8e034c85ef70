#include "siggpde/oracle.hpp"

#include "siggpde/error.hpp"

#include <cmath>

namespace siggpde {

void CompensatedSum::add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
        comp_ += (sum_ - t) + v;
    else
        comp_ += (v - t) + sum_;
    sum_ = t;
}

double kernel_series_oracle(const Path& x, const Path& y, const ScalingVector& theta, int level, std::size_t cap) {
    if (level < 0) throw ValidationError("oracle level must be >= 0");
    const Signature sx = truncated_signature(rescale_path(x, theta), level, cap);
    const Signature sy = truncated_signature(rescale_path(y, theta), level, cap);
    // Add levels from the top so small terms are not swamped early.
    CompensatedSum total;
    for (int k = level; k >= 0; --k) {
        const auto& a = sx.level(k);
        const auto& b = sy.level(k);
        CompensatedSum lk;
        for (std::size_t i = 0; i < a.size(); ++i) lk.add(a[i] * b[i]);
        total.add(lk.value());
    }
    return total.value();
}

double kernel_series_oracle(const Path& x, const Path& y, const ScalingVector& theta, const OracleConfig& cfg) {
    return kernel_series_oracle(x, y, theta, cfg.level, cfg.coordinate_cap);
}

double linear_path_kernel_closed_form(double c, int n_terms) {
    if (n_terms < 1) throw ValidationError("need at least one series term");
    std::vector<double> terms(static_cast<std::size_t>(n_terms) + 1);
    double t = 1.0;
    for (int j = 0; j <= n_terms; ++j) {
        if (j > 0) t *= c / (static_cast<double>(j) * j);
        terms[j] = t;
    }
    CompensatedSum s;
    for (int j = n_terms; j >= 0; --j) s.add(terms[j]);
    return s.value();
}

Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& point, double eps) {
    if (!(eps > 0)) throw ValidationError("finite-difference step must be positive");
    Eigen::VectorXd g(point.size());
    Eigen::VectorXd x = point;
    for (Eigen::Index i = 0; i < point.size(); ++i) {
        x(i) = point(i) + eps;
        const double fp = f(x);
        x(i) = point(i) - eps;
        const double fm = f(x);
        x(i) = point(i);
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericalError("function is not finite at coordinate " + std::to_string(i));
        g(i) = (fp - fm) / (2.0 * eps);
    }
    return g;
}

Path random_path(std::mt19937_64& rng, int d, int segments, double max_variation, bool uniform_variation) {
    if (d < 1 || segments < 0) throw ValidationError("bad random path shape");
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    RowMatrix inc(segments, d);
    for (int i = 0; i < segments; ++i)
        for (int c = 0; c < d; ++c) inc(i, c) = n01(rng);
    for (int c = 0; c < d; ++c) {
        const double tv = inc.col(c).cwiseAbs().sum();
        const double target = uniform_variation ? max_variation * (1.0 - unif(rng)) : max_variation;
        if (tv > 0) inc.col(c) *= target / tv;
    }
    RowMatrix knots = RowMatrix::Zero(segments + 1, d);
    std::vector<double> t(static_cast<std::size_t>(segments) + 1);
    for (int i = 0; i <= segments; ++i) {
        t[i] = i;
        if (i > 0) knots.row(i) = knots.row(i - 1) + inc.row(i - 1);
    }
    return Path(std::move(t), std::move(knots));
}

}  // namespace siggpde
