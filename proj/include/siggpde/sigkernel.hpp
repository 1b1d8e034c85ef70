#pragma once

#include "siggpde/timeseries.hpp"

#include <vector>

namespace siggpde {

enum class Scheme { first_order, second_order };
enum class Execution { sequential, wavefront };
enum class GramMode { full, symmetric, diag };

inline constexpr int kMaxDyadicOrder = 12;

struct SolverOptions {
    int dyadic_order = 2;
    Scheme scheme = Scheme::second_order;
    Execution execution = Execution::sequential;
    bool keep_grid = false;

    void validate() const;
};

// Every cell update has the form
//   U[p+1][q+1] = a(A) * (U[p+1][q] + U[p][q+1]) - U[p][q]
// with A the inner product of the two refined sub-increments. Both schemes
// are invariant under reversing the grid, which is what makes the reversed
// solve usable as the adjoint in the gradient formula.
double stencil_weight(Scheme scheme, double a);
double stencil_weight_derivative(Scheme scheme, double a);

class Grid {
public:
    Grid() = default;
    Grid(Eigen::Index rows, Eigen::Index cols, double fill = 0.0)
        : rows_(rows), cols_(cols), v_(static_cast<std::size_t>(rows * cols), fill) {}

    Eigen::Index rows() const { return rows_; }
    Eigen::Index cols() const { return cols_; }
    bool empty() const { return v_.empty(); }
    double& operator()(Eigen::Index p, Eigen::Index q) { return v_[static_cast<std::size_t>(p * cols_ + q)]; }
    double operator()(Eigen::Index p, Eigen::Index q) const { return v_[static_cast<std::size_t>(p * cols_ + q)]; }
    const std::vector<double>& data() const { return v_; }

private:
    Eigen::Index rows_ = 0, cols_ = 0;
    std::vector<double> v_;
};

struct KernelSolution {
    double terminal = 1.0;
    int dyadic_order = 0;
    Scheme scheme = Scheme::second_order;
    // Segment increments of the two paths; refined sub-increments are these
    // divided by 2^dyadic_order.
    RowMatrix dx, dy;
    // (P+1) x (Q+1), present when keep_grid was set.
    Grid grid;

    Eigen::Index refined_rows() const { return dx.rows() << dyadic_order; }
    Eigen::Index refined_cols() const { return dy.rows() << dyadic_order; }
    bool has_grid() const { return !grid.empty(); }
};

// Segment-by-segment inner products <dX_s, dY_r>, checked for finiteness.
Eigen::MatrixXd increment_gram(const RowMatrix& dx, const RowMatrix& dy);

KernelSolution solve_goursat(const Path& x, const Path& y, const SolverOptions& opts);
// Number of solve_goursat calls since the last reset (for cost probes).
long long goursat_solve_count();
void reset_goursat_solve_count();

double kernel(const Path& x, const Path& y, const ScalingVector& theta, const SolverOptions& opts);

Eigen::MatrixXd gram(const std::vector<Path>& a, const std::vector<Path>& b, const ScalingVector& theta,
                     const SolverOptions& opts, GramMode mode = GramMode::full);

}  // namespace siggpde
