#include "siggpde/siggrad.hpp"

#include "siggpde/error.hpp"

#include <cmath>
#include <string>

namespace siggpde {

ImpulsePath ImpulsePath::zero(const Path& x) {
    return {RowMatrix::Zero(x.segments(), x.dim())};
}

ImpulsePath ImpulsePath::along(const Path& x) { return {x.increments()}; }

ImpulsePath ImpulsePath::channel(const Path& x, int c) {
    if (c < 0 || c >= x.dim()) throw ValidationError("channel out of range");
    ImpulsePath g = zero(x);
    g.increments.col(c) = x.increments().col(c);
    return g;
}

ImpulsePath ImpulsePath::hat(const Path& x, Eigen::Index knot, int c) {
    if (knot < 0 || knot >= x.knots() || c < 0 || c >= x.dim()) throw ValidationError("knot or channel out of range");
    ImpulsePath g = zero(x);
    if (knot > 0) g.increments(knot - 1, c) = 1.0;
    if (knot < x.segments()) g.increments(knot, c) = -1.0;
    return g;
}

ImpulsePath ImpulsePath::ramp(const Path& x, Eigen::Index knot, int c) {
    if (knot < 1 || knot > x.segments() || c < 0 || c >= x.dim())
        throw ValidationError("ramp knot must lie in 1..segments");
    ImpulsePath g = zero(x);
    g.increments(knot - 1, c) = 1.0 / static_cast<double>(x.segments());
    return g;
}

namespace {

void check_direction(const Path& x, const ImpulsePath& g) {
    if (g.segments() != x.segments() || g.dim() != x.dim())
        throw ValidationError("direction has " + std::to_string(g.segments()) + "x" + std::to_string(g.dim()) +
                              " increments, path has " + std::to_string(x.segments()) + "x" +
                              std::to_string(x.dim()));
    if (!g.increments.allFinite()) throw ValidationError("direction has non-finite increments");
}

struct CellCoefficients {
    Eigen::MatrixXd weight, dweight;
};

CellCoefficients cell_coefficients(const RowMatrix& dx, const RowMatrix& dy, const SolverOptions& opts) {
    const double scale = std::ldexp(1.0, -2 * opts.dyadic_order);
    Eigen::MatrixXd a = increment_gram(dx, dy) * scale;
    CellCoefficients c{a, a};
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        c.weight(i) = stencil_weight(opts.scheme, a(i));
        c.dweight(i) = stencil_weight_derivative(opts.scheme, a(i));
    }
    return c;
}

}  // namespace

std::vector<double> directional_derivatives_pde(const Path& x, const Path& y, const std::vector<ImpulsePath>& gs,
                                                const SolverOptions& opts) {
    opts.validate();
    for (const auto& g : gs) check_direction(x, g);
    const int lambda = opts.dyadic_order;
    const RowMatrix dx = x.increments(), dy = y.increments();
    const Eigen::Index P = dx.rows() << lambda, Q = dy.rows() << lambda;
    const std::size_t K = gs.size();
    std::vector<double> out(K, 0.0);
    if (P == 0 || Q == 0 || K == 0) return out;

    const auto coef = cell_coefficients(dx, dy, opts);
    const double scale = std::ldexp(1.0, -2 * lambda);
    std::vector<Eigen::MatrixXd> src(K);
    for (std::size_t k = 0; k < K; ++k) src[k] = (gs[k].increments * dy.transpose() * scale).cwiseProduct(coef.dweight);

    // Rolling rows; layout [q][0] = U, [q][1 + k] = tangent along direction k.
    const std::size_t W = K + 1;
    std::vector<double> prev((Q + 1) * W, 0.0), cur((Q + 1) * W, 0.0);
    for (Eigen::Index q = 0; q <= Q; ++q) prev[q * W] = 1.0;
    for (Eigen::Index p = 0; p < P; ++p) {
        const Eigen::Index s = p >> lambda;
        std::fill(cur.begin(), cur.begin() + static_cast<long>(W), 0.0);
        cur[0] = 1.0;
        for (Eigen::Index q = 0; q < Q; ++q) {
            const Eigen::Index r = q >> lambda;
            const double a = coef.weight(s, r);
            const double* u00 = &prev[q * W];
            const double* u01 = &prev[(q + 1) * W];
            const double* u10 = &cur[q * W];
            double* u11 = &cur[(q + 1) * W];
            const double side = u10[0] + u01[0];
            u11[0] = a * side - u00[0];
            for (std::size_t k = 0; k < K; ++k)
                u11[1 + k] = a * (u10[1 + k] + u01[1 + k]) - u00[1 + k] + src[k](s, r) * side;
        }
        std::swap(prev, cur);
    }
    for (std::size_t k = 0; k < K; ++k) {
        out[k] = prev[Q * W + 1 + k];
        if (!std::isfinite(out[k])) throw NumericalError("gradient solve produced a non-finite value");
    }
    return out;
}

double directional_derivative_pde(const Path& x, const Path& y, const ImpulsePath& g, const SolverOptions& opts) {
    return directional_derivatives_pde(x, y, {g}, opts).front();
}

GradientSolution tangent_solve(const Path& x, const Path& y, const ImpulsePath& g, const SolverOptions& opts) {
    opts.validate();
    check_direction(x, g);
    const int lambda = opts.dyadic_order;
    SolverOptions o = opts;
    o.keep_grid = true;
    o.execution = Execution::sequential;
    const KernelSolution sol = solve_goursat(x, y, o);
    const Eigen::Index P = sol.refined_rows(), Q = sol.refined_cols();
    GradientSolution out;
    out.tangent = Grid(P + 1, Q + 1, 0.0);
    if (P == 0 || Q == 0) return out;
    const auto coef = cell_coefficients(sol.dx, sol.dy, opts);
    const Eigen::MatrixXd src =
        (g.increments * sol.dy.transpose() * std::ldexp(1.0, -2 * lambda)).cwiseProduct(coef.dweight);
    const Grid& u = sol.grid;
    Grid& v = out.tangent;
    for (Eigen::Index p = 0; p < P; ++p)
        for (Eigen::Index q = 0; q < Q; ++q) {
            const Eigen::Index s = p >> lambda, r = q >> lambda;
            v(p + 1, q + 1) = coef.weight(s, r) * (v(p + 1, q) + v(p, q + 1)) - v(p, q) +
                              src(s, r) * (u(p + 1, q) + u(p, q + 1));
        }
    out.value = v(P, Q);
    return out;
}

Eigen::MatrixXd block_sensitivities(const KernelSolution& fwd, const KernelSolution& rev) {
    if (!fwd.has_grid() || !rev.has_grid())
        throw ValidationError("gradient needs stored grids (solve with keep_grid)");
    const Eigen::Index P = fwd.refined_rows(), Q = fwd.refined_cols();
    if (rev.refined_rows() != P || rev.refined_cols() != Q || rev.dyadic_order != fwd.dyadic_order ||
        rev.scheme != fwd.scheme)
        throw ValidationError("forward and reversed solutions do not match");
    const int lambda = fwd.dyadic_order;
    const Eigen::Index ls = fwd.dx.rows(), lr = fwd.dy.rows();
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(ls, lr);
    if (P == 0 || Q == 0) return omega;

    SolverOptions o;
    o.dyadic_order = lambda;
    o.scheme = fwd.scheme;
    const auto coef = cell_coefficients(fwd.dx, fwd.dy, o);
    const Grid& u = fwd.grid;
    const Grid& w = rev.grid;
    // Exact adjoint of the stencil: the reversed grid read backwards plays
    // the role of the multiplier, averaged over the two cells it touches.
    for (Eigen::Index p = 0; p < P; ++p) {
        const Eigen::Index s = p >> lambda;
        for (Eigen::Index q = 0; q < Q; ++q) {
            const double fwd_side = u(p + 1, q) + u(p, q + 1);
            const double rev_side = w(P - p - 1, Q - q) + w(P - p, Q - q - 1);
            omega(s, q >> lambda) += coef.dweight(s, q >> lambda) * fwd_side * rev_side;
        }
    }
    return 0.5 * omega;
}

double directional_derivative_vp(const Path& x, const Path& y, const ImpulsePath& g, const KernelSolution& fwd,
                                 const KernelSolution& rev) {
    check_direction(x, g);
    if (fwd.dx.rows() != x.segments() || fwd.dy.rows() != y.segments())
        throw ValidationError("solution grid does not belong to these paths");
    const Eigen::MatrixXd omega = block_sensitivities(fwd, rev);
    const double scale = std::ldexp(1.0, -2 * fwd.dyadic_order);
    const Eigen::MatrixXd b = g.increments * y.increments().transpose();
    return omega.cwiseProduct(b).sum() * scale;
}

PairGradients kernel_gradients(const Path& x, const Path& y, const ScalingVector& theta, const SolverOptions& opts,
                               KnotDirection dir) {
    const Path xs = rescale_path(x, theta), ys = rescale_path(y, theta);
    SolverOptions o = opts;
    o.keep_grid = true;
    const KernelSolution fwd = solve_goursat(xs, ys, o);
    const KernelSolution rev = solve_goursat(xs.reversed(), ys.reversed(), o);
    const Eigen::MatrixXd omega = block_sensitivities(fwd, rev);
    const double scale = std::ldexp(1.0, -2 * opts.dyadic_order);

    // Sensitivity to each (scaled) segment increment of either path.
    const RowMatrix gx = omega * fwd.dy * scale;
    const RowMatrix gy = omega.transpose() * fwd.dx * scale;

    auto knots_from = [&](const RowMatrix& gseg, Eigen::Index n) {
        RowMatrix k = RowMatrix::Zero(n + 1, gseg.cols());
        if (dir == KnotDirection::hat) {
            for (Eigen::Index i = 0; i <= n; ++i) {
                if (i > 0) k.row(i) += gseg.row(i - 1);
                if (i < n) k.row(i) -= gseg.row(i);
            }
        } else {
            for (Eigen::Index i = 1; i <= n; ++i) k.row(i) = gseg.row(i - 1) / static_cast<double>(n);
        }
        return RowMatrix(k * theta.asDiagonal());
    };

    PairGradients out;
    out.value = fwd.terminal;
    out.first = knots_from(gx, x.segments());
    out.second = knots_from(gy, y.segments());
    const RowMatrix dx = x.increments(), dy = y.increments();
    out.theta = Eigen::VectorXd::Zero(theta.size());
    for (Eigen::Index c = 0; c < theta.size(); ++c)
        out.theta(c) = gx.col(c).dot(dx.col(c)) + gy.col(c).dot(dy.col(c));
    return out;
}

RowMatrix grad_knots(const Path& x, const Path& y, const ScalingVector& theta, const SolverOptions& opts,
                     KnotDirection dir) {
    return kernel_gradients(x, y, theta, opts, dir).first;
}

RowMatrix grad_knots_self(const Path& x, const ScalingVector& theta, const SolverOptions& opts, KnotDirection dir) {
    return 2.0 * grad_knots(x, x, theta, opts, dir);
}

Eigen::VectorXd grad_theta_kernel(const Path& x, const Path& y, const ScalingVector& theta,
                                  const SolverOptions& opts) {
    return kernel_gradients(x, y, theta, opts).theta;
}

}  // namespace siggpde
