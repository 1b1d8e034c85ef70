#include "siggpde/sigkernel.hpp"

#include "siggpde/error.hpp"
#include "siggpde/parallel.hpp"

#include <atomic>
#include <cmath>
#include <string>

namespace siggpde {

namespace {
std::atomic<long long> g_solves{0};
}

long long goursat_solve_count() { return g_solves.load(); }
void reset_goursat_solve_count() { g_solves = 0; }

void SolverOptions::validate() const {
    if (dyadic_order < 0 || dyadic_order > kMaxDyadicOrder)
        throw ValidationError("dyadic order must lie in [0, " + std::to_string(kMaxDyadicOrder) + "], got " +
                              std::to_string(dyadic_order));
}

double stencil_weight(Scheme scheme, double a) {
    if (scheme == Scheme::first_order) return 1.0 + 0.5 * a;
    return 1.0 + 0.5 * a + 0.125 * a * a;
}

double stencil_weight_derivative(Scheme scheme, double a) {
    if (scheme == Scheme::first_order) return 0.5;
    return 0.5 + 0.25 * a;
}

Eigen::MatrixXd increment_gram(const RowMatrix& dx, const RowMatrix& dy) {
    if (dx.cols() != dy.cols())
        throw ValidationError("paths have different dimensions (" + std::to_string(dx.cols()) + " vs " +
                              std::to_string(dy.cols()) + ")");
    Eigen::MatrixXd g = dx * dy.transpose();
    if (!g.allFinite()) throw NumericalError("non-finite increment inner product");
    return g;
}

namespace {

void sweep_sequential(Grid& u, const Eigen::MatrixXd& w, int lambda) {
    const Eigen::Index P = u.rows() - 1, Q = u.cols() - 1;
    for (Eigen::Index p = 0; p < P; ++p) {
        const Eigen::Index s = p >> lambda;
        for (Eigen::Index q = 0; q < Q; ++q) {
            const double a = w(s, q >> lambda);
            u(p + 1, q + 1) = a * (u(p + 1, q) + u(p, q + 1)) - u(p, q);
        }
    }
}

void sweep_wavefront(Grid& u, const Eigen::MatrixXd& w, int lambda) {
    const Eigen::Index P = u.rows() - 1, Q = u.cols() - 1;
    for (Eigen::Index k = 0; k <= P + Q - 2; ++k) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, k - (Q - 1));
        const Eigen::Index hi = std::min<Eigen::Index>(P - 1, k);
#pragma omp parallel for schedule(static) if (hi - lo >= 256)
        for (Eigen::Index p = lo; p <= hi; ++p) {
            const Eigen::Index q = k - p;
            const double a = w(p >> lambda, q >> lambda);
            u(p + 1, q + 1) = a * (u(p + 1, q) + u(p, q + 1)) - u(p, q);
        }
    }
}

// Same per-cell arithmetic as sweep_sequential, two rows of storage.
double sweep_rolling(const Eigen::MatrixXd& w, int lambda, Eigen::Index P, Eigen::Index Q) {
    std::vector<double> prev(static_cast<std::size_t>(Q + 1), 1.0), cur(static_cast<std::size_t>(Q + 1), 1.0);
    for (Eigen::Index p = 0; p < P; ++p) {
        const Eigen::Index s = p >> lambda;
        cur[0] = 1.0;
        for (Eigen::Index q = 0; q < Q; ++q) {
            const double a = w(s, q >> lambda);
            cur[q + 1] = a * (cur[q] + prev[q + 1]) - prev[q];
        }
        std::swap(prev, cur);
    }
    return prev[static_cast<std::size_t>(Q)];
}

}  // namespace

KernelSolution solve_goursat(const Path& x, const Path& y, const SolverOptions& opts) {
    opts.validate();
    g_solves.fetch_add(1, std::memory_order_relaxed);
    KernelSolution sol;
    sol.dyadic_order = opts.dyadic_order;
    sol.scheme = opts.scheme;
    sol.dx = x.increments();
    sol.dy = y.increments();
    if (x.dim() != y.dim())
        throw ValidationError("paths have different dimensions (" + std::to_string(x.dim()) + " vs " +
                              std::to_string(y.dim()) + ")");
    const int lambda = opts.dyadic_order;
    const Eigen::Index P = sol.refined_rows(), Q = sol.refined_cols();
    if (P == 0 || Q == 0) {
        sol.terminal = 1.0;
        if (opts.keep_grid) sol.grid = Grid(P + 1, Q + 1, 1.0);
        return sol;
    }

    const double scale = std::ldexp(1.0, -2 * lambda);
    Eigen::MatrixXd w = increment_gram(sol.dx, sol.dy) * scale;
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = stencil_weight(opts.scheme, w(i));

    if (opts.execution == Execution::sequential && !opts.keep_grid) {
        sol.terminal = sweep_rolling(w, lambda, P, Q);
    } else {
        Grid u(P + 1, Q + 1, 1.0);
        if (opts.execution == Execution::wavefront)
            sweep_wavefront(u, w, lambda);
        else
            sweep_sequential(u, w, lambda);
        sol.terminal = u(P, Q);
        if (opts.keep_grid) sol.grid = std::move(u);
    }
    if (!std::isfinite(sol.terminal)) throw NumericalError("kernel solve produced a non-finite value");
    return sol;
}

double kernel(const Path& x, const Path& y, const ScalingVector& theta, const SolverOptions& opts) {
    SolverOptions o = opts;
    o.keep_grid = false;
    return solve_goursat(rescale_path(x, theta), rescale_path(y, theta), o).terminal;
}

Eigen::MatrixXd gram(const std::vector<Path>& a, const std::vector<Path>& b, const ScalingVector& theta,
                     const SolverOptions& opts, GramMode mode) {
    if (a.empty() || (mode == GramMode::full && b.empty())) throw ValidationError("empty batch");
    SolverOptions o = opts;
    o.keep_grid = false;
    o.validate();

    std::vector<Path> as, bs;
    as.reserve(a.size());
    for (const auto& p : a) as.push_back(rescale_path(p, theta));
    const auto na = static_cast<Eigen::Index>(as.size());

    if (mode == GramMode::diag) {
        Eigen::MatrixXd out(na, 1);
        detail::parallel_for(na, [&](long i) { out(i, 0) = solve_goursat(as[i], as[i], o).terminal; });
        return out;
    }
    if (mode == GramMode::symmetric) {
        Eigen::MatrixXd out(na, na);
        detail::parallel_for(na * (na + 1) / 2, [&](long k) {
            // k enumerates the upper triangle row by row
            Eigen::Index i = 0, rem = k;
            while (rem >= na - i) rem -= na - i++;
            const Eigen::Index j = i + rem;
            out(i, j) = solve_goursat(as[i], as[j], o).terminal;
        });
        for (Eigen::Index i = 0; i < na; ++i)
            for (Eigen::Index j = 0; j < i; ++j) out(i, j) = out(j, i);
        return out;
    }
    for (const auto& p : b) bs.push_back(rescale_path(p, theta));
    const auto nb = static_cast<Eigen::Index>(bs.size());
    Eigen::MatrixXd out(na, nb);
    detail::parallel_for(na * nb, [&](long k) { out(k / nb, k % nb) = solve_goursat(as[k / nb], bs[k % nb], o).terminal; });
    return out;
}

}  // namespace siggpde
