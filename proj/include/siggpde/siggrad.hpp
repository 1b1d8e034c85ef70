#pragma once

#include "siggpde/sigkernel.hpp"

#include <vector>

namespace siggpde {

// A perturbation direction sharing the knot grid of the path it perturbs,
// stored as one increment per segment.
struct ImpulsePath {
    RowMatrix increments;

    Eigen::Index segments() const { return increments.rows(); }
    Eigen::Index dim() const { return increments.cols(); }

    static ImpulsePath zero(const Path& x);
    // The path itself as a direction (radial scaling of X).
    static ImpulsePath along(const Path& x);
    // Only channel c of X, the direction of d/dθ_c on the X side.
    static ImpulsePath channel(const Path& x, int c);
    // Moves knot i alone along e_c.
    static ImpulsePath hat(const Path& x, Eigen::Index knot, int c);
    // Ramp of height 1/ℓ on segment i-1 (i in 1..ℓ), constant afterwards.
    static ImpulsePath ramp(const Path& x, Eigen::Index knot, int c);
};

enum class KnotDirection { hat, ramp };

struct GradientSolution {
    double value = 0.0;
    Grid tangent;  // (P+1) x (Q+1)
};

// Forward tangent of the kernel stencil, solved alongside U.
GradientSolution tangent_solve(const Path& x, const Path& y, const ImpulsePath& g, const SolverOptions& opts);
double directional_derivative_pde(const Path& x, const Path& y, const ImpulsePath& g, const SolverOptions& opts);
// Several directions in one augmented sweep.
std::vector<double> directional_derivatives_pde(const Path& x, const Path& y, const std::vector<ImpulsePath>& gs,
                                                const SolverOptions& opts);

// Sensitivity of the terminal value to each refined cell coefficient, summed
// over the blocks of refined cells belonging to one (segment of X, segment
// of Y) pair. Needs the grid of (X, Y) and of both paths reversed in time.
Eigen::MatrixXd block_sensitivities(const KernelSolution& fwd, const KernelSolution& rev);

double directional_derivative_vp(const Path& x, const Path& y, const ImpulsePath& g, const KernelSolution& fwd,
                                 const KernelSolution& rev);

struct PairGradients {
    double value = 1.0;
    RowMatrix first;        // (ℓ_X+1) x d, knot gradients on the X side
    RowMatrix second;       // (ℓ_Y+1) x d, knot gradients on the Y side
    Eigen::VectorXd theta;  // d
};

PairGradients kernel_gradients(const Path& x, const Path& y, const ScalingVector& theta, const SolverOptions& opts,
                               KnotDirection dir = KnotDirection::hat);

RowMatrix grad_knots(const Path& x, const Path& y, const ScalingVector& theta, const SolverOptions& opts,
                     KnotDirection dir = KnotDirection::hat);
// Gradient of k_θ(X, X) with respect to the knots of X (both copies move).
RowMatrix grad_knots_self(const Path& x, const ScalingVector& theta, const SolverOptions& opts,
                          KnotDirection dir = KnotDirection::hat);
Eigen::VectorXd grad_theta_kernel(const Path& x, const Path& y, const ScalingVector& theta,
                                  const SolverOptions& opts);

}  // namespace siggpde
