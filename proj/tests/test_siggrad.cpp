#include "siggpde/error.hpp"
#include "siggpde/oracle.hpp"
#include "siggpde/siggrad.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace siggpde;

namespace {

constexpr double kLineDirectional = 1.5906368546373291;  // Σ n/(n!)^2
constexpr double kLineTheta = 3.1812737092746581;        // 2 Σ n/(n!)^2

SolverOptions opts(int lambda, bool grid = true, Scheme s = Scheme::second_order) {
    SolverOptions o;
    o.dyadic_order = lambda;
    o.scheme = s;
    o.keep_grid = grid;
    return o;
}

Path line() {
    RowMatrix k(2, 1);
    k << 0.0, 1.0;
    return Path({0.0, 1.0}, k);
}

ImpulsePath random_direction(std::mt19937_64& rng, const Path& x) {
    std::normal_distribution<double> n01;
    ImpulsePath g = ImpulsePath::zero(x);
    for (Eigen::Index i = 0; i < g.increments.size(); ++i) g.increments(i) = n01(rng);
    return g;
}

Path perturbed(const Path& x, const ImpulsePath& g, double eps) {
    RowMatrix k = x.values();
    for (Eigen::Index r = 1; r < k.rows(); ++r)
        k.row(r) = k.row(r - 1) + x.increments().row(r - 1) + eps * g.increments.row(r - 1);
    return Path(x.times(), k);
}

double vp(const Path& x, const Path& y, const ImpulsePath& g, const SolverOptions& o) {
    const auto fwd = solve_goursat(x, y, o);
    const auto rev = solve_goursat(x.reversed(), y.reversed(), o);
    return directional_derivative_vp(x, y, g, fwd, rev);
}

// relative error with a floor so that near-zero derivatives are compared absolutely
double rel_err(double got, double want, double floor = 1e-6) {
    return std::abs(got - want) / std::max(std::abs(want), floor);
}

}  // namespace

TEST(Impulse, Shapes) {
    RowMatrix k(4, 2);
    k << 0, 0, 1, 0, 1, 1, 2, 3;
    const Path x({0, 1, 2, 3}, k);
    const ImpulsePath h0 = ImpulsePath::hat(x, 0, 1), h2 = ImpulsePath::hat(x, 2, 0), h3 = ImpulsePath::hat(x, 3, 1);
    EXPECT_EQ(h0.increments(0, 1), -1.0);
    EXPECT_EQ(h2.increments(1, 0), 1.0);
    EXPECT_EQ(h2.increments(2, 0), -1.0);
    EXPECT_EQ(h3.increments(2, 1), 1.0);
    EXPECT_EQ(h0.increments.cwiseAbs().sum() + h3.increments.cwiseAbs().sum(), 2.0);
    const ImpulsePath r = ImpulsePath::ramp(x, 2, 0);
    EXPECT_DOUBLE_EQ(r.increments(1, 0), 1.0 / 3.0);
    EXPECT_EQ(r.increments.cwiseAbs().sum(), 1.0 / 3.0);
    EXPECT_THROW(ImpulsePath::ramp(x, 0, 0), ValidationError);
    EXPECT_THROW(ImpulsePath::hat(x, 4, 0), ValidationError);
    EXPECT_TRUE(ImpulsePath::channel(x, 1).increments.col(0).isZero(0));
}

TEST(Directional, ZeroDirectionIsExactlyZero) {
    std::mt19937_64 rng(1);
    const Path x = random_path(rng, 3, 5, 1.0), y = random_path(rng, 3, 4, 1.0);
    const ImpulsePath z = ImpulsePath::zero(x);
    EXPECT_EQ(directional_derivative_pde(x, y, z, opts(2)), 0.0);
    EXPECT_EQ(vp(x, y, z, opts(2)), 0.0);
}

TEST(Directional, UnitLineAlongItself) {
    const Path x = line();
    const double want = kLineDirectional;
    EXPECT_NEAR(directional_derivative_pde(x, x, ImpulsePath::along(x), opts(6, false)), want, 1e-3);
    EXPECT_NEAR(vp(x, x, ImpulsePath::along(x), opts(6)), want, 1e-3);
}

TEST(Directional, TangentGridBoundaryIsZero) {
    std::mt19937_64 rng(2);
    const Path x = random_path(rng, 2, 3, 1.0), y = random_path(rng, 2, 4, 1.0);
    const auto sol = tangent_solve(x, y, random_direction(rng, x), opts(2));
    for (Eigen::Index p = 0; p < sol.tangent.rows(); ++p) EXPECT_EQ(sol.tangent(p, 0), 0.0);
    for (Eigen::Index q = 0; q < sol.tangent.cols(); ++q) EXPECT_EQ(sol.tangent(0, q), 0.0);
    EXPECT_EQ(sol.tangent(sol.tangent.rows() - 1, sol.tangent.cols() - 1), sol.value);
}

TEST(Directional, RoutesAgreeAndMatchFiniteDifferences) {
    std::mt19937_64 rng(3);
    for (Scheme s : {Scheme::second_order, Scheme::first_order}) {
        for (int trial = 0; trial < 40; ++trial) {
            const int d = 1 + trial % 4;
            const Path x = random_path(rng, d, 1 + trial % 8, 1.0), y = random_path(rng, d, 1 + (trial * 5) % 8, 1.0);
            const ImpulsePath g = random_direction(rng, x);
            const auto o = opts(2, true, s);
            const double a = directional_derivative_pde(x, y, g, o);
            const double b = vp(x, y, g, o);
            EXPECT_LE(std::abs(a - b), 1e-6) << "trial " << trial;
            const double eps = 1e-4;
            const double fd =
                (solve_goursat(perturbed(x, g, eps), y, o).terminal - solve_goursat(perturbed(x, g, -eps), y, o).terminal) /
                (2 * eps);
            EXPECT_LE(rel_err(b, fd), 1e-3) << "trial " << trial;
        }
    }
}

TEST(Directional, BatchMatchesSingle) {
    std::mt19937_64 rng(4);
    const Path x = random_path(rng, 2, 5, 1.0), y = random_path(rng, 2, 6, 1.0);
    std::vector<ImpulsePath> gs;
    for (int k = 0; k < 4; ++k) gs.push_back(random_direction(rng, x));
    const auto many = directional_derivatives_pde(x, y, gs, opts(2, false));
    for (int k = 0; k < 4; ++k) EXPECT_EQ(many[k], directional_derivative_pde(x, y, gs[k], opts(2, false)));
}

TEST(Directional, Linearity) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const Path x = random_path(rng, 3, 4, 1.0), y = random_path(rng, 3, 5, 1.0);
        const ImpulsePath g1 = random_direction(rng, x), g2 = random_direction(rng, x);
        const double a = 0.7, b = -1.3;
        const ImpulsePath mix{a * g1.increments + b * g2.increments};
        const auto o = opts(2);
        EXPECT_NEAR(vp(x, y, mix, o), a * vp(x, y, g1, o) + b * vp(x, y, g2, o), 1e-10);
        EXPECT_NEAR(directional_derivative_pde(x, y, mix, o),
                    a * directional_derivative_pde(x, y, g1, o) + b * directional_derivative_pde(x, y, g2, o), 1e-10);
    }
}

TEST(Directional, Errors) {
    std::mt19937_64 rng(6);
    const Path x = random_path(rng, 2, 3, 1.0), y = random_path(rng, 2, 4, 1.0);
    ImpulsePath wrong{RowMatrix::Zero(2, 2)};
    EXPECT_THROW(directional_derivative_pde(x, y, wrong, opts(1)), ValidationError);
    const auto nogrid = solve_goursat(x, y, opts(1, false));
    EXPECT_THROW(directional_derivative_vp(x, y, ImpulsePath::zero(x), nogrid, nogrid), ValidationError);
}

TEST(Knots, ConstantPartnerGivesZero) {
    std::mt19937_64 rng(7);
    const Path x = random_path(rng, 2, 4, 1.0);
    RowMatrix c(3, 2);
    c << 1, 1, 1, 1, 1, 1;
    const RowMatrix g = grad_knots(x, Path({0, 1, 2}, c), Eigen::Vector2d(1.0, 0.5), opts(2));
    EXPECT_TRUE(g.isZero(0));
    EXPECT_EQ(g.rows(), 5);
}

TEST(Knots, MatchFiniteDifferences) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> th(0.3, 1.5);
    for (int trial = 0; trial < 12; ++trial) {
        const int d = 1 + trial % 3;
        const Path x = random_path(rng, d, 1 + trial % 6, 1.0), y = random_path(rng, d, 2 + trial % 5, 1.0);
        ScalingVector theta(d);
        for (int c = 0; c < d; ++c) theta(c) = th(rng);
        const auto o = opts(2);
        const RowMatrix g = grad_knots(x, y, theta, o);
        const double eps = 1e-4;
        for (Eigen::Index i = 0; i < x.knots(); ++i)
            for (int c = 0; c < d; ++c) {
                RowMatrix kp = x.values(), km = x.values();
                kp(i, c) += eps;
                km(i, c) -= eps;
                const double fd = (kernel(Path(x.times(), kp), y, theta, o) - kernel(Path(x.times(), km), y, theta, o)) /
                                  (2 * eps);
                EXPECT_LE(rel_err(g(i, c), fd), 1e-3) << "trial " << trial << " knot " << i << " ch " << c;
            }
    }
}

TEST(Knots, RampDirectionMatchesFiniteDifferences) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 6; ++trial) {
        const Path x = random_path(rng, 2, 3 + trial % 3, 1.0), y = random_path(rng, 2, 4, 1.0);
        const ScalingVector theta = Eigen::Vector2d(0.8, 1.1);
        const auto o = opts(2);
        const RowMatrix g = grad_knots(x, y, theta, o, KnotDirection::ramp);
        EXPECT_TRUE(g.row(0).isZero(0));
        const double eps = 1e-4;
        const double l = static_cast<double>(x.segments());
        for (Eigen::Index i = 1; i < x.knots(); ++i)
            for (int c = 0; c < 2; ++c) {
                // knot i and every later knot move by ε/ℓ
                RowMatrix kp = x.values(), km = x.values();
                for (Eigen::Index r = i; r < x.knots(); ++r) {
                    kp(r, c) += eps / l;
                    km(r, c) -= eps / l;
                }
                const double fd = (kernel(Path(x.times(), kp), y, theta, o) - kernel(Path(x.times(), km), y, theta, o)) /
                                  (2 * eps);
                EXPECT_LE(rel_err(g(i, c), fd), 1e-3);
            }
    }
}

TEST(Knots, SelfGradientIsTwiceOneSided) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 5; ++trial) {
        const Path x = random_path(rng, 2, 4, 1.0);
        const ScalingVector theta = Eigen::Vector2d(1.0, 0.6);
        const auto o = opts(2);
        const RowMatrix self = grad_knots_self(x, theta, o);
        const RowMatrix one = grad_knots(x, x, theta, o);
        EXPECT_TRUE(self.isApprox(2.0 * one, 1e-12));
        // both copies see the same move: swapping roles changes nothing
        const auto pg = kernel_gradients(x, x, theta, o);
        EXPECT_LE((pg.first - pg.second).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, pg.first.cwiseAbs().maxCoeff()));
        const double eps = 1e-4;
        for (Eigen::Index i = 0; i < x.knots(); ++i)
            for (int c = 0; c < 2; ++c) {
                RowMatrix kp = x.values(), km = x.values();
                kp(i, c) += eps;
                km(i, c) -= eps;
                const Path xp(x.times(), kp), xm(x.times(), km);
                const double fd = (kernel(xp, xp, theta, o) - kernel(xm, xm, theta, o)) / (2 * eps);
                EXPECT_LE(rel_err(self(i, c), fd), 1e-3);
            }
    }
}

TEST(Knots, SidesSwapWithArguments) {
    std::mt19937_64 rng(11);
    const Path x = random_path(rng, 3, 4, 1.0), y = random_path(rng, 3, 6, 1.0);
    const ScalingVector theta = Eigen::Vector3d(0.9, 1.2, 0.4);
    const auto a = kernel_gradients(x, y, theta, opts(2));
    const auto b = kernel_gradients(y, x, theta, opts(2));
    EXPECT_LE((a.first - b.second).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((a.second - b.first).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((a.theta - b.theta).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_DOUBLE_EQ(a.value, kernel(x, y, theta, opts(2, false)));
}

TEST(Theta, ZeroScalingGivesZeroGradient) {
    std::mt19937_64 rng(12);
    const Path x = random_path(rng, 3, 5, 1.0), y = random_path(rng, 3, 3, 1.0);
    const auto o = opts(2);
    const Eigen::VectorXd g = grad_theta_kernel(x, y, ScalingVector::Zero(3), o);
    EXPECT_TRUE(g.isZero(0));
    const Eigen::VectorXd fd = finite_difference_gradient(
        [&](const Eigen::VectorXd& t) { return kernel(x, y, t, o); }, Eigen::VectorXd::Zero(3), 1e-4);
    EXPECT_LE(fd.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Theta, UnitLine) {
    const Path x = line();
    EXPECT_NEAR(grad_theta_kernel(x, x, ScalingVector::Ones(1), opts(6))(0), kLineTheta, 1e-3);
}

TEST(Theta, MatchesFiniteDifferences) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> th(0.2, 1.4);
    for (int trial = 0; trial < 15; ++trial) {
        const int d = 1 + trial % 4;
        const Path x = random_path(rng, d, 1 + trial % 7, 1.0), y = random_path(rng, d, 1 + (trial * 3) % 7, 1.0);
        Eigen::VectorXd theta(d);
        for (int c = 0; c < d; ++c) theta(c) = th(rng);
        const auto o = opts(2);
        const Eigen::VectorXd g = grad_theta_kernel(x, y, theta, o);
        const Eigen::VectorXd fd =
            finite_difference_gradient([&](const Eigen::VectorXd& t) { return kernel(x, y, t, o); }, theta, 1e-4);
        for (int c = 0; c < d; ++c) EXPECT_LE(rel_err(g(c), fd(c)), 1e-3) << "trial " << trial << " ch " << c;
    }
}
