#include "siggpde/cli.hpp"
#include "siggpde/oracle.hpp"
#include "siggpde/siggrad.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

namespace siggpde {

namespace {

constexpr double kUnitLineKernel = 2.2795853023360673;  // Σ 1/(n!)^2

class Suite {
public:
    Suite(SelftestReport& r, std::string name) : r_(r), name_(std::move(name)) {}
    ~Suite() {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%-28s %s (%d/%d)", name_.c_str(), failed_ ? "FAIL" : "pass", checks_ - failed_,
                      checks_);
        r_.lines.emplace_back(buf);
        if (!detail_.empty()) r_.lines.push_back("    " + detail_);
        (failed_ ? r_.failed : r_.passed) += 1;
    }
    void check(bool ok, const std::string& what) {
        ++checks_;
        if (!ok) {
            ++failed_;
            if (detail_.empty()) detail_ = what;
        }
    }
    template <class Fn>
    void guarded(Fn&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            check(false, std::string("exception: ") + e.what());
        }
    }

private:
    SelftestReport& r_;
    std::string name_;
    int checks_ = 0, failed_ = 0;
    std::string detail_;
};

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

Path unit_line() {
    RowMatrix k(2, 1);
    k << 0.0, 1.0;
    return Path({0.0, 1.0}, k);
}

}  // namespace

SelftestReport run_selftest(bool quick) {
    SelftestReport rep;
    std::mt19937_64 rng(20240531);
    const int pairs = quick ? 6 : 25;

    {
        Suite s(rep, "closed-form line kernel");
        s.guarded([&] {
            SolverOptions o;
            o.dyadic_order = 6;
            const double k6 = solve_goursat(unit_line(), unit_line(), o).terminal;
            s.check(std::abs(k6 - kUnitLineKernel) <= 1e-4, "unit line at dyadic order 6");
            s.check(std::abs(linear_path_kernel_closed_form(1.0, 20) - kUnitLineKernel) <= 1e-15, "closed form");
            RowMatrix a(2, 1), b(2, 1);
            a << 0, 2;
            b << 0, 3;
            const double series = kernel_series_oracle(Path({0, 1}, a), Path({0, 1}, b), ScalingVector::Ones(1), 30);
            s.check(rel(series, linear_path_kernel_closed_form(6.0, 30)) <= 1e-10, "series vs closed form");
        });
    }
    {
        Suite s(rep, "series oracle vs solver");
        s.guarded([&] {
            for (int i = 0; i < pairs; ++i) {
                const int d = 1 + static_cast<int>(rng() % 3);
                const Path x = random_path(rng, d, 1 + static_cast<int>(rng() % 6), 1.0);
                const Path y = random_path(rng, d, 1 + static_cast<int>(rng() % 6), 1.0);
                const ScalingVector th = ScalingVector::Ones(d);
                SolverOptions o;
                o.dyadic_order = 5;
                const double pde = kernel(x, y, th, o);
                const double ser = kernel_series_oracle(x, y, th, 12, 2'000'000);
                s.check(rel(pde, ser) <= 1e-4, "relative error " + std::to_string(rel(pde, ser)));
            }
        });
    }
    {
        Suite s(rep, "time reversal");
        s.guarded([&] {
            for (int i = 0; i < pairs; ++i) {
                const int d = 1 + static_cast<int>(rng() % 4);
                const Path x = random_path(rng, d, 1 + static_cast<int>(rng() % 10), 2.0);
                const Path y = random_path(rng, d, 1 + static_cast<int>(rng() % 10), 2.0);
                SolverOptions o;
                o.dyadic_order = 3;
                const double k = solve_goursat(x, y, o).terminal;
                const double kr = solve_goursat(x.reversed(), y.reversed(), o).terminal;
                s.check(rel(kr, k) <= 1e-9, "reversal gap " + std::to_string(rel(kr, k)));
            }
        });
    }
    {
        Suite s(rep, "wavefront determinism");
        s.guarded([&] {
            for (int i = 0; i < 3; ++i) {
                const Path x = random_path(rng, 3, 12, 2.0), y = random_path(rng, 3, 9, 2.0);
                SolverOptions o;
                o.dyadic_order = 3;
                o.keep_grid = true;
                const auto a = solve_goursat(x, y, o);
                o.execution = Execution::wavefront;
                const auto b = solve_goursat(x, y, o);
                s.check(a.grid.data() == b.grid.data(), "grids differ");
            }
        });
    }
    {
        Suite s(rep, "gradient routes");
        s.guarded([&] {
            for (int i = 0; i < pairs; ++i) {
                const int d = 1 + static_cast<int>(rng() % 3);
                const Path x = random_path(rng, d, 1 + static_cast<int>(rng() % 5), 1.5);
                const Path y = random_path(rng, d, 1 + static_cast<int>(rng() % 5), 1.5);
                SolverOptions o;
                o.dyadic_order = 2;
                o.keep_grid = true;
                ImpulsePath g = ImpulsePath::zero(x);
                std::normal_distribution<double> n01;
                for (Eigen::Index k = 0; k < g.increments.size(); ++k) g.increments(k) = n01(rng);
                const double pde = directional_derivative_pde(x, y, g, o);
                const auto fwd = solve_goursat(x, y, o);
                const auto rev = solve_goursat(x.reversed(), y.reversed(), o);
                const double vp = directional_derivative_vp(x, y, g, fwd, rev);
                s.check(std::abs(pde - vp) <= 1e-8 * std::max(1.0, std::abs(pde)), "pde vs vp");
                const double eps = 1e-4;
                auto shifted = [&](double e) {
                    RowMatrix kn = x.values();
                    for (Eigen::Index r = 1; r < kn.rows(); ++r) kn.row(r) = kn.row(r - 1) + x.increments().row(r - 1) + e * g.increments.row(r - 1);
                    return solve_goursat(Path(x.times(), kn), y, o).terminal;
                };
                const double fd = (shifted(eps) - shifted(-eps)) / (2 * eps);
                s.check(std::abs(fd - vp) <= 1e-3 * std::max(std::abs(fd), 1e-3), "vp vs finite difference");
            }
        });
    }
    {
        Suite s(rep, "signature identities");
        s.guarded([&] {
            for (int i = 0; i < pairs; ++i) {
                const Path a = random_path(rng, 2, 4, 1.5), b = random_path(rng, 2, 3, 1.5);
                RowMatrix kn(a.knots() + b.segments(), 2);
                kn.topRows(a.knots()) = a.values();
                for (Eigen::Index r = 0; r < b.segments(); ++r)
                    kn.row(a.knots() + r) = kn.row(a.knots() + r - 1) + b.increments().row(r);
                std::vector<double> t(static_cast<std::size_t>(kn.rows()));
                for (std::size_t k = 0; k < t.size(); ++k) t[k] = static_cast<double>(k);
                const auto whole = truncated_signature(Path(t, kn), 4);
                const auto prod = chen_product(truncated_signature(a, 4), truncated_signature(b, 4));
                double gap = 0.0;
                for (int k = 0; k <= 4; ++k)
                    for (std::size_t j = 0; j < whole.level(k).size(); ++j)
                        gap = std::max(gap, std::abs(whole.level(k)[j] - prod.level(k)[j]));
                s.check(gap <= 1e-12, "Chen identity");
                const auto sa = truncated_signature(a, 2);
                s.check(std::abs(sa[{0}] * sa[{1}] - sa[{0, 1}] - sa[{1, 0}]) <= 1e-12, "shuffle identity");
            }
        });
    }
    {
        Suite s(rep, "variational algebra");
        s.guarded([&] {
            VariationalState q = VariationalState::prior(2);
            s.check(std::abs(gaussian_kl(q)) <= 1e-12, "KL at the prior");
            q.mean << 1.0, 0.0;
            q.chol(0, 0) = std::sqrt(0.5);
            q.chol(1, 1) = std::sqrt(2.0);
            s.check(std::abs(gaussian_kl(q) - 0.75) <= 1e-12, "KL closed form");
            const int d = 3;
            for (int i = 0; i < pairs; ++i) {
                const Path x = random_path(rng, d, 1 + static_cast<int>(rng() % 6), 1.0);
                const FeatureBasis basis = enumerate_words(d, 1 + 3 + 9 + 27);
                SolverOptions o;
                o.dyadic_order = 3;
                const Eigen::VectorXd f = features(x, ScalingVector::Ones(d), basis);
                const double kxx = kernel(x, x, ScalingVector::Ones(d), o);
                s.check(f.squaredNorm() <= kxx + 1e-6, "Bessel bound");
            }
        });
    }
    return rep;
}

}  // namespace siggpde
