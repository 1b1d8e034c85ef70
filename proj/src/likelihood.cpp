#include "likelihood_internal.hpp"

#include "siggpde/error.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <random>

namespace siggpde {

void gauss_hermite(int q, std::vector<double>& x, std::vector<double>& w) {
    if (q < 1) throw ValidationError("need at least one quadrature node");
    x.assign(q, 0.0);
    w.assign(q, 0.0);
    const double pim4 = 0.7511255444649425;  // pi^(-1/4)
    const int half = (q + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < half; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * q + 1) - 1.85575 * std::pow(2.0 * q + 1, -0.16667);
        else if (i == 1)
            z -= 1.14 * std::pow(static_cast<double>(q), 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * x[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * x[1];
        else
            z = 2.0 * z - x[i - 2];
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 0; j < q; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * q) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
        }
        x[i] = z;
        x[q - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[q - 1 - i] = w[i];
    }
    if (q % 2 == 1) x[q / 2] = 0.0;
}

namespace detail {

namespace {

struct GaussHermiteRule {
    std::vector<double> x, w;  // w already divided by sqrt(pi)
};

const GaussHermiteRule& rule(int q) {
    static std::mutex mu;
    static std::map<int, GaussHermiteRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(q);
    if (it == cache.end()) {
        GaussHermiteRule r;
        gauss_hermite(q, r.x, r.w);
        for (auto& v : r.w) v /= std::sqrt(M_PI);
        it = cache.emplace(q, std::move(r)).first;
    }
    return it->second;
}

double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }
double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Draws per-sample standard normals, antithetic in consecutive pairs.
Eigen::MatrixXd normal_draws(int samples, Eigen::Index latents, std::uint64_t stream) {
    std::mt19937_64 rng(stream);
    std::normal_distribution<double> n01;
    Eigen::MatrixXd eps(samples, latents);
    for (int s = 0; s < samples; s += 2) {
        for (Eigen::Index c = 0; c < latents; ++c) eps(s, c) = n01(rng);
        if (s + 1 < samples) eps.row(s + 1) = -eps.row(s);
    }
    return eps;
}

void softmax_inplace(Eigen::VectorXd& f) {
    const double mx = f.maxCoeff();
    f = (f.array() - mx).exp();
    f /= f.sum();
}

constexpr double kTinyStd = 1e-8;

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

PointTerm expected_log_density_point(const Eigen::VectorXd& mean, const Eigen::VectorXd& var, int label,
                                     Likelihood lik, const QuadConfig& quad, std::uint64_t stream) {
    if (!mean.allFinite() || !var.allFinite()) throw NumericalError("non-finite posterior marginals");
    PointTerm t;
    t.dmean = Eigen::VectorXd::Zero(mean.size());
    t.dvar = Eigen::VectorXd::Zero(mean.size());
    if (lik == Likelihood::bernoulli_logit) {
        if (quad.gh_points < 1) throw ValidationError("quadrature needs at least one node");
        if (mean.size() != 1) throw ValidationError("bernoulli likelihood takes one latent");
        if (label != 0 && label != 1) throw ValidationError("bernoulli labels must be 0 or 1");
        const auto& r = rule(quad.gh_points);
        const double y = label == 1 ? 1.0 : -1.0;
        const double mu = mean(0), sd = std::sqrt(std::max(var(0), 0.0));
        double v = 0.0, dmu = 0.0, dsd = 0.0, curv = 0.0;
        for (std::size_t k = 0; k < r.x.size(); ++k) {
            const double node = std::sqrt(2.0) * r.x[k];
            const double z = y * (mu + sd * node);
            v += r.w[k] * log_sigmoid(z);
            const double g = y * sigmoid(-z);  // d/df log σ(y f)
            dmu += r.w[k] * g;
            dsd += r.w[k] * g * node;
            curv -= r.w[k] * sigmoid(z) * sigmoid(-z);
        }
        t.value = v;
        t.dmean(0) = dmu;
        // Derivative of the quadrature itself; at vanishing spread fall back
        // to Price's identity d/dσ² E[g] = E[g'']/2.
        t.dvar(0) = sd > kTinyStd ? dsd / (2.0 * sd) : 0.5 * curv;
        return t;
    }
    if (quad.mc_samples < 1) throw ValidationError("Monte Carlo needs at least one sample");
    const Eigen::Index C = mean.size();
    if (label < 0 || label >= C) throw ValidationError("label out of range");
    const int S = quad.mc_samples;
    const Eigen::MatrixXd eps = normal_draws(S, C, stream);
    const Eigen::VectorXd sd = var.cwiseMax(0.0).cwiseSqrt();
    Eigen::VectorXd dsd = Eigen::VectorXd::Zero(C), curv = Eigen::VectorXd::Zero(C);
    double v = 0.0;
    for (int s = 0; s < S; ++s) {
        Eigen::VectorXd f = mean + sd.cwiseProduct(eps.row(s).transpose());
        const double mx = f.maxCoeff();
        const double lse = mx + std::log((f.array() - mx).exp().sum());
        v += f(label) - lse;
        softmax_inplace(f);
        Eigen::VectorXd g = -f;
        g(label) += 1.0;
        t.dmean += g;
        dsd += g.cwiseProduct(eps.row(s).transpose());
        curv -= f.cwiseProduct((1.0 - f.array()).matrix());
    }
    t.value = v / S;
    t.dmean /= S;
    for (Eigen::Index c = 0; c < C; ++c)
        t.dvar(c) = sd(c) > kTinyStd ? dsd(c) / (S * 2.0 * sd(c)) : 0.5 * curv(c) / S;
    return t;
}

Eigen::VectorXd predictive_point(const Eigen::VectorXd& mean, const Eigen::VectorXd& var, Likelihood lik,
                                 const QuadConfig& quad, std::uint64_t stream) {
    if (lik == Likelihood::bernoulli_logit) {
        const auto& r = rule(quad.gh_points);
        const double mu = mean(0), sd = std::sqrt(std::max(var(0), 0.0));
        // σ(f) - 1/2 = tanh(f/2)/2 is odd, so symmetric node pairs cancel
        // exactly when the mean is zero.
        const int q = static_cast<int>(r.x.size());
        double acc = 0.0;
        for (int k = 0; k < q / 2; ++k) {
            const double node = std::sqrt(2.0) * r.x[k];
            acc += r.w[k] * (std::tanh(0.5 * (mu + sd * node)) + std::tanh(0.5 * (mu - sd * node)));
        }
        if (q % 2 == 1) acc += r.w[q / 2] * std::tanh(0.5 * mu);
        const double p1 = 0.5 + 0.5 * acc;
        Eigen::VectorXd p(2);
        p << 1.0 - p1, p1;
        return p;
    }
    const Eigen::Index C = mean.size();
    const int S = quad.mc_samples;
    const Eigen::MatrixXd eps = normal_draws(S, C, stream);
    const Eigen::VectorXd sd = var.cwiseMax(0.0).cwiseSqrt();
    Eigen::VectorXd p = Eigen::VectorXd::Zero(C);
    for (int s = 0; s < S; ++s) {
        Eigen::VectorXd f = mean + sd.cwiseProduct(eps.row(s).transpose());
        softmax_inplace(f);
        p += f;
    }
    return p / p.sum();
}

}  // namespace detail

Eigen::VectorXd expected_log_density(const PosteriorMarginals& marg, const std::vector<int>& labels,
                                     Likelihood lik, const QuadConfig& quad, std::uint64_t seed,
                                     const std::vector<std::uint64_t>& keys) {
    const Eigen::Index n = marg.mean.rows();
    if (static_cast<Eigen::Index>(labels.size()) != n) throw ValidationError("label count does not match batch");
    if (!keys.empty() && static_cast<Eigen::Index>(keys.size()) != n)
        throw ValidationError("key count does not match batch");
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::uint64_t key = keys.empty() ? static_cast<std::uint64_t>(i) : keys[i];
        out(i) = detail::expected_log_density_point(marg.mean.row(i).transpose(), marg.var.row(i).transpose(),
                                                    labels[i], lik, quad, detail::mix_seed(seed, key))
                     .value;
    }
    return out;
}

Eigen::MatrixXd predictive_probabilities(const PosteriorMarginals& marg, Likelihood lik, const QuadConfig& quad,
                                         std::uint64_t seed) {
    const Eigen::Index n = marg.mean.rows();
    const Eigen::Index C = lik == Likelihood::bernoulli_logit ? 2 : marg.mean.cols();
    Eigen::MatrixXd p(n, C);
    for (Eigen::Index i = 0; i < n; ++i)
        p.row(i) = detail::predictive_point(marg.mean.row(i).transpose(), marg.var.row(i).transpose(), lik, quad,
                                            detail::mix_seed(seed, static_cast<std::uint64_t>(i)))
                       .transpose();
    return p;
}

}  // namespace siggpde
