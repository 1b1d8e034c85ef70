#include "siggpde/svgp.hpp"

#include "likelihood_internal.hpp"
#include "siggpde/error.hpp"
#include "siggpde/numfmt.hpp"
#include "siggpde/parallel.hpp"
#include "siggpde/siggrad.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

namespace siggpde {

namespace {

std::atomic<long long> g_inversions{0}, g_factor_products{0}, g_matvecs{0};

}  // namespace

LinalgCounts linalg_counts() { return {g_inversions.load(), g_factor_products.load(), g_matvecs.load()}; }

void reset_linalg_counts() {
    g_inversions = 0;
    g_factor_products = 0;
    g_matvecs = 0;
}

VariationalState VariationalState::prior(int m, SigmaMode mode) {
    if (m < 1) throw ValidationError("variational state needs M >= 1");
    return {Eigen::VectorXd::Zero(m), Eigen::MatrixXd::Identity(m, m), mode};
}

Eigen::MatrixXd VariationalState::covariance() const {
    ++g_factor_products;
    if (mode == SigmaMode::diag) return chol.diagonal().array().square().matrix().asDiagonal();
    const auto l = chol.triangularView<Eigen::Lower>();
    return l * chol.transpose();
}

Eigen::VectorXd VariationalState::factor_transpose_times(const Eigen::VectorXd& s) const {
    ++g_matvecs;
    if (mode == SigmaMode::diag) return chol.diagonal().cwiseProduct(s);
    return chol.triangularView<Eigen::Lower>().transpose() * s;
}

void VariationalState::validate() const {
    const auto m = mean.size();
    if (chol.rows() != m || chol.cols() != m) throw ValidationError("variational factor has the wrong shape");
    if (!mean.allFinite() || !chol.allFinite()) throw NumericalError("variational state is not finite");
    for (Eigen::Index i = 0; i < m; ++i) {
        if (!(chol(i, i) > 0)) throw ValidationError("variational factor needs a positive diagonal");
        for (Eigen::Index j = i + 1; j < m; ++j)
            if (chol(i, j) != 0.0) throw ValidationError("variational factor must be lower triangular");
        if (mode == SigmaMode::diag)
            for (Eigen::Index j = 0; j < i; ++j)
                if (chol(i, j) != 0.0) throw ValidationError("diagonal-mode factor has off-diagonal entries");
    }
}

double gaussian_kl(const VariationalState& q) {
    const auto m = static_cast<double>(q.size());
    const double trace = q.mode == SigmaMode::diag ? q.chol.diagonal().squaredNorm()
                                                   : q.chol.triangularView<Eigen::Lower>().toDenseMatrix().squaredNorm();
    const double logdet = 2.0 * q.chol.diagonal().array().log().sum();
    return 0.5 * (trace + q.mean.squaredNorm() - m - logdet);
}

Path GPModel::prepare(const TimeSeries& raw) const {
    TimeSeries s = apply_scaler(scaler, raw);
    if (augment_time) s = siggpde::augment_time(s);
    if (s.dim() != dim())
        throw ValidationError("series '" + raw.id + "' has " + std::to_string(s.dim()) + " channels, model expects " +
                              std::to_string(dim()));
    return Path(s);
}

std::vector<Path> GPModel::prepare(const std::vector<TimeSeries>& raw) const {
    std::vector<Path> out;
    out.reserve(raw.size());
    for (const auto& s : raw) out.push_back(prepare(s));
    return out;
}

void GPModel::validate() const {
    if (theta.size() != basis.d) throw ValidationError("theta length does not match the basis dimension");
    if (static_cast<int>(channel_names.size()) != basis.d) throw ValidationError("channel names do not match d");
    if (class_names.size() < 2) throw ValidationError("model needs at least two classes");
    const int latents = likelihood == Likelihood::bernoulli_logit ? 1 : num_classes();
    if (likelihood == Likelihood::bernoulli_logit && num_classes() != 2)
        throw ValidationError("bernoulli likelihood needs exactly two classes");
    if (num_latents() != latents) throw ValidationError("wrong number of variational states");
    for (const auto& q : states) {
        if (q.size() != basis.size()) throw ValidationError("variational state size does not match M");
        q.validate();
    }
    solver.validate();
}

namespace {

// Variance of one latent from the feature vector, with the consistency check.
double marginal_variance(double kxx, const Eigen::VectorXd& f, const Eigen::VectorXd& ltf) {
    const double v = kxx - f.squaredNorm() + ltf.squaredNorm();
    if (!std::isfinite(v)) throw NumericalError("non-finite posterior variance");
    const double tol = kVarianceTolerance * std::max(std::abs(kxx), 1.0);
    if (v < -tol)
        throw NumericalError("posterior variance " + std::to_string(v) + " below tolerance (k(X,X) = " +
                             std::to_string(kxx) + "); reduce M or raise the dyadic order");
    return std::max(v, 0.0);
}

}  // namespace

PosteriorMarginals posterior_from_features(const GPModel& model, const Eigen::MatrixXd& feats,
                                           const Eigen::VectorXd& kdiag) {
    const Eigen::Index n = feats.rows();
    const int S = model.num_latents();
    PosteriorMarginals out{Eigen::MatrixXd(n, S), Eigen::MatrixXd(n, S)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd f = feats.row(i).transpose();
        for (int c = 0; c < S; ++c) {
            const auto& q = model.states[c];
            out.mean(i, c) = f.dot(q.mean);
            out.var(i, c) = marginal_variance(kdiag(i), f, q.factor_transpose_times(f));
        }
    }
    return out;
}

namespace {

struct Prepared {
    Eigen::MatrixXd feats;
    Eigen::VectorXd kdiag;
};

Prepared prepare_batch(const GPModel& model, const std::vector<Path>& batch) {
    const auto n = static_cast<long>(batch.size());
    Prepared p{Eigen::MatrixXd(n, model.basis.size()), Eigen::VectorXd(n)};
    SolverOptions o = model.solver;
    o.keep_grid = false;
    detail::parallel_for(n, [&](long i) {
        p.feats.row(i) = features(batch[i], model.theta, model.basis).transpose();
        p.kdiag(i) = kernel(batch[i], batch[i], model.theta, o);
    });
    return p;
}

}  // namespace

PosteriorMarginals posterior_marginals(const GPModel& model, const std::vector<Path>& batch) {
    const auto p = prepare_batch(model, batch);
    return posterior_from_features(model, p.feats, p.kdiag);
}

double elbo(const GPModel& model, const std::vector<Path>& batch, const std::vector<int>& labels, double n_total,
            std::uint64_t seed, const std::vector<std::uint64_t>& keys) {
    if (batch.empty()) throw ValidationError("ELBO needs a non-empty minibatch");
    const auto marg = posterior_marginals(model, batch);
    const double lik = expected_log_density(marg, labels, model.likelihood, model.quad, seed, keys).sum();
    double kl = 0.0;
    for (const auto& q : model.states) kl += gaussian_kl(q);
    return n_total / static_cast<double>(batch.size()) * lik - kl;
}

Eigen::MatrixXd predict_proba(const GPModel& model, const std::vector<Path>& batch) {
    const auto marg = posterior_marginals(model, batch);
    return predictive_probabilities(marg, model.likelihood, model.quad, detail::mix_seed(model.seed, 0x5EED));
}

std::vector<ImportanceEntry> feature_importance(const GPModel& model, int top_k) {
    if (top_k < 1) throw ValidationError("top-k must be positive");
    const int M = model.basis.size();
    const int k = std::min(top_k, M);
    std::vector<ImportanceEntry> out;
    for (int c = 0; c < model.num_latents(); ++c) {
        const auto& m = model.states[c].mean;
        std::vector<int> order(M);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(m(a)) > std::abs(m(b)); });
        const std::string cls =
            model.likelihood == Likelihood::bernoulli_logit ? model.class_names.at(1) : model.class_names.at(c);
        for (int r = 0; r < k; ++r) {
            const int i = order[r];
            out.push_back({r + 1, cls, i, model.basis.words[i], feature_name(model.basis.words[i], model.channel_names),
                           std::abs(m(i))});
        }
    }
    return out;
}

// ---------------------------------------------------------------- training

void TrainConfig::validate() const {
    if (m_inducing < 1) throw ValidationError("m_inducing must be >= 1");
    solver.validate();
    if (!(learning_rate > 0)) throw ValidationError("learning_rate must be positive");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (iterations < 0) throw ValidationError("iterations must be >= 0");
    double sum = 0.0;
    for (double f : phase_fractions) {
        if (!(f >= 0)) throw ValidationError("phase fractions must be non-negative");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("phase fractions must sum to 1");
    if (quad.gh_points < 1) throw ValidationError("quad_points must be >= 1");
    if (quad.mc_samples < 1) throw ValidationError("mc_samples must be >= 1");
    if (!(validation_fraction >= 0 && validation_fraction < 1))
        throw ValidationError("validation_fraction must lie in [0, 1)");
    if (!std::isfinite(theta_init)) throw ValidationError("theta_init must be finite");
    if (eval_interval < 1) throw ValidationError("eval_interval must be >= 1");
}

GPModel initial_model(const Dataset& train_split, const TrainConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    train_split.validate();
    const int C = train_split.num_classes();
    GPModel m;
    m.scaler = fit_scaler(train_split.series);
    const int d_raw = static_cast<int>(m.scaler.mean.size());
    m.augment_time = true;
    m.channel_names.push_back("time");
    for (int c = 0; c < d_raw; ++c) m.channel_names.push_back("ch" + std::to_string(c));
    const int d = d_raw + 1;
    m.basis = enumerate_words(d, cfg.m_inducing, cfg.include_empty_word);
    m.theta = ScalingVector::Constant(d, cfg.theta_init);
    m.likelihood = cfg.likelihood.value_or(C == 2 ? Likelihood::bernoulli_logit : Likelihood::softmax_mc);
    if (m.likelihood == Likelihood::bernoulli_logit && C != 2)
        throw ValidationError("bernoulli likelihood needs exactly two classes, got " + std::to_string(C));
    const int latents = m.likelihood == Likelihood::bernoulli_logit ? 1 : C;
    for (int c = 0; c < latents; ++c) m.states.push_back(VariationalState::prior(m.basis.size(), cfg.sigma_mode));
    m.quad = cfg.quad;
    m.class_names = train_split.class_names;
    m.solver = cfg.solver;
    m.solver.keep_grid = false;
    m.seed = seed;
    return m;
}

namespace {

class Adam {
public:
    Adam(Eigen::Index n, double lr, bool nesterov)
        : lr_(lr), nesterov_(nesterov), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

    // Descent step on `x` for gradient `g` of the quantity being minimised.
    void step(Eigen::VectorXd& x, const Eigen::VectorXd& g) {
        ++t_;
        m_ = b1_ * m_ + (1 - b1_) * g;
        v_ = b2_ * v_ + (1 - b2_) * g.cwiseAbs2();
        const double c1 = 1 - std::pow(b1_, t_), c2 = 1 - std::pow(b2_, t_);
        Eigen::VectorXd mhat = m_ / c1;
        if (nesterov_) mhat = b1_ * mhat + (1 - b1_) * g / c1;
        x.array() -= lr_ * mhat.array() / ((v_ / c2).array().sqrt() + eps_);
    }

private:
    double lr_;
    bool nesterov_;
    double b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
    int t_ = 0;
    Eigen::VectorXd m_, v_;
};

// Unconstrained parameters of one state: m, log-diagonal, strictly lower part.
Eigen::Index param_count(int M, SigmaMode mode) {
    return 2 * M + (mode == SigmaMode::full ? static_cast<Eigen::Index>(M) * (M - 1) / 2 : 0);
}

Eigen::VectorXd pack(const VariationalState& q) {
    const int M = q.size();
    Eigen::VectorXd x(param_count(M, q.mode));
    x.head(M) = q.mean;
    x.segment(M, M) = q.chol.diagonal().array().log();
    if (q.mode == SigmaMode::full) {
        Eigen::Index k = 2 * M;
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < i; ++j) x(k++) = q.chol(i, j);
    }
    return x;
}

void unpack(const Eigen::VectorXd& x, VariationalState& q) {
    const int M = q.size();
    q.mean = x.head(M);
    q.chol.diagonal() = x.segment(M, M).array().exp();
    if (q.mode == SigmaMode::full) {
        Eigen::Index k = 2 * M;
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < i; ++j) q.chol(i, j) = x(k++);
    }
}

struct Item {
    Path path;
    Eigen::VectorXd coords;  // unscaled signature coordinates of the basis words
    int label = 0;
    std::uint64_t key = 0;
    double kxx = 1.0;  // at the current θ
};

struct ItemTerm {
    double value = 0.0;
    Eigen::VectorXd f;
    std::vector<Eigen::VectorXd> ltf;
    Eigen::VectorXd dmean, dvar;
    Eigen::MatrixXd jac;  // d f / d θ
    Eigen::VectorXd dk;   // d k(X,X) / d θ
};

struct Gradient {
    double lik = 0.0;
    std::vector<Eigen::VectorXd> state;  // d ELBO / d packed parameters
    Eigen::VectorXd theta;
};

class Trainer {
public:
    Trainer(GPModel& model, const TrainConfig& cfg) : model_(model), cfg_(cfg) {}

    void refresh_diagonals(std::vector<Item>& items) const {
        SolverOptions o = model_.solver;
        o.keep_grid = false;
        detail::parallel_for(static_cast<long>(items.size()),
                             [&](long i) { items[i].kxx = kernel(items[i].path, items[i].path, model_.theta, o); });
    }

    ItemTerm item_term(const Item& it, bool with_theta, std::uint64_t seed) const {
        ItemTerm t;
        t.f = scale_coordinates(it.coords, model_.theta, model_.basis);
        double kxx = it.kxx;
        if (with_theta) {
            t.jac = scale_coordinates_grad(it.coords, model_.theta, model_.basis);
            const auto g = kernel_gradients(it.path, it.path, model_.theta, model_.solver);
            kxx = g.value;
            t.dk = g.theta;
        }
        const int S = model_.num_latents();
        Eigen::VectorXd mean(S), var(S);
        t.ltf.resize(S);
        for (int c = 0; c < S; ++c) {
            const auto& q = model_.states[c];
            t.ltf[c] = q.factor_transpose_times(t.f);
            mean(c) = t.f.dot(q.mean);
            var(c) = marginal_variance(kxx, t.f, t.ltf[c]);
        }
        auto pt = detail::expected_log_density_point(mean, var, it.label, model_.likelihood, model_.quad,
                                                     detail::mix_seed(seed, it.key));
        t.value = pt.value;
        t.dmean = std::move(pt.dmean);
        t.dvar = std::move(pt.dvar);
        return t;
    }

    Gradient gradient(const std::vector<Item>& items, const std::vector<std::size_t>& batch, double n_total,
                      bool with_theta, std::uint64_t seed) const {
        const auto nb = static_cast<long>(batch.size());
        std::vector<ItemTerm> terms(static_cast<std::size_t>(nb));
        detail::parallel_for(nb, [&](long i) { terms[i] = item_term(items[batch[i]], with_theta, seed); });

        const int S = model_.num_latents();
        const int M = model_.basis.size();
        const double scale = n_total / static_cast<double>(nb);
        Gradient g;
        std::vector<Eigen::VectorXd> dm(S, Eigen::VectorXd::Zero(M));
        std::vector<Eigen::MatrixXd> dl(S, Eigen::MatrixXd::Zero(M, M));
        std::vector<Eigen::VectorXd> dldiag(S, Eigen::VectorXd::Zero(M));
        g.theta = Eigen::VectorXd::Zero(model_.theta.size());
        const bool full = model_.states.front().mode == SigmaMode::full;
        // Fixed reduction order over the batch.
        for (const auto& t : terms) {
            g.lik += t.value;
            Eigen::VectorXd df = Eigen::VectorXd::Zero(M);
            double dk = 0.0;
            for (int c = 0; c < S; ++c) {
                const auto& q = model_.states[c];
                const double gm = t.dmean(c), gv = t.dvar(c);
                dm[c] += gm * t.f;
                if (full)
                    dl[c].noalias() += (2.0 * gv) * t.f * t.ltf[c].transpose();
                else
                    dldiag[c] += (2.0 * gv) * t.f.cwiseProduct(t.ltf[c]);
                if (with_theta) {
                    Eigen::VectorXd sigma_f =
                        full ? Eigen::VectorXd(q.chol.triangularView<Eigen::Lower>() * t.ltf[c])
                             : Eigen::VectorXd(q.chol.diagonal().cwiseProduct(t.ltf[c]));
                    ++g_matvecs;
                    df += gm * q.mean + (2.0 * gv) * (sigma_f - t.f);
                    dk += gv;
                }
            }
            if (with_theta) g.theta += t.jac.transpose() * df + dk * t.dk;
        }
        g.lik *= scale;
        g.theta *= scale;

        for (int c = 0; c < S; ++c) {
            const auto& q = model_.states[c];
            Eigen::VectorXd x(param_count(M, q.mode));
            // likelihood part minus the KL part
            x.head(M) = scale * dm[c] - q.mean;
            for (int a = 0; a < M; ++a) {
                const double lab = q.chol(a, a);
                const double dla = full ? dl[c](a, a) : dldiag[c](a);
                x(M + a) = scale * dla * lab - (lab * lab - 1.0);
            }
            if (full) {
                Eigen::Index k = 2 * M;
                for (int i = 0; i < M; ++i)
                    for (int j = 0; j < i; ++j) x(k++) = scale * dl[c](i, j) - q.chol(i, j);
            }
            g.state.push_back(std::move(x));
        }
        return g;
    }

    double full_elbo(const std::vector<Item>& items, std::uint64_t seed) const {
        std::vector<double> v(items.size());
        detail::parallel_for(static_cast<long>(items.size()), [&](long i) { v[i] = item_term(items[i], false, seed).value; });
        double lik = 0.0;
        for (double x : v) lik += x;
        double kl = 0.0;
        for (const auto& q : model_.states) kl += gaussian_kl(q);
        return lik - kl;
    }

    double nlpp(const std::vector<Item>& items, std::uint64_t seed) const {
        std::vector<double> v(items.size());
        detail::parallel_for(static_cast<long>(items.size()), [&](long i) {
            const auto& it = items[i];
            const Eigen::VectorXd f = scale_coordinates(it.coords, model_.theta, model_.basis);
            const int S = model_.num_latents();
            Eigen::VectorXd mean(S), var(S);
            for (int c = 0; c < S; ++c) {
                const auto& q = model_.states[c];
                mean(c) = f.dot(q.mean);
                var(c) = marginal_variance(it.kxx, f, q.factor_transpose_times(f));
            }
            const Eigen::VectorXd p =
                detail::predictive_point(mean, var, model_.likelihood, model_.quad, detail::mix_seed(seed, it.key));
            v[i] = -std::log(std::max(p(it.label), std::numeric_limits<double>::min()));
        });
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(items.size());
    }

private:
    GPModel& model_;
    const TrainConfig& cfg_;
};

std::vector<Item> make_items(const GPModel& model, const Dataset& ds, const std::vector<std::size_t>& idx) {
    std::vector<Item> items(idx.size());
    detail::parallel_for(static_cast<long>(idx.size()), [&](long i) {
        const auto& s = ds.series[idx[i]];
        items[i].path = model.prepare(s);
        items[i].coords = signature_coordinates(items[i].path, model.basis);
        items[i].label = ds.label_of(s);
        items[i].key = idx[i];
    });
    return items;
}

}  // namespace

ElboGradient elbo_gradient(const GPModel& model, const std::vector<Path>& batch, const std::vector<int>& labels,
                           double n_total, std::uint64_t seed, const std::vector<std::uint64_t>& keys) {
    if (batch.empty()) throw ValidationError("ELBO needs a non-empty minibatch");
    if (labels.size() != batch.size()) throw ValidationError("label count does not match batch");
    if (!keys.empty() && keys.size() != batch.size()) throw ValidationError("key count does not match batch");
    model.validate();
    GPModel m = model;
    TrainConfig cfg;
    Trainer trainer(m, cfg);
    std::vector<Item> items(batch.size());
    std::vector<std::size_t> idx(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        items[i].path = batch[i];
        items[i].coords = signature_coordinates(batch[i], m.basis);
        items[i].label = labels[i];
        items[i].key = keys.empty() ? i : keys[i];
        idx[i] = i;
    }
    const Gradient g = trainer.gradient(items, idx, n_total, true, seed);
    ElboGradient out;
    out.value = g.lik;
    for (const auto& q : m.states) out.value -= gaussian_kl(q);
    out.theta = g.theta;
    const int M = m.basis.size();
    for (std::size_t c = 0; c < m.states.size(); ++c) {
        const auto& q = m.states[c];
        const Eigen::VectorXd& x = g.state[c];
        out.mean.push_back(x.head(M));
        Eigen::MatrixXd dl = Eigen::MatrixXd::Zero(M, M);
        // packed diagonal entries are log-scales
        for (int a = 0; a < M; ++a) dl(a, a) = x(M + a) / q.chol(a, a);
        if (q.mode == SigmaMode::full) {
            Eigen::Index k = 2 * M;
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < i; ++j) dl(i, j) = x(k++);
        }
        out.chol.push_back(std::move(dl));
    }
    return out;
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ds.validate();
    const auto t_start = std::chrono::steady_clock::now();
    auto elapsed = [&]() {
        return cfg.record_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count()
                               : 0.0;
    };

    // Stratified, seeded validation split; every class keeps a training member.
    std::mt19937_64 rng(detail::mix_seed(seed, 0x5917));
    const int C = ds.num_classes();
    std::vector<std::vector<std::size_t>> by_class(C);
    for (std::size_t i = 0; i < ds.series.size(); ++i) by_class[ds.label_of(ds.series[i])].push_back(i);
    std::vector<std::size_t> train_idx, val_idx;
    for (int c = 0; c < C; ++c) {
        auto& v = by_class[c];
        if (v.empty()) throw ValidationError("class '" + ds.class_names[c] + "' has no series");
        std::shuffle(v.begin(), v.end(), rng);
        auto nval = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(v.size())));
        nval = std::min(nval, v.size() - 1);
        val_idx.insert(val_idx.end(), v.begin(), v.begin() + static_cast<long>(nval));
        train_idx.insert(train_idx.end(), v.begin() + static_cast<long>(nval), v.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());

    Dataset train_split;
    train_split.class_names = ds.class_names;
    train_split.labels = ds.labels;
    for (auto i : train_idx) train_split.series.push_back(ds.series[i]);

    TrainResult res;
    res.model = initial_model(train_split, cfg, seed);
    GPModel& model = res.model;
    Trainer trainer(model, cfg);

    std::vector<Item> train_items = make_items(model, ds, train_idx);
    std::vector<Item> val_items = make_items(model, ds, val_idx);
    trainer.refresh_diagonals(train_items);
    trainer.refresh_diagonals(val_items);

    std::vector<Item> pool_all = train_items;
    pool_all.insert(pool_all.end(), val_items.begin(), val_items.end());
    const std::uint64_t eval_seed = detail::mix_seed(seed, 0xE7A1);
    res.initial_elbo = trainer.full_elbo(pool_all, eval_seed);

    const int T = cfg.iterations;
    const int n1 = static_cast<int>(std::lround(cfg.phase_fractions[0] * T));
    const int n12 = std::min(T, static_cast<int>(std::lround((cfg.phase_fractions[0] + cfg.phase_fractions[1]) * T)));

    std::vector<Adam> opt;
    for (const auto& q : model.states) opt.emplace_back(param_count(q.size(), q.mode), cfg.learning_rate, cfg.nesterov);
    Adam theta_opt(model.theta.size(), cfg.learning_rate, cfg.nesterov);

    double best_nlpp = std::numeric_limits<double>::infinity();
    std::vector<VariationalState> best_states;
    ScalingVector best_theta;

    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    int current_phase = 0;
    bool val_stale = false;
    const std::vector<Item>* pool = &train_items;

    for (int it = 0; it < T; ++it) {
        const int phase = it < n1 ? 1 : (it < n12 ? 2 : 3);
        if (phase != current_phase) {
            if (phase == 3) {
                if (!best_states.empty()) {
                    model.states = best_states;
                    model.theta = best_theta;
                }
                trainer.refresh_diagonals(train_items);
                trainer.refresh_diagonals(val_items);
                pool_all = train_items;
                pool_all.insert(pool_all.end(), val_items.begin(), val_items.end());
                pool = &pool_all;
            }
            current_phase = phase;
            order.resize(pool->size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            cursor = order.size();
        }
        const std::size_t B = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), pool->size());
        std::vector<std::size_t> batch;
        while (batch.size() < B) {
            if (cursor >= order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }

        const bool with_theta = phase == 2;
        const std::uint64_t iter_seed = detail::mix_seed(seed, static_cast<std::uint64_t>(it) + 1);
        const Gradient g =
            trainer.gradient(*pool, batch, static_cast<double>(pool->size()), with_theta, iter_seed);
        double kl = 0.0;
        for (const auto& q : model.states) kl += gaussian_kl(q);
        const double value = g.lik - kl;
        if (!std::isfinite(value))
            throw NumericalError("training diverged at iteration " + std::to_string(it) + " (phase " +
                                 std::to_string(phase) + "): ELBO is not finite");

        for (std::size_t c = 0; c < model.states.size(); ++c) {
            Eigen::VectorXd x = pack(model.states[c]);
            opt[c].step(x, -g.state[c]);
            unpack(x, model.states[c]);
        }
        if (with_theta) {
            if (!g.theta.allFinite()) throw NumericalError("non-finite θ gradient at iteration " + std::to_string(it));
            theta_opt.step(model.theta, -g.theta);
            val_stale = true;
        }

        LogRow row;
        row.iteration = it;
        row.phase = phase;
        row.elbo = value;
        row.val_nlpp = std::numeric_limits<double>::quiet_NaN();
        const bool last_of_phase = it + 1 == T || (phase == 1 && it + 1 == n1) || (phase == 2 && it + 1 == n12);
        if (phase < 3 && !val_items.empty() && ((it + 1) % cfg.eval_interval == 0 || last_of_phase)) {
            // cached diagonals go stale once θ moves
            if (val_stale) trainer.refresh_diagonals(val_items);
            val_stale = false;
            row.val_nlpp = trainer.nlpp(val_items, eval_seed);
            if (row.val_nlpp < best_nlpp) {
                best_nlpp = row.val_nlpp;
                best_states = model.states;
                best_theta = model.theta;
            }
        }
        row.seconds = elapsed();
        res.log.rows.push_back(row);
    }
    if (current_phase == 2 && !best_states.empty()) {
        model.states = best_states;
        model.theta = best_theta;
    }
    trainer.refresh_diagonals(train_items);
    trainer.refresh_diagonals(val_items);
    pool_all = train_items;
    pool_all.insert(pool_all.end(), val_items.begin(), val_items.end());
    res.final_elbo = trainer.full_elbo(pool_all, eval_seed);
    res.iterations = T;
    res.seconds = elapsed();
    return res;
}

void write_log(std::ostream& out, const TrainingLog& log) {
    out << "iteration,phase,elbo,val_nlpp,seconds\n";
    for (const auto& r : log.rows)
        out << r.iteration << ',' << r.phase << ',' << format_double(r.elbo) << ',' << format_double(r.val_nlpp)
            << ',' << format_double(r.seconds) << '\n';
}

}  // namespace siggpde
