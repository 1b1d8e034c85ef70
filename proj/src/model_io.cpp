#include "siggpde/error.hpp"
#include "siggpde/svgp.hpp"

#include <fstream>

namespace siggpde {

using nlohmann::json;

std::string to_string(Likelihood l) { return l == Likelihood::bernoulli_logit ? "bernoulli_logit" : "softmax_mc"; }
std::string to_string(SigmaMode m) { return m == SigmaMode::full ? "full" : "diag"; }
std::string to_string(Scheme s) { return s == Scheme::first_order ? "first_order" : "second_order"; }

Likelihood likelihood_from_string(const std::string& s) {
    if (s == "bernoulli_logit" || s == "bernoulli") return Likelihood::bernoulli_logit;
    if (s == "softmax_mc" || s == "softmax") return Likelihood::softmax_mc;
    throw ValidationError("unknown likelihood '" + s + "'");
}

SigmaMode sigma_mode_from_string(const std::string& s) {
    if (s == "full") return SigmaMode::full;
    if (s == "diag") return SigmaMode::diag;
    throw ValidationError("unknown sigma_mode '" + s + "'");
}

Scheme scheme_from_string(const std::string& s) {
    if (s == "first_order") return Scheme::first_order;
    if (s == "second_order") return Scheme::second_order;
    throw ValidationError("unknown scheme '" + s + "'");
}

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const json& j, const char* what) {
    if (!j.is_array()) throw ValidationError(std::string("model field '") + what + "' must be an array");
    auto v = j.get<std::vector<double>>();
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

const json& field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError(std::string("model is missing field '") + key + "'");
    return *it;
}

}  // namespace

json model_to_json(const GPModel& m) {
    json j;
    j["format"] = "siggpde-model";
    j["version"] = 1;
    j["d"] = m.dim();
    j["channel_names"] = m.channel_names;
    j["augment_time"] = m.augment_time;
    json words = json::array();
    for (const auto& w : m.basis.words) words.push_back(w);
    j["basis"] = {{"include_empty", m.basis.include_empty}, {"words", words}};
    j["theta"] = to_vec(m.theta);
    j["sigma_mode"] = to_string(m.states.empty() ? SigmaMode::full : m.states.front().mode);
    json states = json::array();
    for (const auto& q : m.states) {
        json s;
        s["m"] = to_vec(q.mean);
        if (q.mode == SigmaMode::full) {
            std::vector<double> packed;
            for (Eigen::Index i = 0; i < q.chol.rows(); ++i)
                for (Eigen::Index k = 0; k <= i; ++k) packed.push_back(q.chol(i, k));
            s["L"] = packed;
        } else {
            s["log_scales"] = to_vec(q.chol.diagonal().array().log().matrix());
        }
        states.push_back(s);
    }
    j["states"] = states;
    j["likelihood"] = to_string(m.likelihood);
    j["quad_points"] = m.quad.gh_points;
    j["mc_samples"] = m.quad.mc_samples;
    j["scaler"] = {{"mean", to_vec(m.scaler.mean)}, {"std", to_vec(m.scaler.stddev)}};
    j["solver"] = {{"dyadic_order", m.solver.dyadic_order}, {"scheme", to_string(m.solver.scheme)}};
    j["seed"] = m.seed;
    j["class_names"] = m.class_names;
    j["config"] = m.config;
    return j;
}

GPModel model_from_json(const json& j) {
    try {
        if (field(j, "format") != "siggpde-model") throw ValidationError("not a model file");
        if (field(j, "version").get<int>() != 1) throw ValidationError("unsupported model version");
        GPModel m;
        const int d = field(j, "d").get<int>();
        m.channel_names = field(j, "channel_names").get<std::vector<std::string>>();
        m.augment_time = field(j, "augment_time").get<bool>();
        const json& b = field(j, "basis");
        m.basis = make_basis(d, field(b, "words").get<std::vector<Word>>(), field(b, "include_empty").get<bool>());
        m.theta = from_vec(field(j, "theta"), "theta");
        const SigmaMode mode = sigma_mode_from_string(field(j, "sigma_mode").get<std::string>());
        const int M = m.basis.size();
        for (const auto& s : field(j, "states")) {
            VariationalState q = VariationalState::prior(M, mode);
            q.mean = from_vec(field(s, "m"), "m");
            if (q.mean.size() != M) throw ValidationError("state mean has the wrong length");
            if (mode == SigmaMode::full) {
                const Eigen::VectorXd packed = from_vec(field(s, "L"), "L");
                if (packed.size() != static_cast<Eigen::Index>(M) * (M + 1) / 2)
                    throw ValidationError("packed factor has the wrong length");
                Eigen::Index k = 0;
                for (int i = 0; i < M; ++i)
                    for (int c = 0; c <= i; ++c) q.chol(i, c) = packed(k++);
            } else {
                const Eigen::VectorXd ls = from_vec(field(s, "log_scales"), "log_scales");
                if (ls.size() != M) throw ValidationError("log_scales has the wrong length");
                q.chol.diagonal() = ls.array().exp();
            }
            m.states.push_back(std::move(q));
        }
        m.likelihood = likelihood_from_string(field(j, "likelihood").get<std::string>());
        m.quad.gh_points = field(j, "quad_points").get<int>();
        m.quad.mc_samples = field(j, "mc_samples").get<int>();
        const json& sc = field(j, "scaler");
        m.scaler.mean = from_vec(field(sc, "mean"), "scaler.mean");
        m.scaler.stddev = from_vec(field(sc, "std"), "scaler.std");
        const json& so = field(j, "solver");
        m.solver.dyadic_order = field(so, "dyadic_order").get<int>();
        m.solver.scheme = scheme_from_string(field(so, "scheme").get<std::string>());
        m.seed = field(j, "seed").get<std::uint64_t>();
        m.class_names = field(j, "class_names").get<std::vector<std::string>>();
        if (j.contains("config")) m.config = j["config"];
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const GPModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << model_to_json(model).dump(2) << '\n';
    if (!out) throw Error("failed writing '" + path + "'");
}

GPModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open model '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("model '" + path + "' is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

}  // namespace siggpde
