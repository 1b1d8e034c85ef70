#include "siggpde/cli.hpp"
#include "siggpde/error.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace siggpde {

using nlohmann::json;

void RunConfig::validate() const { to_train_config().validate(); }

SolverOptions RunConfig::solver() const {
    SolverOptions o;
    o.dyadic_order = dyadic_order;
    o.scheme = scheme;
    return o;
}

TrainConfig RunConfig::to_train_config() const {
    TrainConfig t;
    t.m_inducing = m_inducing;
    t.solver = solver();
    t.learning_rate = learning_rate;
    t.batch_size = batch_size;
    t.iterations = iterations;
    t.phase_fractions = phase_fractions;
    if (likelihood != "auto") t.likelihood = likelihood_from_string(likelihood);
    t.quad.gh_points = quad_points;
    t.quad.mc_samples = mc_samples;
    t.validation_fraction = validation_fraction;
    t.theta_init = theta_init;
    t.sigma_mode = sigma_mode;
    t.include_empty_word = include_empty_word;
    t.eval_interval = eval_interval;
    t.nesterov = nesterov;
    return t;
}

json config_to_json(const RunConfig& c) {
    return {{"m_inducing", c.m_inducing},
            {"dyadic_order", c.dyadic_order},
            {"scheme", to_string(c.scheme)},
            {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"iterations", c.iterations},
            {"phase_fractions", c.phase_fractions},
            {"likelihood", c.likelihood},
            {"quad_points", c.quad_points},
            {"mc_samples", c.mc_samples},
            {"seed", c.seed},
            {"validation_fraction", c.validation_fraction},
            {"theta_init", c.theta_init},
            {"sigma_mode", to_string(c.sigma_mode)},
            {"include_empty_word", c.include_empty_word},
            {"eval_interval", c.eval_interval},
            {"nesterov", c.nesterov}};
}

RunConfig config_from_json(const json& j, RunConfig c) {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    static const std::set<std::string> known{"m_inducing",    "dyadic_order", "scheme",       "learning_rate",
                                             "batch_size",    "iterations",   "phase_fractions", "likelihood",
                                             "quad_points",   "mc_samples",   "seed",         "validation_fraction",
                                             "theta_init",    "sigma_mode",   "include_empty_word", "eval_interval",
                                             "nesterov"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw ValidationError("unknown config key '" + k + "'");
    try {
        if (j.contains("m_inducing")) c.m_inducing = j["m_inducing"].get<int>();
        if (j.contains("dyadic_order")) c.dyadic_order = j["dyadic_order"].get<int>();
        if (j.contains("scheme")) c.scheme = scheme_from_string(j["scheme"].get<std::string>());
        if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
        if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
        if (j.contains("iterations")) c.iterations = j["iterations"].get<int>();
        if (j.contains("phase_fractions")) c.phase_fractions = j["phase_fractions"].get<std::array<double, 3>>();
        if (j.contains("likelihood")) {
            c.likelihood = j["likelihood"].get<std::string>();
            if (c.likelihood != "auto") c.likelihood = to_string(likelihood_from_string(c.likelihood));
        }
        if (j.contains("quad_points")) c.quad_points = j["quad_points"].get<int>();
        if (j.contains("mc_samples")) c.mc_samples = j["mc_samples"].get<int>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("validation_fraction")) c.validation_fraction = j["validation_fraction"].get<double>();
        if (j.contains("theta_init")) c.theta_init = j["theta_init"].get<double>();
        if (j.contains("sigma_mode")) c.sigma_mode = sigma_mode_from_string(j["sigma_mode"].get<std::string>());
        if (j.contains("include_empty_word")) c.include_empty_word = j["include_empty_word"].get<bool>();
        if (j.contains("eval_interval")) c.eval_interval = j["eval_interval"].get<int>();
        if (j.contains("nesterov")) c.nesterov = j["nesterov"].get<bool>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

}  // namespace siggpde
