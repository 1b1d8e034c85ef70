#include "siggpde/cli.hpp"
#include "siggpde/error.hpp"
#include "siggpde/numfmt.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

namespace siggpde {

nlohmann::json metrics_to_json(const MetricsReport& r) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& c : r.per_class) per.push_back({{"class", c.name}, {"support", c.support}, {"correct", c.correct}});
    return {{"accuracy", r.accuracy},
            {"nlpp", r.nlpp},
            {"per_class", per},
            {"seconds", r.seconds},
            {"iterations_per_sec", r.iterations_per_sec}};
}

MetricsReport metrics_from_probabilities(const Eigen::MatrixXd& probs, const std::vector<int>& labels,
                                         const std::vector<std::string>& class_names) {
    const Eigen::Index n = probs.rows();
    if (n == 0) throw ValidationError("cannot evaluate on an empty test set");
    if (static_cast<Eigen::Index>(labels.size()) != n) throw ValidationError("label count does not match predictions");
    MetricsReport r;
    for (const auto& name : class_names) r.per_class.push_back({name, 0, 0});
    double nll = 0.0;
    long correct = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < probs.cols(); ++c)
            if (probs(i, c) > probs(i, best)) best = c;
        const int y = labels[i];
        if (y < 0 || y >= probs.cols()) throw ValidationError("label index out of range");
        auto& pc = r.per_class[static_cast<std::size_t>(y)];
        ++pc.support;
        if (best == y) {
            ++correct;
            ++pc.correct;
        }
        nll -= std::log(std::max(probs(i, y), std::numeric_limits<double>::min()));
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    // -log(1) can round to -0.0
    r.nlpp = std::max(0.0, nll / static_cast<double>(n));
    return r;
}

MetricsReport evaluate_metrics(const GPModel& model, const std::vector<TimeSeries>& series,
                               const std::map<std::string, std::string>& labels) {
    if (series.empty()) throw ValidationError("cannot evaluate on an empty test set");
    std::vector<int> y;
    std::vector<std::string> unknown;
    for (const auto& s : series) {
        auto it = labels.find(s.id);
        if (it == labels.end()) throw ValidationError("missing label for series '" + s.id + "'");
        int idx = -1;
        for (int c = 0; c < model.num_classes(); ++c)
            if (model.class_names[c] == it->second) idx = c;
        if (idx < 0) {
            if (std::find(unknown.begin(), unknown.end(), it->second) == unknown.end()) unknown.push_back(it->second);
            continue;
        }
        y.push_back(idx);
    }
    if (!unknown.empty()) {
        std::string msg = "classes not known to the model:";
        for (const auto& u : unknown) msg += " '" + u + "'";
        throw ValidationError(msg);
    }
    const auto t0 = std::chrono::steady_clock::now();
    const Eigen::MatrixXd p = predict_proba(model, model.prepare(series));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    MetricsReport r = metrics_from_probabilities(p, y, model.class_names);
    r.seconds = secs;
    r.iterations_per_sec = secs > 0 ? static_cast<double>(series.size()) / secs : 0.0;
    return r;
}

MetricsReport evaluate_metrics(const GPModel& model, const Dataset& test) {
    std::map<std::string, std::string> names;
    for (const auto& [id, y] : test.labels) names[id] = test.class_names.at(static_cast<std::size_t>(y));
    return evaluate_metrics(model, test.series, names);
}

void emit_training_plots(const TrainingLog& log, std::ostream& out) {
    out << "iteration,metric,value\n";
    for (const auto& r : log.rows) {
        out << r.iteration << ",elbo," << format_double(r.elbo) << '\n';
        out << r.iteration << ",val_nlpp," << format_double(r.val_nlpp) << '\n';
        out << r.iteration << ",seconds," << format_double(r.seconds) << '\n';
    }
}

void emit_sweep(const std::vector<SweepRow>& rows, std::ostream& out) {
    out << "m_inducing,accuracy,sec_per_iter,elbo\n";
    for (const auto& r : rows)
        out << r.m_inducing << ',' << format_double(r.accuracy) << ',' << format_double(r.sec_per_iter) << ','
            << format_double(r.elbo) << '\n';
}

}  // namespace siggpde
