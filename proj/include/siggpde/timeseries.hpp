#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace siggpde {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ScalingVector = Eigen::VectorXd;

struct TimeSeries {
    std::string id;
    std::vector<double> timestamps;
    RowMatrix values;  // one row per timestamp

    TimeSeries() = default;
    TimeSeries(std::string id, std::vector<double> timestamps, RowMatrix values);

    Eigen::Index length() const { return values.rows(); }
    Eigen::Index dim() const { return values.cols(); }
};

// Piecewise-linear path through (t_i, x_i). Increments are always derived
// from the knots on demand.
class Path {
public:
    Path() = default;
    Path(std::vector<double> times, RowMatrix knots);
    explicit Path(const TimeSeries& series);

    Eigen::Index knots() const { return x_.rows(); }
    Eigen::Index segments() const { return x_.rows() > 0 ? x_.rows() - 1 : 0; }
    Eigen::Index dim() const { return x_.cols(); }

    const std::vector<double>& times() const { return t_; }
    const RowMatrix& values() const { return x_; }

    // segments() x dim() matrix of x_i - x_{i-1}.
    RowMatrix increments() const;
    Path reversed() const;

private:
    std::vector<double> t_;
    RowMatrix x_;
};

struct Dataset {
    std::vector<TimeSeries> series;
    std::map<std::string, int> labels;
    std::vector<std::string> class_names;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    int label_of(const TimeSeries& s) const;
    void validate() const;
};

struct ScalerState {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;
};

std::vector<TimeSeries> parse_series(std::istream& data);
std::map<std::string, std::string> parse_labels(std::istream& labels);
Dataset make_dataset(std::vector<TimeSeries> series, const std::map<std::string, std::string>& labels);
Dataset parse_dataset(std::istream& data, std::istream& labels);

void write_series(std::ostream& out, const std::vector<TimeSeries>& series);
void write_labels(std::ostream& out, const Dataset& ds);

TimeSeries augment_time(const TimeSeries& series);

ScalerState fit_scaler(const std::vector<TimeSeries>& train);
std::pair<ScalerState, Dataset> standard_scale(const Dataset& train);
TimeSeries apply_scaler(const ScalerState& state, const TimeSeries& series);
Dataset apply_scaler(const ScalerState& state, const Dataset& ds);

Path rescale_path(const Path& path, const ScalingVector& theta);

}  // namespace siggpde
