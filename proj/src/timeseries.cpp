#include "siggpde/timeseries.hpp"

#include "siggpde/error.hpp"
#include "siggpde/numfmt.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace siggpde {

namespace {

void check_times(const std::vector<double>& t, const std::string& what) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i]))
            throw ValidationError(what + ": non-finite timestamp");
        if (i > 0 && !(t[i] > t[i - 1]))
            throw ValidationError(what + ": timestamps must be strictly increasing");
    }
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

bool next_line(std::istream& in, std::string& line, long& row) {
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) return true;
    }
    return false;
}

std::string strip_bom(std::string s) {
    if (s.size() >= 3 && s.compare(0, 3, "\xEF\xBB\xBF") == 0) s.erase(0, 3);
    return s;
}

}  // namespace

TimeSeries::TimeSeries(std::string id_, std::vector<double> ts, RowMatrix v)
    : id(std::move(id_)), timestamps(std::move(ts)), values(std::move(v)) {
    if (timestamps.empty()) throw ValidationError("series '" + id + "' is empty");
    if (static_cast<Eigen::Index>(timestamps.size()) != values.rows())
        throw ValidationError("series '" + id + "': timestamp/value count mismatch");
    if (values.cols() < 1) throw ValidationError("series '" + id + "' has no channels");
    check_times(timestamps, "series '" + id + "'");
}

Path::Path(std::vector<double> times, RowMatrix knots) : t_(std::move(times)), x_(std::move(knots)) {
    if (t_.empty()) throw ValidationError("path needs at least one knot");
    if (static_cast<Eigen::Index>(t_.size()) != x_.rows())
        throw ValidationError("path: knot time/value count mismatch");
    check_times(t_, "path");
}

Path::Path(const TimeSeries& s) : Path(s.timestamps, s.values) {}

RowMatrix Path::increments() const {
    const Eigen::Index n = segments();
    RowMatrix d(n, dim());
    for (Eigen::Index i = 0; i < n; ++i) d.row(i) = x_.row(i + 1) - x_.row(i);
    return d;
}

Path Path::reversed() const {
    const Eigen::Index n = knots();
    std::vector<double> t(n);
    RowMatrix x(n, dim());
    const double t0 = t_.front(), t1 = t_.back();
    for (Eigen::Index i = 0; i < n; ++i) {
        t[i] = t0 + (t1 - t_[n - 1 - i]);
        x.row(i) = x_.row(n - 1 - i);
    }
    // Rounding in the reflected times can break strict monotonicity for very
    // close knots; fall back to the knot index then.
    for (Eigen::Index i = 1; i < n; ++i)
        if (!(t[i] > t[i - 1])) {
            for (Eigen::Index k = 0; k < n; ++k) t[k] = static_cast<double>(k);
            break;
        }
    return Path(std::move(t), std::move(x));
}

int Dataset::label_of(const TimeSeries& s) const {
    auto it = labels.find(s.id);
    if (it == labels.end()) throw ValidationError("missing label for series '" + s.id + "'");
    return it->second;
}

void Dataset::validate() const {
    if (class_names.size() < 2) throw ValidationError("dataset needs at least 2 classes");
    Eigen::Index d = -1;
    for (const auto& s : series) {
        const int y = label_of(s);
        if (y < 0 || y >= num_classes()) throw ValidationError("label out of range for '" + s.id + "'");
        if (d >= 0 && s.dim() != d) throw ValidationError("series '" + s.id + "' has a different channel count");
        d = s.dim();
    }
}

std::vector<TimeSeries> parse_series(std::istream& in) {
    std::string line;
    long row = 0;
    if (!next_line(in, line, row)) throw ParseError("empty data file", -1);
    auto header = split_csv(strip_bom(line));
    if (header.size() < 3 || header[0] != "series_id" || header[1] != "t")
        throw ParseError("data header must be series_id,t,ch0,...", row);
    const std::size_t d = header.size() - 2;
    for (std::size_t k = 0; k < d; ++k)
        if (header[k + 2] != "ch" + std::to_string(k))
            throw ParseError("expected column 'ch" + std::to_string(k) + "', got '" + header[k + 2] + "'", row);

    std::vector<TimeSeries> out;
    std::set<std::string> seen;
    std::string cur_id;
    std::vector<double> ts;
    std::vector<double> vals;

    auto flush = [&]() {
        if (ts.empty()) return;
        RowMatrix v(static_cast<Eigen::Index>(ts.size()), static_cast<Eigen::Index>(d));
        for (Eigen::Index i = 0; i < v.rows(); ++i)
            for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = vals[i * d + j];
        out.emplace_back(cur_id, std::move(ts), std::move(v));
        ts.clear();
        vals.clear();
    };

    while (next_line(in, line, row)) {
        auto f = split_csv(line);
        if (f.size() != d + 2)
            throw ParseError("expected " + std::to_string(d + 2) + " fields, got " + std::to_string(f.size()), row);
        const std::string& id = f[0];
        if (id.empty()) throw ParseError("empty series_id", row);
        double t;
        if (!parse_double(f[1], t) || !std::isfinite(t)) throw ParseError("bad timestamp '" + f[1] + "'", row);
        if (id != cur_id || ts.empty()) {
            if (!ts.empty() || !cur_id.empty()) flush();
            if (!seen.insert(id).second)
                throw ParseError("rows of series '" + id + "' are not contiguous", row);
            cur_id = id;
        } else if (t == ts.back()) {
            throw ParseError("duplicate timestamp in series '" + id + "'", row);
        } else if (t < ts.back()) {
            throw ParseError("non-increasing timestamp in series '" + id + "'", row);
        }
        ts.push_back(t);
        for (std::size_t k = 0; k < d; ++k) {
            double v;
            if (!parse_double(f[k + 2], v) || !std::isfinite(v))
                throw ParseError("bad value '" + f[k + 2] + "' in series '" + id + "'", row);
            vals.push_back(v);
        }
    }
    flush();
    return out;
}

std::map<std::string, std::string> parse_labels(std::istream& in) {
    std::string line;
    long row = 0;
    if (!next_line(in, line, row)) throw ParseError("empty labels file", -1);
    auto header = split_csv(strip_bom(line));
    if (header.size() != 2 || header[0] != "series_id" || header[1] != "label")
        throw ParseError("labels header must be series_id,label", row);
    std::map<std::string, std::string> out;
    while (next_line(in, line, row)) {
        auto f = split_csv(line);
        if (f.size() != 2) throw ParseError("expected 2 fields", row);
        if (f[0].empty() || f[1].empty()) throw ParseError("empty id or label", row);
        if (!out.emplace(f[0], f[1]).second) throw ParseError("duplicate label for series '" + f[0] + "'", row);
    }
    return out;
}

Dataset make_dataset(std::vector<TimeSeries> series, const std::map<std::string, std::string>& labels) {
    Dataset ds;
    // Classes come from the whole label file so that splits sharing one file
    // agree on class indices.
    std::set<std::string> names;
    for (const auto& [id, name] : labels) names.insert(name);
    for (const auto& s : series)
        if (!labels.count(s.id)) throw ValidationError("missing label for series '" + s.id + "'");
    ds.class_names.assign(names.begin(), names.end());
    for (const auto& s : series) {
        const auto& name = labels.at(s.id);
        ds.labels[s.id] = static_cast<int>(
            std::lower_bound(ds.class_names.begin(), ds.class_names.end(), name) - ds.class_names.begin());
    }
    ds.series = std::move(series);
    ds.validate();
    return ds;
}

Dataset parse_dataset(std::istream& data, std::istream& labels) {
    auto series = parse_series(data);
    auto lab = parse_labels(labels);
    return make_dataset(std::move(series), lab);
}

void write_series(std::ostream& out, const std::vector<TimeSeries>& series) {
    if (series.empty()) throw ValidationError("nothing to write");
    const Eigen::Index d = series.front().dim();
    out << "series_id,t";
    for (Eigen::Index k = 0; k < d; ++k) out << ",ch" << k;
    out << '\n';
    for (const auto& s : series) {
        if (s.dim() != d) throw ValidationError("ragged channel count in '" + s.id + "'");
        for (Eigen::Index i = 0; i < s.length(); ++i) {
            out << s.id << ',' << format_double(s.timestamps[i]);
            for (Eigen::Index k = 0; k < d; ++k) out << ',' << format_double(s.values(i, k));
            out << '\n';
        }
    }
}

void write_labels(std::ostream& out, const Dataset& ds) {
    out << "series_id,label\n";
    for (const auto& s : ds.series) out << s.id << ',' << ds.class_names.at(ds.label_of(s)) << '\n';
}

TimeSeries augment_time(const TimeSeries& s) {
    const Eigen::Index n = s.length();
    RowMatrix v(n, s.dim() + 1);
    const double t0 = s.timestamps.front(), span = s.timestamps.back() - t0;
    for (Eigen::Index i = 0; i < n; ++i) {
        v(i, 0) = n == 1 ? 0.0 : (s.timestamps[i] - t0) / span;
        v.row(i).tail(s.dim()) = s.values.row(i);
    }
    if (n > 1) v(n - 1, 0) = 1.0;
    return TimeSeries(s.id, s.timestamps, std::move(v));
}

ScalerState fit_scaler(const std::vector<TimeSeries>& train) {
    if (train.empty()) throw ValidationError("cannot fit a scaler on no series");
    const Eigen::Index d = train.front().dim();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
    double count = 0;
    for (const auto& s : train) {
        if (s.dim() != d) throw ValidationError("ragged channel count in '" + s.id + "'");
        sum += s.values.colwise().sum().transpose();
        count += static_cast<double>(s.length());
    }
    ScalerState st;
    st.mean = sum / count;
    // second pass removes most of the rounding in the first
    Eigen::VectorXd resid = Eigen::VectorXd::Zero(d);
    for (const auto& s : train) resid += (s.values.rowwise() - st.mean.transpose()).colwise().sum().transpose();
    st.mean += resid / count;
    Eigen::VectorXd ss = Eigen::VectorXd::Zero(d);
    for (const auto& s : train)
        ss += (s.values.rowwise() - st.mean.transpose()).array().square().matrix().colwise().sum().transpose();
    st.stddev = (ss / count).array().sqrt();
    return st;
}

TimeSeries apply_scaler(const ScalerState& st, const TimeSeries& s) {
    if (st.mean.size() != s.dim() || st.stddev.size() != s.dim())
        throw ValidationError("scaler has " + std::to_string(st.mean.size()) + " channels, series '" + s.id +
                              "' has " + std::to_string(s.dim()));
    RowMatrix v(s.length(), s.dim());
    for (Eigen::Index j = 0; j < s.dim(); ++j) {
        const double sd = st.stddev(j);
        for (Eigen::Index i = 0; i < s.length(); ++i)
            v(i, j) = sd > 0 ? (s.values(i, j) - st.mean(j)) / sd : 0.0;
    }
    return TimeSeries(s.id, s.timestamps, std::move(v));
}

Dataset apply_scaler(const ScalerState& st, const Dataset& ds) {
    Dataset out;
    out.labels = ds.labels;
    out.class_names = ds.class_names;
    out.series.reserve(ds.series.size());
    for (const auto& s : ds.series) out.series.push_back(apply_scaler(st, s));
    return out;
}

std::pair<ScalerState, Dataset> standard_scale(const Dataset& train) {
    auto st = fit_scaler(train.series);
    return {st, apply_scaler(st, train)};
}

Path rescale_path(const Path& p, const ScalingVector& theta) {
    if (theta.size() != p.dim())
        throw ValidationError("scaling vector has length " + std::to_string(theta.size()) + ", path has " +
                              std::to_string(p.dim()) + " channels");
    if (!theta.allFinite()) throw ValidationError("scaling vector has non-finite entries");
    RowMatrix x = p.values() * theta.asDiagonal();
    return Path(p.times(), std::move(x));
}

}  // namespace siggpde
