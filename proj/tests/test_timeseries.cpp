#include "siggpde/error.hpp"
#include "siggpde/timeseries.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace siggpde;

namespace {

Dataset parse(const std::string& data, const std::string& labels) {
    std::istringstream d(data), l(labels);
    return parse_dataset(d, l);
}

std::string parse_error(const std::string& data) {
    std::istringstream d(data);
    try {
        parse_series(d);
    } catch (const ParseError& e) {
        return e.what();
    }
    return "";
}

TimeSeries one_channel(std::vector<double> t, std::vector<double> v) {
    RowMatrix m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
    return TimeSeries("x", std::move(t), m);
}

}  // namespace

TEST(Parse, MinimalSeries) {
    const Dataset ds = parse("series_id,t,ch0\na,0,1.5\na,1,2.5\n", "series_id,label\na,up\nb,down\n");
    ASSERT_EQ(ds.series.size(), 1u);
    EXPECT_EQ(ds.series[0].length(), 2);
    EXPECT_EQ(ds.series[0].dim(), 1);
    EXPECT_DOUBLE_EQ(ds.series[0].values(1, 0), 2.5);
}

TEST(Parse, ClassIndicesSorted) {
    const Dataset ds = parse("series_id,t,ch0\na,0,1\nb,0,2\n", "series_id,label\na,rain\nb,dry\n");
    ASSERT_EQ(ds.class_names.size(), 2u);
    EXPECT_EQ(ds.class_names[0], "dry");
    EXPECT_EQ(ds.class_names[1], "rain");
    EXPECT_EQ(ds.labels.at("a"), 1);
    EXPECT_EQ(ds.labels.at("b"), 0);
}

TEST(Parse, DuplicateTimestampNamesSeries) {
    const std::string msg = parse_error("series_id,t,ch0\na,0,1\na,0,2\n");
    EXPECT_NE(msg.find("'a'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
}

TEST(Parse, DecreasingTimestamp) {
    const std::string msg = parse_error("series_id,t,ch0\nb,1,1\nb,0.5,2\n");
    EXPECT_NE(msg.find("non-increasing"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'b'"), std::string::npos) << msg;
}

TEST(Parse, RaggedRow) {
    const std::string msg = parse_error("series_id,t,ch0,ch1\na,0,1,2\na,1,3\n");
    EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
}

TEST(Parse, BadHeaderAndNumbers) {
    EXPECT_THROW(
        {
            std::istringstream d("id,t,ch0\na,0,1\n");
            parse_series(d);
        },
        ValidationError);
    EXPECT_FALSE(parse_error("series_id,t,ch0\na,0,abc\n").empty());
}

TEST(Parse, MissingLabel) {
    EXPECT_THROW(parse("series_id,t,ch0\na,0,1\nb,0,2\n", "series_id,label\na,x\nc,y\n"), ValidationError);
}

TEST(Parse, SingleClassRejected) {
    EXPECT_THROW(parse("series_id,t,ch0\na,0,1\nb,0,2\n", "series_id,label\na,x\nb,x\n"), ValidationError);
}

TEST(Parse, CrlfAndBom) {
    const Dataset ds =
        parse("\xEF\xBB\xBFseries_id,t,ch0\r\na,0,1\r\na,1,2\r\nb,0,3\r\n", "series_id,label\r\na,p\r\nb,q\r\n");
    EXPECT_EQ(ds.series.size(), 2u);
    EXPECT_EQ(ds.series[1].id, "b");
}

TEST(Parse, RoundTripIsIdentical) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n01;
    std::vector<TimeSeries> series;
    std::map<std::string, std::string> names;
    for (int i = 0; i < 6; ++i) {
        const int len = 1 + i;
        std::vector<double> t(len);
        RowMatrix v(len, 3);
        double clock = n01(rng);
        for (int k = 0; k < len; ++k) {
            clock += std::exp(n01(rng));
            t[k] = clock;
            for (int c = 0; c < 3; ++c) v(k, c) = n01(rng) * std::pow(10.0, k - 3);
        }
        series.emplace_back("id" + std::to_string(i), t, v);
        names[series.back().id] = i % 3 == 0 ? "a" : "b";
    }
    const Dataset ds = make_dataset(series, names);
    std::ostringstream d1, l1;
    write_series(d1, ds.series);
    write_labels(l1, ds);
    const Dataset back = parse(d1.str(), l1.str());
    ASSERT_EQ(back.series.size(), ds.series.size());
    for (std::size_t i = 0; i < ds.series.size(); ++i) {
        EXPECT_EQ(back.series[i].id, ds.series[i].id);
        EXPECT_EQ(back.series[i].timestamps, ds.series[i].timestamps);
        EXPECT_TRUE(back.series[i].values == ds.series[i].values);
    }
    EXPECT_EQ(back.labels, ds.labels);
    EXPECT_EQ(back.class_names, ds.class_names);
    std::ostringstream d2, l2;
    write_series(d2, back.series);
    write_labels(l2, back);
    EXPECT_EQ(d1.str(), d2.str());
    EXPECT_EQ(l1.str(), l2.str());
}

TEST(AugmentTime, AffineNormalisation) {
    const TimeSeries a = augment_time(one_channel({0, 5, 10}, {3, 4, 5}));
    ASSERT_EQ(a.dim(), 2);
    EXPECT_EQ(a.values(0, 0), 0.0);
    EXPECT_EQ(a.values(1, 0), 0.5);
    EXPECT_EQ(a.values(2, 0), 1.0);
    EXPECT_EQ(a.values(2, 1), 5.0);

    const TimeSeries b = augment_time(one_channel({2, 3}, {1, 1}));
    EXPECT_EQ(b.values(0, 0), 0.0);
    EXPECT_EQ(b.values(1, 0), 1.0);

    const TimeSeries c = augment_time(one_channel({4}, {9}));
    EXPECT_EQ(c.values(0, 0), 0.0);
    EXPECT_EQ(c.values(0, 1), 9.0);
}

TEST(AugmentTime, PreservesChannelsBitExactly) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    RowMatrix v(9, 3);
    std::vector<double> t(9);
    for (int k = 0; k < 9; ++k) {
        t[k] = 0.37 * k * k + 1e-3;
        for (int c = 0; c < 3; ++c) v(k, c) = n01(rng);
    }
    const TimeSeries a = augment_time(TimeSeries("x", t, v));
    EXPECT_TRUE(a.values.rightCols(3) == v);
    EXPECT_EQ(a.values(8, 0), 1.0);
}

TEST(Scaler, PopulationStatistics) {
    Dataset ds;
    ds.class_names = {"a", "b"};
    ds.series.push_back(one_channel({0, 1, 2}, {1, 2, 3}));
    ds.labels["x"] = 0;
    const auto [state, scaled] = standard_scale(ds);
    EXPECT_DOUBLE_EQ(state.mean(0), 2.0);
    EXPECT_NEAR(state.stddev(0), 0.81649658092772603, 1e-15);
    EXPECT_NEAR(scaled.series[0].values(0, 0), -1.2247448713915890, 1e-12);
    EXPECT_EQ(scaled.series[0].values(1, 0), 0.0);
    EXPECT_NEAR(scaled.series[0].values(2, 0), 1.2247448713915890, 1e-12);
}

TEST(Scaler, ConstantChannelMapsToZero) {
    const std::vector<TimeSeries> s{one_channel({0, 1}, {5, 5})};
    const ScalerState st = fit_scaler(s);
    EXPECT_EQ(st.stddev(0), 0.0);
    const TimeSeries out = apply_scaler(st, s[0]);
    EXPECT_EQ(out.values(0, 0), 0.0);
    EXPECT_EQ(out.values(1, 0), 0.0);
}

TEST(Scaler, IdentityStateAndMismatch) {
    ScalerState id{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)};
    const TimeSeries s = one_channel({0, 1, 2}, {0.1, -7, 3e5});
    EXPECT_TRUE(apply_scaler(id, s).values == s.values);
    ScalerState two{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)};
    EXPECT_THROW(apply_scaler(two, s), ValidationError);
}

TEST(Scaler, PooledMomentsAreStandard) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n01;
    std::vector<TimeSeries> s;
    for (int i = 0; i < 5; ++i) {
        const int len = 2 + i * 3;
        std::vector<double> t(len);
        RowMatrix v(len, 2);
        for (int k = 0; k < len; ++k) {
            t[k] = k;
            v(k, 0) = 4.0 + 3.0 * n01(rng);
            // mean/std ~ 100: the rounding of the mean itself stays below 1e-12 after scaling
            v(k, 1) = -50.0 + 0.5 * n01(rng);
        }
        s.emplace_back("s" + std::to_string(i), t, v);
    }
    const ScalerState st = fit_scaler(s);
    Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
    double n = 0;
    for (const auto& x : s) {
        const TimeSeries y = apply_scaler(st, x);
        for (Eigen::Index k = 0; k < y.length(); ++k) {
            sum += y.values.row(k).transpose();
            sq += y.values.row(k).transpose().cwiseAbs2();
            n += 1;
        }
    }
    for (int c = 0; c < 2; ++c) {
        EXPECT_NEAR(sum(c) / n, 0.0, 1e-12);
        EXPECT_NEAR(std::sqrt(sq(c) / n - (sum(c) / n) * (sum(c) / n)), 1.0, 1e-12);
    }
}

TEST(PathTest, IncrementsAndReversal) {
    RowMatrix k(3, 2);
    k << 0, 0, 1, 2, 3, 1;
    const Path p({0.0, 0.5, 2.0}, k);
    const RowMatrix inc = p.increments();
    EXPECT_EQ(inc(0, 1), 2.0);
    EXPECT_EQ(inc(1, 0), 2.0);
    const Path r = p.reversed();
    EXPECT_TRUE(r.values().row(0) == k.row(2));
    EXPECT_TRUE(r.values().row(2) == k.row(0));
    for (std::size_t i = 1; i < r.times().size(); ++i) EXPECT_LT(r.times()[i - 1], r.times()[i]);
}

TEST(PathTest, RejectsBadKnots) {
    RowMatrix k(2, 1);
    k << 0, 1;
    EXPECT_THROW(Path({1.0, 1.0}, k), ValidationError);
    EXPECT_THROW(Path({0.0}, k), ValidationError);
}

TEST(Rescale, Examples) {
    RowMatrix k(2, 2);
    k << 0.5, -1, 2, 3;
    const Path p({0.0, 1.0}, k);
    EXPECT_TRUE(rescale_path(p, Eigen::Vector2d(1, 1)).values() == k);
    const Path z = rescale_path(p, Eigen::Vector2d(0, 0));
    EXPECT_TRUE(z.increments().isZero(0));
    const Path s = rescale_path(p, Eigen::Vector2d(2, 1));
    EXPECT_EQ(s.values()(0, 0), 1.0);
    EXPECT_EQ(s.values()(0, 1), -1.0);
    EXPECT_EQ(s.times(), p.times());
    EXPECT_THROW(rescale_path(p, Eigen::Vector3d(1, 1, 1)), ValidationError);
}

TEST(Rescale, ComposesComponentwise) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 20; ++trial) {
        RowMatrix k(6, 3);
        for (Eigen::Index i = 0; i < k.size(); ++i) k(i) = n01(rng);
        const Path p({0, 1, 2, 3, 4, 5}, k);
        // powers of two keep both sides exact
        Eigen::Vector3d a, b;
        for (int c = 0; c < 3; ++c) {
            a(c) = std::ldexp(1.0, static_cast<int>(rng() % 7) - 3);
            b(c) = std::ldexp(1.0, static_cast<int>(rng() % 7) - 3);
        }
        EXPECT_TRUE(rescale_path(rescale_path(p, a), b).values() == rescale_path(p, a.cwiseProduct(b)).values());
    }
}
