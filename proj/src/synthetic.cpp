#include "siggpde/error.hpp"
#include "siggpde/svgp.hpp"

#include <cmath>
#include <cstdio>
#include <random>

namespace siggpde {

Dataset make_levy_area_dataset(int n, std::uint64_t seed, int min_knots, int max_knots, const std::string& prefix) {
    if (n < 2) throw ValidationError("need at least two series");
    if (min_knots < 3 || max_knots < min_knots) throw ValidationError("bad knot range");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.02);
    std::uniform_int_distribution<int> knots(min_knots, max_knots);

    Dataset ds;
    ds.class_names = {"ccw", "cw"};
    const int width = static_cast<int>(std::to_string(n - 1).size());
    for (int i = 0; i < n; ++i) {
        // alternate classes so both are always present
        const int cls = i % 2;
        const double orient = cls == 0 ? 1.0 : -1.0;
        const int k = knots(rng);
        const double rx = 0.5 + unif(rng), ry = 0.5 + unif(rng);
        const double phase = 2.0 * M_PI * unif(rng);
        // wide centre spread keeps standardised loops small
        const double cx = 6.0 * unif(rng) - 3.0, cy = 6.0 * unif(rng) - 3.0;
        std::vector<double> t(k);
        RowMatrix v(k, 2);
        double clock = 0.0;
        for (int j = 0; j < k; ++j) {
            clock += 0.5 + unif(rng);
            t[j] = clock;
        }
        for (int j = 0; j < k; ++j) {
            const double u = (t[j] - t.front()) / (t.back() - t.front());
            const double a = phase + orient * 2.0 * M_PI * u;
            v(j, 0) = cx + rx * std::cos(a) + noise(rng);
            v(j, 1) = cy + ry * std::sin(a) + noise(rng);
        }
        char id[32];
        std::snprintf(id, sizeof id, "%0*d", width, i);
        ds.series.emplace_back(prefix + id, std::move(t), std::move(v));
        ds.labels[ds.series.back().id] = cls;
    }
    ds.validate();
    return ds;
}

}  // namespace siggpde
