#pragma once

#include "siggpde/svgp.hpp"

#include <cstdint>

namespace siggpde::detail {

struct PointTerm {
    double value = 0.0;
    Eigen::VectorXd dmean, dvar;  // derivatives of value, one entry per latent
};

// E_q[log p(y|f)] at one input and its derivatives w.r.t. the marginals.
PointTerm expected_log_density_point(const Eigen::VectorXd& mean, const Eigen::VectorXd& var, int label,
                                     Likelihood lik, const QuadConfig& quad, std::uint64_t stream);

Eigen::VectorXd predictive_point(const Eigen::VectorXd& mean, const Eigen::VectorXd& var, Likelihood lik,
                                 const QuadConfig& quad, std::uint64_t stream);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace siggpde::detail
