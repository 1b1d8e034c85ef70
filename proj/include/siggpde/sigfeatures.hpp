#pragma once

#include "siggpde/timeseries.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace siggpde {

// Letters are 0-based channel indices.
using Word = std::vector<int>;

struct FeatureBasis {
    int d = 0;
    bool include_empty = true;
    std::vector<Word> words;
    // Index of each word's prefix (word minus its last letter) in `words`,
    // -1 for the empty word or when the empty word is excluded.
    std::vector<int> parent;

    int size() const { return static_cast<int>(words.size()); }
    int max_level() const;
};

FeatureBasis enumerate_words(int d, int m, bool include_empty = true);
// Rebuilds prefix links for an explicit word list (e.g. read from a model file).
FeatureBasis make_basis(int d, std::vector<Word> words, bool include_empty);

inline constexpr std::size_t kDefaultSignatureCap = 1'000'000;

// Truncated signature stored densely per level; level k holds d^k
// coordinates with the first letter most significant.
class Signature {
public:
    Signature() = default;
    Signature(int d, int depth);

    int dim() const { return d_; }
    int depth() const { return n_; }
    std::vector<double>& level(int k) { return levels_[static_cast<std::size_t>(k)]; }
    const std::vector<double>& level(int k) const { return levels_[static_cast<std::size_t>(k)]; }
    double operator[](const Word& w) const;

    // Multiplies on the right by the signature of one linear segment.
    void extend(const double* v);

private:
    int d_ = 0, n_ = 0;
    std::vector<std::vector<double>> levels_;
    std::vector<double> scratch_;
};

std::size_t signature_size(int d, int depth);

Signature truncated_signature(const Path& x, int depth, std::size_t cap = kDefaultSignatureCap);
// Level-truncated tensor product a ⊗ b.
Signature chen_product(const Signature& a, const Signature& b);

// S(X)^α for every basis word, computed word by word along the path:
// O(segments * M * level) time, no dense levels.
Eigen::VectorXd signature_coordinates(const Path& x, const FeatureBasis& basis);

// Applies the letter scalings to unscaled coordinates.
Eigen::VectorXd scale_coordinates(const Eigen::VectorXd& coords, const ScalingVector& theta,
                                  const FeatureBasis& basis);
// M x d matrix of d/dθ of the scaled coordinates.
Eigen::MatrixXd scale_coordinates_grad(const Eigen::VectorXd& coords, const ScalingVector& theta,
                                       const FeatureBasis& basis);

Eigen::VectorXd features(const Path& x, const ScalingVector& theta, const FeatureBasis& basis);
Eigen::MatrixXd feature_grad_theta(const Path& x, const ScalingVector& theta, const FeatureBasis& basis);

std::string word_string(const Word& w);
std::string feature_name(const Word& w, const std::vector<std::string>& channel_names);

}  // namespace siggpde
