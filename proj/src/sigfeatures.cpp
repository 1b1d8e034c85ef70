#include "siggpde/sigfeatures.hpp"

#include "siggpde/error.hpp"

#include <map>

namespace siggpde {

int FeatureBasis::max_level() const {
    int n = 0;
    for (const auto& w : words) n = std::max(n, static_cast<int>(w.size()));
    return n;
}

FeatureBasis make_basis(int d, std::vector<Word> words, bool include_empty) {
    if (d < 1) throw ValidationError("basis dimension must be >= 1");
    FeatureBasis b;
    b.d = d;
    b.include_empty = include_empty;
    std::map<Word, int> index;
    for (std::size_t i = 0; i < words.size(); ++i) {
        const Word& w = words[i];
        for (int c : w)
            if (c < 0 || c >= d) throw ValidationError("word letter " + std::to_string(c) + " out of range");
        if (w.empty() && (!include_empty || i != 0))
            throw ValidationError("the empty word may only appear first");
        if (!index.emplace(w, static_cast<int>(i)).second) throw ValidationError("duplicate word " + word_string(w));
        if (i > 0) {
            const Word& prev = words[i - 1];
            if (prev.size() > w.size() || (prev.size() == w.size() && !(prev < w)))
                throw ValidationError("words must be ordered by level then lexicographically");
        }
    }
    if (include_empty && (words.empty() || !words.front().empty()))
        throw ValidationError("basis flagged with the empty word but it is missing");
    b.parent.resize(words.size(), -1);
    for (std::size_t i = 0; i < words.size(); ++i) {
        const Word& w = words[i];
        if (w.size() <= 1) {
            b.parent[i] = (w.size() == 1 && include_empty) ? 0 : -1;
            continue;
        }
        Word prefix(w.begin(), w.end() - 1);
        auto it = index.find(prefix);
        if (it == index.end()) throw ValidationError("basis is not prefix-closed at " + word_string(w));
        b.parent[i] = it->second;
    }
    b.words = std::move(words);
    return b;
}

FeatureBasis enumerate_words(int d, int m, bool include_empty) {
    if (d < 1 || m < 1) throw ValidationError("need d >= 1 and M >= 1");
    std::vector<Word> words;
    if (include_empty) words.push_back({});
    std::vector<Word> level{{}};
    while (static_cast<int>(words.size()) < m) {
        std::vector<Word> next;
        for (const auto& w : level)
            for (int c = 0; c < d; ++c) {
                Word x = w;
                x.push_back(c);
                next.push_back(std::move(x));
            }
        for (const auto& w : next) {
            if (static_cast<int>(words.size()) == m) break;
            words.push_back(w);
        }
        level = std::move(next);
    }
    return make_basis(d, std::move(words), include_empty);
}

std::size_t signature_size(int d, int depth) {
    std::size_t total = 0, p = 1;
    for (int k = 0; k <= depth; ++k) {
        total += p;
        if (k < depth && p > (std::size_t(-1) / 2) / static_cast<std::size_t>(d)) return std::size_t(-1);
        p *= static_cast<std::size_t>(d);
    }
    return total;
}

Signature::Signature(int d, int depth) : d_(d), n_(depth), levels_(static_cast<std::size_t>(depth) + 1) {
    std::size_t p = 1;
    for (int k = 0; k <= depth; ++k) {
        levels_[k].assign(p, 0.0);
        p *= static_cast<std::size_t>(d);
    }
    levels_[0][0] = 1.0;
}

double Signature::operator[](const Word& w) const {
    if (static_cast<int>(w.size()) > n_) throw ValidationError("word " + word_string(w) + " above truncation level");
    std::size_t idx = 0;
    for (int c : w) idx = idx * static_cast<std::size_t>(d_) + static_cast<std::size_t>(c);
    return levels_[w.size()][idx];
}

void Signature::extend(const double* v) {
    if (n_ == 0) return;
    const std::size_t d = static_cast<std::size_t>(d_);
    std::vector<double> acc;
    for (int k = n_; k >= 1; --k) {
        // acc runs through levels 1..k: ((v/k + S1) ⊗ v/(k-1) + S2) ... ⊗ v/1
        acc.assign(v, v + d);
        for (auto& a : acc) a /= k;
        for (int i = 1; i < k; ++i) {
            const auto& old = levels_[i];
            for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += old[j];
            scratch_.resize(acc.size() * d);
            const double inv = 1.0 / (k - i);
            for (std::size_t j = 0; j < acc.size(); ++j) {
                const double a = acc[j] * inv;
                for (std::size_t c = 0; c < d; ++c) scratch_[j * d + c] = a * v[c];
            }
            acc.swap(scratch_);
        }
        auto& lk = levels_[k];
        for (std::size_t j = 0; j < lk.size(); ++j) lk[j] += acc[j];
    }
}

Signature truncated_signature(const Path& x, int depth, std::size_t cap) {
    if (depth < 0) throw ValidationError("truncation level must be >= 0");
    const int d = static_cast<int>(x.dim());
    if (signature_size(d, depth) > cap)
        throw ValidationError("signature of dimension " + std::to_string(d) + " at level " + std::to_string(depth) +
                              " exceeds the coordinate cap " + std::to_string(cap));
    Signature s(d, depth);
    const RowMatrix dx = x.increments();
    for (Eigen::Index i = 0; i < dx.rows(); ++i) s.extend(dx.row(i).data());
    return s;
}

Signature chen_product(const Signature& a, const Signature& b) {
    if (a.dim() != b.dim() || a.depth() != b.depth()) throw ValidationError("signature shapes differ");
    Signature c(a.dim(), a.depth());
    for (int k = 0; k <= a.depth(); ++k) {
        auto& out = c.level(k);
        std::fill(out.begin(), out.end(), 0.0);
        for (int i = 0; i <= k; ++i) {
            const auto& x = a.level(i);
            const auto& y = b.level(k - i);
            for (std::size_t p = 0; p < x.size(); ++p)
                for (std::size_t q = 0; q < y.size(); ++q) out[p * y.size() + q] += x[p] * y[q];
        }
    }
    return c;
}

Eigen::VectorXd signature_coordinates(const Path& x, const FeatureBasis& basis) {
    if (x.dim() != basis.d)
        throw ValidationError("path has " + std::to_string(x.dim()) + " channels, basis expects " +
                              std::to_string(basis.d));
    const int m = basis.size();
    Eigen::VectorXd s = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < m; ++i)
        if (basis.words[i].empty()) s(i) = 1.0;
    const RowMatrix dx = x.increments();
    for (Eigen::Index seg = 0; seg < dx.rows(); ++seg) {
        const double* v = dx.row(seg).data();
        // Prefixes sit at lower indices, so walking down keeps their old values.
        for (int i = m - 1; i >= 0; --i) {
            const int level = static_cast<int>(basis.words[i].size());
            double prod = 1.0, add = 0.0;
            int node = i;
            for (int k = 1; k <= level; ++k) {
                prod *= v[basis.words[node].back()] / k;
                node = basis.parent[node];
                add += (node < 0 ? 1.0 : s(node)) * prod;
            }
            s(i) += add;
        }
    }
    return s;
}

Eigen::VectorXd scale_coordinates(const Eigen::VectorXd& coords, const ScalingVector& theta,
                                  const FeatureBasis& basis) {
    if (theta.size() != basis.d) throw ValidationError("scaling vector length does not match basis dimension");
    Eigen::VectorXd out(coords.size());
    for (int i = 0; i < basis.size(); ++i) {
        double f = 1.0;
        for (int c : basis.words[i]) f *= theta(c);
        out(i) = f * coords(i);
    }
    return out;
}

Eigen::MatrixXd scale_coordinates_grad(const Eigen::VectorXd& coords, const ScalingVector& theta,
                                       const FeatureBasis& basis) {
    if (theta.size() != basis.d) throw ValidationError("scaling vector length does not match basis dimension");
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(basis.size(), basis.d);
    for (int i = 0; i < basis.size(); ++i) {
        const Word& w = basis.words[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            double f = 1.0;
            for (std::size_t j = 0; j < w.size(); ++j)
                if (j != k) f *= theta(w[j]);
            g(i, w[k]) += f * coords(i);
        }
    }
    return g;
}

Eigen::VectorXd features(const Path& x, const ScalingVector& theta, const FeatureBasis& basis) {
    return scale_coordinates(signature_coordinates(x, basis), theta, basis);
}

Eigen::MatrixXd feature_grad_theta(const Path& x, const ScalingVector& theta, const FeatureBasis& basis) {
    return scale_coordinates_grad(signature_coordinates(x, basis), theta, basis);
}

std::string word_string(const Word& w) {
    std::string s = "(";
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(w[i] + 1);
    }
    return s + ")";
}

std::string feature_name(const Word& w, const std::vector<std::string>& names) {
    if (w.empty()) return "const";
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i) s += "→";
        const auto c = static_cast<std::size_t>(w[i]);
        s += c < names.size() ? names[c] : "ch" + std::to_string(c);
    }
    return s;
}

}  // namespace siggpde
