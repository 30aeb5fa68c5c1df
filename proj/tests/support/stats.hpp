#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mta::test {

// Average ranks (1-based), ties share the mean of their rank block.
inline std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

    std::vector<double> r(x.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && x[idx[j]] == x[idx[i]]) ++j;
        const double shared = 0.5 * double(i + j - 1) + 1.0;
        for (std::size_t k = i; k < j; ++k) r[idx[k]] = shared;
        i = j;
    }
    return r;
}

// Spearman rank correlation: Pearson on average ranks.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("spearman needs two equal-length series, n >= 2");
    const std::vector<double> rx = ranks(x), ry = ranks(y);
    const double n = double(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw std::domain_error("spearman: constant series");
    return sxy / std::sqrt(sxx * syy);
}

} // namespace mta::test
