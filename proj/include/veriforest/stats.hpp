#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace veriforest {

// Probability that a random untruthful distance exceeds a random truthful
// one, ties counted 1/2 (Mann-Whitney rank statistic).
inline double auc(const std::vector<double>& truthful, const std::vector<double>& untruthful) {
    if (truthful.empty() || untruthful.empty())
        throw std::invalid_argument("auc: empty input");
    struct Item {
        double v;
        bool untruthful;
    };
    std::vector<Item> pool;
    pool.reserve(truthful.size() + untruthful.size());
    for (double v : truthful) pool.push_back({v, false});
    for (double v : untruthful) pool.push_back({v, true});
    std::sort(pool.begin(), pool.end(), [](const Item& a, const Item& b) { return a.v < b.v; });

    double rankSum = 0.0; // average ranks of the untruthful class, 1-based
    size_t i = 0;
    while (i < pool.size()) {
        size_t j = i;
        while (j < pool.size() && pool[j].v == pool[i].v) ++j;
        double avgRank = 0.5 * static_cast<double>(i + 1 + j); // mean of ranks i+1..j
        for (size_t k = i; k < j; ++k)
            if (pool[k].untruthful) rankSum += avgRank;
        i = j;
    }
    double nu = static_cast<double>(untruthful.size());
    double nt = static_cast<double>(truthful.size());
    double u = rankSum - nu * (nu + 1.0) / 2.0;
    return u / (nu * nt);
}

struct Histogram {
    double lo = 0.0, hi = 0.0;
    std::vector<long> counts;
};

// Fixed-width bins over [lo, hi]; the top edge is inclusive.
inline Histogram histogram(const std::vector<double>& values, int bins, double lo, double hi) {
    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.counts.assign(bins, 0);
    if (values.empty()) return h;
    double width = (hi - lo) / bins;
    for (double v : values) {
        int b = width > 0.0 ? static_cast<int>((v - lo) / width) : 0;
        b = std::clamp(b, 0, bins - 1);
        ++h.counts[b];
    }
    return h;
}

} // namespace veriforest
