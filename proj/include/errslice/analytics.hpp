#pragma once

// Token statistics of a slice against the whole dataset, a deterministic 2-D
// PCA projection, and proportional downsampling for the scatter view.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errslice/core.hpp"
#include "errslice/rng.hpp"
#include "errslice/text.hpp"

namespace errslice {

struct TokenStat {
    std::string token;
    std::size_t slice_count = 0;
    std::size_t overall_count = 0;
    double slice_freq = 0.0;
    double overall_freq = 0.0;
    double ratio = 0.0;
    bool floored = false;  // token absent from the reference corpus
};

namespace detail {

inline std::map<std::string, std::size_t> count_tokens(const std::vector<std::string>& texts, std::size_t& total) {
    std::map<std::string, std::size_t> counts;
    total = 0;
    for (const auto& t : texts)
        for (auto& tok : text::word_tokens(t)) {
            ++counts[tok];
            ++total;
        }
    return counts;
}

} // namespace detail

/// Token frequencies in `slice_texts` relative to `overall_texts`. Missing
/// reference tokens are floored to one occurrence and flagged. Sorted by
/// ratio, then slice frequency, then token.
inline std::vector<TokenStat> token_stats(const std::vector<std::string>& slice_texts,
                                          const std::vector<std::string>& overall_texts, std::size_t top_n) {
    std::size_t slice_total = 0, overall_total = 0;
    const auto slice_counts = detail::count_tokens(slice_texts, slice_total);
    const auto overall_counts = detail::count_tokens(overall_texts, overall_total);
    std::vector<TokenStat> rows;
    if (slice_total == 0) return rows;
    const double overall_denominator = static_cast<double>(std::max<std::size_t>(overall_total, 1));
    for (const auto& [tok, count] : slice_counts) {
        TokenStat s;
        s.token = tok;
        s.slice_count = count;
        const auto it = overall_counts.find(tok);
        s.overall_count = it == overall_counts.end() ? 0 : it->second;
        s.floored = s.overall_count == 0;
        s.slice_freq = static_cast<double>(count) / static_cast<double>(slice_total);
        s.overall_freq = static_cast<double>(std::max<std::size_t>(s.overall_count, 1)) / overall_denominator;
        s.ratio = s.slice_freq / s.overall_freq;
        rows.push_back(std::move(s));
    }
    std::sort(rows.begin(), rows.end(), [](const TokenStat& a, const TokenStat& b) {
        if (a.ratio != b.ratio) return a.ratio > b.ratio;
        if (a.slice_freq != b.slice_freq) return a.slice_freq > b.slice_freq;
        return a.token < b.token;
    });
    if (rows.size() > top_n) rows.resize(top_n);
    return rows;
}

inline std::vector<TokenStat> token_stats(const Dataset& d, const EvalSlice& slice, std::size_t top_n) {
    if (slice.members.empty()) throw InvalidArgument("token statistics need a non-empty slice");
    std::vector<std::string> in, all;
    in.reserve(slice.size());
    all.reserve(d.size());
    for (std::size_t i : slice.members) in.push_back(d.records.at(i).text);
    for (const auto& r : d.records) all.push_back(r.text);
    return token_stats(in, all, top_n);
}

struct Projection {
    PointSet coords;                      // n x 2
    std::vector<std::vector<double>> components;  // two unit loading vectors of dimension d
    std::vector<double> eigenvalues;      // all covariance eigenvalues, descending
    double total_variance = 0.0;          // trace of the covariance
    bool degenerate = false;              // all points identical
};

/// Mean-centred projection onto the top-2 principal axes. Each axis is
/// oriented so that its largest-magnitude loading is positive.
inline Projection pca_project(const PointSet& points) {
    const std::size_t n = points.size();
    const std::size_t d = points.dim();
    if (n < 2) throw InvalidArgument("projection needs at least two points");

    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = points[i][j];
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);

    Projection p;
    p.coords = PointSet(n, 2);
    p.total_variance = cov.trace();
    if (x.cwiseAbs().maxCoeff() == 0.0) {
        p.degenerate = true;
        p.eigenvalues.assign(d, 0.0);
        for (std::size_t c = 0; c < std::min<std::size_t>(2, d); ++c) {
            std::vector<double> e(d, 0.0);
            e[c] = 1.0;
            p.components.push_back(std::move(e));
        }
        return p;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    const Eigen::VectorXd& vals = solver.eigenvalues();  // ascending
    const Eigen::MatrixXd& vecs = solver.eigenvectors();
    for (Eigen::Index i = vals.size() - 1; i >= 0; --i) p.eigenvalues.push_back(vals(i));

    const std::size_t used = std::min<std::size_t>(2, d);
    for (std::size_t c = 0; c < used; ++c) {
        Eigen::VectorXd v = vecs.col(vals.size() - 1 - static_cast<Eigen::Index>(c));
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        p.components.emplace_back(v.data(), v.data() + v.size());
        const Eigen::VectorXd proj = x * v;
        for (std::size_t i = 0; i < n; ++i) p.coords.row(i)[c] = proj(static_cast<Eigen::Index>(i));
    }
    return p;
}

struct ViewGroup {
    std::string id;
    std::vector<std::size_t> members;
};

/// Per-group sample sizes: floor-proportional quotas with largest-remainder
/// rounding (ties to the lower group index), then every non-empty group is
/// lifted to at least one member at the expense of the largest quotas.
inline std::vector<std::size_t> downsample_quotas(const std::vector<std::size_t>& sizes, std::size_t cap) {
    const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    if (total <= cap) return sizes;
    const std::size_t nonempty = static_cast<std::size_t>(std::count_if(sizes.begin(), sizes.end(), [](auto s) { return s > 0; }));
    if (cap < nonempty) throw InvalidArgument("cap is smaller than the number of groups");

    const std::size_t g = sizes.size();
    std::vector<std::size_t> quota(g);
    std::vector<std::uint64_t> remainder(g);  // exact: (cap * size) mod total
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < g; ++i) {
        const unsigned __int128 prod = static_cast<unsigned __int128>(cap) * sizes[i];
        quota[i] = static_cast<std::size_t>(prod / total);
        remainder[i] = static_cast<std::uint64_t>(prod % total);
        assigned += quota[i];
    }
    std::vector<std::size_t> order(g);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
    for (std::size_t r = 0; assigned < cap; ++r, ++assigned) ++quota[order[r % g]];

    for (std::size_t i = 0; i < g; ++i) {
        if (sizes[i] == 0 || quota[i] > 0) continue;
        std::size_t donor = g;
        for (std::size_t j = 0; j < g; ++j)
            if (quota[j] > 1 && (donor == g || quota[j] > quota[donor])) donor = j;
        --quota[donor];
        quota[i] = 1;
    }
    return quota;
}

/// Proportional sample of at most `cap` members across groups, sampled
/// without replacement with a seeded generator. Output is grouped in input
/// order, ascending within each group.
inline std::vector<std::size_t> downsample_for_view(const std::vector<ViewGroup>& groups, std::size_t cap,
                                                    std::uint64_t seed) {
    std::vector<std::size_t> sizes;
    for (const auto& g : groups) sizes.push_back(g.members.size());
    const auto quota = downsample_quotas(sizes, cap);
    Rng rng(seed);
    std::vector<std::size_t> out;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        std::vector<std::size_t> pool = groups[gi].members;
        const std::size_t take = quota[gi];
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(take);
        std::sort(pool.begin(), pool.end());
        out.insert(out.end(), pool.begin(), pool.end());
    }
    return out;
}

} // namespace errslice
