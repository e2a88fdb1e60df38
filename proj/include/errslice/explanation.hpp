#pragma once

// Explanation tuples built from a clustering, and the max-min paired-sum
// distance between two tuples.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "errslice/core.hpp"

namespace errslice {

/// Fraction of members whose prediction equals their label.
inline double group_accuracy(const Dataset& d, std::span<const std::size_t> members) {
    if (members.empty()) throw InvalidArgument("group accuracy of an empty group");
    std::size_t correct = 0;
    for (std::size_t i : members) correct += d.records.at(i).correct() ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(members.size());
}

/// Everything a sentence embedder may look at for one cluster.
struct ClusterView {
    std::size_t cluster = 0;
    std::span<const std::size_t> members;  // dataset indices
    std::span<const double> center;
    const Dataset* dataset = nullptr;
};

using SentenceEmbedder = std::function<std::vector<double>(const ClusterView&)>;

/// w_k = cluster center. Lipschitz with constant 1 in the center.
inline SentenceEmbedder centroid_embedder() {
    return [](const ClusterView& v) { return std::vector<double>(v.center.begin(), v.center.end()); };
}

/// One message per cluster: (embedder(cluster), size, accuracy). `n_total`
/// is the denominator of the stored size fraction (defaults to the slice size).
inline ExplanationTuple build_explanation_tuple(const Dataset& d, const Clustering& c,
                                                const SentenceEmbedder& embed,
                                                SizeMode mode = SizeMode::count,
                                                std::size_t n_total = 0) {
    if (n_total == 0) n_total = c.slice.size();
    ExplanationTuple t;
    t.size_mode = mode;
    t.messages.reserve(c.k);
    std::size_t dw = 0;
    for (std::size_t k = 0; k < c.k; ++k) {
        const std::vector<std::size_t> members = c.members_of(k);
        ExplanationMessage m;
        try {
            m.w = embed(ClusterView{k, members, c.centers[k], &d});
        } catch (const std::exception& e) {
            throw EmbedderFailure(k, e.what());
        }
        if (k == 0) dw = m.w.size();
        if (m.w.size() != dw) throw EmbedderFailure(k, "sentence vector dimension changed within a tuple");
        m.size = members.size();
        m.fraction = static_cast<double>(members.size()) / static_cast<double>(n_total);
        m.accuracy = group_accuracy(d, members);
        t.messages.push_back(std::move(m));
    }
    return t;
}

namespace detail {

inline double l2(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimMismatch("message vectors of length " + std::to_string(a.size()) + " and " +
                          std::to_string(b.size()));
    return distance(a, b);
}

} // namespace detail

/// ||v(m_i) - v(m'_j)|| + ||v(m'_i) - v(m_j)||.
inline double pair_distance(const ExplanationMessage& mi, const ExplanationMessage& mpi,
                            const ExplanationMessage& mj, const ExplanationMessage& mpj, SizeMode mode) {
    return detail::l2(message_vector(mi, mode), message_vector(mpj, mode)) +
           detail::l2(message_vector(mpi, mode), message_vector(mj, mode));
}

/// Max-min paired-sum distance over vectorized messages. Requires equal K.
inline double dmax(const ExplanationTuple& a, const ExplanationTuple& b, SizeMode mode) {
    const std::size_t k = a.k();
    if (k != b.k()) throw KMismatch(a.k(), b.k());
    if (k == 0) throw InvalidArgument("dmax of empty tuples");

    std::vector<std::vector<double>> va, vb;
    va.reserve(k);
    vb.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        va.push_back(message_vector(a.messages[i], mode));
        vb.push_back(message_vector(b.messages[i], mode));
        if (va.back().size() != va.front().size() || vb.back().size() != va.front().size())
            throw DimMismatch("sentence vectors differ in dimension");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) best = std::min(best, distance(va[i], vb[j]) + distance(vb[i], va[j]));
        worst = std::max(worst, best);
    }
    return worst;
}

inline double dmax(const ExplanationTuple& a, const ExplanationTuple& b) { return dmax(a, b, a.size_mode); }

} // namespace errslice
