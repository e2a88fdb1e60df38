#pragma once

// k-means++ seeding, Lloyd iteration with restarts, recursive sub-clustering
// and an exhaustive optimum for small instances.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errslice/core.hpp"
#include "errslice/parallel.hpp"
#include "errslice/rng.hpp"

namespace errslice {

struct KMeansConfig {
    std::optional<std::size_t> k;  // unset: default_k(n)
    std::uint64_t seed = 0;
    std::size_t restarts = 16;
    std::size_t max_iter = 300;
    double rel_tol = 1e-7;
    bool l2_normalize = false;
    std::size_t workers = 0;  // restart parallelism, 0 = hardware concurrency
};

/// k = max(1, round(sqrt(n / 2))), clamped to n.
inline std::size_t default_k(std::size_t n) {
    if (n == 0) return 1;
    const double k = std::round(std::sqrt(static_cast<double>(n) / 2.0));
    return std::min(n, static_cast<std::size_t>(std::max(1.0, k)));
}

struct KMeansResult {
    std::vector<std::size_t> assignments;
    PointSet centers;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool degenerate_init = false;
    // Objective after every center update, starting with the seeded centers.
    std::vector<double> objective_trace;
};

/// Sum over points of the squared distance to their assigned center.
inline double within_point_scatter(const PointSet& points, std::span<const std::size_t> assignments,
                                   const PointSet& centers) {
    if (points.size() != assignments.size())
        throw DimMismatch(std::to_string(points.size()) + " points vs " + std::to_string(assignments.size()) +
                          " assignments");
    if (!points.empty() && points.dim() != centers.dim())
        throw DimMismatch("points are " + std::to_string(points.dim()) + "-d, centers " +
                          std::to_string(centers.dim()) + "-d");
    double w = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) w += squared_distance(points[i], centers[assignments[i]]);
    return w;
}

struct SeedingResult {
    PointSet centers;
    bool degenerate = false;  // fewer than k distinct points
};

/// k-means++ seeding: first center uniform, then D^2-weighted sampling.
/// When the remaining mass is zero (fewer than k distinct points) the
/// farthest points are duplicated and the result is flagged.
inline SeedingResult kmeanspp_init(const PointSet& points, std::size_t k, Rng& rng) {
    const std::size_t n = points.size();
    if (k == 0 || k > n) throw InvalidArgument("k must lie in [1, " + std::to_string(n) + "]");

    SeedingResult out;
    out.centers = PointSet(0, points.dim());
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    auto add_center = [&](std::size_t idx) {
        out.centers.push_back(points[idx]);
        for (std::size_t i = 0; i < n; ++i)
            nearest[i] = std::min(nearest[i], squared_distance(points[i], points[idx]));
    };

    add_center(static_cast<std::size_t>(rng.below(n)));
    while (out.centers.size() < k) {
        double total = 0.0;
        for (double d : nearest) total += d;
        if (total <= 0.0) {
            out.degenerate = true;
            const auto far = static_cast<std::size_t>(std::max_element(nearest.begin(), nearest.end()) - nearest.begin());
            add_center(far);
            continue;
        }
        const double target = rng.uniform() * total;
        double acc = 0.0;
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (nearest[i] <= 0.0) continue;
            acc += nearest[i];
            pick = i;
            if (acc > target) break;
        }
        add_center(pick);
    }
    return out;
}

namespace detail {

inline std::size_t nearest_center(std::span<const double> x, const PointSet& centers, double* dist_out = nullptr) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
        const double d = squared_distance(x, centers[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    if (dist_out) *dist_out = best_d;
    return best;
}

inline PointSet centroids(const PointSet& points, std::span<const std::size_t> assignments, std::size_t k,
                          const PointSet* fallback = nullptr) {
    PointSet c(k, points.dim());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto row = c.row(assignments[i]);
        auto x = points[i];
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += x[j];
        ++counts[assignments[i]];
    }
    for (std::size_t a = 0; a < k; ++a) {
        auto row = c.row(a);
        if (counts[a] == 0) {
            if (fallback) std::copy(fallback->row(a).begin(), fallback->row(a).end(), row.begin());
            continue;
        }
        for (double& v : row) v /= static_cast<double>(counts[a]);
    }
    return c;
}

// Gives every empty cluster the point farthest from its own center, taken
// from clusters that have more than one member.
inline void repair_empty_clusters(const PointSet& points, std::vector<std::size_t>& assignments,
                                  PointSet& centers) {
    const std::size_t k = centers.size();
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t a : assignments) ++counts[a];
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] != 0) continue;
        std::size_t far = points.size();
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (counts[assignments[i]] <= 1) continue;
            const double d = squared_distance(points[i], centers[assignments[i]]);
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        if (far == points.size()) return;  // n < k; cannot happen under the k <= n precondition
        --counts[assignments[far]];
        assignments[far] = c;
        ++counts[c];
        std::copy(points[far].begin(), points[far].end(), centers.row(c).begin());
    }
}

} // namespace detail

/// Lloyd iteration from the given centers. Stops when the relative objective
/// improvement drops below rel_tol, assignments stop changing, or max_iter.
inline KMeansResult lloyd(const PointSet& points, const PointSet& init_centers, const KMeansConfig& config) {
    const std::size_t n = points.size();
    const std::size_t k = init_centers.size();
    if (n == 0) throw InvalidArgument("lloyd needs at least one point");
    if (points.dim() != init_centers.dim())
        throw DimMismatch("points are " + std::to_string(points.dim()) + "-d, centers " +
                          std::to_string(init_centers.dim()) + "-d");

    KMeansResult r;
    r.centers = init_centers;
    r.assignments.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) r.assignments[i] = detail::nearest_center(points[i], r.centers);
    double prev = within_point_scatter(points, r.assignments, r.centers);
    r.objective_trace.push_back(prev);

    for (std::size_t it = 0; it < config.max_iter; ++it) {
        detail::repair_empty_clusters(points, r.assignments, r.centers);
        r.centers = detail::centroids(points, r.assignments, k, &r.centers);
        const double cur = within_point_scatter(points, r.assignments, r.centers);
        r.objective_trace.push_back(cur);
        r.iterations = it + 1;

        std::vector<std::size_t> next(n);
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            next[i] = detail::nearest_center(points[i], r.centers);
            // keep the current cluster on exact ties so the objective cannot rise
            if (next[i] != r.assignments[i] &&
                squared_distance(points[i], r.centers[next[i]]) == squared_distance(points[i], r.centers[r.assignments[i]]))
                next[i] = r.assignments[i];
            changed = changed || next[i] != r.assignments[i];
        }
        const bool converged = !changed || cur == 0.0 || (prev - cur) <= config.rel_tol * prev;
        prev = cur;
        if (converged) break;
        r.assignments = std::move(next);
    }
    r.objective = prev;
    return r;
}

inline PointSet l2_normalized(const PointSet& p) {
    PointSet out = p;
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto row = out.row(i);
        double s = 0.0;
        for (double v : row) s += v * v;
        s = std::sqrt(s);
        if (s > 0.0)
            for (double& v : row) v /= s;
    }
    return out;
}

/// Best of `restarts` seeded k-means++ + Lloyd runs on raw points. Restart r
/// uses seed + r; ties in objective go to the lowest restart index.
inline KMeansResult kmeans(const PointSet& points, std::size_t k, const KMeansConfig& config) {
    if (config.restarts == 0) throw InvalidArgument("restarts must be >= 1");
    if (k == 0 || k > points.size())
        throw InvalidArgument("k=" + std::to_string(k) + " outside [1, " + std::to_string(points.size()) + "]");
    std::vector<KMeansResult> runs(config.restarts);
    parallel_for(
        config.restarts,
        [&](std::size_t r) {
            Rng rng(config.seed + r);
            SeedingResult init = kmeanspp_init(points, k, rng);
            runs[r] = lloyd(points, init.centers, config);
            runs[r].degenerate_init = init.degenerate;
        },
        config.workers);
    std::size_t best = 0;
    for (std::size_t r = 1; r < runs.size(); ++r)
        if (runs[r].objective < runs[best].objective) best = r;
    return std::move(runs[best]);
}

/// Clusters the embeddings of a slice; k defaults to default_k(|slice|).
inline Clustering cluster_slice(const Dataset& d, const EvalSlice& slice, const KMeansConfig& config) {
    if (slice.members.empty()) throw InvalidArgument("cannot cluster an empty slice");
    PointSet points = gather_embeddings(d, slice.members);
    if (config.l2_normalize) points = l2_normalized(points);
    const std::size_t k = config.k.value_or(default_k(slice.size()));
    KMeansResult best = kmeans(points, k, config);

    Clustering c;
    c.slice = slice;
    c.k = k;
    c.assignments = std::move(best.assignments);
    c.centers = std::move(best.centers);
    c.objective = best.objective;
    c.seed = config.seed;
    c.restarts = config.restarts;
    c.degenerate_init = best.degenerate_init;
    return c;
}

namespace detail {

inline bool all_identical(const PointSet& p) {
    for (std::size_t i = 1; i < p.size(); ++i)
        if (!std::equal(p[i].begin(), p[i].end(), p[0].begin())) return false;
    return true;
}

struct Group {
    std::vector<std::size_t> members;  // positions into the parent slice
    bool unsplittable = false;
};

inline void split_recursive(const PointSet& all, Group g, std::size_t max_size, const KMeansConfig& config,
                            std::uint64_t path_seed, std::vector<Group>& out) {
    if (g.members.size() < max_size) {
        out.push_back(std::move(g));
        return;
    }
    PointSet pts(0, all.dim());
    for (std::size_t m : g.members) pts.push_back(all[m]);
    if (all_identical(pts)) {
        g.unsplittable = true;
        out.push_back(std::move(g));
        return;
    }
    KMeansConfig child = config;
    child.seed = path_seed;
    const std::size_t k = default_k(g.members.size());
    KMeansResult r = kmeans(pts, k, child);
    for (std::size_t c = 0; c < k; ++c) {
        Group sub;
        for (std::size_t i = 0; i < g.members.size(); ++i)
            if (r.assignments[i] == c) sub.members.push_back(g.members[i]);
        if (!sub.members.empty())
            split_recursive(all, std::move(sub), max_size, config, mix_seed(path_seed, c + 1), out);
    }
}

} // namespace detail

/// Re-clusters every cluster of size >= max_size (child k = default_k(size))
/// until all clusters are smaller, or flags clusters whose points are all
/// identical. Cluster ids are renumbered densely in parent order; when no
/// cluster needs splitting the input is returned unchanged.
inline Clustering subcluster(const Dataset& d, const Clustering& clustering, std::size_t max_size,
                             const KMeansConfig& config) {
    const auto sizes = clustering.sizes();
    if (std::none_of(sizes.begin(), sizes.end(), [&](std::size_t s) { return s >= max_size; })) return clustering;

    PointSet all = gather_embeddings(d, clustering.slice.members);
    if (config.l2_normalize) all = l2_normalized(all);

    std::vector<detail::Group> groups;
    for (std::size_t c = 0; c < clustering.k; ++c) {
        detail::Group g;
        for (std::size_t i = 0; i < clustering.assignments.size(); ++i)
            if (clustering.assignments[i] == c) g.members.push_back(i);
        g.unsplittable = std::find(clustering.unsplittable.begin(), clustering.unsplittable.end(), c) !=
                         clustering.unsplittable.end();
        if (g.unsplittable) {
            groups.push_back(std::move(g));
            continue;
        }
        detail::split_recursive(all, std::move(g), max_size, config, mix_seed(config.seed, c + 1), groups);
    }

    Clustering out = clustering;
    out.k = groups.size();
    out.unsplittable.clear();
    for (std::size_t id = 0; id < groups.size(); ++id) {
        for (std::size_t m : groups[id].members) out.assignments[m] = id;
        if (groups[id].unsplittable) out.unsplittable.push_back(id);
    }
    out.centers = detail::centroids(all, out.assignments, out.k);
    out.objective = within_point_scatter(all, out.assignments, out.centers);
    return out;
}

struct OracleBounds {
    static constexpr std::size_t max_points = 14;
    static constexpr std::size_t max_k = 4;
};

/// Global k-means optimum by enumerating every partition of the points into
/// exactly k non-empty groups. Centers are the group centroids.
inline KMeansResult exact_kmeans_oracle(const PointSet& points, std::size_t k) {
    const std::size_t n = points.size();
    if (n > OracleBounds::max_points || k > OracleBounds::max_k)
        throw TooLarge("n=" + std::to_string(n) + ", k=" + std::to_string(k) + " exceeds n<=14, k<=4");
    if (k == 0 || k > n) throw InvalidArgument("k must lie in [1, n]");
    const std::size_t dim = points.dim();

    std::vector<std::size_t> labels(n, 0), best_labels;
    std::vector<double> sums(k * dim, 0.0), sumsq(k, 0.0);
    std::vector<std::size_t> counts(k, 0);
    double best = std::numeric_limits<double>::infinity();

    auto add = [&](std::size_t i, std::size_t b, double sign) {
        auto x = points[i];
        double sq = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            sums[b * dim + j] += sign * x[j];
            sq += x[j] * x[j];
        }
        sumsq[b] += sign * sq;
        counts[b] = sign > 0 ? counts[b] + 1 : counts[b] - 1;
    };

    // Restricted growth strings: point i joins an open block or opens the next one.
    auto recurse = [&](auto&& self, std::size_t i, std::size_t used) -> void {
        if (n - i < k - used) return;
        if (i == n) {
            double w = 0.0;
            for (std::size_t b = 0; b < k; ++b) {
                double norm = 0.0;
                for (std::size_t j = 0; j < dim; ++j) norm += sums[b * dim + j] * sums[b * dim + j];
                w += sumsq[b] - norm / static_cast<double>(counts[b]);
            }
            if (w < best) {
                best = w;
                best_labels = labels;
            }
            return;
        }
        const std::size_t limit = std::min(used + 1, k);
        for (std::size_t b = 0; b < limit; ++b) {
            labels[i] = b;
            add(i, b, 1.0);
            self(self, i + 1, b == used ? used + 1 : used);
            add(i, b, -1.0);
        }
    };
    recurse(recurse, 0, 0);

    KMeansResult r;
    r.assignments = std::move(best_labels);
    r.centers = detail::centroids(points, r.assignments, k);
    r.objective = within_point_scatter(points, r.assignments, r.centers);
    return r;
}

} // namespace errslice
