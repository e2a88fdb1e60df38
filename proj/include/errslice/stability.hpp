#pragma once

// Empirical harness for the label-tuple stability result: paired synthetic
// datasets differing in floor(n^gamma) points are pushed through clustering
// and tuple construction, and the resulting d_max is tracked as n grows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "errslice/clustering.hpp"
#include "errslice/core.hpp"
#include "errslice/explanation.hpp"
#include "errslice/parallel.hpp"
#include "errslice/rng.hpp"

namespace errslice {

struct MixtureComponent {
    std::vector<double> center;
    double width = 0.1;  // cube half-width, or Gaussian sigma
    double weight = 1.0;
};

struct SampledPoint {
    std::vector<double> x;
    std::size_t component = 0;
    bool flipped = false;

    bool operator==(const SampledPoint&) const = default;
};

/// Compactly supported mixture: axis-aligned uniform cubes, or Gaussians
/// truncated to +-3 sigma per coordinate.
struct SyntheticDistribution {
    enum class Kind { uniform_cube, gaussian_mixture_truncated };

    std::string name;
    Kind kind = Kind::uniform_cube;
    std::size_t dim = 2;
    double diameter = std::numbers::sqrt2;  // B
    std::vector<MixtureComponent> components;
    double flip_probability = 0.2;

    double total_weight() const {
        double w = 0.0;
        for (const auto& c : components) w += c.weight;
        return w;
    }

    /// Lower bound on the density over the support (components assumed disjoint).
    double density_lower_bound() const {
        double mu = std::numeric_limits<double>::infinity();
        const double tw = total_weight();
        const double d = static_cast<double>(dim);
        for (const auto& c : components) {
            double v;
            if (kind == Kind::uniform_cube) {
                v = (c.weight / tw) / std::pow(2.0 * c.width, d);
            } else {
                // untruncated Gaussian density at a corner of the +-3 sigma box; truncation only raises it
                v = (c.weight / tw) * std::pow(2.0 * std::numbers::pi * c.width * c.width, -d / 2.0) *
                    std::exp(-9.0 * d / 2.0);
            }
            mu = std::min(mu, v);
        }
        return mu;
    }

    SampledPoint sample(Rng& rng) const {
        const double tw = total_weight();
        double u = rng.uniform() * tw;
        std::size_t comp = components.size() - 1;
        for (std::size_t c = 0; c < components.size(); ++c) {
            if (u < components[c].weight) {
                comp = c;
                break;
            }
            u -= components[c].weight;
        }
        const auto& mc = components[comp];
        SampledPoint p;
        p.component = comp;
        p.x.resize(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            if (kind == Kind::uniform_cube) {
                p.x[j] = rng.uniform(mc.center[j] - mc.width, mc.center[j] + mc.width);
            } else {
                double z;
                do {
                    z = rng.normal();
                } while (std::abs(z) > 3.0);
                p.x[j] = mc.center[j] + mc.width * z;
            }
        }
        p.flipped = rng.bernoulli(flip_probability);
        return p;
    }

    /// Three well-separated uniform squares inside [0,1]^2.
    static SyntheticDistribution blobs3() {
        SyntheticDistribution d;
        d.name = "blobs3";
        d.kind = Kind::uniform_cube;
        d.dim = 2;
        d.diameter = std::numbers::sqrt2;
        d.components = {{{0.2, 0.2}, 0.1, 1.0}, {{0.8, 0.2}, 0.1, 1.0}, {{0.5, 0.8}, 0.1, 1.0}};
        return d;
    }

    /// Three truncated Gaussians inside [0,1]^2.
    static SyntheticDistribution gauss3() {
        SyntheticDistribution d = blobs3();
        d.name = "gauss3";
        d.kind = Kind::gaussian_mixture_truncated;
        for (auto& c : d.components) c.width = 0.05;
        return d;
    }

    static SyntheticDistribution by_name(const std::string& name) {
        if (name == "blobs3") return blobs3();
        if (name == "gauss3") return gauss3();
        throw InvalidArgument("unknown distribution '" + name + "'");
    }
};

/// floor(n^gamma).
inline std::size_t perturbation_size(std::size_t n, double gamma) {
    return static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(n), gamma) + 1e-9));
}

struct PairedSample {
    std::vector<SampledPoint> s;
    std::vector<SampledPoint> t;
    std::vector<std::size_t> replaced;  // positions of t that were redrawn
};

/// S = n i.i.d. draws; T = S with m distinct positions redrawn.
inline PairedSample sample_paired_datasets(const SyntheticDistribution& dist, std::size_t n, std::size_t m,
                                           std::uint64_t seed) {
    if (m >= n) throw InvalidArgument("perturbation size must be smaller than n");
    PairedSample p;
    Rng base(mix_seed(seed, 1));
    p.s.reserve(n);
    for (std::size_t i = 0; i < n; ++i) p.s.push_back(dist.sample(base));
    p.t = p.s;

    Rng pick(mix_seed(seed, 2));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < m; ++i) std::swap(idx[i], idx[i + static_cast<std::size_t>(pick.below(n - i))]);
    p.replaced.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(p.replaced.begin(), p.replaced.end());

    Rng fresh(mix_seed(seed, 3));
    for (std::size_t i : p.replaced) p.t[i] = dist.sample(fresh);
    return p;
}

/// Synthetic evaluation records: prediction = source component, label = the
/// component shifted by one with the point's flip draw, loss = distance to
/// the nearest component center.
inline Dataset synthetic_dataset(const SyntheticDistribution& dist, const std::vector<SampledPoint>& pts,
                                 const std::string& name) {
    Dataset d;
    d.name = name;
    d.num_classes = static_cast<int>(std::max<std::size_t>(2, dist.components.size()));
    d.embedding_dim = dist.dim;
    d.records.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        Record r;
        r.id = "p" + std::to_string(i);
        r.prediction = static_cast<int>(pts[i].component);
        r.label = pts[i].flipped ? static_cast<int>((pts[i].component + 1) % dist.components.size()) : r.prediction;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : dist.components) best = std::min(best, distance(pts[i].x, c.center));
        r.loss = best;
        r.embedding = pts[i].x;
        d.records.push_back(std::move(r));
    }
    return d;
}

/// Max-min paired-sum distance between two center sets.
inline double center_dmax(const PointSet& a, const PointSet& b) {
    if (a.size() != b.size()) throw KMismatch(a.size(), b.size());
    if (a.dim() != b.dim()) throw DimMismatch("center sets of dimension " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < a.size(); ++j) best = std::min(best, distance(a[i], b[j]) + distance(a[j], b[i]));
        worst = std::max(worst, best);
    }
    return worst;
}

/// 3 * eps * max(6 K^2 B, beta).
inline double lemma2_bound(double epsilon, std::size_t k, double diameter, double beta) {
    const double kk = static_cast<double>(k);
    return 3.0 * epsilon * std::max(6.0 * kk * kk * diameter, beta);
}

/// Map from cluster center to sentence vector with its Lipschitz constant.
struct LipschitzLabeler {
    std::string name;
    std::function<std::vector<double>(std::span<const double>)> map;
    double beta = 1.0;

    static LipschitzLabeler identity() {
        return {"identity", [](std::span<const double> c) { return std::vector<double>(c.begin(), c.end()); }, 1.0};
    }
    static LipschitzLabeler scaled(double a) {
        return {"scaled", [a](std::span<const double> c) {
                    std::vector<double> v(c.begin(), c.end());
                    for (double& x : v) x *= a;
                    return v;
                }, std::abs(a)};
    }
    /// Coordinatewise tanh(a x); sup |f'| = a.
    static LipschitzLabeler tanh_scaled(double a) {
        return {"tanh", [a](std::span<const double> c) {
                    std::vector<double> v(c.begin(), c.end());
                    for (double& x : v) x = std::tanh(a * x);
                    return v;
                }, std::abs(a)};
    }
    static LipschitzLabeler by_name(const std::string& name) {
        if (name == "identity") return identity();
        if (name == "tanh3") return tanh_scaled(3.0);
        if (name == "scaled2") return scaled(2.0);
        throw InvalidArgument("unknown labeler '" + name + "'");
    }
};

/// Largest observed ||f(u) - f(v)|| / ||u - v|| over `samples` random pairs.
inline double estimate_lipschitz(const LipschitzLabeler& f, const SyntheticDistribution& dist, std::size_t samples,
                                 std::uint64_t seed) {
    if (samples < 2) throw InvalidArgument("need at least two samples");
    Rng rng(seed);
    double best = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const auto u = dist.sample(rng).x;
        const auto v = dist.sample(rng).x;
        const double du = distance(u, v);
        if (du < 1e-12) continue;
        best = std::max(best, distance(f.map(u), f.map(v)) / du);
    }
    return best;
}

enum class ClusteringMode { oracle, restarts };

inline const char* to_string(ClusteringMode m) { return m == ClusteringMode::oracle ? "oracle" : "restarts"; }

inline ClusteringMode clustering_mode_from_string(const std::string& s) {
    if (s == "oracle") return ClusteringMode::oracle;
    if (s == "restarts") return ClusteringMode::restarts;
    throw InvalidArgument("unknown clustering mode '" + s + "'");
}

struct TrialConfig {
    std::size_t n = 256;
    double gamma = 0.25;
    std::optional<std::size_t> m_override;
    std::size_t k = 3;
    ClusteringMode mode = ClusteringMode::restarts;
    std::size_t restarts = 16;
    std::uint64_t seed = 0;
    SizeMode size_mode = SizeMode::fraction;

    std::size_t m() const { return m_override.value_or(perturbation_size(n, gamma)); }
};

struct StabilityTrial {
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t k = 0;
    std::uint64_t seed = 0;
    ClusteringMode mode = ClusteringMode::restarts;
    double epsilon = 0.0;
    double dmax = 0.0;
    double bound = 0.0;
    bool bound_satisfied = true;
    ExplanationTuple tuple_s;
    ExplanationTuple tuple_t;
    Clustering clustering_s;
    Clustering clustering_t;
};

namespace detail {

inline Clustering cluster_points_for_trial(const Dataset& d, const TrialConfig& cfg) {
    const EvalSlice all = whole_dataset(d);
    if (cfg.mode == ClusteringMode::restarts) {
        KMeansConfig kc;
        kc.k = cfg.k;
        kc.seed = cfg.seed;
        kc.restarts = cfg.restarts;
        kc.workers = 1;
        return cluster_slice(d, all, kc);
    }
    const PointSet pts = gather_embeddings(d, all.members);
    KMeansResult r = exact_kmeans_oracle(pts, cfg.k);
    Clustering c;
    c.slice = all;
    c.k = cfg.k;
    c.assignments = std::move(r.assignments);
    c.centers = std::move(r.centers);
    c.objective = r.objective;
    c.seed = cfg.seed;
    c.restarts = 1;
    return c;
}

} // namespace detail

/// One paired run: both datasets are clustered with the same seeds, turned
/// into tuples with w_k = labeler(center_k), and compared.
inline StabilityTrial run_trial(const SyntheticDistribution& dist, const TrialConfig& cfg,
                                const LipschitzLabeler& labeler) {
    if (cfg.mode == ClusteringMode::oracle && cfg.n > OracleBounds::max_points)
        throw TooLarge("oracle mode needs n <= " + std::to_string(OracleBounds::max_points));
    StabilityTrial t;
    t.n = cfg.n;
    t.m = cfg.m();
    t.k = cfg.k;
    t.seed = cfg.seed;
    t.mode = cfg.mode;

    const PairedSample pair = sample_paired_datasets(dist, cfg.n, t.m, cfg.seed);
    const Dataset ds = synthetic_dataset(dist, pair.s, "S");
    const Dataset dt = synthetic_dataset(dist, pair.t, "T");
    t.clustering_s = detail::cluster_points_for_trial(ds, cfg);
    t.clustering_t = detail::cluster_points_for_trial(dt, cfg);

    const SentenceEmbedder embed = [&](const ClusterView& v) { return labeler.map(v.center); };
    t.tuple_s = build_explanation_tuple(ds, t.clustering_s, embed, cfg.size_mode, cfg.n);
    t.tuple_t = build_explanation_tuple(dt, t.clustering_t, embed, cfg.size_mode, cfg.n);

    t.epsilon = center_dmax(t.clustering_s.centers, t.clustering_t.centers);
    t.dmax = dmax(t.tuple_s, t.tuple_t, cfg.size_mode);
    t.bound = lemma2_bound(t.epsilon, cfg.k, dist.diameter, labeler.beta);
    t.bound_satisfied = t.dmax <= t.bound;
    return t;
}

struct ExperimentConfig {
    std::vector<std::size_t> ns{256, 1024, 4096};
    std::size_t trials = 20;
    double gamma = 0.25;
    std::optional<std::size_t> m_override;
    std::size_t k = 3;
    ClusteringMode mode = ClusteringMode::restarts;
    std::size_t restarts = 16;
    std::uint64_t seed = 0;
    std::vector<double> deltas{0.01, 0.05, 0.1};
    std::size_t workers = 0;
};

struct LevelSummary {
    std::size_t n = 0;
    std::size_t m = 0;
    double median = 0.0;
    double p90 = 0.0;
    std::vector<double> below_delta;  // fraction of trials with dmax < delta, per configured delta
    double violation_rate = 0.0;
};

struct ExperimentReport {
    std::string distribution;
    std::string labeler;
    ExperimentConfig config;
    std::vector<StabilityTrial> trials;  // sorted by (n, trial index)
    std::vector<std::size_t> trial_index;
    std::vector<LevelSummary> levels;
    std::optional<double> kendall_tau;  // trend of median dmax against n
    bool strictly_decreasing = false;
    double violation_rate = 0.0;
};

/// Linear-interpolation percentile of an unsorted sample, p in [0, 1].
inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Kendall tau-a between two equally long sequences.
inline double kendall_tau(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double a = x[j] - x[i], b = y[j] - y[i];
            s += static_cast<double>((a > 0) - (a < 0)) * static_cast<double>((b > 0) - (b < 0));
        }
    return s / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

inline ExperimentReport convergence_experiment(const SyntheticDistribution& dist, const ExperimentConfig& cfg,
                                               const LipschitzLabeler& labeler) {
    if (!std::is_sorted(cfg.ns.begin(), cfg.ns.end()) ||
        std::adjacent_find(cfg.ns.begin(), cfg.ns.end()) != cfg.ns.end())
        throw InvalidArgument("ns must be strictly increasing");
    ExperimentReport rep;
    rep.distribution = dist.name;
    rep.labeler = labeler.name;
    rep.config = cfg;

    const std::size_t total = cfg.ns.size() * cfg.trials;
    rep.trials.resize(total);
    rep.trial_index.resize(total);
    parallel_for(
        total,
        [&](std::size_t job) {
            const std::size_t level = job / cfg.trials, trial = job % cfg.trials;
            TrialConfig tc;
            tc.n = cfg.ns[level];
            tc.gamma = cfg.gamma;
            tc.m_override = cfg.m_override;
            tc.k = cfg.k;
            tc.mode = cfg.mode;
            tc.restarts = cfg.restarts;
            tc.seed = mix_seed(cfg.seed, tc.n, trial);
            rep.trials[job] = run_trial(dist, tc, labeler);
            rep.trial_index[job] = trial;
        },
        cfg.workers);

    std::size_t violations = 0;
    std::vector<double> xs, medians;
    for (std::size_t level = 0; level < cfg.ns.size(); ++level) {
        LevelSummary s;
        s.n = cfg.ns[level];
        std::vector<double> d;
        std::size_t level_violations = 0;
        for (std::size_t t = 0; t < cfg.trials; ++t) {
            const auto& tr = rep.trials[level * cfg.trials + t];
            s.m = tr.m;
            d.push_back(tr.dmax);
            level_violations += tr.bound_satisfied ? 0 : 1;
        }
        s.median = percentile(d, 0.5);
        s.p90 = percentile(d, 0.9);
        for (double delta : cfg.deltas)
            s.below_delta.push_back(static_cast<double>(std::count_if(d.begin(), d.end(), [&](double v) { return v < delta; })) /
                                    static_cast<double>(d.size()));
        s.violation_rate = static_cast<double>(level_violations) / static_cast<double>(cfg.trials);
        violations += level_violations;
        xs.push_back(static_cast<double>(s.n));
        medians.push_back(s.median);
        rep.levels.push_back(std::move(s));
    }
    rep.violation_rate = total ? static_cast<double>(violations) / static_cast<double>(total) : 0.0;
    if (rep.levels.size() >= 2) {
        rep.kendall_tau = kendall_tau(xs, medians);
        rep.strictly_decreasing = true;
        for (std::size_t i = 1; i < medians.size(); ++i)
            rep.strictly_decreasing = rep.strictly_decreasing && medians[i] < medians[i - 1];
    }
    return rep;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string report_csv(const ExperimentReport& rep) {
    std::string out = "n,trial,m,epsilon,dmax,bound,bound_satisfied,mode,seed\n";
    for (std::size_t i = 0; i < rep.trials.size(); ++i) {
        const auto& t = rep.trials[i];
        out += std::to_string(t.n) + ',' + std::to_string(rep.trial_index[i]) + ',' + std::to_string(t.m) + ',' +
               format_double(t.epsilon) + ',' + format_double(t.dmax) + ',' + format_double(t.bound) + ',' +
               (t.bound_satisfied ? "true" : "false") + ',' + to_string(t.mode) + ',' + std::to_string(t.seed) + '\n';
    }
    return out;
}

inline nlohmann::ordered_json report_summary(const ExperimentReport& rep) {
    nlohmann::ordered_json j;
    const auto& c = rep.config;
    j["size_mode"] = "fraction";
    j["config"] = {{"distribution", rep.distribution}, {"labeler", rep.labeler},  {"ns", c.ns},
                   {"trials", c.trials},                {"gamma", c.gamma},         {"k", c.k},
                   {"mode", to_string(c.mode)},         {"restarts", c.restarts},   {"seed", c.seed},
                   {"deltas", c.deltas}};
    j["config"]["m_override"] = c.m_override ? nlohmann::ordered_json(*c.m_override) : nlohmann::ordered_json(nullptr);
    auto levels = nlohmann::ordered_json::array();
    for (const auto& l : rep.levels) {
        nlohmann::ordered_json row = {{"n", l.n}, {"m", l.m}, {"median_dmax", l.median}, {"p90_dmax", l.p90},
                                      {"bound_violation_rate", l.violation_rate}};
        auto below = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < c.deltas.size(); ++i) below[format_double(c.deltas[i])] = l.below_delta[i];
        row["fraction_below_delta"] = below;
        levels.push_back(row);
    }
    j["levels"] = levels;
    j["kendall_tau"] = rep.kendall_tau ? nlohmann::ordered_json(*rep.kendall_tau) : nlohmann::ordered_json(nullptr);
    j["median_strictly_decreasing"] = rep.strictly_decreasing;
    j["bound_violation_rate"] = rep.violation_rate;
    return j;
}

} // namespace errslice
