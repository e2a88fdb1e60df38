#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "errslice/stability.hpp"

using namespace errslice;

namespace {

struct Group {
    std::vector<double> mean;
    std::size_t size = 0;
    std::size_t correct = 0;
};

// Groups points by mixture component, ordered by first appearance.
std::vector<Group> component_groups(const Dataset& d, const std::vector<SampledPoint>& pts) {
    std::map<std::size_t, std::size_t> slot;
    std::vector<Group> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto [it, fresh] = slot.try_emplace(pts[i].component, out.size());
        if (fresh) out.push_back({std::vector<double>(pts[i].x.size(), 0.0), 0, 0});
        Group& g = out[it->second];
        for (std::size_t j = 0; j < pts[i].x.size(); ++j) g.mean[j] += pts[i].x[j];
        ++g.size;
        g.correct += d.records[i].correct() ? 1 : 0;
    }
    for (auto& g : out)
        for (auto& v : g.mean) v /= static_cast<double>(g.size);
    return out;
}

double norm(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

std::vector<double> vec(const Group& g, std::size_t n) {
    std::vector<double> v = g.mean;
    v.push_back(static_cast<double>(g.size) / static_cast<double>(n));
    v.push_back(static_cast<double>(g.correct) / static_cast<double>(g.size));
    return v;
}

double hand_maxmin(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double best = 1e300;
        for (std::size_t j = 0; j < a.size(); ++j) best = std::min(best, norm(a[i], b[j]) + norm(b[i], a[j]));
        worst = std::max(worst, best);
    }
    return worst;
}

} // namespace

TEST(PerturbationSize, Values) {
    EXPECT_EQ(perturbation_size(100, 0.25), 3u);
    EXPECT_EQ(perturbation_size(256, 0.25), 4u);
    EXPECT_EQ(perturbation_size(4096, 0.25), 8u);
    EXPECT_EQ(perturbation_size(81, 0.25), 3u);
    EXPECT_EQ(perturbation_size(1000, 0.0), 1u);
}

TEST(Sampling, SupportAndDeterminism) {
    for (const auto& dist : {SyntheticDistribution::blobs3(), SyntheticDistribution::gauss3()}) {
        Rng rng(1), rng2(1);
        for (int i = 0; i < 2000; ++i) {
            const SampledPoint p = dist.sample(rng);
            ASSERT_EQ(p, dist.sample(rng2));
            const auto& c = dist.components[p.component];
            const double reach = dist.kind == SyntheticDistribution::Kind::uniform_cube ? c.width : 3.0 * c.width;
            for (std::size_t j = 0; j < 2; ++j) {
                EXPECT_LE(std::abs(p.x[j] - c.center[j]), reach + 1e-12);
                EXPECT_GE(p.x[j], 0.0);
                EXPECT_LE(p.x[j], 1.0);
            }
        }
    }
    EXPECT_THROW(SyntheticDistribution::by_name("blobs9"), InvalidArgument);
}

TEST(Sampling, DensityLowerBoundForUniformSquares) {
    // each square has area 0.04 and weight 1/3
    EXPECT_NEAR(SyntheticDistribution::blobs3().density_lower_bound(), (1.0 / 3.0) / 0.04, 1e-12);
}

TEST(PairedSample, ZeroPerturbationIsIdentical) {
    const PairedSample p = sample_paired_datasets(SyntheticDistribution::blobs3(), 50, 0, 9);
    EXPECT_EQ(p.s, p.t);
    EXPECT_TRUE(p.replaced.empty());
}

TEST(PairedSample, ExactlyMPositionsRedrawn) {
    const PairedSample p = sample_paired_datasets(SyntheticDistribution::blobs3(), 100, 3, 4);
    ASSERT_EQ(p.replaced.size(), 3u);
    std::size_t differ = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        const bool replaced = std::binary_search(p.replaced.begin(), p.replaced.end(), i);
        if (!replaced) EXPECT_EQ(p.s[i], p.t[i]);
        differ += p.s[i] == p.t[i] ? 0 : 1;
    }
    EXPECT_EQ(differ, 3u);
    EXPECT_THROW(sample_paired_datasets(SyntheticDistribution::blobs3(), 5, 5, 0), InvalidArgument);
}

TEST(SyntheticDataset, LabelsAndLoss) {
    const auto dist = SyntheticDistribution::blobs3();
    std::vector<SampledPoint> pts{{{0.2, 0.2}, 0, false}, {{0.85, 0.2}, 1, true}, {{0.5, 0.75}, 2, true}};
    const Dataset d = synthetic_dataset(dist, pts, "x");
    EXPECT_EQ(d.num_classes, 3);
    EXPECT_EQ(d.records[0].label, 0);
    EXPECT_EQ(d.records[0].prediction, 0);
    EXPECT_EQ(d.records[1].label, 2);
    EXPECT_EQ(d.records[2].label, 0);
    EXPECT_NEAR(d.records[0].loss, 0.0, 1e-15);
    EXPECT_NEAR(d.records[1].loss, 0.05, 1e-12);
    EXPECT_TRUE(validate_dataset(d).empty());
}

TEST(CenterDmax, Cases) {
    const PointSet a = PointSet::from_rows({{0, 0}, {1, 0}, {0, 1}});
    EXPECT_EQ(center_dmax(a, a), 0.0);
    const PointSet swapped = PointSet::from_rows({{1, 0}, {0, 0}, {0, 1}});
    EXPECT_EQ(center_dmax(a, swapped), 0.0);
    EXPECT_NEAR(center_dmax(PointSet::from_rows({{0.0, 0.0}}), PointSet::from_rows({{0.2, 0.0}})), 0.4, 1e-15);
    EXPECT_THROW(center_dmax(a, PointSet::from_rows({{0, 0}})), KMismatch);
}

TEST(Lemma2Bound, Values) {
    EXPECT_NEAR(lemma2_bound(0.1, 3, 1.0, 2.0), 16.2, 1e-12);
    EXPECT_EQ(lemma2_bound(0.0, 3, 1.0, 2.0), 0.0);
    EXPECT_NEAR(lemma2_bound(1.0, 1, 0.1, 10.0), 30.0, 1e-12);
}

TEST(Lipschitz, Estimates) {
    const auto dist = SyntheticDistribution::blobs3();
    const double id = estimate_lipschitz(LipschitzLabeler::identity(), dist, 2000, 1);
    EXPECT_LE(id, 1.0 + 1e-12);
    EXPECT_GT(id, 0.999);
    EXPECT_NEAR(estimate_lipschitz(LipschitzLabeler::scaled(2.0), dist, 2000, 1), 2.0, 1e-9);
    const double th = estimate_lipschitz(LipschitzLabeler::tanh_scaled(3.0), dist, 5000, 2);
    EXPECT_LE(th, 3.0);
    EXPECT_GT(th, 0.0);
    EXPECT_EQ(LipschitzLabeler::by_name("tanh3").beta, 3.0);
}

TEST(RunTrial, ZeroPerturbationOracleIsExact) {
    TrialConfig cfg;
    cfg.n = 12;
    cfg.m_override = 0;
    cfg.mode = ClusteringMode::oracle;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        cfg.seed = seed;
        const StabilityTrial t = run_trial(SyntheticDistribution::blobs3(), cfg, LipschitzLabeler::identity());
        EXPECT_EQ(t.dmax, 0.0);
        EXPECT_EQ(t.epsilon, 0.0);
        EXPECT_TRUE(t.bound_satisfied);
    }
}

TEST(RunTrial, OracleRecoversBlobsAndMatchesHandComputation) {
    const auto dist = SyntheticDistribution::blobs3();
    TrialConfig cfg;
    cfg.n = 12;
    cfg.mode = ClusteringMode::oracle;
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 30 && checked < 10; ++seed) {
        cfg.seed = seed;
        const PairedSample pair = sample_paired_datasets(dist, cfg.n, cfg.m(), seed);
        const Dataset ds = synthetic_dataset(dist, pair.s, "S"), dt = synthetic_dataset(dist, pair.t, "T");
        const auto gs = component_groups(ds, pair.s), gt = component_groups(dt, pair.t);
        if (gs.size() != 3 || gt.size() != 3) continue;
        ++checked;

        const StabilityTrial t = run_trial(dist, cfg, LipschitzLabeler::identity());
        EXPECT_EQ(t.m, 1u);
        for (std::size_t i = 0; i < 12; ++i)
            for (std::size_t j = 0; j < 12; ++j) {
                EXPECT_EQ(t.clustering_s.assignments[i] == t.clustering_s.assignments[j],
                          pair.s[i].component == pair.s[j].component);
                EXPECT_EQ(t.clustering_t.assignments[i] == t.clustering_t.assignments[j],
                          pair.t[i].component == pair.t[j].component);
            }
        std::vector<std::vector<double>> cs, ct, vs, vt;
        for (std::size_t k = 0; k < 3; ++k) {
            cs.push_back(gs[k].mean);
            ct.push_back(gt[k].mean);
            vs.push_back(vec(gs[k], 12));
            vt.push_back(vec(gt[k], 12));
        }
        EXPECT_NEAR(t.epsilon, hand_maxmin(cs, ct), 1e-12);
        EXPECT_NEAR(t.dmax, hand_maxmin(vs, vt), 1e-12);
        EXPECT_TRUE(t.bound_satisfied);
    }
    EXPECT_EQ(checked, 10);
}

TEST(RunTrial, RestartsModeDeterministic) {
    TrialConfig cfg;
    cfg.n = 300;
    cfg.seed = 77;
    const auto a = run_trial(SyntheticDistribution::gauss3(), cfg, LipschitzLabeler::identity());
    const auto b = run_trial(SyntheticDistribution::gauss3(), cfg, LipschitzLabeler::identity());
    EXPECT_EQ(a.dmax, b.dmax);
    EXPECT_EQ(a.tuple_s, b.tuple_s);
    EXPECT_EQ(a.clustering_t, b.clustering_t);
}

TEST(RunTrial, OracleRejectsLargeN) {
    TrialConfig cfg;
    cfg.n = 15;
    cfg.mode = ClusteringMode::oracle;
    EXPECT_THROW(run_trial(SyntheticDistribution::blobs3(), cfg, LipschitzLabeler::identity()), TooLarge);
}

TEST(Statistics, PercentileAndKendall) {
    EXPECT_DOUBLE_EQ(percentile({3, 1, 2, 4}, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(percentile({5}, 0.9), 5.0);
    EXPECT_DOUBLE_EQ(percentile({0, 10}, 0.9), 9.0);
    const std::vector<double> x{1, 2, 3, 4}, down{4, 3, 2, 1}, mixed{1, 3, 2, 4};
    EXPECT_DOUBLE_EQ(kendall_tau(x, down), -1.0);
    EXPECT_DOUBLE_EQ(kendall_tau(x, x), 1.0);
    EXPECT_DOUBLE_EQ(kendall_tau(x, mixed), 4.0 / 6.0);
}

TEST(Experiment, SingleLevelHasNoTrend) {
    ExperimentConfig cfg;
    cfg.ns = {64};
    cfg.trials = 4;
    const auto rep = convergence_experiment(SyntheticDistribution::blobs3(), cfg, LipschitzLabeler::identity());
    EXPECT_EQ(rep.levels.size(), 1u);
    EXPECT_FALSE(rep.kendall_tau.has_value());
    EXPECT_TRUE(report_summary(rep)["kendall_tau"].is_null());
}

TEST(Experiment, ZeroPerturbationCsvIsAllZero) {
    ExperimentConfig cfg;
    cfg.ns = {40, 80};
    cfg.trials = 3;
    cfg.m_override = 0;
    const auto rep = convergence_experiment(SyntheticDistribution::blobs3(), cfg, LipschitzLabeler::identity());
    std::istringstream csv(report_csv(rep));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "n,trial,m,epsilon,dmax,bound,bound_satisfied,mode,seed");
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
        ASSERT_EQ(f.size(), 9u);
        EXPECT_EQ(f[2], "0");
        EXPECT_EQ(std::stod(f[4]), 0.0);
    }
    EXPECT_EQ(rows, 6);
}

TEST(Experiment, GammaZeroStillReports) {
    ExperimentConfig cfg;
    cfg.ns = {64, 256};
    cfg.trials = 5;
    cfg.gamma = 0.0;
    const auto rep = convergence_experiment(SyntheticDistribution::blobs3(), cfg, LipschitzLabeler::identity());
    ASSERT_EQ(rep.levels.size(), 2u);
    EXPECT_EQ(rep.levels[0].m, 1u);
    EXPECT_TRUE(rep.kendall_tau.has_value());
    EXPECT_EQ(report_summary(rep)["size_mode"], "fraction");
}

TEST(Experiment, DeterministicAcrossWorkerCounts) {
    ExperimentConfig cfg;
    cfg.ns = {100, 200};
    cfg.trials = 4;
    cfg.workers = 1;
    const auto a = convergence_experiment(SyntheticDistribution::blobs3(), cfg, LipschitzLabeler::identity());
    cfg.workers = 3;
    const auto b = convergence_experiment(SyntheticDistribution::blobs3(), cfg, LipschitzLabeler::identity());
    EXPECT_EQ(report_csv(a), report_csv(b));
    cfg.ns = {200, 100};
    EXPECT_THROW(convergence_experiment(SyntheticDistribution::blobs3(), cfg, LipschitzLabeler::identity()), InvalidArgument);
}
