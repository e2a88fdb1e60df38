// Acceptance suite: one PASS/FAIL line per primary criterion. Exit status is
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "errslice/service.hpp"
#include "errslice/pipeline.hpp"
#include "errslice/stability.hpp"

using namespace errslice;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    double budget_seconds;  // 0: no runtime bound
    std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string data_path(const std::string& name) { return std::string(ERRSLICE_TEST_DATA) + "/" + name; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("errslice_accept_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

// ---- metric laws ------------------------------------------------------------

double naive_norm(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

double brute_force_dmax(const ExplanationTuple& a, const ExplanationTuple& b, SizeMode mode) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.k(); ++i) {
        double best = 1e300;
        for (std::size_t j = 0; j < a.k(); ++j) {
            const double v = naive_norm(message_vector(a.messages[i], mode), message_vector(b.messages[j], mode)) +
                             naive_norm(message_vector(b.messages[i], mode), message_vector(a.messages[j], mode));
            best = std::min(best, v);
        }
        worst = std::max(worst, best);
    }
    return worst;
}

ExplanationTuple random_tuple(Rng& rng, std::size_t k, std::size_t dw) {
    ExplanationTuple t;
    t.size_mode = SizeMode::fraction;
    for (std::size_t i = 0; i < k; ++i) {
        ExplanationMessage m;
        m.w.resize(dw);
        for (auto& v : m.w) v = rng.uniform(-1.0, 1.0);
        m.size = 1 + rng.below(40);
        m.fraction = static_cast<double>(m.size) / 100.0;
        m.accuracy = rng.uniform();
        t.messages.push_back(std::move(m));
    }
    return t;
}

ExplanationTuple permuted(const ExplanationTuple& t, const std::vector<std::size_t>& perm) {
    ExplanationTuple out = t;
    for (std::size_t i = 0; i < perm.size(); ++i) out.messages[i] = t.messages[perm[i]];
    return out;
}

std::vector<std::size_t> random_permutation(Rng& rng, std::size_t k) {
    std::vector<std::size_t> p(k);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = k; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
    return p;
}

Outcome metric_laws() {
    Rng rng(2024);
    std::size_t identity = 0, nonneg = 0, symmetric = 0, oracle = 0, perm_self = 0, perm_one_side = 0;
    std::size_t perm_involution = 0, perm_both = 0, involution_trials = 0;
    double worst_oracle = 0.0, worst_perm = 0.0;
    const std::size_t pairs = 200;
    for (std::size_t t = 0; t < pairs; ++t) {
        const std::size_t k = 1 + rng.below(6), dw = 1 + rng.below(8);
        const ExplanationTuple a = random_tuple(rng, k, dw), b = random_tuple(rng, k, dw);
        const SizeMode mode = rng.bernoulli(0.5) ? SizeMode::count : SizeMode::fraction;
        const double ab = dmax(a, b, mode);
        identity += dmax(a, a, mode) == 0.0 && dmax(b, b, mode) == 0.0;
        nonneg += ab >= 0.0;
        symmetric += ab == dmax(b, a, mode);
        const double diff = std::abs(ab - brute_force_dmax(a, b, mode));
        worst_oracle = std::max(worst_oracle, diff);
        oracle += diff <= 1e-12;

        const auto perm = random_permutation(rng, k);
        const double self = dmax(a, permuted(a, perm), mode);
        perm_self += self == 0.0;
        const double one = dmax(permuted(a, perm), b, mode);
        perm_one_side += one == ab;
        worst_perm = std::max({worst_perm, self, std::abs(one - ab)});
        perm_both += dmax(permuted(a, perm), permuted(b, perm), mode) == ab;

        // involution: disjoint transpositions only
        std::vector<std::size_t> inv(k);
        std::iota(inv.begin(), inv.end(), std::size_t{0});
        for (std::size_t i = 0; i + 1 < k; i += 2)
            if (rng.bernoulli(0.5)) std::swap(inv[i], inv[i + 1]);
        ++involution_trials;
        perm_involution += dmax(a, permuted(a, inv), mode) == 0.0;
    }
    const bool core = identity == pairs && nonneg == pairs && symmetric == pairs && oracle == pairs;
    const bool perm_ok = perm_self == pairs && perm_one_side == pairs;
    std::ostringstream d;
    d << "identity " << identity << "/" << pairs << ", non-negativity " << nonneg << "/" << pairs << ", symmetry "
      << symmetric << "/" << pairs << ", oracle " << oracle << "/" << pairs << " (max diff " << fmt("%.1e", worst_oracle)
      << "), permutation: d(M,pi M)=0 " << perm_self << "/" << pairs << ", d(pi M,M')=d(M,M') " << perm_one_side << "/"
      << pairs << " (max deviation " << fmt("%.3g", worst_perm) << "); holds for involutions " << perm_involution << "/"
      << involution_trials << " and for a shared permutation " << perm_both << "/" << pairs;
    return {core && perm_ok, d.str()};
}

// ---- clustering optimality ----------------------------------------------------

// k well separated balls: min center distance >= 4 * max ball radius.
PointSet separated_instance(Rng& rng, std::size_t n, std::size_t k, std::size_t dim) {
    const double radius = 1.0;
    std::vector<std::vector<double>> centers;
    while (centers.size() < k) {
        std::vector<double> c(dim);
        for (auto& v : c) v = rng.uniform(-12.0, 12.0);
        bool ok = true;
        for (const auto& o : centers) ok = ok && naive_norm(c, o) >= 4.0 * radius;
        if (ok) centers.push_back(std::move(c));
    }
    PointSet p(0, dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = centers[i % k];
        std::vector<double> x(dim);
        double r2;
        do {
            r2 = 0.0;
            for (auto& v : x) {
                v = rng.uniform(-radius, radius);
                r2 += v * v;
            }
        } while (r2 > radius * radius);
        for (std::size_t j = 0; j < dim; ++j) x[j] += c[j];
        p.push_back(x);
    }
    return p;
}

Outcome clustering_optimality() {
    Rng rng(77);
    std::size_t hits = 0;
    const std::size_t instances = 100;
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t k = 1 + rng.below(3);
        const std::size_t n = std::max<std::size_t>(k + 1, 4 + rng.below(9));  // 4..12
        const std::size_t dim = 1 + rng.below(3);
        const PointSet p = separated_instance(rng, n, k, dim);
        Dataset d;
        d.name = "opt";
        d.embedding_dim = dim;
        for (std::size_t i = 0; i < n; ++i)
            d.records.push_back(Record{"p" + std::to_string(i), "", 0, 0, 1.0, {p[i].begin(), p[i].end()}});
        KMeansConfig cfg;
        cfg.k = k;
        cfg.restarts = 32;
        cfg.seed = t;
        const double got = cluster_slice(d, whole_dataset(d), cfg).objective;
        const double best = exact_kmeans_oracle(p, k).objective;
        hits += std::abs(got - best) <= 1e-9 * std::max(best, 1e-300) || got == best;
    }
    return {hits >= 95, std::to_string(hits) + "/" + std::to_string(instances) + " within 1e-9 relative (need >= 95)"};
}

// ---- stability ----------------------------------------------------------------

Outcome convergence() {
    ExperimentConfig cfg;
    cfg.ns = {256, 1024, 4096};
    cfg.trials = 20;
    cfg.gamma = 0.25;
    cfg.k = 3;
    cfg.mode = ClusteringMode::restarts;
    const auto rep = convergence_experiment(SyntheticDistribution::blobs3(), cfg, LipschitzLabeler::identity());
    const double m256 = rep.levels[0].median, m4096 = rep.levels[2].median;
    const bool halved = m4096 < 0.5 * m256;
    std::ostringstream d;
    d << "medians";
    for (const auto& l : rep.levels) d << " n=" << l.n << ":" << fmt("%.4g", l.median);
    d << ", strictly decreasing " << (rep.strictly_decreasing ? "yes" : "no") << ", ratio 4096/256 "
      << fmt("%.3f", m4096 / m256) << " (need < 0.5), bound violation rate " << fmt("%.3f", rep.violation_rate);
    return {rep.strictly_decreasing && halved, d.str()};
}

Outcome zero_perturbation() {
    ExperimentConfig cfg;
    cfg.ns = {256, 1024, 4096};
    cfg.trials = 20;
    cfg.m_override = 0;
    const auto rep = convergence_experiment(SyntheticDistribution::blobs3(), cfg, LipschitzLabeler::identity());
    std::size_t zero = 0;
    for (const auto& t : rep.trials) zero += t.dmax == 0.0 && t.epsilon == 0.0;

    ExperimentConfig oc = cfg;
    oc.ns = {12};
    oc.mode = ClusteringMode::oracle;
    const auto orep = convergence_experiment(SyntheticDistribution::gauss3(), oc, LipschitzLabeler::tanh_scaled(3.0));
    for (const auto& t : orep.trials) zero += t.dmax == 0.0 && t.epsilon == 0.0;
    const std::size_t total = rep.trials.size() + orep.trials.size();
    return {zero == total, std::to_string(zero) + "/" + std::to_string(total) + " trials with d_max == 0 (restarts and oracle modes)"};
}

// ---- slicing --------------------------------------------------------------------

Outcome slicing() {
    Rng rng(1000);
    std::size_t ok = 0;
    const std::size_t pairs = 1000;
    for (std::size_t t = 0; t < pairs; ++t) {
        const std::size_t n = 1 + rng.below(2000);
        Dataset d;
        d.name = "s";
        d.embedding_dim = 1;
        d.records.reserve(n);
        const bool coarse = rng.bernoulli(0.5);
        for (std::size_t i = 0; i < n; ++i)
            d.records.push_back(Record{"r" + std::to_string(i), "", 0, 0,
                                       coarse ? static_cast<double>(rng.below(10)) : rng.uniform() * 5.0, {0.0}});
        const double q = rng.uniform();
        const EvalSlice s = slice_by_quantile(d, q);

        const auto want = static_cast<std::size_t>(std::max(1.0, std::round((1.0 - q) * static_cast<double>(n))));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return d.records[a].loss > d.records[b].loss; });
        std::vector<std::size_t> expect(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(want));
        std::sort(expect.begin(), expect.end());

        std::vector<bool> in(n, false);
        double min_in = 1e300, max_out = -1e300;
        for (std::size_t i : s.members) {
            in[i] = true;
            min_in = std::min(min_in, d.records[i].loss);
        }
        for (std::size_t i = 0; i < n; ++i)
            if (!in[i]) max_out = std::max(max_out, d.records[i].loss);
        ok += s.size() == want && min_in >= max_out && s.members == expect;
    }
    return {ok == pairs, std::to_string(ok) + "/" + std::to_string(pairs) + " (n, q) pairs match size rule and sort oracle"};
}

Outcome heuristic_k() {
    const std::size_t a = default_k(5000), b = default_k(574), c = default_k(1);
    return {a == 50 && b == 17 && c == 1,
            "default_k(5000)=" + std::to_string(a) + ", default_k(574)=" + std::to_string(b) + ", default_k(1)=" + std::to_string(c)};
}

// ---- prompts --------------------------------------------------------------------

Outcome prompt_fidelity() {
    const auto spec = nlohmann::json::parse(slurp(data_path("golden/prompt_docs.json")));
    std::size_t equal = 0;
    for (const std::string name : {"1", "2", "25"}) {
        const auto docs = spec["cases"][name].get<std::vector<std::string>>();
        equal += docs.size() == std::stoul(name) &&
                 build_prompt(docs, spec["task"].get<std::string>()) == slurp(data_path("golden/prompt_" + name + ".txt"));
    }
    std::vector<std::string> docs;
    for (int d = 0; d < 3; ++d) {
        std::string doc;
        for (int i = 0; i < 2500; ++i) doc += (i ? " w" : "w") + std::to_string(d * 10000 + i);
        docs.push_back(doc);
    }
    const std::string out = truncate_tokens(build_prompt(docs, "sentiment classification"), 4000);
    std::istringstream in(out);
    std::size_t tokens = 0;
    for (std::string w; in >> w;) ++tokens;
    const std::string suffix = "\n Group label:";
    const bool suffix_ok = out.size() >= suffix.size() && out.compare(out.size() - suffix.size(), suffix.size(), suffix) == 0;
    std::ostringstream d;
    d << "golden byte equality " << equal << "/3, truncated prompt " << tokens << " tokens (<= 4000), suffix "
      << (suffix_ok ? "preserved" : "missing");
    return {equal == 3 && tokens <= 4000 && suffix_ok, d.str()};
}

// ---- sub-clustering -----------------------------------------------------------------

Outcome subclustering() {
    Rng rng(300);
    Dataset d;
    d.name = "sub";
    d.embedding_dim = 8;
    const char* topics[] = {"custard pudding dessert", "dentist cleaning appointment", "hotel room lobby",
                            "mechanic brakes engine", "espresso latte barista", "club music dance"};
    for (std::size_t i = 0; i < 300; ++i) {
        std::vector<double> e(8);
        const std::size_t topic = i % 6;
        for (std::size_t j = 0; j < 8; ++j) e[j] = rng.normal() * 0.4 + (j == topic ? 3.0 : 0.0);
        d.records.push_back(Record{"x" + std::to_string(i), std::string(topics[topic]) + " review " + std::to_string(i),
                                   0, rng.bernoulli(0.3) ? 1 : 0, 1.0, e});
    }
    Clustering one;
    one.slice = whole_dataset(d);
    one.k = 1;
    one.assignments.assign(300, 0);
    one.centers = detail::centroids(gather_embeddings(d, one.slice.members), one.assignments, 1);
    StubClient stub;
    const LabelingOutcome out = label_all(d, one, stub, {}, 25, {});
    std::size_t largest = 0, labeled = 0;
    std::vector<std::size_t> all;
    for (std::size_t k = 0; k < out.clustering.k; ++k) {
        const auto m = out.clustering.members_of(k);
        largest = std::max(largest, m.size());
        all.insert(all.end(), m.begin(), m.end());
        labeled += out.labels.count(k) && out.labels.at(k).label.has_value() && out.labels.at(k).size == m.size();
    }
    std::sort(all.begin(), all.end());
    const bool union_ok = all == one.slice.members;
    std::ostringstream d2;
    d2 << out.clustering.k << " labeled clusters, largest " << largest << " (need < 25), membership union "
       << (union_ok ? "preserved" : "changed") << ", labels " << labeled << "/" << out.clustering.k;
    return {largest < 25 && union_ok && labeled == out.clustering.k, d2.str()};
}

// ---- end to end -----------------------------------------------------------------------

int run_cli(const std::string& args, std::string* out) {
    const std::string cmd = std::string(ERRSLICE_CLI) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return -1;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out->append(buf, n);
    const int status = pclose(p);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome end_to_end_determinism() {
    const fs::path a = scratch("e2e_a"), b = scratch("e2e_b");
    const std::string args = "pipeline --data " + data_path("fixture200.jsonl") +
                             " --q 0.7 --k auto --seed 42 --restarts 16 --subcluster --label stub --out ";
    std::string out_a, out_b;
    const int ca = run_cli(args + a.string(), &out_a), cb = run_cli(args + b.string(), &out_b);
    std::size_t files = 0, identical = 0;
    std::set<fs::path> names;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) names.insert(fs::relative(e.path(), a));
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) names.insert(fs::relative(e.path(), b));
    for (const auto& n : names) {
        ++files;
        identical += fs::exists(a / n) && fs::exists(b / n) && slurp(a / n) == slurp(b / n);
    }
    for (auto* s : {&out_a, &out_b}) {
        const auto at = s->find("run: ");
        if (at != std::string::npos) s->erase(at, s->find('\n', at) - at);
    }
    const bool columns = out_a.find("Group label") != std::string::npos && out_a.find("Size") != std::string::npos &&
                         out_a.find("Group acc.") != std::string::npos;
    fs::remove_all(a);
    fs::remove_all(b);
    std::ostringstream d;
    d << "exit codes " << ca << "/" << cb << ", " << identical << "/" << files << " artifact files byte-identical, stdout "
      << (out_a == out_b ? "identical" : "differs") << ", table columns " << (columns ? "present" : "missing");
    return {ca == 0 && cb == 0 && files > 0 && identical == files && out_a == out_b && columns, d.str()};
}

std::string large_dataset(const fs::path& dir) {
    fs::create_directories(dir);
    const auto dist = SyntheticDistribution::gauss3();
    Rng rng(6);
    std::vector<SampledPoint> pts;
    for (int i = 0; i < 7000; ++i) pts.push_back(dist.sample(rng));
    Dataset d = synthetic_dataset(dist, pts, "large");
    for (auto& r : d.records) r.text = "component " + std::to_string(r.prediction) + " sample";
    write_dataset(dir / "large.jsonl", d);
    return (dir / "large.jsonl").string();
}

Outcome service_replay() {
    const fs::path store = scratch("svc_store"), data = scratch("svc_data");
    ServiceConfig cfg;
    cfg.store = store;
    Service svc(cfg);
    httplib::Response res;
    svc.post_dataset({{"path", data_path("fixture200.jsonl")}});
    const std::string s1 = svc.post_session({{"dataset", "fixture-reviews"}})["session_id"];
    svc.post_slice(s1, {{"q", 0.7}});
    svc.post_cluster(s1, {{"seed", 42}, {"subcluster", true}});
    svc.post_label(s1, {{"client", "stub"}}, res);
    svc.post_slice(s1, {{"q", 0.9}});
    svc.post_cluster(s1, {{"k", 3}, {"seed", 5}, {"restarts", 8}});
    svc.post_label(s1, {{"client", "stub"}}, res);

    svc.post_dataset({{"path", large_dataset(data)}});
    const std::string s2 = svc.post_session({{"dataset", "large"}})["session_id"];
    svc.post_slice(s2, {{"q", 0.6}});
    svc.post_cluster(s2, {{"k", 5}});

    std::size_t runs = 0, replayed = 0;
    std::set<std::string> ops;
    for (const auto& id : svc.store().list()) {
        const RunArtifact a = svc.store().load(id);
        ++runs;
        ops.insert(a.config["op"].get<std::string>());
        replayed += svc.replay(a) == a.response;
    }
    std::size_t max_points = 0;
    for (std::size_t cap : {std::size_t{5000}, std::size_t{6000}, std::size_t{1000000}}) {
        max_points = std::max(max_points, svc.get_projection(s2, cap)["points"].size());
        max_points = std::max(max_points, svc.get_projection(s1, cap)["points"].size());
    }
    fs::remove_all(store);
    fs::remove_all(data);
    std::ostringstream d;
    d << replayed << "/" << runs << " persisted responses reproduced across ops {";
    for (auto it = ops.begin(); it != ops.end(); ++it) d << (it == ops.begin() ? "" : ",") << *it;
    d << "}, largest projection " << max_points << " points of 7000 (cap 5000)";
    return {runs > 0 && replayed == runs && ops.size() == 5 && max_points <= 5000 && max_points > 0, d.str()};
}

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"metric laws", 5, metric_laws},
        {"clustering optimality", 60, clustering_optimality},
        {"convergence", 600, convergence},
        {"m=0 exactness", 0, zero_perturbation},
        {"slicing", 5, slicing},
        {"heuristic k", 0, heuristic_k},
        {"prompt fidelity", 0, prompt_fidelity},
        {"sub-clustering", 0, subclustering},
        {"end-to-end determinism", 0, end_to_end_determinism},
        {"service replay", 0, service_replay},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        bool pass = o.pass;
        std::string timing = fmt("%.2fs", secs);
        if (c.budget_seconds > 0) {
            timing += " of " + fmt("%.0fs", c.budget_seconds);
            pass = pass && secs < c.budget_seconds;
        }
        std::printf("%s  %-24s %s [%s]\n", pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), timing.c_str());
        std::fflush(stdout);
        failed += pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
