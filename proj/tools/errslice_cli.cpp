// errslice: batch pipeline, stability experiments, tuple distance and the
// HTTP service.

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "errslice/explanation.hpp"
#include "errslice/io.hpp"
#include "errslice/pipeline.hpp"
#include "errslice/remote_client.hpp"
#include "errslice/service.hpp"
#include "errslice/stability.hpp"

namespace {

using namespace errslice;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitClient = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::size_t> parse_ns(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            const unsigned long long v = std::stoull(item, &pos);
            if (pos != item.size() || v == 0) throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw UsageError("--ns expects a comma-separated list of positive integers, got '" + s + "'");
        }
    }
    if (out.empty()) throw UsageError("--ns must not be empty");
    return out;
}

// Deterministic by default so repeated runs write identical artifacts.
std::string created_at(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
        const std::time_t t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
        std::tm tm{};
        gmtime_r(&t, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }
    return "unspecified";
}

struct RemoteFlags {
    std::string endpoint = RemoteClientConfig{}.endpoint;
    std::string model = RemoteClientConfig{}.model;
    std::string key_env = RemoteClientConfig{}.api_key_env;
    double timeout = 30.0;
    std::size_t parallelism = 4;

    void add(CLI::App* app) {
        app->add_option("--endpoint", endpoint, "Completion endpoint URL");
        app->add_option("--model", model, "Remote model name");
        app->add_option("--api-key-env", key_env, "Environment variable holding the API key");
        app->add_option("--timeout", timeout, "Request timeout in seconds");
        app->add_option("--parallelism", parallelism, "Concurrent remote requests");
    }
    RemoteClientConfig config() const {
        RemoteClientConfig c;
        c.endpoint = endpoint;
        c.model = model;
        c.api_key_env = key_env;
        c.timeout_seconds = timeout;
        c.max_parallelism = parallelism;
        return c;
    }
};

struct PipelineFlags {
    std::string data;
    double q = 0.98;
    std::string k = "auto";
    std::uint64_t seed = 0;
    std::size_t restarts = 16;
    bool subcluster = false;
    std::string label = "none";
    std::string task = "sentiment classification";
    std::size_t max_tokens = 4000;
    std::string out;
    std::string created_at;
    RemoteFlags remote;
};

int run_pipeline_cmd(const PipelineFlags& f, bool json) {
    PipelineConfig cfg;
    cfg.q = f.q;
    if (f.k != "auto") {
        try {
            std::size_t pos = 0;
            cfg.k = std::stoull(f.k, &pos);
            if (pos != f.k.size() || *cfg.k == 0) throw std::invalid_argument(f.k);
        } catch (const std::exception&) {
            throw UsageError("--k must be 'auto' or a positive integer");
        }
    }
    if (!(f.q >= 0.0 && f.q < 1.0)) throw UsageError("--q must lie in [0, 1)");
    if (f.restarts == 0) throw UsageError("--restarts must be >= 1");
    cfg.seed = f.seed;
    cfg.restarts = f.restarts;
    cfg.subcluster = f.subcluster;
    cfg.label = f.label;
    cfg.prompt.task = f.task;
    cfg.prompt.max_tokens = f.max_tokens;

    const Dataset d = load_dataset(f.data);
    std::unique_ptr<LabelingClient> client;
    if (f.label == "stub") client = std::make_unique<StubClient>();
    else if (f.label == "remote") client = std::make_unique<RemoteClient>(f.remote.config());

    const PipelineResult r = run_pipeline(d, cfg, client.get());
    RunStore store(f.out);
    RunArtifact a = make_artifact(d, f.data, cfg, r, created_at(f.created_at));
    a.run_id = store.save(a);

    const auto rows = group_rows(r.labels, r.overall_accuracy);
    if (json) {
        ojson j = to_json(a);
        j["overall_accuracy"] = r.overall_accuracy;
        ojson groups = ojson::array();
        for (const auto& g : rows)
            groups.push_back({{"cluster", g.cluster}, {"label", g.label}, {"size", g.size}, {"accuracy", g.accuracy}, {"delta", g.delta}});
        j["groups"] = groups;
        std::cout << j.dump(2) << '\n';
    } else {
        std::cout << render_group_table(rows, r.overall_accuracy, d.name);
        std::cout << "run: " << (store.root() / a.run_id).string() << '\n';
    }
    for (const auto& [k, l] : r.labels)
        if (l.error) {
            std::cerr << "labeling failed for cluster " << k << ": " << *l.error << '\n';
            return kExitClient;
        }
    return kExitOk;
}

struct StabilityFlags {
    std::string dist = "blobs3";
    std::string ns = "256,1024,4096";
    std::size_t trials = 20;
    double gamma = 0.25;
    long long m = -1;
    std::size_t k = 3;
    std::string mode = "restarts";
    std::size_t restarts = 16;
    std::uint64_t seed = 0;
    std::string labeler = "identity";
    std::string out;
};

int run_stability_cmd(const StabilityFlags& f, bool json) {
    ExperimentConfig cfg;
    cfg.ns = parse_ns(f.ns);
    cfg.trials = f.trials;
    cfg.gamma = f.gamma;
    if (f.m >= 0) cfg.m_override = static_cast<std::size_t>(f.m);
    cfg.k = f.k;
    try {
        cfg.mode = clustering_mode_from_string(f.mode);
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    cfg.restarts = f.restarts;
    cfg.seed = f.seed;
    const auto dist = SyntheticDistribution::by_name(f.dist);
    const auto labeler = LipschitzLabeler::by_name(f.labeler);
    const ExperimentReport rep = convergence_experiment(dist, cfg, labeler);

    std::filesystem::create_directories(f.out);
    {
        std::ofstream csv(std::filesystem::path(f.out) / "report.csv", std::ios::binary);
        csv << report_csv(rep);
    }
    const ojson summary = report_summary(rep);
    {
        std::ofstream js(std::filesystem::path(f.out) / "summary.json", std::ios::binary);
        js << summary.dump(2) << '\n';
    }
    if (json) {
        std::cout << summary.dump(2) << '\n';
    } else {
        std::printf("distribution=%s mode=%s size_mode=fraction k=%zu gamma=%g trials=%zu\n", rep.distribution.c_str(),
                    to_string(cfg.mode), cfg.k, cfg.gamma, cfg.trials);
        std::printf("%8s %6s %14s %14s %10s\n", "n", "m", "median_dmax", "p90_dmax", "violations");
        for (const auto& l : rep.levels)
            std::printf("%8zu %6zu %14.6g %14.6g %10.3f\n", l.n, l.m, l.median, l.p90, l.violation_rate);
        if (rep.kendall_tau) std::printf("kendall_tau=%g strictly_decreasing=%s\n", *rep.kendall_tau, rep.strictly_decreasing ? "yes" : "no");
        std::printf("bound_violation_rate=%g\n", rep.violation_rate);
    }
    return kExitOk;
}

int run_dmax_cmd(const std::string& a, const std::string& b, const std::string& mode, bool json) {
    SizeMode m;
    try {
        m = size_mode_from_string(mode);
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const double v = dmax(load_tuple(a), load_tuple(b), m);
    if (json) std::cout << ojson{{"dmax", v}, {"size_mode", to_string(m)}}.dump() << '\n';
    else std::printf("%.17g\n", v);
    return kExitOk;
}

int run_serve_cmd(const std::string& host, int port, const std::string& store, const std::string& cors,
                  const RemoteFlags& remote, bool use_remote, bool json) {
    ServiceConfig cfg;
    cfg.store = store;
    cfg.cors_origin = cors;
    if (use_remote) cfg.remote = remote.config();
    Service service(cfg);
    service.rehydrate();
    httplib::Server server;
    service.bind(server);
    if (json) std::cout << ojson{{"host", host}, {"port", port}, {"store", store}}.dump() << std::endl;
    else std::cout << "listening on http://" << host << ':' << port << " (store " << store << ")" << std::endl;
    if (!server.listen(host, port)) {
        std::cerr << "cannot listen on " << host << ':' << port << '\n';
        return kExitData;
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Error-slice discovery: cluster high-loss evaluation examples and label the groups"};
    app.require_subcommand(1);
    bool json = false;
    app.add_flag("--json", json, "Machine-readable output");

    PipelineFlags pf;
    auto* pipeline = app.add_subcommand("pipeline", "Slice, cluster, label and persist one run");
    pipeline->add_option("--data", pf.data, "Dataset file")->required();
    pipeline->add_option("--q", pf.q, "Loss quantile in [0,1)");
    pipeline->add_option("--k", pf.k, "Cluster count or 'auto'");
    pipeline->add_option("--seed", pf.seed, "Base seed");
    pipeline->add_option("--restarts", pf.restarts, "k-means++ restarts");
    pipeline->add_flag("--subcluster", pf.subcluster, "Split groups of 25 or more");
    pipeline->add_option("--label", pf.label, "none | stub | remote")->check(CLI::IsMember({"none", "stub", "remote"}));
    pipeline->add_option("--task", pf.task, "Task name substituted into the prompt");
    pipeline->add_option("--max-tokens", pf.max_tokens, "Prompt token budget");
    pipeline->add_option("--out", pf.out, "Run store directory")->required();
    pipeline->add_option("--created-at", pf.created_at, "Timestamp recorded in the artifact");
    pipeline->add_flag("--json", json, "Machine-readable output");
    pf.remote.add(pipeline);

    StabilityFlags sf;
    auto* stability = app.add_subcommand("stability", "Run the d_max convergence experiment");
    stability->add_option("--dist", sf.dist, "blobs3 | gauss3");
    stability->add_option("--ns", sf.ns, "Comma-separated sample sizes");
    stability->add_option("--trials", sf.trials, "Trials per sample size");
    stability->add_option("--gamma", sf.gamma, "Perturbation exponent: m = floor(n^gamma)");
    stability->add_option("--m", sf.m, "Fixed perturbation size (overrides --gamma)");
    stability->add_option("--k", sf.k, "Cluster count");
    stability->add_option("--mode", sf.mode, "oracle | restarts");
    stability->add_option("--restarts", sf.restarts, "Restarts in restarts mode");
    stability->add_option("--seed", sf.seed, "Base seed");
    stability->add_option("--labeler", sf.labeler, "identity | tanh3 | scaled2");
    stability->add_option("--out", sf.out, "Output directory")->required();
    stability->add_flag("--json", json, "Machine-readable output");

    std::string tuple_a, tuple_b, size_mode = "count";
    auto* dmax_cmd = app.add_subcommand("dmax", "Distance between two explanation tuples");
    dmax_cmd->add_option("--tuple-a", tuple_a, "Tuple JSON file")->required();
    dmax_cmd->add_option("--tuple-b", tuple_b, "Tuple JSON file")->required();
    dmax_cmd->add_option("--size-mode", size_mode, "count | fraction");
    dmax_cmd->add_flag("--json", json, "Machine-readable output");

    std::string host = "127.0.0.1", store = "runs", cors = "*";
    int port = 8080;
    bool use_remote = false;
    RemoteFlags sr;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port");
    serve->add_option("--store", store, "Run store directory");
    serve->add_option("--cors-origin", cors, "Allowed CORS origin");
    serve->add_flag("--remote", use_remote, "Enable the remote labeling client");
    serve->add_flag("--json", json, "Machine-readable output");
    sr.add(serve);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*pipeline) return run_pipeline_cmd(pf, json);
        if (*stability) return run_stability_cmd(sf, json);
        if (*dmax_cmd) return run_dmax_cmd(tuple_a, tuple_b, size_mode, json);
        if (*serve) return run_serve_cmd(host, port, store, cors, sr, use_remote, json);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ClientError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitClient;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
