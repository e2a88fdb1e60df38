#pragma once

// JSON-over-HTTP session service. Every mutating route persists a RunArtifact
// whose config snapshot is enough to recompute the exact response payload.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

// resolv.h, reached through httplib, defines a _res macro that breaks Eigen.
#include <Eigen/Dense>
#include <httplib.h>

#include "errslice/analytics.hpp"
#include "errslice/clustering.hpp"
#include "errslice/explanation.hpp"
#include "errslice/io.hpp"
#include "errslice/labeling.hpp"
#include "errslice/remote_client.hpp"
#include "errslice/slicing.hpp"

namespace errslice {

struct ServiceConfig {
    std::filesystem::path store = "runs";
    std::string cors_origin = "*";
    std::optional<RemoteClientConfig> remote;
    PromptSpec prompt;
    std::size_t projection_cap = 5000;  // hard upper bound on projected points
};

/// HTTP error with a JSON envelope.
class HttpError : public Error {
public:
    HttpError(int status, std::string code, const std::string& message, ojson detail = nullptr)
        : Error(message), status_(status), code_(std::move(code)), detail_(std::move(detail)) {}
    int status() const { return status_; }
    ojson envelope() const { return {{"code", code_}, {"message", what()}, {"detail", detail_}}; }

private:
    int status_;
    std::string code_;
    ojson detail_;
};

struct ClusterParams {
    std::optional<std::size_t> k;
    std::uint64_t seed = 0;
    std::size_t restarts = 16;
    bool subcluster = false;

    ojson to_json() const {
        return {{"k", k ? ojson(*k) : ojson(nullptr)}, {"seed", seed}, {"restarts", restarts}, {"subcluster", subcluster}};
    }
    static ClusterParams from_json(const ojson& j) {
        ClusterParams p;
        if (j.contains("k") && !j["k"].is_null()) p.k = j["k"].get<std::size_t>();
        p.seed = j.value("seed", std::uint64_t{0});
        p.restarts = j.value("restarts", std::size_t{16});
        p.subcluster = j.value("subcluster", false);
        return p;
    }
    KMeansConfig kmeans() const {
        KMeansConfig kc;
        kc.k = k;
        kc.seed = seed;
        kc.restarts = restarts;
        return kc;
    }
};

/// Pure computations shared by live handlers and replay.
namespace service_ops {

inline constexpr double kDefaultQuantile = 0.98;
inline constexpr std::size_t kPreviewSize = 10;

inline std::vector<std::size_t> by_loss_desc(const Dataset& d, std::vector<std::size_t> idx) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return d[a].loss > d[b].loss; });
    return idx;
}

inline ojson dataset_payload(const Dataset& d) {
    return {{"name", d.name}, {"n", d.size()}, {"dim", d.embedding_dim}, {"num_classes", d.num_classes}};
}

inline ojson slice_payload(const Dataset& d, const EvalSlice& s) {
    ojson preview = ojson::array();
    const auto order = by_loss_desc(d, s.members);
    for (std::size_t i = 0; i < order.size() && i < kPreviewSize; ++i) preview.push_back(d[order[i]].id);
    return {{"slice_size", s.size()}, {"members_preview", preview}};
}

inline Clustering cluster(const Dataset& d, const EvalSlice& s, const ClusterParams& p) {
    Clustering c = cluster_slice(d, s, p.kmeans());
    if (p.subcluster) c = subcluster(d, c, 25, p.kmeans());
    return c;
}

inline ojson cluster_payload(const Clustering& c, const std::string& clustering_id) {
    return {{"clustering_id", clustering_id}, {"k", c.k}, {"sizes", c.sizes()}, {"objective", c.objective}};
}

inline ojson label_payload(const Dataset& d, const LabelingOutcome& out) {
    ojson groups = ojson::object();
    for (const auto& [k, l] : out.labels) {
        ojson g = {{"label", l.label ? ojson(*l.label) : ojson(nullptr)}, {"size", l.size}, {"accuracy", l.accuracy}};
        if (l.error) g["error"] = *l.error;
        groups[std::to_string(k)] = g;
    }
    return {{"overall_accuracy", group_accuracy(d, whole_dataset(d).members)}, {"groups", groups}};
}

} // namespace service_ops

class Service {
public:
    explicit Service(ServiceConfig config) : config_(std::move(config)), store_(config_.store) {}

    RunStore& store() { return store_; }

    /// Registers every route on `server`.
    void bind(httplib::Server& server) {
        server.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                                    {"Access-Control-Allow-Headers", "Content-Type"},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
        server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
        server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"status":"ok"})", "application/json");
        });
        route(server, "POST", R"(/datasets)", [this](const auto& req, auto&) { return post_dataset(body_of(req)); });
        route(server, "POST", R"(/sessions)", [this](const auto& req, auto&) { return post_session(body_of(req)); });
        route(server, "POST", R"(/sessions/([^/]+)/slice)",
              [this](const auto& req, auto&) { return post_slice(req.matches[1], body_of(req)); });
        route(server, "POST", R"(/sessions/([^/]+)/cluster)",
              [this](const auto& req, auto&) { return post_cluster(req.matches[1], body_of(req)); });
        route(server, "GET", R"(/sessions/([^/]+)/table)", [this](const auto& req, auto&) {
            return get_table(req.matches[1], req.has_param("sort") ? req.get_param_value("sort") : "loss",
                             param_size(req, "limit", 100));
        });
        route(server, "GET", R"(/sessions/([^/]+)/tokens)",
              [this](const auto& req, auto&) { return get_tokens(req.matches[1], param_size(req, "top", 20)); });
        route(server, "GET", R"(/sessions/([^/]+)/projection)", [this](const auto& req, auto&) {
            return get_projection(req.matches[1], param_size(req, "cap", config_.projection_cap));
        });
        route(server, "POST", R"(/sessions/([^/]+)/label)",
              [this](const auto& req, auto& res) { return post_label(req.matches[1], body_of(req), res); });
        route(server, "GET", R"(/runs/([^/]+))", [this](const auto& req, auto&) { return get_run(req.matches[1]); });
    }

    // ---- handlers (callable without HTTP) ---------------------------------

    ojson post_dataset(const ojson& body) {
        const std::string path = string_field(body, "path");
        if (!std::filesystem::exists(path)) throw HttpError(404, "not_found", "dataset file not found", path);
        auto ds = std::make_shared<const Dataset>(load_dataset(path));
        {
            std::unique_lock lock(mutex_);
            datasets_[ds->name] = make_loaded(path, ds);
        }
        ojson payload = service_ops::dataset_payload(*ds);
        persist({{"op", "load_dataset"}, {"dataset_path", path}}, ds->name, 0.0, {}, {}, payload);
        return payload;
    }

    ojson post_session(const ojson& body) {
        const std::string name = string_field(body, "dataset");
        auto ds = dataset(name);
        auto s = std::make_shared<Session>();
        s->dataset = ds;
        s->q = service_ops::kDefaultQuantile;
        s->slice = slice_by_quantile(*ds->data, s->q);
        {
            std::unique_lock lock(mutex_);
            s->id = next_session_id();
            sessions_[s->id] = s;
        }
        ojson payload = {{"session_id", s->id}};
        persist(snapshot(*s, "create_session"), ds->data->name, s->q, {}, {}, payload);
        return payload;
    }

    ojson post_slice(const std::string& sid, const ojson& body) {
        auto s = session(sid);
        std::lock_guard lock(s->mutex);
        if (!body.contains("q") || !body["q"].is_number())
            throw HttpError(400, "bad_request", "body needs a numeric field q");
        const double q = body["q"].get<double>();
        if (!(q >= 0.0 && q < 1.0)) throw HttpError(422, "unprocessable", "q must lie in [0, 1)", q);
        s->q = q;
        s->slice = slice_by_quantile(*s->dataset->data, q);
        s->clustering.reset();
        s->cluster_params.reset();
        s->labeled = false;
        const std::string run_id = reserve_run_id();
        ojson payload = service_ops::slice_payload(*s->dataset->data, s->slice);
        payload["run_id"] = run_id;
        persist(snapshot(*s, "slice"), s->dataset->data->name, q, {}, {}, payload, run_id);
        return payload;
    }

    ojson post_cluster(const std::string& sid, const ojson& body) {
        auto s = session(sid);
        std::lock_guard lock(s->mutex);
        ClusterParams p;
        try {
            p = ClusterParams::from_json(body.is_object() ? body : ojson::object());
        } catch (const nlohmann::json::exception& e) {
            throw HttpError(400, "bad_request", "invalid cluster parameters", e.what());
        }
        if (p.k && (*p.k == 0 || *p.k > s->slice.size()))
            throw HttpError(422, "unprocessable", "k must lie in [1, slice size]", s->slice.size());
        if (p.restarts == 0) throw HttpError(422, "unprocessable", "restarts must be >= 1");
        const Dataset& d = *s->dataset->data;
        Clustering c = service_ops::cluster(d, s->slice, p);
        s->cluster_params = p;
        s->labeled = false;
        const std::string run_id = reserve_run_id();
        ojson payload = service_ops::cluster_payload(c, run_id);
        payload["run_id"] = run_id;
        s->clustering = std::move(c);
        s->clustering_id = run_id;
        persist(snapshot(*s, "cluster"), d.name, s->q, {*s->clustering}, {}, payload, run_id);
        return payload;
    }

    ojson post_label(const std::string& sid, const ojson& body, httplib::Response& res) {
        auto s = session(sid);
        std::unique_lock lock(s->mutex);
        const std::string client_name = body.is_object() ? body.value("client", std::string("stub")) : "stub";
        if (client_name != "stub" && client_name != "remote")
            throw HttpError(400, "bad_request", "client must be stub or remote", client_name);
        if (!s->clustering) throw HttpError(409, "conflict", "cluster the slice before labeling");
        if (client_name == "remote" && !config_.remote)
            throw HttpError(422, "unprocessable", "no remote labeling client configured");

        if (client_name == "stub") {
            StubClient client;
            return label_and_persist(*s, client, "stub", {});
        }
        // Remote: stream one NDJSON line per finished cluster, then the summary.
        lock.unlock();
        res.set_chunked_content_provider("application/x-ndjson", [this, s](std::size_t, httplib::DataSink& sink) {
            std::lock_guard inner(s->mutex);
            try {
                RemoteClient client(*config_.remote);
                ojson summary = label_and_persist(*s, client, "remote", [&](std::size_t k, const ClusterLabel& l) {
                    ojson line = {{"cluster", k}, {"label", l.label ? ojson(*l.label) : ojson(nullptr)},
                                  {"size", l.size}, {"accuracy", l.accuracy}};
                    if (l.error) line["error"] = *l.error;
                    const std::string text = line.dump() + "\n";
                    sink.write(text.data(), text.size());
                });
                summary["done"] = true;
                const std::string text = summary.dump() + "\n";
                sink.write(text.data(), text.size());
            } catch (const std::exception& e) {
                const std::string text = ojson{{"code", "internal"}, {"message", e.what()}, {"detail", nullptr}}.dump() + "\n";
                sink.write(text.data(), text.size());
            }
            sink.done();
            return true;
        });
        return nullptr;  // response body is streamed
    }

    ojson get_table(const std::string& sid, const std::string& sort, std::size_t limit) {
        if (sort != "loss") throw HttpError(400, "bad_request", "only sort=loss is supported", sort);
        auto s = session(sid);
        std::lock_guard lock(s->mutex);
        const Dataset& d = *s->dataset->data;
        std::map<std::size_t, std::size_t> cluster_of;
        if (s->clustering)
            for (std::size_t i = 0; i < s->clustering->assignments.size(); ++i)
                cluster_of[s->clustering->slice.members[i]] = s->clustering->assignments[i];
        ojson rows = ojson::array();
        for (std::size_t idx : service_ops::by_loss_desc(d, s->slice.members)) {
            if (rows.size() >= limit) break;
            const Record& r = d[idx];
            const auto it = cluster_of.find(idx);
            rows.push_back({{"id", r.id}, {"text", r.text}, {"label", r.label}, {"prediction", r.prediction},
                            {"loss", r.loss}, {"cluster", it == cluster_of.end() ? ojson(nullptr) : ojson(it->second)}});
        }
        return {{"rows", rows}};
    }

    ojson get_tokens(const std::string& sid, std::size_t top) {
        auto s = session(sid);
        std::lock_guard lock(s->mutex);
        ojson rows = ojson::array();
        for (const auto& t : token_stats(*s->dataset->data, s->slice, top))
            rows.push_back({{"token", t.token}, {"slice_freq", t.slice_freq}, {"overall_freq", t.overall_freq},
                            {"ratio", t.ratio}, {"floored", t.floored}});
        return {{"rows", rows}};
    }

    ojson get_projection(const std::string& sid, std::size_t cap) {
        cap = std::min(cap, config_.projection_cap);
        auto s = session(sid);
        std::lock_guard lock(s->mutex);
        const Dataset& d = *s->dataset->data;
        const Projection& proj = s->dataset->projection();

        std::vector<long> cluster_of(d.size(), -1);
        std::vector<bool> in_slice(d.size(), false);
        for (std::size_t i : s->slice.members) in_slice[i] = true;
        std::vector<ViewGroup> groups;
        if (s->clustering) {
            for (std::size_t k = 0; k < s->clustering->k; ++k) groups.push_back({std::to_string(k), s->clustering->members_of(k)});
            for (std::size_t i = 0; i < s->clustering->assignments.size(); ++i)
                cluster_of[s->clustering->slice.members[i]] = static_cast<long>(s->clustering->assignments[i]);
        } else {
            groups.push_back({"slice", s->slice.members});
        }
        ViewGroup rest{"rest", {}};
        for (std::size_t i = 0; i < d.size(); ++i)
            if (!in_slice[i]) rest.members.push_back(i);
        if (!rest.members.empty()) groups.push_back(std::move(rest));
        if (cap < groups.size())
            throw HttpError(422, "unprocessable", "cap is smaller than the number of groups", groups.size());

        ojson points = ojson::array();
        for (std::size_t i : downsample_for_view(groups, cap, 0)) {
            points.push_back({{"id", d[i].id},
                              {"x", proj.coords[i][0]},
                              {"y", proj.coords[i][1]},
                              {"cluster", cluster_of[i] < 0 ? ojson(nullptr) : ojson(cluster_of[i])},
                              {"error_type", error_type(d[i], d.num_classes)},
                              {"in_slice", static_cast<bool>(in_slice[i])}});
        }
        return {{"points", points}, {"degenerate", proj.degenerate}};
    }

    ojson get_run(const std::string& run_id) {
        try {
            return to_json(store_.load(run_id));
        } catch (const NotFound&) {
            throw HttpError(404, "not_found", "unknown run", run_id);
        }
    }

    /// Recomputes the payload a persisted mutating request produced.
    ojson replay(const RunArtifact& a) const {
        const ojson& c = a.config;
        const std::string op = c.at("op").get<std::string>();
        if (op == "load_dataset") return service_ops::dataset_payload(load_dataset(c.at("dataset_path").get<std::string>()));
        if (op == "create_session") return {{"session_id", c.at("session_id")}};

        const Dataset d = load_dataset(c.at("dataset_path").get<std::string>());
        const EvalSlice slice = slice_by_quantile(d, c.at("q").get<double>());
        if (op == "slice") {
            ojson p = service_ops::slice_payload(d, slice);
            p["run_id"] = a.run_id;
            return p;
        }
        const ClusterParams params = ClusterParams::from_json(c.at("cluster"));
        const Clustering cl = service_ops::cluster(d, slice, params);
        if (op == "cluster") {
            ojson p = service_ops::cluster_payload(cl, a.run_id);
            p["run_id"] = a.run_id;
            return p;
        }
        if (op == "label") {
            StubClient stub;
            if (c.at("client").get<std::string>() != "stub")
                throw InvalidArgument("only stub-labeled runs can be replayed offline");
            PromptSpec spec;
            spec.task = c.at("task").get<std::string>();
            spec.max_tokens = c.at("max_tokens").get<std::size_t>();
            const LabelingOutcome out = label_all(d, cl, stub, spec, 25, params.kmeans());
            ojson p = service_ops::label_payload(d, out);
            p["run_id"] = a.run_id;
            return p;
        }
        throw InvalidArgument("unknown op '" + op + "'");
    }

    /// Rebuilds datasets and sessions from the store, in run order.
    void rehydrate() {
        for (const auto& id : store_.list()) {
            const RunArtifact a = store_.load(id);
            const ojson& c = a.config;
            const std::string op = c.value("op", std::string{});
            try {
                if (op == "load_dataset") {
                    const std::string path = c.at("dataset_path").get<std::string>();
                    auto ds = std::make_shared<const Dataset>(load_dataset(path));
                    datasets_[ds->name] = make_loaded(path, ds);
                    continue;
                }
                if (!c.contains("session_id")) continue;
                const std::string sid = c["session_id"].get<std::string>();
                auto& s = sessions_[sid];
                if (!s) {
                    s = std::make_shared<Session>();
                    s->id = sid;
                }
                const std::string name = c.at("dataset").get<std::string>();
                auto it = datasets_.find(name);
                if (it == datasets_.end()) {
                    const std::string path = c.at("dataset_path").get<std::string>();
                    auto ds = std::make_shared<const Dataset>(load_dataset(path));
                    it = datasets_.emplace(name, make_loaded(path, ds)).first;
                }
                s->dataset = it->second;
                s->q = c.at("q").get<double>();
                s->slice = slice_by_quantile(*s->dataset->data, s->q);
                s->clustering.reset();
                s->cluster_params.reset();
                if (c.contains("cluster") && !c["cluster"].is_null()) {
                    s->cluster_params = ClusterParams::from_json(c["cluster"]);
                    s->clustering = a.clusterings.empty() ? service_ops::cluster(*s->dataset->data, s->slice, *s->cluster_params)
                                                          : a.clusterings.back();
                    s->clustering_id = op == "cluster" ? a.run_id : c.value("clustering_id", a.run_id);
                }
                s->labeled = op == "label";
                session_counter_ = std::max(session_counter_, session_number(sid));
            } catch (const Error&) {
                // runs that reference vanished dataset files are skipped
            }
        }
    }

private:
    struct LoadedDataset {
        std::string path;
        std::shared_ptr<const Dataset> data;

        const Projection& projection() {
            std::call_once(once_, [&] { projection_ = pca_project(gather_embeddings(*data, whole_dataset(*data).members)); });
            return projection_;
        }

    private:
        std::once_flag once_;
        Projection projection_;
    };

    static std::shared_ptr<LoadedDataset> make_loaded(std::string path, std::shared_ptr<const Dataset> data) {
        auto l = std::make_shared<LoadedDataset>();
        l->path = std::move(path);
        l->data = std::move(data);
        return l;
    }

    struct Session {
        std::mutex mutex;
        std::string id;
        std::shared_ptr<LoadedDataset> dataset;
        double q = service_ops::kDefaultQuantile;
        EvalSlice slice;
        std::optional<ClusterParams> cluster_params;
        std::optional<Clustering> clustering;
        std::string clustering_id;
        bool labeled = false;
    };

    using Handler = std::function<ojson(const httplib::Request&, httplib::Response&)>;

    static void route(httplib::Server& server, const std::string& method, const std::string& pattern, Handler h) {
        auto wrapped = [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
            try {
                ojson payload = h(req, res);
                if (!payload.is_null()) res.set_content(payload.dump(), "application/json");
            } catch (const HttpError& e) {
                res.status = e.status();
                res.set_content(e.envelope().dump(), "application/json");
            } catch (const ParseError& e) {
                res.status = 400;
                res.set_content(ojson{{"code", "parse_error"}, {"message", e.what()}, {"detail", {{"line", e.line_no()}}}}.dump(),
                                "application/json");
            } catch (const ValidationError& e) {
                ojson v = ojson::array();
                for (const auto& x : e.violations()) v.push_back(to_string(x));
                res.status = 400;
                res.set_content(ojson{{"code", "validation_error"}, {"message", e.what()}, {"detail", v}}.dump(), "application/json");
            } catch (const EmptyDataset& e) {
                res.status = 400;
                res.set_content(ojson{{"code", "empty_dataset"}, {"message", e.what()}, {"detail", nullptr}}.dump(), "application/json");
            } catch (const NotFound& e) {
                res.status = 404;
                res.set_content(ojson{{"code", "not_found"}, {"message", e.what()}, {"detail", nullptr}}.dump(), "application/json");
            } catch (const InvalidArgument& e) {
                res.status = 422;
                res.set_content(ojson{{"code", "unprocessable"}, {"message", e.what()}, {"detail", nullptr}}.dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 500;
                res.set_content(ojson{{"code", "internal"}, {"message", e.what()}, {"detail", nullptr}}.dump(), "application/json");
            }
        };
        if (method == "GET") server.Get(pattern, wrapped);
        else server.Post(pattern, wrapped);
    }

    static ojson body_of(const httplib::Request& req) {
        if (req.body.empty()) return ojson::object();
        try {
            return ojson::parse(req.body);
        } catch (const nlohmann::json::exception& e) {
            throw HttpError(400, "bad_request", "request body is not valid JSON", e.what());
        }
    }

    static std::string string_field(const ojson& body, const char* key) {
        if (!body.is_object() || !body.contains(key) || !body[key].is_string())
            throw HttpError(400, "bad_request", std::string("body needs a string field ") + key);
        return body[key].get<std::string>();
    }

    static std::size_t param_size(const httplib::Request& req, const char* key, std::size_t fallback) {
        if (!req.has_param(key)) return fallback;
        const std::string v = req.get_param_value(key);
        try {
            std::size_t pos = 0;
            const long long x = std::stoll(v, &pos);
            if (pos != v.size() || x < 0) throw std::invalid_argument(v);
            return static_cast<std::size_t>(x);
        } catch (const std::exception&) {
            throw HttpError(400, "bad_request", std::string("query parameter ") + key + " must be a non-negative integer", v);
        }
    }

    std::shared_ptr<LoadedDataset> dataset(const std::string& name) {
        std::shared_lock lock(mutex_);
        auto it = datasets_.find(name);
        if (it == datasets_.end()) throw HttpError(404, "not_found", "dataset not loaded", name);
        return it->second;
    }

    std::shared_ptr<Session> session(const std::string& id) {
        std::shared_lock lock(mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw HttpError(404, "not_found", "unknown session", id);
        return it->second;
    }

    std::string next_session_id() {
        char buf[32];
        std::snprintf(buf, sizeof buf, "s-%06zu", ++session_counter_);
        return buf;
    }

    static std::size_t session_number(const std::string& sid) {
        try {
            return sid.rfind("s-", 0) == 0 ? std::stoull(sid.substr(2)) : 0;
        } catch (const std::exception&) {
            return 0;
        }
    }

    static ojson snapshot(const Session& s, const std::string& op) {
        ojson c;
        c["op"] = op;
        c["session_id"] = s.id;
        c["dataset"] = s.dataset->data->name;
        c["dataset_path"] = s.dataset->path;
        c["q"] = s.q;
        c["cluster"] = s.cluster_params ? s.cluster_params->to_json() : ojson(nullptr);
        return c;
    }

    ojson label_and_persist(Session& s, LabelingClient& client, const std::string& client_name, const LabelCallback& on_done) {
        const Dataset& d = *s.dataset->data;
        const KMeansConfig kc = s.cluster_params->kmeans();
        LabelingOutcome out = label_all(d, *s.clustering, client, config_.prompt, 25, kc, on_done);
        ojson payload = service_ops::label_payload(d, out);
        ojson snap = snapshot(s, "label");
        snap["client"] = client_name;
        snap["task"] = config_.prompt.task;
        snap["max_tokens"] = config_.prompt.max_tokens;
        snap["clustering_id"] = s.clustering_id;

        ExplanationTuple tuple = build_explanation_tuple(d, out.clustering, centroid_embedder(), SizeMode::count);
        for (auto& [k, l] : out.labels)
            if (l.label) tuple.messages[k].label_text = l.label;
        const std::string run_id = reserve_run_id();
        payload["run_id"] = run_id;
        persist(snap, d.name, s.q, {out.clustering}, {tuple}, payload, run_id, out.labels);
        s.clustering = out.clustering;
        s.labeled = true;
        return payload;
    }

    std::string reserve_run_id() {
        std::lock_guard lock(reserve_mutex_);
        for (std::size_t i = 1;; ++i) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "run-%06zu", i);
            if (!store_.contains(buf) && !reserved_.contains(buf)) {
                reserved_.insert(buf);
                return buf;
            }
        }
    }

    std::string persist(ojson config, const std::string& dataset, double q, std::vector<Clustering> clusterings,
                        std::vector<ExplanationTuple> tuples, const ojson& payload, std::string run_id = {},
                        std::map<std::size_t, ClusterLabel> labels = {}) {
        RunArtifact a;
        a.dataset = dataset;
        a.q = q;
        a.config = std::move(config);
        a.clusterings = std::move(clusterings);
        a.tuples = std::move(tuples);
        a.labels = std::move(labels);
        a.created_at = now_iso8601();
        if (run_id.empty()) run_id = reserve_run_id();
        a.run_id = run_id;
        a.response = payload;
        store_.save(a);
        {
            std::lock_guard lock(reserve_mutex_);
            reserved_.erase(run_id);
        }
        return run_id;
    }

    static std::string now_iso8601() {
        const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&t, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }

    ServiceConfig config_;
    RunStore store_;
    std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<LoadedDataset>> datasets_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::size_t session_counter_ = 0;
    std::mutex reserve_mutex_;
    std::set<std::string> reserved_;
};

} // namespace errslice
