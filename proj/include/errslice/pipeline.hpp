#pragma once

// End-to-end batch run: quantile slice -> k-means++ clustering -> optional
// sub-clustering and labeling -> explanation tuple, packaged as a RunArtifact.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "errslice/clustering.hpp"
#include "errslice/explanation.hpp"
#include "errslice/io.hpp"
#include "errslice/labeling.hpp"
#include "errslice/slicing.hpp"

namespace errslice {

struct PipelineConfig {
    double q = 0.98;
    std::optional<std::size_t> k;
    std::uint64_t seed = 0;
    std::size_t restarts = 16;
    bool subcluster = false;
    std::size_t max_group_size = 25;
    std::string label = "none";  // none | stub | remote
    PromptSpec prompt;
};

inline ojson to_json(const PipelineConfig& c) {
    ojson j;
    j["q"] = c.q;
    j["k"] = c.k ? ojson(*c.k) : ojson("auto");
    j["seed"] = c.seed;
    j["restarts"] = c.restarts;
    j["subcluster"] = c.subcluster;
    j["max_group_size"] = c.max_group_size;
    j["label"] = c.label;
    j["task"] = c.prompt.task;
    j["max_tokens"] = c.prompt.max_tokens;
    return j;
}

inline PipelineConfig pipeline_config_from_json(const ojson& j) {
    PipelineConfig c;
    c.q = j.at("q").get<double>();
    if (j.at("k").is_number()) c.k = j["k"].get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.restarts = j.at("restarts").get<std::size_t>();
    c.subcluster = j.at("subcluster").get<bool>();
    c.max_group_size = j.value("max_group_size", std::size_t{25});
    c.label = j.value("label", std::string("none"));
    c.prompt.task = j.value("task", std::string("sentiment classification"));
    c.prompt.max_tokens = j.value("max_tokens", std::size_t{4000});
    return c;
}

inline KMeansConfig kmeans_config(const PipelineConfig& c) {
    KMeansConfig kc;
    kc.k = c.k;
    kc.seed = c.seed;
    kc.restarts = c.restarts;
    return kc;
}

struct PipelineResult {
    EvalSlice slice;
    Clustering initial;
    Clustering final_clustering;
    ExplanationTuple tuple;
    std::map<std::size_t, ClusterLabel> labels;
    double overall_accuracy = 0.0;
};

/// Runs the batch pipeline. `client` may be null when cfg.label == "none".
inline PipelineResult run_pipeline(const Dataset& d, const PipelineConfig& cfg, LabelingClient* client) {
    PipelineResult r;
    r.slice = slice_by_quantile(d, cfg.q);
    const KMeansConfig kc = kmeans_config(cfg);
    r.initial = cluster_slice(d, r.slice, kc);
    const std::size_t max_size = cfg.subcluster ? cfg.max_group_size : std::numeric_limits<std::size_t>::max();

    if (cfg.label != "none") {
        if (!client) throw InvalidArgument("labeling requested without a client");
        LabelingOutcome out = label_all(d, r.initial, *client, cfg.prompt, max_size, kc);
        r.final_clustering = std::move(out.clustering);
        r.labels = std::move(out.labels);
    } else {
        r.final_clustering = subcluster(d, r.initial, max_size, kc);
        for (std::size_t k = 0; k < r.final_clustering.k; ++k) {
            const auto members = r.final_clustering.members_of(k);
            ClusterLabel l;
            l.size = members.size();
            l.accuracy = group_accuracy(d, members);
            r.labels.emplace(k, std::move(l));
        }
    }

    r.tuple = build_explanation_tuple(d, r.final_clustering, centroid_embedder(), SizeMode::count);
    r.tuple.source_clustering_id = "final";
    for (auto& [k, l] : r.labels)
        if (l.label) r.tuple.messages[k].label_text = l.label;

    const EvalSlice all = whole_dataset(d);
    r.overall_accuracy = group_accuracy(d, all.members);
    return r;
}

inline RunArtifact make_artifact(const Dataset& d, const std::string& dataset_path, const PipelineConfig& cfg,
                                 const PipelineResult& r, std::string created_at) {
    RunArtifact a;
    a.dataset = d.name;
    a.q = cfg.q;
    a.clusterings = {r.initial, r.final_clustering};
    a.tuples = {r.tuple};
    a.labels = r.labels;
    a.created_at = std::move(created_at);
    a.config = {{"op", "pipeline"}, {"dataset_path", dataset_path}, {"pipeline", to_json(cfg)}};
    return a;
}

struct GroupRow {
    std::size_t cluster = 0;
    std::string label;
    std::size_t size = 0;
    double accuracy = 0.0;
    double delta = 0.0;  // accuracy - overall
};

/// Groups in Table-1 order: size descending, then cluster id.
inline std::vector<GroupRow> group_rows(const std::map<std::size_t, ClusterLabel>& labels, double overall) {
    std::vector<GroupRow> rows;
    for (const auto& [k, l] : labels) {
        GroupRow g;
        g.cluster = k;
        g.label = l.label ? *l.label : (l.error ? "(labeling failed)" : "group " + std::to_string(k));
        g.size = l.size;
        g.accuracy = l.accuracy;
        g.delta = l.accuracy - overall;
        rows.push_back(std::move(g));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const GroupRow& a, const GroupRow& b) { return a.size > b.size; });
    return rows;
}

/// Accuracy with its delta against the overall accuracy, e.g. "0.90 (-5%)".
inline std::string format_accuracy(double acc, double overall) {
    char buf[48];
    const long pct = std::lround((acc - overall) * 100.0);
    std::snprintf(buf, sizeof buf, "%.2f (%s%ld%%)", acc, pct > 0 ? "+" : "", pct);
    return buf;
}

inline std::string render_group_table(const std::vector<GroupRow>& rows, double overall, const std::string& title) {
    std::size_t width = std::string("Group label").size();
    for (const auto& r : rows) width = std::max(width, r.label.size());
    std::string out;
    char line[512];
    std::snprintf(line, sizeof line, "%s (overall acc: %.2f)\n", title.c_str(), overall);
    out += line;
    std::snprintf(line, sizeof line, "%-*s  %6s  %s\n", static_cast<int>(width), "Group label", "Size", "Group acc.");
    out += line;
    for (const auto& r : rows) {
        out += r.label;
        out.append(width - r.label.size(), ' ');
        std::snprintf(line, sizeof line, "  %6zu  %s\n", r.size, format_accuracy(r.accuracy, overall).c_str());
        out += line;
    }
    return out;
}

} // namespace errslice
