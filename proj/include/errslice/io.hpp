#pragma once

// Dataset file reader/writer, JSON forms of the domain types, and the
// directory-backed run store.

#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errslice/core.hpp"
#include "errslice/labeling.hpp"

namespace errslice {

using ojson = nlohmann::ordered_json;

class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<Violation> v) : Error(describe(v)), violations_(std::move(v)) {}
    const std::vector<Violation>& violations() const { return violations_; }

private:
    static std::string describe(const std::vector<Violation>& v) {
        std::string s = "dataset failed validation:";
        for (std::size_t i = 0; i < v.size() && i < 10; ++i) s += " " + to_string(v[i]);
        if (v.size() > 10) s += " ... (" + std::to_string(v.size()) + " total)";
        return s;
    }
    std::vector<Violation> violations_;
};

namespace detail {

inline std::string num17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline const ojson& require(const ojson& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(line, std::string("missing field ") + key);
    return *it;
}

inline double require_number(const ojson& obj, const char* key, std::size_t line) {
    const ojson& v = require(obj, key, line);
    if (!v.is_number()) throw ParseError(line, std::string("field ") + key + " must be a number");
    return v.get<double>();
}

inline long long require_integer(const ojson& obj, const char* key, std::size_t line) {
    const ojson& v = require(obj, key, line);
    if (!v.is_number_integer()) throw ParseError(line, std::string("field ") + key + " must be an integer");
    return v.get<long long>();
}

inline std::string require_string(const ojson& obj, const char* key, std::size_t line) {
    const ojson& v = require(obj, key, line);
    if (!v.is_string()) throw ParseError(line, std::string("field ") + key + " must be a string");
    return v.get<std::string>();
}

} // namespace detail

/// Parses the line-delimited dataset format: a header object followed by one
/// record object per line. Blank lines are ignored.
inline Dataset parse_dataset(std::istream& in) {
    Dataset d;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        ojson obj;
        try {
            obj = ojson::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");

        if (!have_header) {
            const long long classes = detail::require_integer(obj, "num_classes", line_no);
            const long long dim = detail::require_integer(obj, "embedding_dim", line_no);
            if (classes < 1) throw ParseError(line_no, "num_classes must be positive");
            if (dim < 1) throw ParseError(line_no, "embedding_dim must be positive");
            d.num_classes = static_cast<int>(classes);
            d.embedding_dim = static_cast<std::size_t>(dim);
            d.name = obj.contains("name") ? detail::require_string(obj, "name", line_no) : std::string("dataset");
            have_header = true;
            continue;
        }

        Record r;
        r.id = detail::require_string(obj, "id", line_no);
        r.text = detail::require_string(obj, "text", line_no);
        r.label = static_cast<int>(detail::require_integer(obj, "label", line_no));
        r.prediction = static_cast<int>(detail::require_integer(obj, "prediction", line_no));
        r.loss = detail::require_number(obj, "loss", line_no);
        const ojson& emb = detail::require(obj, "embedding", line_no);
        if (!emb.is_array()) throw ParseError(line_no, "field embedding must be an array");
        r.embedding.reserve(emb.size());
        for (const auto& x : emb) {
            if (!x.is_number()) throw ParseError(line_no, "field embedding must contain numbers");
            r.embedding.push_back(x.get<double>());
        }
        d.records.push_back(std::move(r));
    }
    if (d.records.empty()) throw EmptyDataset();
    if (auto v = validate_dataset(d); !v.empty()) throw ValidationError(std::move(v));
    return d;
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound(path.string());
    return parse_dataset(in);
}

inline void write_dataset(std::ostream& out, const Dataset& d) {
    ojson header;
    header["num_classes"] = d.num_classes;
    header["embedding_dim"] = d.embedding_dim;
    header["name"] = d.name;
    out << header.dump() << '\n';
    for (const Record& r : d.records) {
        out << "{\"id\":" << ojson(r.id).dump() << ",\"text\":" << ojson(r.text).dump() << ",\"label\":" << r.label
            << ",\"prediction\":" << r.prediction << ",\"loss\":" << detail::num17(r.loss) << ",\"embedding\":[";
        for (std::size_t i = 0; i < r.embedding.size(); ++i) out << (i ? "," : "") << detail::num17(r.embedding[i]);
        out << "]}\n";
    }
}

inline void write_dataset(const std::filesystem::path& path, const Dataset& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StoreIo("cannot write " + path.string());
    write_dataset(out, d);
}

// ---- JSON forms ----------------------------------------------------------

inline ojson to_json(const Provenance& p) {
    return std::visit(
        [](const auto& v) -> ojson {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, QuantileOrigin>) return {{"kind", "quantile"}, {"q", v.q}};
            else if constexpr (std::is_same_v<T, ErrorTypeOrigin>) return {{"kind", "error_type"}, {"error_type", v.error_type}};
            else if constexpr (std::is_same_v<T, ClusterOrigin>) return {{"kind", "cluster"}, {"cluster", v.cluster}};
            else return {{"kind", "manual"}};
        },
        p);
}

inline Provenance provenance_from_json(const ojson& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "quantile") return QuantileOrigin{j.at("q").get<double>()};
    if (kind == "error_type") return ErrorTypeOrigin{j.at("error_type").get<std::string>()};
    if (kind == "cluster") return ClusterOrigin{j.at("cluster").get<std::size_t>()};
    return ManualOrigin{};
}

inline ojson to_json(const EvalSlice& s) {
    return {{"dataset", s.dataset}, {"members", s.members}, {"provenance", to_json(s.provenance)}};
}

inline EvalSlice slice_from_json(const ojson& j) {
    return {j.at("dataset").get<std::string>(), j.at("members").get<std::vector<std::size_t>>(),
            provenance_from_json(j.at("provenance"))};
}

inline ojson to_json(const Clustering& c) {
    return {{"slice", to_json(c.slice)},
            {"k", c.k},
            {"assignments", c.assignments},
            {"centers", c.centers.to_rows()},
            {"objective", c.objective},
            {"seed", c.seed},
            {"restarts", c.restarts},
            {"unsplittable", c.unsplittable},
            {"degenerate_init", c.degenerate_init}};
}

inline Clustering clustering_from_json(const ojson& j) {
    Clustering c;
    c.slice = slice_from_json(j.at("slice"));
    c.k = j.at("k").get<std::size_t>();
    c.assignments = j.at("assignments").get<std::vector<std::size_t>>();
    c.centers = PointSet::from_rows(j.at("centers").get<std::vector<std::vector<double>>>());
    c.objective = j.at("objective").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.restarts = j.at("restarts").get<std::size_t>();
    c.unsplittable = j.value("unsplittable", std::vector<std::size_t>{});
    c.degenerate_init = j.value("degenerate_init", false);
    return c;
}

inline ojson to_json(const ExplanationMessage& m) {
    ojson j = {{"w", m.w}, {"size", m.size}, {"fraction", m.fraction}, {"accuracy", m.accuracy}};
    j["label"] = m.label_text ? ojson(*m.label_text) : ojson(nullptr);
    return j;
}

inline ExplanationMessage message_from_json(const ojson& j) {
    ExplanationMessage m;
    m.w = j.at("w").get<std::vector<double>>();
    m.size = j.at("size").get<std::size_t>();
    m.fraction = j.at("fraction").get<double>();
    m.accuracy = j.at("accuracy").get<double>();
    if (j.contains("label") && !j["label"].is_null()) m.label_text = j["label"].get<std::string>();
    return m;
}

inline ojson to_json(const ExplanationTuple& t) {
    ojson msgs = ojson::array();
    for (const auto& m : t.messages) msgs.push_back(to_json(m));
    return {{"source_clustering_id", t.source_clustering_id}, {"size_mode", to_string(t.size_mode)}, {"messages", msgs}};
}

inline ExplanationTuple tuple_from_json(const ojson& j) {
    ExplanationTuple t;
    t.source_clustering_id = j.value("source_clustering_id", std::string{});
    t.size_mode = size_mode_from_string(j.value("size_mode", std::string("count")));
    for (const auto& m : j.at("messages")) t.messages.push_back(message_from_json(m));
    return t;
}

inline ExplanationTuple load_tuple(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound(path.string());
    try {
        return tuple_from_json(ojson::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, path.string() + ": " + e.what());
    }
}

inline ojson to_json(const ClusterLabel& l) {
    ojson j;
    j["label"] = l.label ? ojson(*l.label) : ojson(nullptr);
    j["error"] = l.error ? ojson(*l.error) : ojson(nullptr);
    j["size"] = l.size;
    j["accuracy"] = l.accuracy;
    j["prompt"] = l.prompt;
    return j;
}

inline ClusterLabel label_from_json(const ojson& j) {
    ClusterLabel l;
    if (!j.at("label").is_null()) l.label = j["label"].get<std::string>();
    if (!j.at("error").is_null()) l.error = j["error"].get<std::string>();
    l.size = j.at("size").get<std::size_t>();
    l.accuracy = j.at("accuracy").get<double>();
    l.prompt = j.at("prompt").get<std::string>();
    return l;
}

// ---- run store -----------------------------------------------------------

/// Everything needed to inspect or replay one pipeline run.
struct RunArtifact {
    std::string run_id;
    std::string dataset;
    double q = 0.0;
    std::vector<Clustering> clusterings;
    std::vector<ExplanationTuple> tuples;
    std::map<std::size_t, ClusterLabel> labels;
    std::string created_at;
    ojson config = ojson::object();    // replay snapshot, includes every seed
    ojson response = nullptr;          // payload served for this run, if any

    bool operator==(const RunArtifact&) const = default;
};

inline ojson to_json(const RunArtifact& a) {
    ojson clusterings = ojson::array(), tuples = ojson::array(), labels = ojson::object();
    for (const auto& c : a.clusterings) clusterings.push_back(to_json(c));
    for (const auto& t : a.tuples) tuples.push_back(to_json(t));
    for (const auto& [id, l] : a.labels) labels[std::to_string(id)] = to_json(l);
    return {{"run_id", a.run_id},     {"dataset", a.dataset}, {"q", a.q},           {"created_at", a.created_at},
            {"config", a.config},     {"clusterings", clusterings}, {"tuples", tuples}, {"labels", labels},
            {"response", a.response}};
}

inline RunArtifact artifact_from_json(const ojson& j) {
    RunArtifact a;
    try {
        a.run_id = j.at("run_id").get<std::string>();
        a.dataset = j.at("dataset").get<std::string>();
        a.q = j.at("q").get<double>();
        a.created_at = j.at("created_at").get<std::string>();
        a.config = j.at("config");
        for (const auto& c : j.at("clusterings")) a.clusterings.push_back(clustering_from_json(c));
        for (const auto& t : j.at("tuples")) a.tuples.push_back(tuple_from_json(t));
        for (const auto& [k, v] : j.at("labels").items()) a.labels.emplace(std::stoull(k), label_from_json(v));
        a.response = j.value("response", ojson(nullptr));
    } catch (const nlohmann::json::exception& e) {
        throw StoreIo(std::string("malformed run artifact: ") + e.what());
    }
    return a;
}

/// Directory of runs: <root>/<run_id>/{manifest,config,clusterings,tuples,labels,response}.json.
/// A run directory is created atomically; saving onto an existing run id fails.
class RunStore {
public:
    explicit RunStore(std::filesystem::path root) : root_(std::move(root)) {
        std::error_code ec;
        std::filesystem::create_directories(root_, ec);
        if (ec) throw StoreIo("cannot create store root " + root_.string() + ": " + ec.message());
    }

    const std::filesystem::path& root() const { return root_; }

    /// Persists `a`. An empty run_id is replaced by the next free "run-NNNNNN".
    std::string save(const RunArtifact& a) {
        RunArtifact copy = a;
        if (copy.run_id.empty()) {
            copy.run_id = allocate_id();
        } else {
            std::error_code ec;
            if (!std::filesystem::create_directory(root_ / copy.run_id, ec)) {
                if (ec) throw StoreIo(ec.message());
                throw AlreadyExists(copy.run_id);
            }
        }
        const auto dir = root_ / copy.run_id;
        const ojson j = to_json(copy);
        write(dir / "config.json", j["config"]);
        write(dir / "clusterings.json", j["clusterings"]);
        write(dir / "tuples.json", j["tuples"]);
        write(dir / "labels.json", j["labels"]);
        write(dir / "response.json", j["response"]);
        // manifest last: its presence marks a complete run
        write(dir / "manifest.json", ojson{{"format", 1},
                                           {"run_id", copy.run_id},
                                           {"dataset", copy.dataset},
                                           {"q", copy.q},
                                           {"created_at", copy.created_at}});
        return copy.run_id;
    }

    RunArtifact load(const std::string& run_id) const {
        if (run_id.empty() || run_id.find('/') != std::string::npos || run_id.find("..") != std::string::npos)
            throw NotFound(run_id);
        const auto dir = root_ / run_id;
        if (!std::filesystem::exists(dir / "manifest.json")) throw NotFound(run_id);
        ojson j = read(dir / "manifest.json");
        j["config"] = read(dir / "config.json");
        j["clusterings"] = read(dir / "clusterings.json");
        j["tuples"] = read(dir / "tuples.json");
        j["labels"] = read(dir / "labels.json");
        j["response"] = read(dir / "response.json");
        return artifact_from_json(j);
    }

    bool contains(const std::string& run_id) const { return std::filesystem::exists(root_ / run_id / "manifest.json"); }

    std::vector<std::string> list() const {
        std::vector<std::string> ids;
        for (const auto& e : std::filesystem::directory_iterator(root_))
            if (e.is_directory() && std::filesystem::exists(e.path() / "manifest.json")) ids.push_back(e.path().filename().string());
        std::sort(ids.begin(), ids.end());
        return ids;
    }

private:
    std::string allocate_id() {
        for (std::size_t i = 1;; ++i) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "run-%06zu", i);
            std::error_code ec;
            if (std::filesystem::create_directory(root_ / buf, ec)) return buf;
            if (ec) throw StoreIo(ec.message());
        }
    }

    static void write(const std::filesystem::path& p, const ojson& j) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw StoreIo("cannot write " + p.string());
        out << j.dump(2) << '\n';
        if (!out) throw StoreIo("write failed for " + p.string());
    }

    static ojson read(const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw StoreIo("cannot read " + p.string());
        try {
            return ojson::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw StoreIo(p.string() + ": " + e.what());
        }
    }

    std::filesystem::path root_;
};

} // namespace errslice
