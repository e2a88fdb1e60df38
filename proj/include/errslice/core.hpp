#pragma once

// Shared domain types: evaluation records, datasets, slices, clusterings and
// the explanation messages/tuples compared by the stability metric.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "errslice/error.hpp"

namespace errslice {

/// One evaluation example.
struct Record {
    std::string id;
    std::string text;
    int label = 0;
    int prediction = 0;
    double loss = 0.0;
    std::vector<double> embedding;

    bool correct() const { return label == prediction; }
    bool operator==(const Record&) const = default;
};

struct Dataset {
    std::string name;
    int num_classes = 2;
    std::size_t embedding_dim = 0;
    std::vector<Record> records;

    std::size_t size() const { return records.size(); }
    const Record& operator[](std::size_t i) const { return records[i]; }
    bool operator==(const Dataset&) const = default;
};

/// Dense row-major point matrix.
class PointSet {
public:
    PointSet() = default;
    PointSet(std::size_t n, std::size_t dim) : dim_(dim), data_(n * dim, 0.0) {}

    static PointSet from_rows(const std::vector<std::vector<double>>& rows) {
        PointSet p(0, rows.empty() ? 0 : rows.front().size());
        for (const auto& r : rows) p.push_back(r);
        return p;
    }

    std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
    std::size_t dim() const { return dim_; }
    bool empty() const { return size() == 0; }

    std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
    std::span<const double> operator[](std::size_t i) const { return row(i); }

    void push_back(std::span<const double> r) {
        if (data_.empty() && dim_ == 0) dim_ = r.size();
        if (r.empty() || r.size() != dim_)
            throw DimMismatch("row of size " + std::to_string(r.size()) + " pushed into " +
                              std::to_string(dim_) + "-d point set");
        data_.insert(data_.end(), r.begin(), r.end());
    }

    std::vector<std::vector<double>> to_rows() const {
        std::vector<std::vector<double>> out;
        out.reserve(size());
        for (std::size_t i = 0; i < size(); ++i) out.emplace_back(row(i).begin(), row(i).end());
        return out;
    }

    const std::vector<double>& raw() const { return data_; }
    bool operator==(const PointSet&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a, b));
}

/// Embeddings of the given dataset rows, in the given order.
inline PointSet gather_embeddings(const Dataset& d, std::span<const std::size_t> members) {
    PointSet p(0, d.embedding_dim);
    for (std::size_t i : members) p.push_back(d.records[i].embedding);
    return p;
}

// Slice provenance.
struct QuantileOrigin {
    double q = 0.0;
    bool operator==(const QuantileOrigin&) const = default;
};
struct ErrorTypeOrigin {
    std::string error_type;
    bool operator==(const ErrorTypeOrigin&) const = default;
};
struct ClusterOrigin {
    std::size_t cluster = 0;
    bool operator==(const ClusterOrigin&) const = default;
};
struct ManualOrigin {
    bool operator==(const ManualOrigin&) const = default;
};
using Provenance = std::variant<QuantileOrigin, ErrorTypeOrigin, ClusterOrigin, ManualOrigin>;

/// Indexed subset of a dataset. Member indices are strictly increasing.
struct EvalSlice {
    std::string dataset;
    std::vector<std::size_t> members;
    Provenance provenance = ManualOrigin{};

    std::size_t size() const { return members.size(); }
    bool operator==(const EvalSlice&) const = default;
};

/// Slice covering every record of `d`.
inline EvalSlice whole_dataset(const Dataset& d) {
    EvalSlice s{d.name, {}, ManualOrigin{}};
    s.members.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) s.members[i] = i;
    return s;
}

/// Assignment of slice members to k clusters. `assignments[i]` is the cluster
/// of `slice.members[i]`.
struct Clustering {
    EvalSlice slice;
    std::size_t k = 0;
    std::vector<std::size_t> assignments;
    PointSet centers;
    double objective = 0.0;
    std::uint64_t seed = 0;
    std::size_t restarts = 1;
    // Clusters the splitter could not divide (all members identical).
    std::vector<std::size_t> unsplittable;
    bool degenerate_init = false;

    std::vector<std::size_t> sizes() const {
        std::vector<std::size_t> s(k, 0);
        for (std::size_t a : assignments) ++s[a];
        return s;
    }

    /// Dataset indices of the members of cluster `c`, ascending.
    std::vector<std::size_t> members_of(std::size_t c) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignments.size(); ++i)
            if (assignments[i] == c) out.push_back(slice.members[i]);
        return out;
    }

    bool operator==(const Clustering&) const = default;
};

enum class SizeMode { count, fraction };

inline const char* to_string(SizeMode m) { return m == SizeMode::count ? "count" : "fraction"; }

inline SizeMode size_mode_from_string(const std::string& s) {
    if (s == "count") return SizeMode::count;
    if (s == "fraction") return SizeMode::fraction;
    throw InvalidArgument("unknown size mode '" + s + "'");
}

/// One explanation message (w, s, a): sentence vector, cluster size and group accuracy.
struct ExplanationMessage {
    std::vector<double> w;
    std::size_t size = 1;
    double fraction = 0.0;  // size / n
    double accuracy = 0.0;
    std::optional<std::string> label_text;

    bool operator==(const ExplanationMessage&) const = default;
};

struct ExplanationTuple {
    std::vector<ExplanationMessage> messages;
    std::string source_clustering_id;
    SizeMode size_mode = SizeMode::count;

    std::size_t k() const { return messages.size(); }
    bool operator==(const ExplanationTuple&) const = default;
};

/// Vectorized message: [w..., s, a] with s as count or fraction.
inline std::vector<double> message_vector(const ExplanationMessage& m, SizeMode mode) {
    std::vector<double> v;
    v.reserve(m.w.size() + 2);
    v.insert(v.end(), m.w.begin(), m.w.end());
    v.push_back(mode == SizeMode::count ? static_cast<double>(m.size) : m.fraction);
    v.push_back(m.accuracy);
    return v;
}

struct Violation {
    enum class Rule {
        duplicate_id,
        dim_mismatch,
        label_out_of_range,
        prediction_out_of_range,
        invalid_loss,
        non_finite_embedding,
        empty_dataset,
        bad_header,
    };
    Rule rule;
    std::string record_id;

    bool operator==(const Violation&) const = default;
};

inline const char* to_string(Violation::Rule r) {
    switch (r) {
    case Violation::Rule::duplicate_id: return "DuplicateId";
    case Violation::Rule::dim_mismatch: return "DimMismatch";
    case Violation::Rule::label_out_of_range: return "LabelOutOfRange";
    case Violation::Rule::prediction_out_of_range: return "PredictionOutOfRange";
    case Violation::Rule::invalid_loss: return "InvalidLoss";
    case Violation::Rule::non_finite_embedding: return "NonFiniteEmbedding";
    case Violation::Rule::empty_dataset: return "EmptyDataset";
    case Violation::Rule::bad_header: return "BadHeader";
    }
    return "?";
}

inline std::string to_string(const Violation& v) {
    return std::string(to_string(v.rule)) + "(\"" + v.record_id + "\")";
}

inline std::vector<Violation> validate_dataset(const Dataset& d) {
    using R = Violation::Rule;
    std::vector<Violation> out;
    if (d.num_classes < 1 || d.embedding_dim < 1) out.push_back({R::bad_header, d.name});
    if (d.records.empty()) out.push_back({R::empty_dataset, d.name});

    std::unordered_set<std::string> seen;
    for (const Record& r : d.records) {
        if (!seen.insert(r.id).second) out.push_back({R::duplicate_id, r.id});
        if (r.embedding.size() != d.embedding_dim) out.push_back({R::dim_mismatch, r.id});
        if (r.label < 0 || r.label >= d.num_classes) out.push_back({R::label_out_of_range, r.id});
        if (r.prediction < 0 || r.prediction >= d.num_classes)
            out.push_back({R::prediction_out_of_range, r.id});
        if (!std::isfinite(r.loss) || r.loss < 0.0) out.push_back({R::invalid_loss, r.id});
        for (double x : r.embedding) {
            if (!std::isfinite(x)) {
                out.push_back({R::non_finite_embedding, r.id});
                break;
            }
        }
    }
    return out;
}

} // namespace errslice
