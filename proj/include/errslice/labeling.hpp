#pragma once

// Prompt construction for group labeling, token-budget truncation and the
// completion-client interface with an offline TF-IDF stub.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "errslice/clustering.hpp"
#include "errslice/core.hpp"
#include "errslice/explanation.hpp"
#include "errslice/parallel.hpp"
#include "errslice/text.hpp"

namespace errslice {

// Reproduced byte for byte, backtick included.
inline constexpr std::string_view kInstructionTemplate =
    "In this task, we`ll assign a short and precise label to a group of documents based on the topics or "
    "concepts most relevant to these documents. The documents are all subsets of a ${task} dataset.";
inline constexpr std::string_view kBulletPrefix = "- ";
inline constexpr std::string_view kBulletSeparator = "\n - ";
inline constexpr std::string_view kLabelSuffix = "\n Group label:";

struct PromptSpec {
    std::string task = "sentiment classification";
    std::size_t max_tokens = 4000;
};

inline std::string instruction_for(std::string_view task) {
    std::string s(kInstructionTemplate);
    const auto pos = s.find("${task}");
    s.replace(pos, 7, task);
    return s;
}

inline std::string join_documents(const std::vector<std::string>& docs) {
    std::string out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (i) out += kBulletSeparator;
        out += docs[i];
    }
    return out;
}

inline std::string build_prompt(const std::vector<std::string>& contents, std::string_view task) {
    if (contents.empty()) throw EmptyContents();
    std::string p = instruction_for(task);
    p += kBulletPrefix;
    p += join_documents(contents);
    p += kLabelSuffix;
    return p;
}

/// A prompt split back into instruction head (including the first "- "),
/// bullet documents and suffix. `structured` is false when the text does not
/// follow the template.
struct PromptParts {
    std::string head;
    std::vector<std::string> docs;
    bool structured = false;

    std::string assemble() const { return head + join_documents(docs) + std::string(kLabelSuffix); }
};

inline PromptParts parse_prompt(std::string_view prompt) {
    PromptParts parts;
    constexpr std::string_view head_end = " dataset.- ";
    const auto h = prompt.find(head_end);
    if (h == std::string_view::npos || prompt.size() < kLabelSuffix.size() ||
        prompt.substr(prompt.size() - kLabelSuffix.size()) != kLabelSuffix ||
        h + head_end.size() > prompt.size() - kLabelSuffix.size())
        return parts;
    const std::size_t body_begin = h + head_end.size();
    parts.head = std::string(prompt.substr(0, body_begin));
    std::string_view body = prompt.substr(body_begin, prompt.size() - kLabelSuffix.size() - body_begin);
    for (;;) {
        const auto sep = body.find(kBulletSeparator);
        parts.docs.emplace_back(body.substr(0, sep));
        if (sep == std::string_view::npos) break;
        body.remove_prefix(sep + kBulletSeparator.size());
    }
    parts.structured = true;
    return parts;
}

/// Fits a prompt into `max_tokens` whitespace tokens by dropping whole
/// documents from the end; a lone oversized document is cut at a token
/// boundary. Instruction and suffix are always kept, so a budget smaller
/// than their own length cannot be met.
inline std::string truncate_tokens(const std::string& prompt, std::size_t max_tokens) {
    if (max_tokens < 16) throw InvalidArgument("max_tokens must be >= 16");
    if (text::count_tokens(prompt) <= max_tokens) return prompt;

    PromptParts parts = parse_prompt(prompt);
    if (!parts.structured) return text::first_tokens(prompt, max_tokens);

    while (parts.docs.size() > 1 && text::count_tokens(parts.assemble()) > max_tokens) parts.docs.pop_back();
    if (text::count_tokens(parts.assemble()) > max_tokens) {
        const std::size_t overhead = text::count_tokens(parts.head) + text::count_tokens(kLabelSuffix);
        const std::size_t room = max_tokens > overhead ? max_tokens - overhead : 0;
        parts.docs.front() = text::first_tokens(parts.docs.front(), room);
    }
    return parts.assemble();
}

class LabelingClient {
public:
    virtual ~LabelingClient() = default;
    virtual std::string complete(const std::string& prompt) = 0;
    virtual std::string name() const = 0;
    /// Concurrent complete() calls this client tolerates.
    virtual std::size_t max_parallelism() const { return 1; }
};

namespace detail {

inline const std::set<std::string, std::less<>>& stopwords() {
    static const std::set<std::string, std::less<>> words = {
        "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are",
        "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by",
        "can", "could", "did", "do", "does", "doing", "don't", "down", "during", "each", "even", "ever",
        "every", "few", "for", "from", "further", "get", "got", "had", "has", "have", "having", "he", "her",
        "here", "hers", "herself", "him", "himself", "his", "how", "i", "i'm", "i've", "if", "in", "into",
        "is", "isn't", "it", "it's", "its", "itself", "just", "me", "more", "most", "much", "my", "myself",
        "no", "nor", "not", "now", "of", "off", "on", "once", "one", "only", "or", "other", "our", "ours",
        "ourselves", "out", "over", "own", "really", "same", "she", "should", "so", "some", "such", "than",
        "that", "that's", "the", "their", "theirs", "them", "themselves", "then", "there", "these", "they",
        "this", "those", "through", "to", "too", "under", "until", "up", "very", "was", "wasn't", "we",
        "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would",
        "you", "your", "yours", "yourself", "yourselves",
    };
    return words;
}

inline bool has_letter(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isalpha(c) || c >= 0x80; });
}

} // namespace detail

/// TF-IDF scores over the bullet documents: tf = occurrences across all
/// documents, idf = ln((1 + N) / (1 + df)) + 1. Stopwords and tokens without
/// letters are ignored. Sorted by score, then token.
inline std::vector<std::pair<std::string, double>> tfidf_ranking(const std::vector<std::string>& docs) {
    std::map<std::string, std::size_t> tf, df;
    for (const auto& doc : docs) {
        std::set<std::string> seen;
        for (auto& tok : text::word_tokens(doc)) {
            if (detail::stopwords().contains(tok) || !detail::has_letter(tok)) continue;
            ++tf[tok];
            if (seen.insert(tok).second) ++df[tok];
        }
    }
    const double n = static_cast<double>(docs.size());
    std::vector<std::pair<std::string, double>> ranked;
    for (const auto& [tok, count] : tf) {
        const double idf = std::log((1.0 + n) / (1.0 + static_cast<double>(df[tok]))) + 1.0;
        ranked.emplace_back(tok, static_cast<double>(count) * idf);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return ranked;
}

/// Offline labeler: the top-3 TF-IDF tokens of the prompt's documents.
/// A pure function of the prompt.
class StubClient final : public LabelingClient {
public:
    std::string complete(const std::string& prompt) override {
        PromptParts parts = parse_prompt(prompt);
        if (!parts.structured) parts.docs = {prompt};
        const auto ranked = tfidf_ranking(parts.docs);
        if (ranked.empty()) return "unlabeled group";
        std::string out;
        for (std::size_t i = 0; i < std::min<std::size_t>(3, ranked.size()); ++i) {
            if (i) out += ' ';
            out += ranked[i].first;
        }
        return out;
    }
    std::string name() const override { return "stub"; }
    std::size_t max_parallelism() const override { return 8; }
};

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && text::whitespace_len(s, b)) b += text::whitespace_len(s, b);
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

struct LabelResult {
    std::string label;
    std::string prompt;
};

/// Labels one group: truncated prompt over member texts, trimmed completion.
inline LabelResult label_cluster(const Dataset& d, std::span<const std::size_t> members, LabelingClient& client,
                                 const PromptSpec& spec, long cluster_id = -1) {
    if (members.empty()) throw InvalidArgument("cannot label an empty group");
    std::vector<std::string> texts;
    texts.reserve(members.size());
    for (std::size_t i : members) texts.push_back(d.records.at(i).text);
    LabelResult r;
    r.prompt = truncate_tokens(build_prompt(texts, spec.task), spec.max_tokens);
    try {
        r.label = trim(client.complete(r.prompt));
    } catch (const ClientError& e) {
        throw ClientError(e.detail(), cluster_id);
    } catch (const std::exception& e) {
        throw ClientError(e.what(), cluster_id);
    }
    return r;
}

struct ClusterLabel {
    std::optional<std::string> label;
    std::optional<std::string> error;
    std::string prompt;
    std::size_t size = 0;
    double accuracy = 0.0;

    bool operator==(const ClusterLabel&) const = default;
};

struct LabelingOutcome {
    Clustering clustering;  // after sub-clustering
    std::map<std::size_t, ClusterLabel> labels;
};

using LabelCallback = std::function<void(std::size_t, const ClusterLabel&)>;

/// Sub-clusters groups of size >= max_size, then labels every resulting
/// cluster. A failing cluster is recorded and does not abort its siblings.
/// `on_done` (optional) is called once per cluster as it finishes, serialized.
inline LabelingOutcome label_all(const Dataset& d, const Clustering& clustering, LabelingClient& client,
                                 const PromptSpec& spec, std::size_t max_size = 25,
                                 const KMeansConfig& config = {}, const LabelCallback& on_done = {}) {
    LabelingOutcome out;
    out.clustering = subcluster(d, clustering, max_size, config);
    const Clustering& c = out.clustering;
    std::vector<ClusterLabel> slots(c.k);
    std::mutex done_mutex;
    parallel_for(
        c.k,
        [&](std::size_t k) {
            const auto members = c.members_of(k);
            ClusterLabel& slot = slots[k];
            slot.size = members.size();
            slot.accuracy = group_accuracy(d, members);
            try {
                LabelResult r = label_cluster(d, members, client, spec, static_cast<long>(k));
                slot.label = std::move(r.label);
                slot.prompt = std::move(r.prompt);
            } catch (const ClientError& e) {
                slot.error = e.what();
                std::vector<std::string> texts;
                for (std::size_t i : members) texts.push_back(d.records[i].text);
                slot.prompt = truncate_tokens(build_prompt(texts, spec.task), spec.max_tokens);
            }
            if (on_done) {
                std::lock_guard lock(done_mutex);
                on_done(k, slot);
            }
        },
        std::max<std::size_t>(1, client.max_parallelism()));
    for (std::size_t k = 0; k < c.k; ++k) out.labels.emplace(k, std::move(slots[k]));
    return out;
}

} // namespace errslice
