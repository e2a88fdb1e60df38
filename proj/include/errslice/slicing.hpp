#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "errslice/core.hpp"

namespace errslice {

/// Round half away from zero.
inline double round_half_away(double x) { return std::round(x); }

/// Number of records kept by a quantile cut: max(1, round((1 - q) * n)).
inline std::size_t selection_count(std::size_t n, double q) {
    const double raw = round_half_away((1.0 - q) * static_cast<double>(n));
    const auto k = static_cast<std::size_t>(std::max(1.0, raw));
    return std::min(k, n);
}

/// The highest-loss records above quantile q, as top-count selection.
/// Ties in loss are broken by ascending record index.
inline EvalSlice slice_by_quantile(const Dataset& d, double q) {
    if (d.records.empty()) throw EmptyDataset();
    if (!(q >= 0.0 && q < 1.0)) throw InvalidArgument("quantile must lie in [0, 1), got " + std::to_string(q));

    const std::size_t keep = selection_count(d.size(), q);
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double la = d.records[a].loss, lb = d.records[b].loss;
                          return la != lb ? la > lb : a < b;
                      });
    order.resize(keep);
    std::sort(order.begin(), order.end());
    return EvalSlice{d.name, std::move(order), QuantileOrigin{q}};
}

/// Error-type bucket name for one record. Binary tasks use FP / FN / correct;
/// multi-class tasks use "L<label>P<prediction>" for each confusion cell.
inline std::string error_type(const Record& r, int num_classes) {
    if (r.label == r.prediction) return "correct";
    if (num_classes == 2) return r.label == 0 ? "FP" : "FN";
    return "L" + std::to_string(r.label) + "P" + std::to_string(r.prediction);
}

/// Splits a slice into disjoint error-type buckets covering it.
inline std::map<std::string, EvalSlice> partition_error_types(const Dataset& d, const EvalSlice& slice) {
    std::map<std::string, EvalSlice> out;
    for (std::size_t idx : slice.members) {
        const std::string type = error_type(d.records.at(idx), d.num_classes);
        auto [it, inserted] = out.try_emplace(type, EvalSlice{d.name, {}, ErrorTypeOrigin{type}});
        it->second.members.push_back(idx);
    }
    return out;
}

} // namespace errslice
