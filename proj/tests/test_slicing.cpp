#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "errslice/slicing.hpp"
#include "test_util.hpp"

using namespace errslice;
using errslice::testing::dataset_with_losses;
using errslice::testing::make_record;

namespace {

// Sort-based oracle: stable sort by loss descending, take the first k.
std::vector<std::size_t> oracle_slice(const Dataset& d, std::size_t k) {
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return d.records[a].loss > d.records[b].loss; });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace

TEST(SelectionCount, HandValues) {
    EXPECT_EQ(selection_count(10, 0.8), 2u);
    EXPECT_EQ(selection_count(200, 0.99), 2u);
    EXPECT_EQ(selection_count(200, 0.98), 4u);
    EXPECT_EQ(selection_count(4, 0.5), 2u);
    EXPECT_EQ(selection_count(3, 0.99), 1u);
    EXPECT_EQ(selection_count(10, 0.0), 10u);
    EXPECT_EQ(selection_count(10, 0.75), 3u);  // 2.5 rounds away from zero
}

TEST(SliceByQuantile, TopTwoOfTen) {
    Dataset d = dataset_with_losses({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    const EvalSlice s = slice_by_quantile(d, 0.8);
    EXPECT_EQ(s.members, (std::vector<std::size_t>{8, 9}));
    EXPECT_EQ(std::get<QuantileOrigin>(s.provenance).q, 0.8);
}

TEST(SliceByQuantile, TiesBreakByIndex) {
    Dataset d = dataset_with_losses({0.5, 0.5, 0.5, 0.5});
    EXPECT_EQ(slice_by_quantile(d, 0.5).members, (std::vector<std::size_t>{0, 1}));
}

TEST(SliceByQuantile, Errors) {
    Dataset empty;
    EXPECT_THROW(slice_by_quantile(empty, 0.5), EmptyDataset);
    Dataset d = dataset_with_losses({1, 2});
    EXPECT_THROW(slice_by_quantile(d, 1.0), InvalidArgument);
    EXPECT_THROW(slice_by_quantile(d, -0.1), InvalidArgument);
}

TEST(SliceByQuantile, MatchesSortOracleOnRandomInputs) {
    Rng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.below(300);
        std::vector<double> losses(n);
        for (auto& l : losses) l = static_cast<double>(rng.below(20)) / 4.0;  // plenty of ties
        Dataset d = dataset_with_losses(losses);
        const double q = rng.uniform();
        const EvalSlice s = slice_by_quantile(d, q);
        const std::size_t want = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround((1 - q) * n)));
        ASSERT_EQ(s.size(), std::min(want, n));
        ASSERT_EQ(s.members, oracle_slice(d, s.size()));
    }
}

TEST(ErrorTypes, BinaryBuckets) {
    Dataset d{"e", 2, 1, {}};
    d.records.push_back(make_record("a", 1, {0}, 0, 1));
    d.records.push_back(make_record("b", 1, {0}, 1, 0));
    d.records.push_back(make_record("c", 1, {0}, 1, 1));
    d.records.push_back(make_record("d", 1, {0}, 0, 1));
    EXPECT_EQ(error_type(d.records[0], 2), "FP");
    EXPECT_EQ(error_type(d.records[1], 2), "FN");
    const auto parts = partition_error_types(d, whole_dataset(d));
    ASSERT_EQ(parts.size(), 3u);
    EXPECT_EQ(parts.at("FP").members, (std::vector<std::size_t>{0, 3}));
    EXPECT_EQ(parts.at("FN").members, (std::vector<std::size_t>{1}));
    EXPECT_EQ(parts.at("correct").members, (std::vector<std::size_t>{2}));
    EXPECT_EQ(std::get<ErrorTypeOrigin>(parts.at("FP").provenance).error_type, "FP");
}

TEST(ErrorTypes, AllCorrectIsOneBucket) {
    Dataset d = dataset_with_losses({1, 2, 3});
    const auto parts = partition_error_types(d, whole_dataset(d));
    ASSERT_EQ(parts.size(), 1u);
    EXPECT_EQ(parts.at("correct").members.size(), 3u);
}

TEST(ErrorTypes, MultiClassCells) {
    Record r = make_record("x", 1, {0}, 2, 0);
    EXPECT_EQ(error_type(r, 3), "L2P0");
}

TEST(ErrorTypes, PartitionCoversSliceDisjointly) {
    Rng rng(5);
    Dataset d{"m", 4, 1, {}};
    for (int i = 0; i < 200; ++i)
        d.records.push_back(make_record("r" + std::to_string(i), rng.uniform(), {0}, static_cast<int>(rng.below(4)),
                                        static_cast<int>(rng.below(4))));
    const EvalSlice s = slice_by_quantile(d, 0.5);
    std::vector<std::size_t> all;
    for (const auto& [name, part] : partition_error_types(d, s)) all.insert(all.end(), part.members.begin(), part.members.end());
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, s.members);
}
