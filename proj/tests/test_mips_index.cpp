#include <chrono>
#include <set>

#include <gtest/gtest.h>

#include "prank/mips_index.hpp"
#include "test_support.hpp"

namespace prank {
namespace {

std::vector<std::uint64_t> iota_ids(std::size_t n) {
    std::vector<std::uint64_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::uint64_t{0});
    return ids;
}

TEST(ExactSearch, HandComputedArgmax) {
    Matrix e(3, 2);
    e << 1, 0, 0, 1, -1, 0;
    const auto idx = MipsIndex::build(e, {10, 20, 30}, {});
    const auto hits = idx.search(std::vector<double>{0.6, 0.8}, 3);
    ASSERT_EQ(hits.size(), 3u);
    EXPECT_EQ(hits[0].id, 20u);
    EXPECT_DOUBLE_EQ(hits[0].score, 0.8);
    EXPECT_EQ(hits[1].id, 10u);
    EXPECT_EQ(hits[2].id, 30u);
}

TEST(ExactSearch, StoredVectorComesFirstWithScoreOne) {
    const Matrix e = testing::random_unit_rows(50, 16, 1);
    const auto idx = MipsIndex::build(e, iota_ids(50), {});
    const auto hits = idx.search(testing::row(e, 17), 5);
    EXPECT_EQ(hits[0].id, 17u);
    EXPECT_NEAR(hits[0].score, 1.0, 1e-15);
}

TEST(ExactSearch, TiesBrokenByAscendingId) {
    Matrix e(4, 2);
    e << 0, 1, 1, 0, 0, 1, 1, 0;
    const auto idx = MipsIndex::build(e, {7, 3, 1, 9}, {});
    const auto hits = idx.search(std::vector<double>{1, 0}, 4);
    EXPECT_EQ(hits[0].id, 3u);
    EXPECT_EQ(hits[1].id, 9u);
    EXPECT_EQ(hits[2].id, 1u);
    EXPECT_EQ(hits[3].id, 7u);
}

TEST(ExactSearch, MatchesFullSortOracle) {
    const Matrix e = testing::random_unit_rows(1000, 32, 2);
    const auto idx = MipsIndex::build(e, iota_ids(1000), {});
    const Matrix queries = testing::random_unit_rows(50, 32, 3);
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        const auto got = idx.search(testing::row(queries, q), 150);
        const auto want = testing::ref_search(e, iota_ids(1000), testing::row(queries, q), 150);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].id, want[i].id);
            EXPECT_NEAR(got[i].score, want[i].score, 1e-14);
        }
    }
}

TEST(ExactSearch, TopKLargerThanIndexReturnsAll) {
    const auto idx = MipsIndex::build(testing::random_unit_rows(5, 4, 4), iota_ids(5), {});
    EXPECT_EQ(idx.search(testing::row(testing::random_unit_rows(1, 4, 5), 0), 50).size(), 5u);
    EXPECT_THROW(idx.search(testing::row(testing::random_unit_rows(1, 4, 5), 0), 0), ArgumentError);
    EXPECT_THROW(idx.search(std::vector<double>{1, 0}, 1), ShapeError);
}

TEST(ExactSearch, InnerProductOrderEqualsDistanceOrder) {
    const Matrix e = testing::random_unit_rows(200, 8, 6);
    const auto idx = MipsIndex::build(e, iota_ids(200), {});
    const auto q = testing::row(testing::random_unit_rows(1, 8, 7), 0);
    const auto hits = idx.search(q, 200);
    for (std::size_t i = 1; i < hits.size(); ++i) {
        const double a = testing::distance(testing::row(e, static_cast<Eigen::Index>(hits[i - 1].id)), q);
        const double b = testing::distance(testing::row(e, static_cast<Eigen::Index>(hits[i].id)), q);
        EXPECT_LE(a, b + 1e-12);
        EXPECT_LE(hits[i].score, 1.0 + 1e-9);
        EXPECT_GE(hits[i].score, -1.0 - 1e-9);
    }
}

TEST(Build, RejectsBadInput) {
    Matrix e(2, 2);
    e << 1, 0, 0.5, 0.5;
    EXPECT_THROW(MipsIndex::build(e, {0, 1}, {}), ArgumentError);
    const Matrix u = testing::random_unit_rows(4, 3, 1);
    EXPECT_THROW(MipsIndex::build(u, {0, 1, 2}, {}), ShapeError);
    EXPECT_THROW(MipsIndex::build(u, iota_ids(4), {IndexKind::ivf, 5, 1}), ArgumentError);
    EXPECT_THROW(MipsIndex::build(u, iota_ids(4), {IndexKind::ivf, 2, 0}), ArgumentError);
}

TEST(Ivf, SingleListEqualsExact) {
    const Matrix e = testing::random_unit_rows(300, 8, 8);
    const auto exact = MipsIndex::build(e, iota_ids(300), {});
    const auto ivf = MipsIndex::build(e, iota_ids(300), {IndexKind::ivf, 1, 1});
    const Matrix queries = testing::random_unit_rows(10, 8, 9);
    for (Eigen::Index q = 0; q < 10; ++q)
        EXPECT_EQ(exact.search(testing::row(queries, q), 20), ivf.search(testing::row(queries, q), 20));
}

TEST(Ivf, EveryIdInExactlyOneList) {
    const auto ivf = MipsIndex::build(testing::random_unit_rows(500, 8, 10), iota_ids(500), {IndexKind::ivf, 16, 2});
    std::vector<int> seen(500, 0);
    for (const auto& l : ivf.lists())
        for (auto r : l) ++seen[r];
    for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Ivf, ResultsAreExactWithinScannedListsAndRecallGrowsWithProbes) {
    const Matrix e = testing::random_unit_rows(2000, 8, 11);
    auto ivf = MipsIndex::build(e, iota_ids(2000), {IndexKind::ivf, 32, 1, 3});
    const auto exact = MipsIndex::build(e, iota_ids(2000), {});
    const Matrix queries = testing::random_unit_rows(20, 8, 12);
    std::vector<double> recall;
    for (std::size_t probe : {1, 2, 4, 8, 16, 32}) {
        ivf.set_n_probe(probe);
        double total = 0.0;
        for (Eigen::Index q = 0; q < queries.rows(); ++q) {
            const auto got = ivf.search(testing::row(queries, q), 50);
            const auto want = exact.search(testing::row(queries, q), 50);
            std::set<std::uint64_t> truth;
            for (const auto& h : want) truth.insert(h.id);
            for (const auto& h : got) total += truth.count(h.id);
            for (std::size_t i = 1; i < got.size(); ++i) EXPECT_TRUE(hit_before(got[i - 1], got[i]));
        }
        recall.push_back(total / (50.0 * static_cast<double>(queries.rows())));
    }
    for (std::size_t i = 1; i < recall.size(); ++i) EXPECT_GE(recall[i], recall[i - 1]);
    EXPECT_EQ(recall.back(), 1.0);
}

TEST(Ivf, BuildIsDeterministic) {
    const Matrix e = testing::random_unit_rows(400, 8, 13);
    const auto a = MipsIndex::build(e, iota_ids(400), {IndexKind::ivf, 8, 2, 5});
    const auto b = MipsIndex::build(e, iota_ids(400), {IndexKind::ivf, 8, 2, 5});
    EXPECT_EQ(a.centroids(), b.centroids());
    EXPECT_EQ(a.lists(), b.lists());
}

TEST(IndexFile, BitExactRoundTrip) {
    const Matrix e = testing::random_unit_rows(300, 8, 14);
    for (const IndexVariant v : {IndexVariant{}, IndexVariant{IndexKind::ivf, 8, 3, 1}}) {
        const auto idx = MipsIndex::build(e, iota_ids(300), v);
        const auto path = testing::temp_path("index.bin");
        idx.save(path);
        const auto back = MipsIndex::load(path);
        EXPECT_EQ(back.embeddings(), idx.embeddings());
        EXPECT_EQ(back.ids(), idx.ids());
        EXPECT_EQ(back.centroids(), idx.centroids());
        EXPECT_EQ(back.lists(), idx.lists());
        EXPECT_EQ(back.variant().n_probe, v.n_probe);
        const auto q = testing::row(testing::random_unit_rows(1, 8, 15), 0);
        EXPECT_EQ(back.search(q, 10), idx.search(q, 10));
    }
}

}  // namespace
}  // namespace prank
