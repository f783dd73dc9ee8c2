#include <doctest.h>

#include <set>

#include "synthetic.hpp"
#include "vtc/errors.hpp"
#include "vtc/retention.hpp"

using namespace vtc;

namespace {

ClusterModel labeled(std::vector<std::size_t> labels, std::size_t k) {
    ClusterModel m;
    m.k = k;
    m.labels = std::move(labels);
    m.sizes.assign(k, 0);
    for (auto l : m.labels) ++m.sizes[l];
    return m;
}

SaliencyMap scores(std::vector<double> s) {
    SaliencyMap m;
    m.scores = std::move(s);
    return m;
}

TokenBundle line_bundle(std::size_t n, std::size_t dim = 2) {
    testing::BundleShape s;
    s.grid_rows = 1;
    s.grid_cols = n;
    s.dim = dim;
    s.d_head = dim;
    return testing::random_bundle(s, n);
}

std::size_t aggregate_count(const CompressedSequence& seq) {
    std::size_t n = 0;
    for (const auto& p : seq.provenance) n += std::holds_alternative<Aggregated>(p);
    return n;
}

}  // namespace

TEST_CASE("rounding and quotas") {
    CHECK(round_half_up(2.5) == 3);
    CHECK(round_half_up(2.49) == 2);
    CHECK(round_half_up(0.0) == 0);
    CHECK(static_quota(4, 50) == 2);
    CHECK(static_quota(2, 50) == 1);
    CHECK(static_quota(3, 1) == 1);   // floor of one token per cluster
    CHECK(static_quota(100, 11) == 11);
    CHECK(static_quota(5, 50) == 3);  // 2.5 rounds up
    CHECK(dynamic_quota(100, 0.05, 1.0) == 5);
    CHECK(dynamic_quota(10, 0.01, 1.0) == 1);
    CHECK(dynamic_quota(10, 0.9, 1.5) == 10);  // capped at the cluster size
}

TEST_CASE("cluster weights are a softmax of mean saliency") {
    const auto model = labeled({0, 0, 1, 1}, 2);
    const auto w = cluster_weights(model, scores({0.25, 0.25, 0.25, 0.25}));
    CHECK(w[0] == doctest::Approx(0.5));
    CHECK(w[1] == doctest::Approx(0.5));
    const auto w2 = cluster_weights(model, scores({1.0, 1.0, 0.0, 0.0}));
    CHECK(w2[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-12));
}

TEST_CASE("static retention: k=1, x=100 is the identity") {
    const auto b = line_bundle(5);
    const auto seq = variant1_static(b, labeled({0, 0, 0, 0, 0}, 1), scores({0.1, 0.2, 0.3, 0.4, 0.5}), 100);
    CHECK(seq.retained_indices() == std::vector<std::size_t>{0, 1, 2, 3, 4});
    CHECK(testing::bit_equal(seq.embeddings, b.visual_embeddings));
}

TEST_CASE("static retention picks per cluster by saliency") {
    // cluster 0 = {0, 2, 3, 5}, cluster 1 = {1, 4}
    const auto b = line_bundle(6);
    const auto model = labeled({0, 1, 0, 0, 1, 0}, 2);
    const auto sal = scores({0.2, 0.1, 0.9, 0.4, 0.8, 0.5});
    const auto seq = variant1_static(b, model, sal, 50);
    CHECK(seq.retained_indices() == std::vector<std::size_t>{2, 4, 5});
    CHECK(aggregate_count(seq) == 0);
    for (std::size_t r = 0; r < seq.size(); ++r) {
        const auto src = seq.retained_indices()[r];
        for (std::size_t j = 0; j < b.dim(); ++j) CHECK(seq.embeddings(r, j) == b.visual_embeddings(src, j));
    }
}

TEST_CASE("static retention ties prefer the lower index") {
    const auto b = line_bundle(4);
    const auto seq = variant1_static(b, labeled({0, 0, 0, 0}, 1), scores({0.5, 0.5, 0.5, 0.5}), 50);
    CHECK(seq.retained_indices() == std::vector<std::size_t>{0, 1});
}

TEST_CASE("k = N keeps every token") {
    const auto b = line_bundle(5);
    const auto seq = variant1_static(b, labeled({0, 1, 2, 3, 4}, 5), scores({0.1, 0.2, 0.3, 0.4, 0.5}), 1);
    CHECK(seq.size() == 5);
}

TEST_CASE("exact-count mode trims and pads by global rank") {
    const std::vector<double> s{0.9, 0.1, 0.5, 0.7, 0.3, 0.5};
    CHECK(fit_to_count({0, 1, 2, 3}, s, 2) == std::vector<std::size_t>{0, 3});
    CHECK(fit_to_count({0}, s, 3) == std::vector<std::size_t>{0, 2, 3});
    CHECK(fit_to_count({0, 2, 5}, s, 2) == std::vector<std::size_t>{0, 2});  // equal scores: higher index dropped
    CHECK(fit_to_count({1, 4}, s, 2) == std::vector<std::size_t>{1, 4});

    const auto b = line_bundle(6);
    const auto seq = variant1_static(b, labeled({0, 1, 0, 0, 1, 0}, 2), scores(s), 50, std::size_t{5});
    CHECK(seq.size() == 5);
}

TEST_CASE("dynamic retention with uniform weights") {
    // 4 equal clusters of 25, equal saliency: w = 1/4, quota = round(25/4) = 6
    const std::size_t n = 100;
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i % 4;
    testing::BundleShape s;
    s.grid_rows = 10;
    s.grid_cols = 10;
    const auto b = testing::random_bundle(s, 1);
    const auto seq = variant2_dynamic(b, labeled(labels, 4), scores(std::vector<double>(n, 0.3)), 1.0);
    CHECK(seq.size() == 24);
    CHECK_THROWS_AS(variant2_dynamic(b, labeled(labels, 4), scores(std::vector<double>(n, 0.3)), 0.0),
                    ValidationError);
}

TEST_CASE("coarse retention: k=1, x=50 on 4 tokens") {
    const auto b = line_bundle(4, 3);
    const auto seq = variant3_coarse(b, labeled({0, 0, 0, 0}, 1), scores({0.1, 0.9, 0.2, 0.8}), 50);
    REQUIRE(seq.size() == 3);
    CHECK(seq.retained_indices() == std::vector<std::size_t>{1, 3});
    const auto& agg = std::get<Aggregated>(seq.provenance[2]);
    CHECK(agg.members == std::vector<std::size_t>{0, 2});
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(seq.embeddings(2, j) ==
              doctest::Approx((b.visual_embeddings(0, j) + b.visual_embeddings(2, j)) / 2).epsilon(1e-15));
    CHECK(agg.mean_row == 0.0);
    CHECK(agg.mean_col == 1.0);
}

TEST_CASE("coarse retention conserves retained + k") {
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 10 + gen() % 40;
        const std::size_t k = 1 + gen() % 8;
        std::vector<std::size_t> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = i < k ? i : gen() % k;  // every cluster non-empty
        std::vector<double> s(n);
        for (double& v : s) v = std::uniform_real_distribution<double>(0, 1)(gen);
        const auto b = line_bundle(n);
        const double x = 1.0 + static_cast<double>(gen() % 98);
        const auto seq = variant3_coarse(b, labeled(labels, k), scores(s), x);
        CHECK(aggregate_count(seq) == k);
        CHECK(seq.size() == seq.retained_indices().size() + k);
        std::set<std::size_t> covered;
        for (const auto& p : seq.provenance) {
            if (auto* r = std::get_if<Retained>(&p)) covered.insert(r->source_index);
            else for (auto m : std::get<Aggregated>(p).members) covered.insert(m);
        }
        CHECK(covered.size() == n);
    }
    const auto b = line_bundle(4);
    CHECK_THROWS_AS(variant3_coarse(b, labeled({0, 0, 0, 0}, 1), scores({1, 2, 3, 4}), 100), ValidationError);
}

TEST_CASE("cluster aggregate averages each cluster") {
    testing::BundleShape s;
    s.grid_rows = 2;
    s.grid_cols = 2;
    s.dim = 3;
    const auto b = testing::random_bundle(s, 17);
    const auto model = labeled({0, 0, 1, 1}, 2);
    const auto seq = cluster_aggregate(b, model, 7);
    REQUIRE(seq.size() == 2);
    CHECK(seq.seed == std::uint64_t{7});
    for (std::size_t r = 0; r < 2; ++r) {
        const auto& agg = std::get<Aggregated>(seq.provenance[r]);
        const auto i = agg.members[0], j = agg.members[1];
        CHECK(((i == 0 && j == 1) || (i == 2 && j == 3)));
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(seq.embeddings(r, c) ==
                  doctest::Approx((b.visual_embeddings(i, c) + b.visual_embeddings(j, c)) / 2).epsilon(1e-15));
    }
    CHECK(cluster_aggregate(b, model, 7).embeddings == seq.embeddings);

    const auto by_position = cluster_aggregate(b, labeled({1, 1, 0, 0}, 2), 0, OrderPolicy::mean_position);
    CHECK(std::get<Aggregated>(by_position.provenance[0]).members == std::vector<std::size_t>{0, 1});
    CHECK_THROWS_AS(cluster_aggregate(b, model, 0, OrderPolicy::original), ValidationError);
}

TEST_CASE("cluster aggregate with k = N is a permutation of the input") {
    testing::BundleShape s;
    s.grid_rows = 3;
    s.grid_cols = 3;
    s.dim = 4;
    s.d_head = 4;
    const auto b = testing::random_bundle(s, 18);
    const auto model = kmeans_pp(b.visual_embeddings, 9);
    const auto seq = cluster_aggregate(b, model, 3);
    REQUIRE(seq.size() == 9);
    std::set<std::size_t> seen;
    for (std::size_t r = 0; r < 9; ++r) {
        const auto& agg = std::get<Aggregated>(seq.provenance[r]);
        REQUIRE(agg.members.size() == 1);
        seen.insert(agg.members[0]);
        for (std::size_t c = 0; c < 4; ++c) CHECK(seq.embeddings(r, c) == b.visual_embeddings(agg.members[0], c));
    }
    CHECK(seen.size() == 9);
}

TEST_CASE("key-based clustering needs keys") {
    const auto b = line_bundle(6);
    CHECK_THROWS_AS(cluster_tokens(b, 2, ClusterBasis::keys), ValidationError);
    testing::BundleShape s;
    s.with_keys = true;
    const auto kb = testing::random_bundle(s, 4);
    const auto model = cluster_tokens(kb, 2, ClusterBasis::keys);
    CHECK(model.basis == ClusterBasis::keys);
    CHECK(model.labels == kmeans_pp(*kb.visual_keys, 2).labels);
}

TEST_CASE("mismatched inputs are rejected") {
    const auto b = line_bundle(4);
    CHECK_THROWS_AS(variant1_static(b, labeled({0, 0, 0}, 1), scores({1, 2, 3, 4}), 50), ValidationError);
    CHECK_THROWS_AS(variant1_static(b, labeled({0, 0, 0, 0}, 1), scores({1, 2, 3}), 50), ValidationError);
    CHECK_THROWS_AS(variant1_static(b, labeled({0, 0, 0, 0}, 1), scores({1, 2, 3, 4}), 0), ValidationError);
}
