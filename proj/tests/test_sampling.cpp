#include <doctest.h>

#include "synthetic.hpp"
#include "vtc/errors.hpp"
#include "vtc/rng.hpp"
#include "vtc/sampling.hpp"

using namespace vtc;

TEST_CASE("rng is reproducible and bounded") {
    Rng a(5), b(5), c(6);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next();
        CHECK(x == b.next());
        (void)c.next();
    }
    CHECK(Rng(5).next() != Rng(6).next());
    Rng r(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(r.below(7) < 7);
    }
    CHECK(std::string(Rng::kAlgorithm) == "mt19937_64+u53+rejection");
}

TEST_CASE("random indices") {
    const auto all = random_indices(10, 10, 3);
    CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    const auto a = random_indices(576, 64, 1);
    const auto b = random_indices(576, 64, 2);
    CHECK(a.size() == 64);
    CHECK(b.size() == 64);
    CHECK(a != b);
    CHECK(std::adjacent_find(a.begin(), a.end(), std::greater_equal<>()) == a.end());
    CHECK(random_indices(576, 64, 1) == a);
    CHECK_THROWS_AS(random_indices(5, 0, 1), ValidationError);
    CHECK_THROWS_AS(random_indices(5, 6, 1), ValidationError);
}

TEST_CASE("random sample copies rows and ignores embedding values") {
    testing::BundleShape s;
    s.grid_rows = 4;
    s.grid_cols = 5;
    const auto b1 = testing::random_bundle(s, 1);
    const auto b2 = testing::random_bundle(s, 2);
    const auto x = random_sample(b1, 6, 99);
    const auto y = random_sample(b2, 6, 99);
    CHECK(x.retained_indices() == y.retained_indices());
    CHECK(x.seed == std::uint64_t{99});
    CHECK(x.notes.at("rng") == Rng::kAlgorithm);
    const auto idx = x.retained_indices();
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < b1.dim(); ++j) CHECK(x.embeddings(r, j) == b1.visual_embeddings(idx[r], j));
}

TEST_CASE("inclusion frequency is retain/N") {
    std::vector<int> hits(10, 0);
    for (std::uint64_t seed = 0; seed < 2000; ++seed)
        for (auto i : random_indices(10, 3, seed)) ++hits[i];
    for (int h : hits) CHECK(std::abs(h / 2000.0 - 0.3) < 0.04);
}

TEST_CASE("spatial lattice on 24x24") {
    const GridShape grid{24, 24};
    const auto l64 = spatial_lattice(grid, 64);
    CHECK(l64.rows == 8);
    CHECK(l64.cols == 8);
    const std::vector<std::size_t> want{1, 4, 7, 10, 13, 16, 19, 22};
    CHECK(l64.row_indices == want);
    CHECK(l64.col_indices == want);

    const auto l144 = spatial_lattice(grid, 144);
    CHECK(l144.rows == 12);
    for (std::size_t i = 0; i < 12; ++i) CHECK(l144.row_indices[i] == 2 * i + 1);

    const auto full = spatial_lattice(grid, 576);
    CHECK(full.count() == 576);
    CHECK(lattice_indices(grid, full).front() == 0);
    CHECK(lattice_indices(grid, full).back() == 575);
}

TEST_CASE("awkward counts use the closest factorization") {
    const GridShape grid{24, 24};
    const auto l = spatial_lattice(grid, 7);  // prime: 7x1 and 1x7 tie, larger r wins
    CHECK(l.count() == 7);
    CHECK(l.rows == 7);
    const auto l2 = spatial_lattice(GridShape{2, 3}, 5);  // 2x2 and 2x3 miss by one; larger r first
    CHECK(l2.rows <= 2);
    CHECK(l2.cols <= 3);
    CHECK((l2.count() == 4 || l2.count() == 6));
}

TEST_CASE("lattice is balanced and in range") {
    for (std::size_t count = 1; count <= 60; ++count) {
        const GridShape grid{6, 10};
        const auto l = spatial_lattice(grid, count);
        REQUIRE(l.rows <= grid.rows);
        REQUIRE(l.cols <= grid.cols);
        for (std::size_t i = 1; i < l.row_indices.size(); ++i) CHECK(l.row_indices[i] > l.row_indices[i - 1]);
        for (std::size_t i = 2; i < l.col_indices.size(); ++i) {
            const auto d1 = l.col_indices[i] - l.col_indices[i - 1];
            const auto d0 = l.col_indices[i - 1] - l.col_indices[i - 2];
            CHECK((d1 > d0 ? d1 - d0 : d0 - d1) <= 1);
        }
        const auto idx = lattice_indices(grid, l);
        CHECK(std::is_sorted(idx.begin(), idx.end()));
        CHECK(idx.back() < grid.count());
    }
}

TEST_CASE("spatial sample records the lattice") {
    testing::BundleShape s;
    s.grid_rows = s.grid_cols = 24;
    s.dim = 2;
    s.d_head = 2;
    const auto b = testing::random_bundle(s, 1);
    const auto seq = spatial_sample(b, 64);
    CHECK(seq.size() == 64);
    CHECK(seq.notes.at("lattice") == "8x8");
    CHECK(seq.notes.at("lattice_anchor") == "centered");
    CHECK(seq.retained_indices().front() == 1 * 24 + 1);
    CHECK_FALSE(seq.seed.has_value());
    CHECK(spatial_sample(b, 576).size() == 576);
    CHECK_THROWS_AS(spatial_sample(b, 0), ValidationError);
    CHECK_THROWS_AS(spatial_sample(b, 577), ValidationError);
}
