#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vtc/bundle.hpp"
#include "vtc/sequence.hpp"

namespace vtc {

/// `count` distinct indices from [0, n), uniformly without replacement
/// (partial Fisher-Yates over Rng), returned ascending. Depends only on
/// (n, count, seed).
std::vector<std::size_t> random_indices(std::size_t n, std::size_t count, std::uint64_t seed);

struct Lattice {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_indices;
    std::vector<std::size_t> col_indices;

    std::size_t count() const noexcept { return rows * cols; }
};

/// Centered uniform-stride lattice of roughly `count` cells on `grid`.
/// Target shape is r = round(sqrt(count * R / C)), c = round(count / r); if
/// that product misses `count`, the (r, c) minimizing |r*c - count| is used
/// (larger r on ties). Selected line i is floor((i + 0.5) * R / r).
Lattice spatial_lattice(const GridShape& grid, std::size_t count);

/// Lattice cells in raster order.
std::vector<std::size_t> lattice_indices(const GridShape& grid, const Lattice& lattice);

CompressedSequence random_sample(const TokenBundle& bundle, std::size_t retain_count, std::uint64_t seed);

/// Output count is the lattice size, which may differ from `retain_count` when
/// no exact factorization fits the grid.
CompressedSequence spatial_sample(const TokenBundle& bundle, std::size_t retain_count);

}  // namespace vtc
