#include "vtc/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vtc/errors.hpp"
#include "vtc/retention.hpp"
#include "vtc/rng.hpp"

namespace vtc {
namespace {

void check_count(std::size_t count, std::size_t n) {
    if (count < 1 || count > n) {
        throw ValidationError(ValidationError::Reason::out_of_range, "retain_count",
                              std::to_string(count) + " not in [1, " + std::to_string(n) + "]");
    }
}

std::vector<std::size_t> centered_lines(std::size_t extent, std::size_t picks) {
    std::vector<std::size_t> lines(picks);
    for (std::size_t i = 0; i < picks; ++i) {
        // floor((i + 0.5) * extent / picks) in exact integer arithmetic
        lines[i] = ((2 * i + 1) * extent) / (2 * picks);
    }
    return lines;
}

std::size_t clamp_round(double v, std::size_t hi) { return std::clamp<std::size_t>(round_half_up(v), 1, hi); }

}  // namespace

std::vector<std::size_t> random_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
    check_count(count, n);
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

Lattice spatial_lattice(const GridShape& grid, std::size_t count) {
    check_count(count, grid.count());
    const auto rows_total = grid.rows;
    const auto cols_total = grid.cols;

    std::size_t r = clamp_round(std::sqrt(static_cast<double>(count) * static_cast<double>(rows_total) /
                                          static_cast<double>(cols_total)),
                                rows_total);
    std::size_t c = clamp_round(static_cast<double>(count) / static_cast<double>(r), cols_total);

    if (r * c != count) {
        auto miss = [count](std::size_t a, std::size_t b) {
            const std::size_t p = a * b;
            return p > count ? p - count : count - p;
        };
        std::size_t best_r = 1, best_c = 1;
        std::size_t best_miss = miss(1, 1);
        for (std::size_t rr = 1; rr <= rows_total; ++rr) {
            for (std::size_t cc = 1; cc <= cols_total; ++cc) {
                const auto m = miss(rr, cc);
                if (m < best_miss || (m == best_miss && rr > best_r)) {
                    best_miss = m;
                    best_r = rr;
                    best_c = cc;
                }
            }
        }
        r = best_r;
        c = best_c;
    }

    Lattice lattice;
    lattice.rows = r;
    lattice.cols = c;
    lattice.row_indices = centered_lines(rows_total, r);
    lattice.col_indices = centered_lines(cols_total, c);
    return lattice;
}

std::vector<std::size_t> lattice_indices(const GridShape& grid, const Lattice& lattice) {
    std::vector<std::size_t> out;
    out.reserve(lattice.count());
    for (auto r : lattice.row_indices)
        for (auto c : lattice.col_indices) out.push_back(r * grid.cols + c);
    return out;
}

CompressedSequence random_sample(const TokenBundle& bundle, std::size_t retain_count, std::uint64_t seed) {
    auto seq = gather(bundle, random_indices(bundle.n_visual(), retain_count, seed));
    seq.seed = seed;
    seq.notes["rng"] = Rng::kAlgorithm;
    return seq;
}

CompressedSequence spatial_sample(const TokenBundle& bundle, std::size_t retain_count) {
    const auto lattice = spatial_lattice(bundle.grid, retain_count);
    auto seq = gather(bundle, lattice_indices(bundle.grid, lattice));
    seq.notes["lattice"] = std::to_string(lattice.rows) + "x" + std::to_string(lattice.cols);
    seq.notes["lattice_anchor"] = "centered";
    seq.notes["requested_count"] = std::to_string(retain_count);
    return seq;
}

}  // namespace vtc
