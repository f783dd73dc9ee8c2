#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vtc/bundle.hpp"

namespace vtc {

/// Output token copied from one source visual token.
struct Retained {
    std::size_t source_index = 0;
};

/// Output token formed by averaging a group of source tokens.
struct Aggregated {
    std::vector<std::size_t> members;  // ascending
    double mean_row = 0.0;
    double mean_col = 0.0;
};

using Provenance = std::variant<Retained, Aggregated>;

enum class OrderPolicy { original, random, mean_position };

const char* to_string(OrderPolicy policy);

/// Compressed visual token sequence, ready to be concatenated with text tokens.
struct CompressedSequence {
    Matrix embeddings;  // M x D
    std::vector<Provenance> provenance;
    OrderPolicy order_policy = OrderPolicy::original;
    std::optional<std::uint64_t> seed;
    /// Algorithm identifiers and parameters worth recording next to the output.
    std::map<std::string, std::string> notes;

    std::size_t size() const noexcept { return provenance.size(); }

    /// Source indices of Retained tokens, in output order.
    std::vector<std::size_t> retained_indices() const;
};

/// Retained-only sequence for `indices` (kept in the given order).
CompressedSequence gather(const TokenBundle& bundle, const std::vector<std::size_t>& indices);

/// Aggregated token for `members`: embedding mean and grid-position mean.
/// A singleton aggregate copies its member row exactly.
Aggregated aggregate_provenance(const GridShape& grid, std::vector<std::size_t> members);
std::vector<double> mean_embedding(const Matrix& embeddings, const std::vector<std::size_t>& members);

/// Writes the sequence as a bundle directory (visual rows replaced by the
/// compressed tokens on a 1 x M grid; text and layers copied from `source`)
/// plus provenance.json.
void write_compressed(const TokenBundle& source, const CompressedSequence& sequence,
                      const std::filesystem::path& dir);

inline constexpr const char* kProvenanceName = "provenance.json";

}  // namespace vtc
