#include "vtc/sequence.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "vtc/errors.hpp"

namespace vtc {

const char* to_string(OrderPolicy policy) {
    switch (policy) {
        case OrderPolicy::original: return "original";
        case OrderPolicy::random: return "random";
        case OrderPolicy::mean_position: return "mean_position";
    }
    return "unknown";
}

std::vector<std::size_t> CompressedSequence::retained_indices() const {
    std::vector<std::size_t> out;
    for (const auto& p : provenance)
        if (const auto* r = std::get_if<Retained>(&p)) out.push_back(r->source_index);
    return out;
}

CompressedSequence gather(const TokenBundle& bundle, const std::vector<std::size_t>& indices) {
    CompressedSequence seq;
    seq.embeddings = gather_rows(bundle.visual_embeddings, indices);
    seq.provenance.reserve(indices.size());
    for (auto i : indices) seq.provenance.emplace_back(Retained{i});
    return seq;
}

std::vector<double> mean_embedding(const Matrix& embeddings, const std::vector<std::size_t>& members) {
    std::vector<double> mean(embeddings.cols(), 0.0);
    if (members.size() == 1) {
        auto row = embeddings.row(members.front());
        std::copy(row.begin(), row.end(), mean.begin());
        return mean;
    }
    for (auto m : members) {
        auto row = embeddings.row(m);
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += row[j];
    }
    const double n = static_cast<double>(members.size());
    for (double& v : mean) v /= n;
    return mean;
}

Aggregated aggregate_provenance(const GridShape& grid, std::vector<std::size_t> members) {
    std::sort(members.begin(), members.end());
    Aggregated agg;
    double rows = 0.0, cols = 0.0;
    for (auto m : members) {
        const auto pos = grid.position(m);
        rows += static_cast<double>(pos.row);
        cols += static_cast<double>(pos.col);
    }
    const double n = static_cast<double>(members.size());
    agg.mean_row = rows / n;
    agg.mean_col = cols / n;
    agg.members = std::move(members);
    return agg;
}

void write_compressed(const TokenBundle& source, const CompressedSequence& sequence, const std::filesystem::path& dir) {
    using json = nlohmann::json;

    TokenBundle out;
    out.visual_embeddings = sequence.embeddings;
    out.text_embeddings = source.text_embeddings;
    out.grid = {1, sequence.size()};
    out.layers = source.layers;
    out.meta = source.meta;
    out.meta["source_n_visual"] = std::to_string(source.n_visual());
    out.meta["source_grid_rows"] = std::to_string(source.grid.rows);
    out.meta["source_grid_cols"] = std::to_string(source.grid.cols);
    out.meta["order_policy"] = to_string(sequence.order_policy);
    for (const auto& [key, value] : sequence.notes) out.meta["compression." + key] = value;
    save_bundle(out, dir);

    json tokens = json::array();
    for (const auto& p : sequence.provenance) {
        if (const auto* r = std::get_if<Retained>(&p)) {
            const auto pos = source.grid.position(r->source_index);
            tokens.push_back({{"kind", "retained"}, {"source_index", r->source_index}, {"position", {pos.row, pos.col}}});
        } else {
            const auto& a = std::get<Aggregated>(p);
            tokens.push_back(
                {{"kind", "aggregated"}, {"members", a.members}, {"mean_position", {a.mean_row, a.mean_col}}});
        }
    }

    json doc;
    doc["version"] = 1;
    doc["n_source"] = source.n_visual();
    doc["source_grid"] = {{"rows", source.grid.rows}, {"cols", source.grid.cols}};
    doc["order_policy"] = to_string(sequence.order_policy);
    doc["seed"] = sequence.seed ? json(*sequence.seed) : json(nullptr);
    doc["notes"] = sequence.notes;
    doc["tokens"] = std::move(tokens);

    const auto path = dir / kProvenanceName;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError(path, kProvenanceName, "cannot write provenance");
    f << doc.dump(2) << '\n';
    if (!f) throw IoError(path, kProvenanceName, "write failed");
}

}  // namespace vtc
