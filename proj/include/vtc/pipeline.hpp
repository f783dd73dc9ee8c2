#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vtc/bundle.hpp"
#include "vtc/cost_model.hpp"
#include "vtc/kmeans.hpp"
#include "vtc/saliency.hpp"
#include "vtc/sequence.hpp"

namespace vtc {

enum class StrategyName {
    basic_saliency,
    cluster_saliency,
    cluster_dynamic,
    cluster_coarse,
    cluster_aggregate,
    random,
    spatial,
};

const char* to_string(StrategyName name);
std::optional<StrategyName> parse_strategy_name(std::string_view text);

/// A compression strategy and its parameters. Unset fields take defaults
/// during resolve(); fields the strategy does not use must stay unset.
struct StrategySpec {
    StrategyName name = StrategyName::basic_saliency;
    std::optional<std::size_t> k;
    std::optional<double> x_percent;
    std::optional<double> lambda;
    std::optional<std::size_t> retain_count;
    std::optional<double> retain_frac;
    std::optional<std::uint64_t> seed;
    std::optional<ClusterBasis> basis;
    std::optional<DistanceMetric> metric;
    std::optional<std::size_t> layer_index;
    std::optional<OrderPolicy> order_policy;
    std::optional<bool> scaled;
    std::optional<SoftmaxAxis> softmax_axis;
    std::optional<std::size_t> max_iters;
    std::optional<double> tol;
};

/// Parses "name" or "name:key=value,key=value". Keys: k, x, lambda,
/// retain_count, retain_frac, seed, basis, metric, layer, order, scaled,
/// softmax, max_iters, tol.
StrategySpec parse_strategy_spec(std::string_view text);

struct ResolvedSpec {
    StrategySpec spec;  // every parameter the strategy uses is set
    std::vector<std::string> warnings;
};

/// Checks required/forbidden parameters, applies defaults and turns a
/// retention fraction into a count (an explicit count wins).
ResolvedSpec resolve(const StrategySpec& spec, std::size_t n_visual);

nlohmann::json to_json(const StrategySpec& spec);

bool uses_saliency(StrategyName name);

/// Warning text when `layer` has a single head: text-normalized saliency is
/// then identically 1/N_t.
std::optional<std::string> single_head_warning(const TokenBundle& bundle, std::size_t layer, SoftmaxAxis axis);
bool is_aggregating(StrategyName name);

struct StrategyOutcome {
    CompressedSequence sequence;
    std::optional<SaliencyMap> saliency;
    std::optional<ClusterModel> clusters;
};

/// Runs a resolved strategy on an in-memory bundle.
StrategyOutcome run_strategy(const TokenBundle& bundle, const ResolvedSpec& resolved, unsigned threads = 1);

struct CompressSummary {
    StrategyName strategy = StrategyName::basic_saliency;
    std::size_t input_count = 0;
    std::size_t output_count = 0;
    double retained_percent = 0.0;
    std::optional<std::uint64_t> seed;
    double elapsed_ms = 0.0;
    std::vector<std::string> warnings;
};

/// Loads the bundle, compresses it and writes the compressed bundle,
/// provenance.json and run.json to `out_dir`.
CompressSummary run_compress(const std::filesystem::path& bundle_path, const StrategySpec& spec,
                             const std::filesystem::path& out_dir, unsigned threads = 1);

/// |A n B| / |A u B| of two index sets (duplicates ignored); 1 when both are empty.
double jaccard(std::span<const std::size_t> a, std::span<const std::size_t> b);

/// Adjusted Rand index of two labelings of the same items. Returns 1 when
/// both partitions are trivial in the same way (the index is 0/0).
double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b);

struct CompareReport {
    enum class Mode { selection, labels };
    Mode mode = Mode::selection;
    std::size_t count_a = 0;
    std::size_t count_b = 0;
    std::optional<double> jaccard;
    std::optional<double> adjusted_rand;
    bool saliency_compared = false;
    std::optional<double> spearman;  // nullopt with saliency_compared: correlation undefined

    nlohmann::json to_json() const;
};

/// Selection strategies compare retained index sets (plus saliency rank
/// correlation when both computed saliency); aggregating strategies compare
/// cluster labels. Mixed pairs throw IncomparableError.
CompareReport compare_outcomes(const StrategyOutcome& a, const StrategyOutcome& b, StrategyName name_a,
                               StrategyName name_b);

/// Compares two strategies, each on its own bundle (pass the same path twice
/// for a single-bundle comparison). Writes compare.json and run.json.
CompareReport run_compare(const std::filesystem::path& bundle_a, const StrategySpec& spec_a,
                          const std::filesystem::path& bundle_b, const StrategySpec& spec_b,
                          const std::filesystem::path& out_dir, unsigned threads = 1);

struct LayerScan {
    std::vector<std::size_t> layers;
    std::vector<SaliencyMap> maps;
    /// Pairwise Spearman; diagonal is 1, nullopt where undefined.
    std::vector<std::vector<std::optional<double>>> correlation;
    std::vector<std::string> warnings;
};

LayerScan layer_scan(const TokenBundle& bundle, std::span<const std::size_t> layers, const SaliencyOptions& base);

/// Writes layer_<i>.pgm / layer_<i>.csv heatmaps, correlation.csv and run.json.
LayerScan run_layer_scan(const std::filesystem::path& bundle_path, std::span<const std::size_t> layers,
                         const SaliencyOptions& base, const std::filesystem::path& out_dir);

void write_correlation_csv(std::ostream& out, const LayerScan& scan);

struct SaliencyRun {
    SaliencyMap map;
    std::vector<std::string> warnings;
};

/// Writes saliency_layer<i>.pgm / .csv heatmaps and run.json.
SaliencyRun run_saliency(const std::filesystem::path& bundle_path, const SaliencyOptions& options,
                         const std::filesystem::path& out_dir);

/// Writes cost.csv and run.json.
std::vector<cost::CostReport> run_cost(const cost::ModelConfig& model, const cost::HardwareConfig& hw,
                                       const cost::CostQuery& base, std::span<const double> retentions,
                                       const cost::CostOptions& options, const std::filesystem::path& out_dir);

/// Evenly spaced retentions i / points for i = 1..points.
std::vector<double> retention_grid(std::size_t points);

}  // namespace vtc
