// vtc: visual token compression command line.
//
// Exit codes: 0 success, 2 validation error, 3 I/O error, 4 incomparable comparison.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vtc/bundle.hpp"
#include "vtc/cost_model.hpp"
#include "vtc/errors.hpp"
#include "vtc/pipeline.hpp"
#include "vtc/text.hpp"
#include "vtc/version.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitIncomparable = 4;

struct SaliencyFlags {
    std::size_t layer = 0;
    bool no_scale = false;
    std::string softmax = "text";

    void add_to(CLI::App* cmd, bool with_layer) {
        if (with_layer) cmd->add_option("--layer", layer, "Layer whose W_q/W_k are used");
        cmd->add_flag("--no-scale", no_scale, "Skip the 1/sqrt(d_head) logit scaling");
        cmd->add_option("--softmax-dim", softmax, "Normalization axis (text is standard; visual is an ablation)")
            ->check(CLI::IsMember({"text", "visual"}));
    }

    vtc::SaliencyOptions options(unsigned threads) const {
        vtc::SaliencyOptions o;
        o.layer_index = layer;
        o.scaled = !no_scale;
        o.axis = softmax == "visual" ? vtc::SoftmaxAxis::visual : vtc::SoftmaxAxis::text;
        o.threads = threads;
        return o;
    }
};

std::vector<std::size_t> parse_layers(const std::string& text, std::size_t available) {
    std::vector<std::size_t> layers;
    if (text == "all") {
        for (std::size_t i = 0; i < available; ++i) layers.push_back(i);
        return layers;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t consumed = 0;
        unsigned long value = 0;
        try {
            value = std::stoul(item, &consumed);
        } catch (const std::exception&) {
            consumed = 0;
        }
        if (consumed != item.size())
            throw vtc::ValidationError(vtc::ValidationError::Reason::bad_parameter, "layers", "bad layer '" + item + "'");
        layers.push_back(value);
    }
    return layers;
}

std::vector<double> parse_retentions(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t consumed = 0;
            out.push_back(std::stod(item, &consumed));
            if (consumed != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw vtc::ValidationError(vtc::ValidationError::Reason::bad_parameter, "r", "bad retention '" + item + "'");
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Visual token sequence compression and analysis"};
    app.set_version_flag("--version", vtc::kVersion);
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = all cores); output does not depend on it");

    // validate
    auto* validate_cmd = app.add_subcommand("validate", "Check a token bundle and print its shape");
    std::string validate_path;
    validate_cmd->add_option("bundle", validate_path, "Bundle directory")->required();

    // compress
    auto* compress_cmd = app.add_subcommand("compress", "Compress a bundle's visual tokens");
    std::string compress_path, compress_out, strategy;
    std::optional<std::size_t> k, retain_count, max_iters;
    std::optional<double> x_percent, lambda, retain_frac, tol;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> basis, metric, order;
    std::optional<std::size_t> layer;
    bool no_scale = false;
    std::optional<std::string> softmax;
    compress_cmd->add_option("bundle", compress_path, "Bundle directory")->required();
    compress_cmd->add_option("--out,-o", compress_out, "Output directory")->required();
    compress_cmd
        ->add_option("--strategy,-s", strategy,
                     "basic-saliency | cluster-saliency | cluster-dynamic | cluster-coarse | cluster-aggregate | "
                     "random | spatial")
        ->required();
    compress_cmd->add_option("--k", k, "Number of clusters");
    compress_cmd->add_option("--x", x_percent, "Per-cluster retention percent");
    compress_cmd->add_option("--lambda", lambda, "Dynamic retention scale");
    compress_cmd->add_option("--retain-count", retain_count, "Exact number of tokens to keep");
    compress_cmd->add_option("--retain-frac", retain_frac, "Fraction of tokens to keep (count wins if both given)");
    compress_cmd->add_option("--seed", seed, "RNG seed");
    compress_cmd->add_option("--basis", basis, "Clustering basis")->check(CLI::IsMember({"embeddings", "keys"}));
    compress_cmd->add_option("--metric", metric, "Clustering metric")->check(CLI::IsMember({"euclidean", "cosine"}));
    compress_cmd->add_option("--order", order, "Aggregate order")->check(CLI::IsMember({"random", "mean_position"}));
    compress_cmd->add_option("--layer", layer, "Saliency layer");
    compress_cmd->add_flag("--no-scale", no_scale, "Skip the 1/sqrt(d_head) logit scaling");
    compress_cmd->add_option("--softmax-dim", softmax, "Saliency normalization axis")
        ->check(CLI::IsMember({"text", "visual"}));
    compress_cmd->add_option("--max-iters", max_iters, "Lloyd iteration cap");
    compress_cmd->add_option("--tol", tol, "Lloyd centroid-shift tolerance");

    // saliency
    auto* saliency_cmd = app.add_subcommand("saliency", "Export a saliency heatmap (PGM and CSV)");
    std::string saliency_path, saliency_out;
    SaliencyFlags saliency_flags;
    saliency_cmd->add_option("bundle", saliency_path, "Bundle directory")->required();
    saliency_cmd->add_option("--out,-o", saliency_out, "Output directory")->required();
    saliency_flags.add_to(saliency_cmd, true);

    // compare
    auto* compare_cmd = app.add_subcommand("compare", "Compare the selections of two strategies");
    std::string compare_path, compare_path_b, compare_out, spec_a, spec_b;
    compare_cmd->add_option("bundle", compare_path, "Bundle directory")->required();
    compare_cmd->add_option("--bundle-b", compare_path_b, "Second bundle (defaults to the first)");
    compare_cmd->add_option("--spec-a", spec_a, "Strategy spec, e.g. basic-saliency:retain_count=64")->required();
    compare_cmd->add_option("--spec-b", spec_b, "Strategy spec for the second run")->required();
    compare_cmd->add_option("--out,-o", compare_out, "Output directory")->required();

    // layer-scan
    auto* scan_cmd = app.add_subcommand("layer-scan", "Per-layer heatmaps and their rank correlations");
    std::string scan_path, scan_out, scan_layers = "all";
    SaliencyFlags scan_flags;
    scan_cmd->add_option("bundle", scan_path, "Bundle directory")->required();
    scan_cmd->add_option("--layers", scan_layers, "Comma-separated layer indices or 'all'");
    scan_cmd->add_option("--out,-o", scan_out, "Output directory")->required();
    scan_flags.add_to(scan_cmd, false);

    // cost
    auto* cost_cmd = app.add_subcommand("cost", "Prefill cost sweep over visual token retention");
    std::string model_path, preset, hw_path, cost_out, retentions_text;
    std::uint64_t n_text = 64, n_visual = 576;
    std::size_t points = 20;
    double alpha = 12.0;
    auto* model_opt = cost_cmd->add_option("--model", model_path, "Model config JSON");
    cost_cmd->add_option("--preset", preset, "Built-in model shape")
        ->check(CLI::IsMember({"llama2-7b"}))
        ->excludes(model_opt);
    cost_cmd->add_option("--hw", hw_path, "Hardware config JSON (peak_flops, mem_bandwidth)")->required();
    cost_cmd->add_option("--n-text", n_text, "Text tokens in the prompt");
    cost_cmd->add_option("--n-visual", n_visual, "Visual tokens before compression");
    auto* r_opt = cost_cmd->add_option("--r", retentions_text, "Comma-separated retention fractions");
    cost_cmd->add_option("--points", points, "Evenly spaced retentions i/points, i = 1..points")->excludes(r_opt);
    cost_cmd->add_option("--alpha", alpha, "Activation working-set multiplier");
    cost_cmd->add_option("--out,-o", cost_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*validate_cmd) {
            const auto b = vtc::load_bundle(validate_path);
            std::cout << "ok: " << validate_path << "\n"
                      << "n_visual " << b.n_visual() << " (grid " << b.grid.rows << "x" << b.grid.cols << ")\n"
                      << "n_text " << b.n_text() << "\n"
                      << "dim " << b.dim() << "\n"
                      << "layers " << b.layers.size() << "\n";
            for (std::size_t l = 0; l < b.layers.size(); ++l) {
                std::cout << "  layer " << l << ": " << b.layers[l].n_heads << " heads x " << b.layers[l].d_head
                          << "\n";
            }
            std::cout << "visual_keys " << (b.visual_keys ? std::to_string(b.visual_keys->cols()) + " dims" : "none")
                      << "\n";
            for (const auto& [key, value] : b.meta) std::cout << "meta." << key << " = " << value << "\n";
            for (std::size_t l = 0; l < b.layers.size(); ++l)
                if (auto w = vtc::single_head_warning(b, l, vtc::SoftmaxAxis::text)) std::cerr << "warning: " << *w << "\n";
            return 0;
        }

        if (*compress_cmd) {
            auto name = vtc::parse_strategy_name(strategy);
            if (!name)
                throw vtc::ValidationError(vtc::ValidationError::Reason::bad_parameter, "strategy",
                                           "unknown strategy '" + strategy + "'");
            vtc::StrategySpec spec;
            spec.name = *name;
            spec.k = k;
            spec.x_percent = x_percent;
            spec.lambda = lambda;
            spec.retain_count = retain_count;
            spec.retain_frac = retain_frac;
            spec.seed = seed;
            if (basis) spec.basis = *basis == "keys" ? vtc::ClusterBasis::keys : vtc::ClusterBasis::embeddings;
            if (metric) spec.metric = *metric == "cosine" ? vtc::DistanceMetric::cosine : vtc::DistanceMetric::euclidean;
            if (order) spec.order_policy = *order == "random" ? vtc::OrderPolicy::random : vtc::OrderPolicy::mean_position;
            spec.layer_index = layer;
            if (no_scale) spec.scaled = false;
            if (softmax) spec.softmax_axis = *softmax == "visual" ? vtc::SoftmaxAxis::visual : vtc::SoftmaxAxis::text;
            spec.max_iters = max_iters;
            spec.tol = tol;

            const auto summary = vtc::run_compress(compress_path, spec, compress_out, threads);
            for (const auto& w : summary.warnings) std::cerr << "warning: " << w << "\n";
            std::printf("strategy %s\ninput %zu\noutput %zu (%.1f%%)\nseed %s\ntime %.1f ms\n",
                        vtc::to_string(summary.strategy), summary.input_count, summary.output_count,
                        summary.retained_percent, summary.seed ? std::to_string(*summary.seed).c_str() : "none",
                        summary.elapsed_ms);
            return 0;
        }

        if (*saliency_cmd) {
            const auto run = vtc::run_saliency(saliency_path, saliency_flags.options(threads), saliency_out);
            for (const auto& w : run.warnings) std::cerr << "warning: " << w << "\n";
            const auto& map = run.map;
            const auto [lo, hi] = std::minmax_element(map.scores.begin(), map.scores.end());
            std::cout << "layer " << map.layer_index << ": " << map.size() << " scores in [" << vtc::format_double(*lo)
                      << ", " << vtc::format_double(*hi) << "]\n";
            return 0;
        }

        if (*compare_cmd) {
            const auto a = vtc::parse_strategy_spec(spec_a);
            const auto b = vtc::parse_strategy_spec(spec_b);
            const std::string second = compare_path_b.empty() ? compare_path : compare_path_b;
            const auto report = vtc::run_compare(compare_path, a, second, b, compare_out, threads);
            std::cout << report.to_json().dump(2) << "\n";
            return 0;
        }

        if (*scan_cmd) {
            const auto b = vtc::load_bundle(scan_path);
            const auto layers = parse_layers(scan_layers, b.layers.size());
            const auto scan = vtc::run_layer_scan(scan_path, layers, scan_flags.options(threads), scan_out);
            for (const auto& w : scan.warnings) std::cerr << "warning: " << w << "\n";
            vtc::write_correlation_csv(std::cout, scan);
            return 0;
        }

        if (*cost_cmd) {
            if (model_path.empty() && preset.empty())
                throw vtc::ValidationError(vtc::ValidationError::Reason::bad_parameter, "model",
                                           "give --model or --preset");
            const auto model = preset.empty() ? vtc::cost::load_model_config(model_path) : vtc::cost::llama2_7b();
            const auto hw = vtc::cost::load_hardware_config(hw_path);
            const auto retentions = retentions_text.empty() ? vtc::retention_grid(points) : parse_retentions(retentions_text);
            vtc::cost::CostQuery query{n_text, n_visual, 1.0};
            vtc::cost::CostOptions options{alpha};
            const auto reports = vtc::run_cost(model, hw, query, retentions, options, cost_out);
            vtc::cost::write_csv(std::cout, reports);
            return 0;
        }
    } catch (const vtc::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const vtc::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const vtc::IncomparableError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIncomparable;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
