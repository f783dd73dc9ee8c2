#include "vtc/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "vtc/errors.hpp"
#include "vtc/retention.hpp"
#include "vtc/sampling.hpp"
#include "vtc/text.hpp"
#include "vtc/version.hpp"

namespace vtc {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Reason = ValidationError::Reason;

enum Param : unsigned {
    p_k = 1u << 0,
    p_x = 1u << 1,
    p_lambda = 1u << 2,
    p_retention = 1u << 3,
    p_seed = 1u << 4,
    p_basis = 1u << 5,
    p_metric = 1u << 6,
    p_layer = 1u << 7,
    p_order = 1u << 8,
    p_scaled = 1u << 9,
    p_softmax = 1u << 10,
    p_max_iters = 1u << 11,
    p_tol = 1u << 12,
};

constexpr unsigned kSaliencyParams = p_layer | p_scaled | p_softmax;
constexpr unsigned kClusterParams = p_seed | p_basis | p_metric | p_max_iters | p_tol;

struct Rules {
    unsigned allowed;
    unsigned required;
};

Rules rules_for(StrategyName name) {
    switch (name) {
        case StrategyName::basic_saliency: return {p_retention | kSaliencyParams, p_retention};
        case StrategyName::cluster_saliency:
            return {p_k | p_x | p_retention | kSaliencyParams | kClusterParams, p_k | p_x};
        case StrategyName::cluster_dynamic:
            return {p_k | p_lambda | p_retention | kSaliencyParams | kClusterParams, p_lambda};
        case StrategyName::cluster_coarse: return {p_k | p_x | kSaliencyParams | kClusterParams, p_k | p_x};
        case StrategyName::cluster_aggregate: return {p_k | p_retention | p_order | kClusterParams, 0};
        case StrategyName::random: return {p_retention | p_seed, p_retention};
        case StrategyName::spatial: return {p_retention, p_retention};
    }
    return {0, 0};
}

unsigned present_params(const StrategySpec& s) {
    unsigned bits = 0;
    if (s.k) bits |= p_k;
    if (s.x_percent) bits |= p_x;
    if (s.lambda) bits |= p_lambda;
    if (s.retain_count || s.retain_frac) bits |= p_retention;
    if (s.seed) bits |= p_seed;
    if (s.basis) bits |= p_basis;
    if (s.metric) bits |= p_metric;
    if (s.layer_index) bits |= p_layer;
    if (s.order_policy) bits |= p_order;
    if (s.scaled) bits |= p_scaled;
    if (s.softmax_axis) bits |= p_softmax;
    if (s.max_iters) bits |= p_max_iters;
    if (s.tol) bits |= p_tol;
    return bits;
}

const char* param_name(unsigned bit) {
    switch (bit) {
        case p_k: return "k";
        case p_x: return "x";
        case p_lambda: return "lambda";
        case p_retention: return "retain_count/retain_frac";
        case p_seed: return "seed";
        case p_basis: return "basis";
        case p_metric: return "metric";
        case p_layer: return "layer";
        case p_order: return "order";
        case p_scaled: return "scaled";
        case p_softmax: return "softmax";
        case p_max_iters: return "max_iters";
        case p_tol: return "tol";
    }
    return "?";
}

const char* to_string(ClusterBasis b) { return b == ClusterBasis::keys ? "keys" : "embeddings"; }
const char* to_string(DistanceMetric m) { return m == DistanceMetric::cosine ? "cosine" : "euclidean"; }
const char* to_string(SoftmaxAxis a) { return a == SoftmaxAxis::visual ? "visual" : "text"; }

ValidationError bad_value(const std::string& key, std::string_view value) {
    return {Reason::bad_parameter, key, "invalid value '" + std::string(value) + "'"};
}

template <typename T>
T parse_number(const std::string& key, std::string_view text) {
    T value{};
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size()) throw bad_value(key, text);
    return value;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError(dir, "", "cannot create output directory");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError(path, path.filename().string(), "cannot open for writing");
    out << text;
    if (!out) throw IoError(path, path.filename().string(), "write failed");
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json run_record(const std::string& command) {
    json doc;
    doc["tool"] = "vtc";
    doc["version"] = kVersion;
    doc["command"] = command;
    return doc;
}

json saliency_options_json(const SaliencyOptions& o) {
    return {{"layer", o.layer_index},
            {"scaled", o.scaled},
            {"softmax", to_string(o.axis)},
            {"embedding_source", "input embeddings projected with the selected layer's weights"}};
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

const char* to_string(StrategyName name) {
    switch (name) {
        case StrategyName::basic_saliency: return "basic-saliency";
        case StrategyName::cluster_saliency: return "cluster-saliency";
        case StrategyName::cluster_dynamic: return "cluster-dynamic";
        case StrategyName::cluster_coarse: return "cluster-coarse";
        case StrategyName::cluster_aggregate: return "cluster-aggregate";
        case StrategyName::random: return "random";
        case StrategyName::spatial: return "spatial";
    }
    return "unknown";
}

std::optional<StrategyName> parse_strategy_name(std::string_view text) {
    for (auto n : {StrategyName::basic_saliency, StrategyName::cluster_saliency, StrategyName::cluster_dynamic,
                   StrategyName::cluster_coarse, StrategyName::cluster_aggregate, StrategyName::random,
                   StrategyName::spatial}) {
        if (text == to_string(n)) return n;
    }
    return std::nullopt;
}

bool uses_saliency(StrategyName name) {
    return name == StrategyName::basic_saliency || name == StrategyName::cluster_saliency ||
           name == StrategyName::cluster_dynamic || name == StrategyName::cluster_coarse;
}

std::optional<std::string> single_head_warning(const TokenBundle& bundle, std::size_t layer, SoftmaxAxis axis) {
    if (axis != SoftmaxAxis::text || layer >= bundle.layers.size() || bundle.layers[layer].n_heads != 1)
        return std::nullopt;
    return "layer " + std::to_string(layer) + " has a single head; every saliency score equals 1/N_t";
}

bool is_aggregating(StrategyName name) { return name == StrategyName::cluster_aggregate; }

StrategySpec parse_strategy_spec(std::string_view text) {
    const auto colon = text.find(':');
    const auto name_text = text.substr(0, colon);
    auto name = parse_strategy_name(name_text);
    if (!name) throw ValidationError(Reason::bad_parameter, "strategy", "unknown strategy '" + std::string(name_text) + "'");
    StrategySpec spec;
    spec.name = *name;
    if (colon == std::string_view::npos) return spec;

    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto item = rest.substr(0, comma);
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string_view::npos)
            throw ValidationError(Reason::bad_parameter, "strategy", "expected key=value, got '" + std::string(item) + "'");
        const std::string key(item.substr(0, eq));
        const auto value = item.substr(eq + 1);

        if (key == "k") spec.k = parse_number<std::size_t>(key, value);
        else if (key == "x") spec.x_percent = parse_number<double>(key, value);
        else if (key == "lambda") spec.lambda = parse_number<double>(key, value);
        else if (key == "retain_count") spec.retain_count = parse_number<std::size_t>(key, value);
        else if (key == "retain_frac") spec.retain_frac = parse_number<double>(key, value);
        else if (key == "seed") spec.seed = parse_number<std::uint64_t>(key, value);
        else if (key == "layer") spec.layer_index = parse_number<std::size_t>(key, value);
        else if (key == "max_iters") spec.max_iters = parse_number<std::size_t>(key, value);
        else if (key == "tol") spec.tol = parse_number<double>(key, value);
        else if (key == "basis") {
            if (value == "embeddings") spec.basis = ClusterBasis::embeddings;
            else if (value == "keys") spec.basis = ClusterBasis::keys;
            else throw bad_value(key, value);
        } else if (key == "metric") {
            if (value == "euclidean") spec.metric = DistanceMetric::euclidean;
            else if (value == "cosine") spec.metric = DistanceMetric::cosine;
            else throw bad_value(key, value);
        } else if (key == "order") {
            if (value == "random") spec.order_policy = OrderPolicy::random;
            else if (value == "mean_position") spec.order_policy = OrderPolicy::mean_position;
            else throw bad_value(key, value);
        } else if (key == "scaled") {
            if (value == "true") spec.scaled = true;
            else if (value == "false") spec.scaled = false;
            else throw bad_value(key, value);
        } else if (key == "softmax") {
            if (value == "text") spec.softmax_axis = SoftmaxAxis::text;
            else if (value == "visual") spec.softmax_axis = SoftmaxAxis::visual;
            else throw bad_value(key, value);
        } else {
            throw ValidationError(Reason::bad_parameter, key, "unknown strategy parameter");
        }
    }
    return spec;
}

ResolvedSpec resolve(const StrategySpec& input, std::size_t n_visual) {
    const auto rules = rules_for(input.name);
    const auto present = present_params(input);
    for (unsigned bit = 1; bit <= p_tol; bit <<= 1) {
        if ((present & bit) && !(rules.allowed & bit)) {
            throw ValidationError(Reason::bad_parameter, param_name(bit),
                                  std::string("not accepted by strategy ") + to_string(input.name));
        }
        if ((rules.required & bit) && !(present & bit)) {
            throw ValidationError(Reason::bad_parameter, param_name(bit),
                                  std::string("required by strategy ") + to_string(input.name));
        }
    }

    ResolvedSpec out;
    StrategySpec& s = out.spec;
    s = input;

    if (s.retain_count && s.retain_frac) {
        out.warnings.emplace_back("both retain_count and retain_frac given; using retain_count");
        s.retain_frac.reset();
    }
    if (s.retain_frac) {
        if (!(*s.retain_frac > 0.0 && *s.retain_frac <= 1.0))
            throw ValidationError(Reason::out_of_range, "retain_frac", "must be in (0, 1]");
        s.retain_count = std::max<std::size_t>(1, round_half_up(*s.retain_frac * static_cast<double>(n_visual)));
        s.retain_frac.reset();
    }
    if (s.retain_count && (*s.retain_count < 1 || *s.retain_count > n_visual)) {
        throw ValidationError(Reason::out_of_range, "retain_count",
                              std::to_string(*s.retain_count) + " not in [1, " + std::to_string(n_visual) + "]");
    }

    if (s.name == StrategyName::cluster_aggregate) {
        if (s.k && s.retain_count) throw ValidationError(Reason::bad_parameter, "k", "give k or a retention, not both");
        if (!s.k && !s.retain_count)
            throw ValidationError(Reason::bad_parameter, "k", "required by strategy cluster-aggregate");
        if (!s.k) s.k = s.retain_count;
        s.retain_count.reset();
        if (!s.order_policy) s.order_policy = OrderPolicy::random;
    }
    if (s.name == StrategyName::cluster_dynamic && !s.k) s.k = 20;
    if (s.k && (*s.k < 1 || *s.k > n_visual))
        throw ValidationError(Reason::out_of_range, "k", std::to_string(*s.k) + " not in [1, " + std::to_string(n_visual) + "]");

    if (rules.allowed & p_seed && !s.seed) s.seed = 0;
    if (rules.allowed & p_basis && !s.basis) s.basis = ClusterBasis::embeddings;
    if (rules.allowed & p_metric && !s.metric) s.metric = DistanceMetric::euclidean;
    if (rules.allowed & p_max_iters && !s.max_iters) s.max_iters = 100;
    if (rules.allowed & p_tol && !s.tol) s.tol = 1e-6;
    if (rules.allowed & p_layer && !s.layer_index) s.layer_index = 0;
    if (rules.allowed & p_scaled && !s.scaled) s.scaled = true;
    if (rules.allowed & p_softmax && !s.softmax_axis) s.softmax_axis = SoftmaxAxis::text;
    return out;
}

json to_json(const StrategySpec& s) {
    json doc;
    doc["name"] = to_string(s.name);
    if (s.k) doc["k"] = *s.k;
    if (s.x_percent) doc["x_percent"] = *s.x_percent;
    if (s.lambda) doc["lambda"] = *s.lambda;
    if (s.retain_count) doc["retain_count"] = *s.retain_count;
    if (s.retain_frac) doc["retain_frac"] = *s.retain_frac;
    if (s.seed) doc["seed"] = *s.seed;
    if (s.basis) doc["basis"] = to_string(*s.basis);
    if (s.metric) doc["metric"] = to_string(*s.metric);
    if (s.layer_index) doc["layer"] = *s.layer_index;
    if (s.order_policy) doc["order"] = to_string(*s.order_policy);
    if (s.scaled) doc["scaled"] = *s.scaled;
    if (s.softmax_axis) doc["softmax"] = to_string(*s.softmax_axis);
    if (s.max_iters) doc["max_iters"] = *s.max_iters;
    if (s.tol) doc["tol"] = *s.tol;
    return doc;
}

StrategyOutcome run_strategy(const TokenBundle& bundle, const ResolvedSpec& resolved, unsigned threads) {
    const StrategySpec& s = resolved.spec;
    StrategyOutcome out;

    if (uses_saliency(s.name)) {
        SaliencyOptions opts;
        opts.layer_index = s.layer_index.value_or(0);
        opts.scaled = s.scaled.value_or(true);
        opts.axis = s.softmax_axis.value_or(SoftmaxAxis::text);
        opts.threads = threads;
        out.saliency = compute_saliency(bundle, opts);
    }
    if (s.k && s.name != StrategyName::basic_saliency) {
        KMeansOptions opts;
        opts.seed = s.seed.value_or(0);
        opts.max_iters = s.max_iters.value_or(100);
        opts.tol = s.tol.value_or(1e-6);
        opts.metric = s.metric.value_or(DistanceMetric::euclidean);
        opts.threads = threads;
        out.clusters = cluster_tokens(bundle, *s.k, s.basis.value_or(ClusterBasis::embeddings), opts);
    }

    switch (s.name) {
        case StrategyName::basic_saliency:
            out.sequence = gather(bundle, basic_saliency_select(*out.saliency, *s.retain_count));
            break;
        case StrategyName::cluster_saliency:
            out.sequence = variant1_static(bundle, *out.clusters, *out.saliency, *s.x_percent, s.retain_count);
            break;
        case StrategyName::cluster_dynamic:
            out.sequence = variant2_dynamic(bundle, *out.clusters, *out.saliency, *s.lambda, s.retain_count);
            break;
        case StrategyName::cluster_coarse:
            out.sequence = variant3_coarse(bundle, *out.clusters, *out.saliency, *s.x_percent);
            break;
        case StrategyName::cluster_aggregate:
            out.sequence = cluster_aggregate(bundle, *out.clusters, *s.seed, *s.order_policy);
            break;
        case StrategyName::random:
            out.sequence = random_sample(bundle, *s.retain_count, *s.seed);
            break;
        case StrategyName::spatial:
            out.sequence = spatial_sample(bundle, *s.retain_count);
            break;
    }
    if (s.seed) out.sequence.seed = *s.seed;
    out.sequence.notes["strategy"] = to_string(s.name);
    return out;
}

CompressSummary run_compress(const fs::path& bundle_path, const StrategySpec& spec, const fs::path& out_dir,
                             unsigned threads) {
    const auto start = std::chrono::steady_clock::now();
    const auto bundle = load_bundle(bundle_path);
    const auto resolved = resolve(spec, bundle.n_visual());
    const auto outcome = run_strategy(bundle, resolved, threads);

    ensure_dir(out_dir);
    write_compressed(bundle, outcome.sequence, out_dir);

    CompressSummary summary;
    summary.strategy = spec.name;
    summary.input_count = bundle.n_visual();
    summary.output_count = outcome.sequence.size();
    summary.retained_percent =
        100.0 * static_cast<double>(summary.output_count) / static_cast<double>(summary.input_count);
    summary.seed = resolved.spec.seed;
    summary.warnings = resolved.warnings;
    if (outcome.saliency) {
        if (auto w = single_head_warning(bundle, outcome.saliency->layer_index, outcome.saliency->axis))
            summary.warnings.push_back(*w);
    }

    json run = run_record("compress");
    run["bundle"] = bundle_path.generic_string();
    run["spec"] = to_json(resolved.spec);
    run["seed"] = resolved.spec.seed ? json(*resolved.spec.seed) : json(nullptr);
    run["warnings"] = summary.warnings;
    run["result"] = {{"input_count", summary.input_count},
                     {"output_count", summary.output_count},
                     {"retained_percent", summary.retained_percent}};
    if (outcome.saliency) {
        run["saliency"] = saliency_options_json({outcome.saliency->layer_index, outcome.saliency->softmax_scaled,
                                                 outcome.saliency->axis, 1});
    }
    if (outcome.clusters) {
        run["clustering"] = {{"k", outcome.clusters->k},
                             {"objective", outcome.clusters->objective},
                             {"iterations", outcome.clusters->iterations},
                             {"seeding", "greedy k-means++ (2 + floor(ln k) candidates per step)"}};
    }
    write_json(out_dir / "run.json", run);

    summary.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return summary;
}

double jaccard(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    std::set<std::size_t> sa(a.begin(), a.end());
    std::set<std::size_t> sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t common = 0;
    for (auto v : sa) common += sb.count(v);
    const std::size_t unite = sa.size() + sb.size() - common;
    return static_cast<double>(common) / static_cast<double>(unite);
}

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    if (a.size() != b.size())
        throw ValidationError(Reason::shape_mismatch, "labels", "labelings cover different item counts");
    auto pairs = [](double n) { return n * (n - 1.0) / 2.0; };
    std::map<std::pair<std::size_t, std::size_t>, double> table;
    std::map<std::size_t, double> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [_, n] : table) index += pairs(n);
    for (const auto& [_, n] : rows) sum_rows += pairs(n);
    for (const auto& [_, n] : cols) sum_cols += pairs(n);
    const double total = pairs(static_cast<double>(a.size()));
    const double expected = total == 0.0 ? 0.0 : sum_rows * sum_cols / total;
    const double max_index = (sum_rows + sum_cols) / 2.0;
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

json CompareReport::to_json() const {
    json doc;
    doc["mode"] = mode == Mode::selection ? "selection" : "labels";
    doc["count_a"] = count_a;
    doc["count_b"] = count_b;
    doc["jaccard"] = optional_number(jaccard);
    doc["adjusted_rand"] = optional_number(adjusted_rand);
    if (saliency_compared) doc["spearman"] = spearman ? json(*spearman) : json("undefined");
    return doc;
}

CompareReport compare_outcomes(const StrategyOutcome& a, const StrategyOutcome& b, StrategyName name_a,
                               StrategyName name_b) {
    if (is_aggregating(name_a) != is_aggregating(name_b)) {
        throw IncomparableError(std::string("cannot compare ") + to_string(name_a) + " with " + to_string(name_b) +
                                ": one selects tokens, the other aggregates clusters");
    }
    CompareReport report;
    report.count_a = a.sequence.size();
    report.count_b = b.sequence.size();
    if (is_aggregating(name_a)) {
        if (!a.clusters || !b.clusters || a.clusters->labels.size() != b.clusters->labels.size())
            throw IncomparableError("cluster labelings cover different token sets");
        report.mode = CompareReport::Mode::labels;
        report.adjusted_rand = adjusted_rand_index(a.clusters->labels, b.clusters->labels);
        return report;
    }
    report.mode = CompareReport::Mode::selection;
    report.jaccard = jaccard(a.sequence.retained_indices(), b.sequence.retained_indices());
    if (a.saliency && b.saliency) {
        if (a.saliency->size() != b.saliency->size()) throw IncomparableError("saliency maps differ in length");
        report.saliency_compared = true;
        report.spearman = rank_correlation(*a.saliency, *b.saliency);
    }
    return report;
}

CompareReport run_compare(const fs::path& bundle_a, const StrategySpec& spec_a, const fs::path& bundle_b,
                          const StrategySpec& spec_b, const fs::path& out_dir, unsigned threads) {
    const auto first = load_bundle(bundle_a);
    const auto second = bundle_b == bundle_a ? first : load_bundle(bundle_b);
    if (first.n_visual() != second.n_visual()) {
        throw IncomparableError("bundles have different visual token counts (" + std::to_string(first.n_visual()) +
                                " vs " + std::to_string(second.n_visual()) + ")");
    }
    const auto resolved_a = resolve(spec_a, first.n_visual());
    const auto resolved_b = resolve(spec_b, second.n_visual());
    if (is_aggregating(spec_a.name) != is_aggregating(spec_b.name)) {
        throw IncomparableError(std::string("cannot compare ") + to_string(spec_a.name) + " with " +
                                to_string(spec_b.name) + ": one selects tokens, the other aggregates clusters");
    }
    const auto outcome_a = run_strategy(first, resolved_a, threads);
    const auto outcome_b = run_strategy(second, resolved_b, threads);
    const auto report = compare_outcomes(outcome_a, outcome_b, spec_a.name, spec_b.name);

    ensure_dir(out_dir);
    write_json(out_dir / "compare.json", report.to_json());
    json run = run_record("compare");
    run["bundle_a"] = bundle_a.generic_string();
    run["bundle_b"] = bundle_b.generic_string();
    run["spec_a"] = to_json(resolved_a.spec);
    run["spec_b"] = to_json(resolved_b.spec);
    run["warnings"] = resolved_a.warnings;
    for (const auto& w : resolved_b.warnings) run["warnings"].push_back(w);
    write_json(out_dir / "run.json", run);
    return report;
}

LayerScan layer_scan(const TokenBundle& bundle, std::span<const std::size_t> layers, const SaliencyOptions& base) {
    if (layers.empty()) throw ValidationError(Reason::bad_parameter, "layers", "no layers requested");
    LayerScan scan;
    scan.layers.assign(layers.begin(), layers.end());
    for (auto l : layers) {
        SaliencyOptions opts = base;
        opts.layer_index = l;
        scan.maps.push_back(compute_saliency(bundle, opts));
    }
    const std::size_t n = layers.size();
    scan.correlation.assign(n, std::vector<std::optional<double>>(n));
    for (std::size_t i = 0; i < n; ++i) {
        scan.correlation[i][i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto rho = rank_correlation(scan.maps[i], scan.maps[j]);
            scan.correlation[i][j] = rho;
            scan.correlation[j][i] = rho;
        }
    }
    return scan;
}

void write_correlation_csv(std::ostream& out, const LayerScan& scan) {
    out << "layer";
    for (auto l : scan.layers) out << ',' << l;
    out << '\n';
    for (std::size_t i = 0; i < scan.layers.size(); ++i) {
        out << scan.layers[i];
        for (const auto& v : scan.correlation[i]) out << ',' << (v ? format_double(*v) : "NA");
        out << '\n';
    }
}

LayerScan run_layer_scan(const fs::path& bundle_path, std::span<const std::size_t> layers,
                         const SaliencyOptions& base, const fs::path& out_dir) {
    const auto bundle = load_bundle(bundle_path);
    auto scan = layer_scan(bundle, layers, base);
    for (auto l : scan.layers)
        if (auto w = single_head_warning(bundle, l, base.axis)) scan.warnings.push_back(*w);

    ensure_dir(out_dir);
    for (std::size_t i = 0; i < scan.layers.size(); ++i) {
        const std::string stem = "layer_" + std::to_string(scan.layers[i]);
        export_heatmap(scan.maps[i], bundle.grid, out_dir / (stem + ".pgm"), HeatmapFormat::pgm);
        export_heatmap(scan.maps[i], bundle.grid, out_dir / (stem + ".csv"), HeatmapFormat::csv);
    }
    {
        std::ostringstream csv;
        write_correlation_csv(csv, scan);
        write_text(out_dir / "correlation.csv", csv.str());
    }
    json run = run_record("layer-scan");
    run["bundle"] = bundle_path.generic_string();
    run["layers"] = scan.layers;
    run["saliency"] = saliency_options_json(base);
    run["saliency"].erase("layer");
    run["warnings"] = scan.warnings;
    write_json(out_dir / "run.json", run);
    return scan;
}

SaliencyRun run_saliency(const fs::path& bundle_path, const SaliencyOptions& options, const fs::path& out_dir) {
    const auto bundle = load_bundle(bundle_path);
    SaliencyRun result;
    result.map = compute_saliency(bundle, options);
    if (auto w = single_head_warning(bundle, options.layer_index, options.axis)) result.warnings.push_back(*w);
    const auto& map = result.map;

    ensure_dir(out_dir);
    const std::string stem = "saliency_layer" + std::to_string(options.layer_index);
    export_heatmap(map, bundle.grid, out_dir / (stem + ".pgm"), HeatmapFormat::pgm);
    export_heatmap(map, bundle.grid, out_dir / (stem + ".csv"), HeatmapFormat::csv);

    json run = run_record("saliency");
    run["bundle"] = bundle_path.generic_string();
    run["saliency"] = saliency_options_json(options);
    run["n_heads"] = bundle.layers[options.layer_index].n_heads;
    run["warnings"] = result.warnings;
    write_json(out_dir / "run.json", run);
    return result;
}

std::vector<cost::CostReport> run_cost(const cost::ModelConfig& model, const cost::HardwareConfig& hw,
                                       const cost::CostQuery& base, std::span<const double> retentions,
                                       const cost::CostOptions& options, const fs::path& out_dir) {
    auto reports = cost::sweep(model, hw, base, retentions, options);
    ensure_dir(out_dir);
    std::ostringstream csv;
    cost::write_csv(csv, reports);
    write_text(out_dir / "cost.csv", csv.str());

    json run = run_record("cost");
    run["model"] = {{"name", model.name},
                    {"n_layers", model.n_layers},
                    {"hidden_dim", model.hidden_dim},
                    {"n_heads", model.n_heads},
                    {"head_dim", model.head_dim},
                    {"ffn_dim", model.ffn_dim},
                    {"ffn_style", model.ffn_style == cost::FfnStyle::gated ? "gated" : "plain"},
                    {"vocab_size", model.vocab_size},
                    {"bytes_per_param", model.bytes_per_param},
                    {"bytes_per_act", model.bytes_per_act}};
    run["hardware"] = {{"name", hw.name}, {"peak_flops", hw.peak_flops}, {"mem_bandwidth", hw.mem_bandwidth}};
    run["query"] = {{"n_text", base.n_text_tokens}, {"n_visual_full", base.n_visual_tokens_full}};
    run["retentions"] = std::vector<double>(retentions.begin(), retentions.end());
    run["accounting"] = {{"activation_multiplier", options.activation_multiplier},
                         {"flops_per_mac", 2},
                         {"excluded", "softmax and normalization FLOPs"}};
    write_json(out_dir / "run.json", run);
    return reports;
}

std::vector<double> retention_grid(std::size_t points) {
    std::vector<double> out;
    out.reserve(points);
    for (std::size_t i = 1; i <= points; ++i) out.push_back(static_cast<double>(i) / static_cast<double>(points));
    return out;
}

}  // namespace vtc
