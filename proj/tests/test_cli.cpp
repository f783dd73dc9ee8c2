#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "cli.hpp"
#include "synthetic.hpp"

using namespace vtc;
using vtc::testing::run_cli;
using vtc::testing::TempDir;

namespace {

struct Fixture {
    TempDir tmp;
    std::string bundle;
    std::string log;

    Fixture() {
        testing::BundleShape s;
        s.grid_rows = s.grid_cols = 6;
        s.n_text = 4;
        s.n_heads = 2;
        s.d_head = 4;
        s.dim = 8;
        s.n_layers = 2;
        bundle = (tmp / "bundle").string();
        save_bundle(testing::random_bundle(s, 5), bundle);
        log = (tmp / "log.txt").string();
    }

    std::string out(const std::string& name) const { return (tmp / name).string(); }
    testing::CliResult run(const std::vector<std::string>& args) const { return run_cli(args, log); }
};

}  // namespace

TEST_CASE("validate") {
    Fixture f;
    const auto r = f.run({"validate", f.bundle});
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("n_visual 36 (grid 6x6)") != std::string::npos);
    CHECK(f.run({"validate", f.out("missing")}).exit_code == 3);

    auto manifest = nlohmann::json::parse(testing::read_file(f.bundle + "/manifest.json"));
    manifest["grid_rows"] = 5;
    std::ofstream(f.bundle + "/manifest.json") << manifest.dump();
    CHECK(f.run({"validate", f.bundle}).exit_code == 2);
}

TEST_CASE("compress") {
    Fixture f;
    auto r = f.run({"compress", f.bundle, "-o", f.out("c"), "--strategy", "cluster-aggregate", "--k", "9", "--seed", "7"});
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("output 9 (25.0%)") != std::string::npos);
    CHECK(load_bundle(f.out("c")).n_visual() == 9);

    r = f.run({"compress", f.bundle, "-o", f.out("d"), "--strategy", "basic-saliency", "--retain-count", "5",
               "--retain-frac", "0.5"});
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("warning") != std::string::npos);
    CHECK(r.output.find("output 5") != std::string::npos);

    CHECK(f.run({"compress", f.bundle, "-o", f.out("e"), "--strategy", "spatial", "--retain-count", "4", "--seed", "1"})
              .exit_code == 2);
    CHECK(f.run({"compress", f.bundle, "-o", f.out("e"), "--strategy", "nonsense"}).exit_code == 2);
    CHECK(f.run({"compress", f.bundle, "-o", f.out("e"), "--strategy", "random", "--retain-count", "99"}).exit_code == 2);
    CHECK(f.run({"compress", f.bundle}).exit_code == 2);  // missing required options

    std::ofstream(f.out("file")) << "x";
    CHECK(f.run({"compress", f.bundle, "-o", f.out("file") + "/sub", "--strategy", "spatial", "--retain-count", "4"})
              .exit_code == 3);
}

TEST_CASE("compare exit codes") {
    Fixture f;
    auto r = f.run({"compare", f.bundle, "--spec-a", "random:retain_count=6,seed=1", "--spec-b",
                    "random:retain_count=6,seed=1", "-o", f.out("cmp")});
    CHECK(r.exit_code == 0);
    const auto report = nlohmann::json::parse(testing::read_file(f.out("cmp") + "/compare.json"));
    CHECK(report["jaccard"] == 1.0);

    r = f.run({"compare", f.bundle, "--spec-a", "random:retain_count=6", "--spec-b", "cluster-aggregate:k=6", "-o",
               f.out("cmp2")});
    CHECK(r.exit_code == 4);
}

TEST_CASE("saliency, layer-scan and cost write their artifacts") {
    Fixture f;
    CHECK(f.run({"saliency", f.bundle, "-o", f.out("s"), "--layer", "1"}).exit_code == 0);
    CHECK(std::filesystem::exists(f.out("s") + "/saliency_layer1.pgm"));
    CHECK(std::filesystem::exists(f.out("s") + "/saliency_layer1.csv"));
    CHECK(f.run({"saliency", f.bundle, "-o", f.out("s2"), "--layer", "5"}).exit_code == 2);

    CHECK(f.run({"layer-scan", f.bundle, "--layers", "all", "-o", f.out("l")}).exit_code == 0);
    CHECK(std::filesystem::exists(f.out("l") + "/correlation.csv"));
    CHECK(std::filesystem::exists(f.out("l") + "/layer_1.pgm"));

    std::ofstream(f.out("hw.json")) << R"({"name": "gpu", "peak_flops": 989e12, "mem_bandwidth": 3.35e12})";
    const auto r = f.run({"cost", "--preset", "llama2-7b", "--hw", f.out("hw.json"), "--r", "0.1,1", "-o", f.out("cost")});
    CHECK(r.exit_code == 0);
    const auto csv = testing::read_file(f.out("cost") + "/cost.csv");
    CHECK(csv.find("0.1,122,1619930382336,") != std::string::npos);
    CHECK(f.run({"cost", "--hw", f.out("hw.json"), "-o", f.out("cost2")}).exit_code == 2);
}

TEST_CASE("repeated runs are byte-identical") {
    Fixture f;
    const std::vector<std::string> args{"--threads", "3", "compress", f.bundle, "--strategy", "cluster-saliency",
                                        "--k", "4", "--x", "30", "--seed", "3", "-o"};
    auto a = args, b = args;
    a.push_back(f.out("a"));
    b.push_back(f.out("b"));
    REQUIRE(f.run(a).exit_code == 0);
    REQUIRE(f.run(b).exit_code == 0);
    std::string diff;
    CHECK_MESSAGE(testing::trees_identical(f.out("a"), f.out("b"), &diff), diff);
}
