#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"

#include "amoc/cli.hpp"
#include "amoc/config.hpp"

using namespace amoc;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const char* tag) {
        path = fs::temp_directory_path() /
               (std::string("amoc_cli_") + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_text(const std::string& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text(const std::string& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

// tiny end-to-end footprint: 8 images, width-4 encoder, 1 epoch
std::string tiny_config_text() {
    return "[dataset]\n"
           "count = 8\n"
           "test_count = 8\n"
           "side = 16\n"
           "[model]\n"
           "width = 4\n"
           "embed_dim = 8\n"
           "[train]\n"
           "epochs = 1\n"
           "warmup_epochs = 0\n"
           "batch_size = 4\n"
           "bank_capacity = 16\n"
           "[train.attack]\n"
           "steps = 2\n"
           "[eval]\n"
           "epochs = 1\n"
           "batch_size = 4\n"
           "[finetune]\n"
           "epochs = 1\n"
           "batch_size = 4\n"
           "[finetune.attack]\n"
           "steps = 2\n";
}

// run_command with stdout/stderr captured
int run_captured(const std::vector<std::string>& args, std::string* out = nullptr,
                 std::string* err = nullptr) {
    std::ostringstream o, e;
    std::streambuf* old_out = std::cout.rdbuf(o.rdbuf());
    std::streambuf* old_err = std::cerr.rdbuf(e.rdbuf());
    int code = run_command(args);
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    if (out) *out = o.str();
    if (err) *err = e.str();
    return code;
}

}  // namespace

TEST_CASE("cli: usage, unknown commands, and bad flags") {
    std::string out;
    CHECK(run_captured({"help"}, &out) == 0);
    CHECK(out.find("pretrain") != std::string::npos);
    CHECK(out.find("attack-eval") != std::string::npos);

    CHECK(run_captured({"--help"}, &out) == 0);
    CHECK(run_captured({}, &out, nullptr) == 2);
    CHECK(run_captured({"transmogrify"}, nullptr, &out) == 2);
    CHECK(run_captured({"pretrain", "--config"}, nullptr, &out) == 2);  // missing value
    CHECK(out.find("--config") != std::string::npos);
    CHECK(run_captured({"pretrain", "--frobnicate", "x"}, nullptr, &out) == 2);
}

TEST_CASE("cli: config errors exit with the configuration status") {
    TempDir tmp("cfg");
    std::string err;
    // unknown key in --set
    write_text(tmp.file("c.toml"), tiny_config_text());
    CHECK(run_captured({"pretrain", "--config", tmp.file("c.toml"), "--out", tmp.file("out"),
                        "--set", "train.flux=1"},
                       nullptr, &err) == 2);
    CHECK(err.find("config error") != std::string::npos);

    // malformed config file
    write_text(tmp.file("bad.toml"), "[train\nepochs = 1\n");
    CHECK(run_captured({"pretrain", "--config", tmp.file("bad.toml"), "--out", tmp.file("out2")},
                       nullptr, &err) == 2);

    // missing checkpoint for a command that needs one
    CHECK(run_captured({"attack-eval", "--out", tmp.file("out3")}, nullptr, &err) == 2);
    CHECK(err.find("checkpoint") != std::string::npos);
}

TEST_CASE("cli: pretrain produces its artifacts and is config-reproducible") {
    TempDir tmp("pre");
    write_text(tmp.file("c.toml"), tiny_config_text());
    std::string out;
    int code = run_captured(
        {"pretrain", "--config", tmp.file("c.toml"), "--out", tmp.file("run1")}, &out);
    REQUIRE(code == 0);
    CHECK(fs::exists(tmp.file("run1/checkpoint.bin")));
    CHECK(fs::exists(tmp.file("run1/metrics.jsonl")));
    CHECK(fs::exists(tmp.file("run1/resolved-config.toml")));

    // rerunning from the resolved config reproduces the metrics exactly
    int code2 = run_captured({"pretrain", "--config", tmp.file("run1/resolved-config.toml"),
                              "--out", tmp.file("run2")});
    REQUIRE(code2 == 0);
    CHECK(read_text(tmp.file("run1/metrics.jsonl")) == read_text(tmp.file("run2/metrics.jsonl")));

    // the resolved config parses back to the identical resolved config
    ExperimentConfig back = load_experiment_config(tmp.file("run1/resolved-config.toml"), {});
    std::string echo = resolved_config_toml(back);
    // output dirs differ between the two runs; normalize before comparing
    ExperimentConfig orig = load_experiment_config(tmp.file("c.toml"), {});
    orig.out_dir = back.out_dir;
    CHECK(echo == resolved_config_toml(orig));
}

TEST_CASE("cli: the full pipeline runs at desk scale") {
    TempDir tmp("pipe");
    write_text(tmp.file("c.toml"), tiny_config_text());
    std::string run = tmp.file("run");

    REQUIRE(run_captured({"pretrain", "--config", tmp.file("c.toml"), "--out", run}) == 0);
    std::string ck = run + "/checkpoint.bin";

    std::string out;
    SUBCASE("linear-eval") {
        REQUIRE(run_captured({"linear-eval", "--config", tmp.file("c.toml"), "--out", run,
                              "--checkpoint", ck},
                             &out) == 0);
        CHECK(fs::exists(run + "/linear-eval-report.json"));
        CHECK(fs::exists(run + "/linear-eval-report.txt"));
        CHECK(fs::exists(run + "/probe.bin"));
        json rep = json::parse(read_text(run + "/linear-eval-report.json"));
        CHECK(rep.contains("clean"));
    }

    SUBCASE("finetune then attack-eval and eps-sweep") {
        REQUIRE(run_captured({"finetune", "--config", tmp.file("c.toml"), "--out", run,
                              "--checkpoint", ck}) == 0);
        std::string ft = run + "/finetuned.bin";
        REQUIRE(fs::exists(ft));

        REQUIRE(run_captured({"attack-eval", "--config", tmp.file("c.toml"), "--out", run,
                              "--checkpoint", ft, "--set", "eval.attack.steps=2"},
                             &out) == 0);
        CHECK(fs::exists(run + "/attack-report.json"));
        json rep = json::parse(read_text(run + "/attack-report.json"));
        CHECK(rep.contains("clean"));
        CHECK(rep.contains("attacks"));
        REQUIRE(rep.at("attacks").is_array());
        CHECK(rep.at("attacks").size() == 7);

        REQUIRE(run_captured({"eps-sweep", "--config", tmp.file("c.toml"), "--out", run,
                              "--checkpoint", ft, "--set", "sweep.epsilons=[0.0,0.01]", "--set",
                              "sweep.steps=2"},
                             &out) == 0);
        json curve = json::parse(read_text(run + "/eps-curve.json"));
        REQUIRE(curve.is_array());
        CHECK(curve.size() == 2);
        CHECK(curve[0].at("epsilon").get<double>() == 0.0);

        // attack-eval refuses a headless pre-training checkpoint
        std::string err;
        CHECK(run_captured({"attack-eval", "--config", tmp.file("c.toml"), "--out", run,
                            "--checkpoint", ck},
                           nullptr, &err) == 2);
        CHECK(err.find("classifier") != std::string::npos);
    }

    SUBCASE("export-embeddings and plots") {
        REQUIRE(run_captured({"export-embeddings", "--config", tmp.file("c.toml"), "--out", run,
                              "--checkpoint", ck, "--split", "test"}) == 0);
        REQUIRE(fs::exists(run + "/embeddings.bin"));
        REQUIRE(fs::exists(run + "/labels.txt"));

        REQUIRE(run_captured({"plot", "--kind", "embedding-scatter", "--out", run,
                              run + "/embeddings.bin", run + "/labels.txt"}) == 0);
        std::string svg = read_text(run + "/embedding-scatter.svg");
        CHECK(svg.find("<svg") != std::string::npos);
        // one circle per exported image
        size_t circles = 0;
        for (size_t pos = svg.find("<circle"); pos != std::string::npos;
             pos = svg.find("<circle", pos + 1))
            ++circles;
        CHECK(circles == 8);

        // plots are deterministic byte for byte
        REQUIRE(run_captured({"plot", "--kind", "embedding-scatter", "--out", tmp.file("again"),
                              run + "/embeddings.bin", run + "/labels.txt"}) == 0);
        CHECK(read_text(tmp.file("again") + "/embedding-scatter.svg") == svg);

        REQUIRE(run_captured({"plot", "--kind", "loss-curves", "--out", run,
                              run + "/metrics.jsonl"}) == 0);
        CHECK(read_text(run + "/loss-curves.svg").find("polyline") != std::string::npos);

        std::string err;
        CHECK(run_captured({"plot", "--kind", "eps-curve", "--out", run}, nullptr, &err) == 2);
        CHECK(run_captured({"plot", "--out", run, run + "/metrics.jsonl"}, nullptr, &err) == 2);
        CHECK(run_captured({"plot", "--kind", "mosaic", "--out", run, run + "/metrics.jsonl"},
                           nullptr, &err) == 2);
    }
}

TEST_CASE("cli: ttest compares score files") {
    TempDir tmp("tt");
    write_text(tmp.file("a.json"), "[70.0, 71.0, 69.5]");
    write_text(tmp.file("b.json"), "[70.0, 71.0, 69.5]");
    std::string out;
    REQUIRE(run_captured({"ttest", tmp.file("a.json"), tmp.file("b.json")}, &out) == 0);
    json r = json::parse(out);
    CHECK(r.at("p").get<double>() == 1.0);
    CHECK(r.at("degenerate").get<bool>());

    write_text(tmp.file("c.json"), "[71.0, 70.0, 71.5]");
    REQUIRE(run_captured({"ttest", tmp.file("a.json"), tmp.file("c.json")}, &out) == 0);
    r = json::parse(out);
    CHECK(r.at("p").get<double>() > 0.0);
    CHECK(r.at("p").get<double>() <= 1.0);

    // report files work as inputs too: clean + per-attack accuracies
    write_text(tmp.file("rep.json"),
               R"({"clean": 90.0, "attacks": [{"attack": "pgd", "accuracy": 50.0},)"
               R"( {"attack": "cw", "accuracy": 45.0}]})");
    write_text(tmp.file("rep2.json"),
               R"({"clean": 88.0, "attacks": [{"attack": "pgd", "accuracy": 52.0},)"
               R"( {"attack": "cw", "accuracy": 47.0}]})");
    REQUIRE(run_captured({"ttest", tmp.file("rep.json"), tmp.file("rep2.json")}, &out) == 0);
    CHECK(json::parse(out).contains("t"));

    std::string err;
    CHECK(run_captured({"ttest", tmp.file("a.json")}, nullptr, &err) == 2);
    write_text(tmp.file("broken.json"), "{not json");
    CHECK(run_captured({"ttest", tmp.file("a.json"), tmp.file("broken.json")}, nullptr, &err) ==
          1);
}

TEST_CASE("cli: seed environment override lands in the resolved config") {
    TempDir tmp("env");
    write_text(tmp.file("c.toml"), tiny_config_text());
    ::setenv("AMOC_SEED", "777", 1);
    int code = run_captured({"pretrain", "--config", tmp.file("c.toml"), "--out", tmp.file("o")});
    ::unsetenv("AMOC_SEED");
    REQUIRE(code == 0);
    std::string resolved = read_text(tmp.file("o/resolved-config.toml"));
    CHECK(resolved.find("seed = 777") != std::string::npos);
}
