#include "amoc/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

#include "amoc/attacks.hpp"
#include "amoc/checkpoint.hpp"
#include "amoc/common.hpp"
#include "amoc/config.hpp"
#include "amoc/eval.hpp"
#include "amoc/plots.hpp"
#include "amoc/train.hpp"

namespace fs = std::filesystem;

namespace amoc {

namespace {

const char* const kUsage =
    "usage: amoc <command> [options] [files...]\n"
    "\n"
    "commands:\n"
    "  pretrain            contrastive pre-training -> checkpoint.bin + metrics.jsonl\n"
    "  linear-eval         frozen-encoder linear probe -> probe.bin + report\n"
    "  finetune            supervised training (trades | pgd_at | standard) -> finetuned.bin\n"
    "  attack-eval         full attack suite against a classifier checkpoint\n"
    "  eps-sweep           robust accuracy across epsilon budgets -> eps-curve.json\n"
    "  ttest               paired t-test over two score files (prints JSON)\n"
    "  export-embeddings   encoder embeddings -> embeddings.bin + labels.txt\n"
    "  plot                render an SVG from run artifacts\n"
    "\n"
    "options:\n"
    "  --config PATH       TOML experiment config (pure defaults when omitted)\n"
    "  --set KEY=VALUE     override one config key (repeatable)\n"
    "  --out DIR           output directory (default: [output].dir)\n"
    "  --checkpoint PATH   input checkpoint\n"
    "  --resume PATH       pretrain: continue from this checkpoint\n"
    "  --split train|test  export-embeddings: which split to embed (default test)\n"
    "  --kind NAME         plot: eps-curve | loss-curves | variant-bars | embedding-scatter\n"
    "\n"
    "examples:\n"
    "  amoc pretrain --config exp.toml --set train.epochs=5 --out runs/a\n"
    "  amoc ttest runs/a/attack-report.json runs/b/attack-report.json\n"
    "  amoc plot --kind eps-curve runs/a/eps-curve.json --out runs/a\n";

struct Flags {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    std::string checkpoint;
    std::string resume;
    std::string split = "test";
    std::string kind;
    std::vector<std::string> positional;
};

Flags parse_flags(const std::vector<std::string>& args) {
    Flags f;
    for (size_t i = 1; i < args.size(); ++i) {
        const std::string& a = args[i];
        auto value = [&](const char* name) -> const std::string& {
            if (i + 1 >= args.size()) throw ConfigError(std::string(name) + " needs a value");
            return args[++i];
        };
        if (a == "--config") f.config = value("--config");
        else if (a == "--set") f.sets.push_back(value("--set"));
        else if (a == "--out") f.out = value("--out");
        else if (a == "--checkpoint") f.checkpoint = value("--checkpoint");
        else if (a == "--resume") f.resume = value("--resume");
        else if (a == "--split") f.split = value("--split");
        else if (a == "--kind") f.kind = value("--kind");
        else if (!a.empty() && a[0] == '-') throw ConfigError("unknown flag " + a);
        else f.positional.push_back(a);
    }
    return f;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    out.flush();
    if (!out) throw FormatError("cannot write " + path.string());
}

nlohmann::json parse_json_file(const std::string& path) {
    try {
        return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

// Config commands all start the same way: resolve the config, make the
// output directory, and record every effective value next to the outputs.
struct Run {
    ExperimentConfig cfg;
    fs::path out;
};

Run open_run(const Flags& f) {
    Run r{load_experiment_config(f.config, f.sets), {}};
    if (!f.out.empty()) r.cfg.out_dir = f.out;
    r.out = r.cfg.out_dir;
    fs::create_directories(r.out);
    std::string resolved = resolved_config_toml(r.cfg);
    write_text_file(r.out / "resolved-config.toml", resolved);
    r.cfg.train.config_echo = resolved;
    return r;
}

Checkpoint required_checkpoint(const Flags& f) {
    if (f.checkpoint.empty()) throw ConfigError("--checkpoint is required for this command");
    return load_checkpoint(f.checkpoint);
}

std::unique_ptr<ClassifierModel> classifier_for_eval(const Checkpoint& ck,
                                                     const LabeledImageSet& test_set,
                                                     uint64_t seed) {
    if (ck.num_classes == 0)
        throw ConfigError("checkpoint has no classifier head; run linear-eval or finetune first");
    if (ck.num_classes != test_set.num_classes)
        throw ConfigError("checkpoint classifies " + std::to_string(ck.num_classes) +
                          " classes but the dataset has " + std::to_string(test_set.num_classes));
    return classifier_from_checkpoint(ck, ck.num_classes, seed);
}

int cmd_pretrain(const Flags& f) {
    Run r = open_run(f);
    LabeledImageSet data = load_dataset(r.cfg.dataset, false);
    fs::path metrics_path = r.out / "metrics.jsonl";
    std::ofstream metrics(metrics_path, std::ios::binary);
    if (!metrics) throw FormatError("cannot write " + metrics_path.string());

    PretrainResult res;
    if (f.resume.empty()) {
        res = pretrain(r.cfg.train, data, &metrics);
    } else {
        res = resume_pretrain(load_checkpoint(f.resume), r.cfg.train, data, &metrics);
    }
    metrics.close();

    fs::path ck_path = r.out / "checkpoint.bin";
    save_checkpoint(res.checkpoint, ck_path.string());
    std::cout << "pretrain: epoch " << res.checkpoint.epoch << ", step " << res.checkpoint.step
              << " -> " << ck_path.string() << "\n";
    if (!res.metrics.empty()) std::cout << metrics_json_line(res.metrics.back()) << "\n";
    return 0;
}

int cmd_linear_eval(const Flags& f) {
    Run r = open_run(f);
    Checkpoint ck = required_checkpoint(f);
    LabeledImageSet train_set = load_dataset(r.cfg.dataset, false);
    LabeledImageSet test_set = load_dataset(r.cfg.dataset, true);

    LinearEvalResult res = linear_eval(ck, train_set, test_set, r.cfg.eval);
    write_text_file(r.out / "linear-eval-report.json", res.report.to_json() + "\n");
    write_text_file(r.out / "linear-eval-report.txt", res.report.to_table());
    Checkpoint probe =
        classifier_checkpoint(*res.model, r.cfg.eval.epochs, r.cfg.train.config_echo);
    save_checkpoint(probe, (r.out / "probe.bin").string());

    std::cout << res.report.to_table();
    return 0;
}

int cmd_finetune(const Flags& f) {
    Run r = open_run(f);
    LabeledImageSet data = load_dataset(r.cfg.dataset, false);
    fs::path metrics_path = r.out / "finetune-metrics.jsonl";
    std::ofstream metrics(metrics_path, std::ios::binary);
    if (!metrics) throw FormatError("cannot write " + metrics_path.string());

    FinetuneResult res;
    if (r.cfg.finetune_from_scratch) {
        res = finetune_from_scratch(r.cfg.train.arch, data, r.cfg.finetune, &metrics);
    } else {
        Checkpoint ck = required_checkpoint(f);
        res = finetune(ck, data, r.cfg.finetune, &metrics);
    }
    metrics.close();

    Checkpoint out_ck =
        classifier_checkpoint(*res.model, r.cfg.finetune.epochs, r.cfg.train.config_echo);
    fs::path ck_path = r.out / "finetuned.bin";
    save_checkpoint(out_ck, ck_path.string());
    std::cout << "finetune (" << r.cfg.finetune.objective << "): " << res.metrics.size()
              << " epochs -> " << ck_path.string() << "\n";
    if (!res.metrics.empty()) std::cout << metrics_json_line(res.metrics.back()) << "\n";
    return 0;
}

int cmd_attack_eval(const Flags& f) {
    Run r = open_run(f);
    Checkpoint ck = required_checkpoint(f);
    LabeledImageSet test_set = load_dataset(r.cfg.dataset, true);
    auto model = classifier_for_eval(ck, test_set, r.cfg.eval.seed);

    RobustnessReport rep =
        robust_accuracy(*model, test_set, default_attack_suite(), r.cfg.eval.seed, &std::cerr);
    write_text_file(r.out / "attack-report.json", rep.to_json() + "\n");
    write_text_file(r.out / "attack-report.txt", rep.to_table());
    std::cout << rep.to_table();
    return 0;
}

int cmd_eps_sweep(const Flags& f) {
    Run r = open_run(f);
    Checkpoint ck = required_checkpoint(f);
    LabeledImageSet test_set = load_dataset(r.cfg.dataset, true);
    auto model = classifier_for_eval(ck, test_set, r.cfg.eval.seed);

    auto curve = epsilon_sweep(*model, test_set, r.cfg.sweep_epsilons, r.cfg.sweep_template,
                               r.cfg.eval.seed);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& pt : curve)
        arr.push_back({{"epsilon", pt.first}, {"accuracy", pt.second}});
    write_text_file(r.out / "eps-curve.json", arr.dump(2) + "\n");

    for (const auto& pt : curve) {
        char line[96];
        std::snprintf(line, sizeof(line), "eps %.6f  accuracy %.2f%%", pt.first, pt.second);
        std::cout << line << "\n";
    }
    return 0;
}

std::vector<double> scores_from_file(const std::string& path) {
    nlohmann::json j = parse_json_file(path);
    std::vector<double> out;
    try {
        if (j.is_array()) {
            // plain score arrays, or eps-curve entries carrying "accuracy"
            for (const auto& e : j) {
                if (e.is_number()) out.push_back(e.get<double>());
                else if (e.is_object() && e.contains("accuracy"))
                    out.push_back(e.at("accuracy").get<double>());
                else throw FormatError(path + ": expected numbers or accuracy entries");
            }
        } else if (j.is_object() && j.contains("attacks")) {
            // robustness report: clean first, then each attack row
            out.push_back(j.at("clean").get<double>());
            for (const auto& a : j.at("attacks")) out.push_back(a.at("accuracy").get<double>());
        } else if (j.is_object() && j.contains("scores")) {
            for (const auto& e : j.at("scores")) out.push_back(e.get<double>());
        } else {
            throw FormatError(path + ": no scores found");
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return out;
}

int cmd_ttest(const Flags& f) {
    if (f.positional.size() != 2)
        throw ConfigError("ttest needs exactly two score files");
    std::vector<double> a = scores_from_file(f.positional[0]);
    std::vector<double> b = scores_from_file(f.positional[1]);
    TTestResult res = paired_ttest(a, b, &std::cerr);

    nlohmann::json j;
    if (std::isfinite(res.t)) j["t"] = res.t;
    else j["t"] = res.t > 0 ? "+inf" : "-inf";  // JSON has no infinities
    j["p"] = res.p;
    j["degenerate"] = res.degenerate;
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_export_embeddings(const Flags& f) {
    if (f.split != "train" && f.split != "test")
        throw ConfigError("--split must be train or test");
    Run r = open_run(f);
    Checkpoint ck = required_checkpoint(f);
    LabeledImageSet data = load_dataset(r.cfg.dataset, f.split == "test");

    fs::path mat = r.out / "embeddings.bin";
    fs::path lab = r.out / "labels.txt";
    export_embeddings(ck, data, BnBranch::adv, mat.string(), lab.string());
    std::cout << "wrote " << mat.string() << " and " << lab.string() << " (" << data.count()
              << " rows)\n";
    return 0;
}

std::vector<EpochMetrics> metrics_from_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read " + path);
    std::vector<EpochMetrics> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            EpochMetrics m;
            m.epoch = j.at("epoch").get<int>();
            m.step = j.at("step").get<int64_t>();
            m.lr = j.at("lr").get<double>();
            m.loss = j.at("loss").get<double>();
            m.term_a = j.at("term_a").get<double>();
            m.term_b = j.at("term_b").get<double>();
            m.staleness = j.at("staleness").get<double>();
            out.push_back(m);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ": " + e.what());
        }
    }
    if (out.empty()) throw FormatError(path + ": no metric lines");
    return out;
}

std::string file_stem(const std::string& path) { return fs::path(path).stem().string(); }

int cmd_plot(const Flags& f) {
    if (f.kind.empty())
        throw ConfigError("plot needs --kind (eps-curve | loss-curves | variant-bars | "
                          "embedding-scatter)");
    if (f.positional.empty()) throw ConfigError("plot needs input files");
    fs::path out_dir = f.out.empty() ? fs::path("out") : fs::path(f.out);
    fs::create_directories(out_dir);

    std::string svg;
    if (f.kind == "eps-curve") {
        std::vector<std::vector<std::pair<double, double>>> curves;
        std::vector<std::string> names;
        for (const auto& path : f.positional) {
            nlohmann::json j = parse_json_file(path);
            if (!j.is_array()) throw FormatError(path + ": expected a JSON array");
            std::vector<std::pair<double, double>> curve;
            try {
                for (const auto& e : j)
                    curve.emplace_back(e.at("epsilon").get<double>(),
                                       e.at("accuracy").get<double>());
            } catch (const nlohmann::json::exception& e) {
                throw FormatError(path + ": " + e.what());
            }
            curves.push_back(std::move(curve));
            names.push_back(file_stem(path));
        }
        svg = svg_eps_curve(curves, names);
    } else if (f.kind == "loss-curves") {
        std::vector<std::vector<EpochMetrics>> runs;
        std::vector<std::string> names;
        for (const auto& path : f.positional) {
            runs.push_back(metrics_from_jsonl(path));
            names.push_back(file_stem(path));
        }
        svg = svg_loss_curves(runs, names);
    } else if (f.kind == "variant-bars") {
        std::vector<std::pair<std::string, double>> bars;
        for (const auto& path : f.positional) {
            nlohmann::json j = parse_json_file(path);
            try {
                double v = j.at("clean").get<double>();
                if (j.contains("attacks") && !j.at("attacks").empty())
                    v = j.at("attacks").at(0).at("accuracy").get<double>();
                bars.emplace_back(file_stem(path), v);
            } catch (const nlohmann::json::exception& e) {
                throw FormatError(path + ": " + e.what());
            }
        }
        svg = svg_variant_bars(bars);
    } else if (f.kind == "embedding-scatter") {
        if (f.positional.size() != 2)
            throw ConfigError("embedding-scatter needs <embeddings.bin> <labels.txt>");
        Tensor emb = load_embeddings(f.positional[0]);
        std::vector<int> labels;
        {
            std::ifstream in(f.positional[1], std::ios::binary);
            if (!in) throw FormatError("cannot read " + f.positional[1]);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                try {
                    labels.push_back(std::stoi(line));
                } catch (const std::exception&) {
                    throw FormatError(f.positional[1] + ": bad label line '" + line + "'");
                }
            }
        }
        PcaResult p = pca2(emb);
        svg = svg_embedding_scatter(p.projected, labels);
    } else {
        throw ConfigError("unknown plot kind '" + f.kind + "'");
    }

    fs::path svg_path = out_dir / (f.kind + ".svg");
    write_text_file(svg_path, svg);
    std::cout << "wrote " << svg_path.string() << "\n";
    return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
    if (args.empty()) {
        std::cerr << kUsage;
        return 2;
    }
    const std::string& cmd = args[0];
    try {
        Flags f = parse_flags(args);
        if (cmd == "pretrain") return cmd_pretrain(f);
        if (cmd == "linear-eval") return cmd_linear_eval(f);
        if (cmd == "finetune") return cmd_finetune(f);
        if (cmd == "attack-eval") return cmd_attack_eval(f);
        if (cmd == "eps-sweep") return cmd_eps_sweep(f);
        if (cmd == "ttest") return cmd_ttest(f);
        if (cmd == "export-embeddings") return cmd_export_embeddings(f);
        if (cmd == "plot") return cmd_plot(f);
        if (cmd == "help" || cmd == "--help" || cmd == "-h") {
            std::cout << kUsage;
            return 0;
        }
        std::cerr << "unknown command '" << cmd << "'\n" << kUsage;
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ArgumentError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace amoc
