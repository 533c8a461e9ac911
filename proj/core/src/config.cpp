#include "amoc/config.hpp"

#include <cstdlib>
#include <string>

#include "amoc/common.hpp"

namespace amoc {

namespace {

int to_int(const TomlValue& v, const std::string& key) {
    int64_t x = v.as_int(key);
    check_arg(x >= INT32_MIN && x <= INT32_MAX, "config key '" + key + "' out of range");
    return static_cast<int>(x);
}

uint64_t to_seed(const TomlValue& v, const std::string& key) {
    int64_t x = v.as_int(key);
    check_arg(x >= 0, "config key '" + key + "' must be nonnegative");
    return static_cast<uint64_t>(x);
}

bool apply_attack_kv(AttackSpec& a, const std::string& sub, const std::string& full,
                     const TomlValue& v) {
    if (sub == "method")
        a.method = v.as_string(full);
    else if (sub == "norm")
        a.norm = parse_norm(v.as_string(full));
    else if (sub == "epsilon")
        a.epsilon = v.as_double(full);
    else if (sub == "steps")
        a.steps = to_int(v, full);
    else if (sub == "rel_step")
        a.rel_step = v.as_double(full);
    else if (sub == "random_start")
        a.random_start = v.as_bool(full);
    else if (sub == "overshoot")
        a.overshoot = v.as_double(full);
    else if (sub == "cw_lr")
        a.cw_lr = v.as_double(full);
    else if (sub == "cw_confidence")
        a.cw_confidence = v.as_double(full);
    else
        return false;
    return true;
}

void apply_kv(ExperimentConfig& cfg, const std::string& key, const TomlValue& v) {
    auto starts = [&](const char* p) { return key.rfind(p, 0) == 0; };

    if (starts("train.attack."))
        if (apply_attack_kv(cfg.train.attack, key.substr(13), key, v)) return;
    if (starts("finetune.attack."))
        if (apply_attack_kv(cfg.finetune.attack, key.substr(16), key, v)) return;
    if (starts("eval.attack."))
        if (apply_attack_kv(cfg.eval.attack, key.substr(12), key, v)) return;
    if (starts("sweep.") && key != "sweep.epsilons")
        if (apply_attack_kv(cfg.sweep_template, key.substr(6), key, v)) return;

    if (key == "dataset.kind") cfg.dataset.kind = v.as_string(key);
    else if (key == "dataset.path") cfg.dataset.path = v.as_string(key);
    else if (key == "dataset.test_path") cfg.dataset.test_path = v.as_string(key);
    else if (key == "dataset.classes") cfg.dataset.classes = to_int(v, key);
    else if (key == "dataset.count") cfg.dataset.count = to_int(v, key);
    else if (key == "dataset.test_count") cfg.dataset.test_count = to_int(v, key);
    else if (key == "dataset.side") cfg.dataset.side = to_int(v, key);
    else if (key == "dataset.seed") cfg.dataset.seed = to_seed(v, key);

    else if (key == "model.backbone") cfg.train.arch.backbone = v.as_string(key);
    else if (key == "model.width") cfg.train.arch.width = to_int(v, key);
    else if (key == "model.embed_dim") cfg.train.arch.embed_dim = to_int(v, key);
    else if (key == "model.in_channels") cfg.train.arch.in_channels = to_int(v, key);

    else if (key == "train.batch_size") cfg.train.batch_size = to_int(v, key);
    else if (key == "train.epochs") cfg.train.epochs = to_int(v, key);
    else if (key == "train.base_lr") cfg.train.base_lr = v.as_double(key);
    else if (key == "train.warmup_epochs") cfg.train.warmup_epochs = to_int(v, key);
    else if (key == "train.weight_decay") cfg.train.weight_decay = v.as_double(key);
    else if (key == "train.sgd_momentum") cfg.train.sgd_momentum = v.as_double(key);
    else if (key == "train.encoder_momentum") cfg.train.encoder_momentum = v.as_double(key);
    else if (key == "train.bank_capacity") cfg.train.bank_capacity = v.as_int(key);
    else if (key == "train.seed") cfg.train.seed = to_seed(v, key);
    else if (key == "train.variant") cfg.train.variant = parse_variant(v.as_string(key));
    else if (key == "train.lambda") cfg.train.weights.lambda = v.as_double(key);
    else if (key == "train.temperature") cfg.train.weights.temperature = v.as_double(key);

    else if (key == "augment.crop_scale_min") cfg.train.augment.crop_scale_min = v.as_double(key);
    else if (key == "augment.crop_scale_max") cfg.train.augment.crop_scale_max = v.as_double(key);
    else if (key == "augment.crop_ratio_min") cfg.train.augment.crop_ratio_min = v.as_double(key);
    else if (key == "augment.crop_ratio_max") cfg.train.augment.crop_ratio_max = v.as_double(key);
    else if (key == "augment.flip_prob") cfg.train.augment.flip_prob = v.as_double(key);
    else if (key == "augment.jitter_prob") cfg.train.augment.jitter_prob = v.as_double(key);
    else if (key == "augment.jitter_brightness")
        cfg.train.augment.jitter_brightness = v.as_double(key);
    else if (key == "augment.jitter_contrast")
        cfg.train.augment.jitter_contrast = v.as_double(key);
    else if (key == "augment.jitter_saturation")
        cfg.train.augment.jitter_saturation = v.as_double(key);
    else if (key == "augment.jitter_hue") cfg.train.augment.jitter_hue = v.as_double(key);
    else if (key == "augment.grayscale_prob") cfg.train.augment.grayscale_prob = v.as_double(key);

    else if (key == "finetune.objective") cfg.finetune.objective = v.as_string(key);
    else if (key == "finetune.batch_size") cfg.finetune.batch_size = to_int(v, key);
    else if (key == "finetune.epochs") cfg.finetune.epochs = to_int(v, key);
    else if (key == "finetune.base_lr") cfg.finetune.base_lr = v.as_double(key);
    else if (key == "finetune.warmup_epochs") cfg.finetune.warmup_epochs = to_int(v, key);
    else if (key == "finetune.weight_decay") cfg.finetune.weight_decay = v.as_double(key);
    else if (key == "finetune.sgd_momentum") cfg.finetune.sgd_momentum = v.as_double(key);
    else if (key == "finetune.trades_beta") cfg.finetune.weights.trades_beta = v.as_double(key);
    else if (key == "finetune.seed") cfg.finetune.seed = to_seed(v, key);
    else if (key == "finetune.pad") cfg.finetune.pad = to_int(v, key);
    else if (key == "finetune.from_scratch") cfg.finetune_from_scratch = v.as_bool(key);

    else if (key == "eval.kind") {
        std::string k = v.as_string(key);
        if (k == "stdev") cfg.eval.kind = EvalProtocol::Kind::std_ev;
        else if (k == "adev") cfg.eval.kind = EvalProtocol::Kind::ad_ev;
        else throw ConfigError("eval.kind must be 'stdev' or 'adev', got '" + k + "'");
    }
    else if (key == "eval.epochs") cfg.eval.epochs = to_int(v, key);
    else if (key == "eval.lr") cfg.eval.lr = v.as_double(key);
    else if (key == "eval.batch_size") cfg.eval.batch_size = to_int(v, key);
    else if (key == "eval.seed") cfg.eval.seed = to_seed(v, key);

    else if (key == "sweep.epsilons") cfg.sweep_epsilons = v.as_double_array(key);

    else if (key == "output.dir") cfg.out_dir = v.as_string(key);

    else throw ConfigError("unknown config key '" + key + "'");
}

void emit(std::string& out, const std::string& key, const TomlValue& v) {
    out += key + " = " + v.to_toml() + "\n";
}

void emit_attack(std::string& out, const std::string& table, const AttackSpec& a) {
    out += "\n[" + table + "]\n";
    emit(out, "method", TomlValue::of_string(a.method));
    emit(out, "norm", TomlValue::of_string(norm_name(a.norm)));
    emit(out, "epsilon", TomlValue::of_double(a.epsilon));
    emit(out, "steps", TomlValue::of_int(a.steps));
    emit(out, "rel_step", TomlValue::of_double(a.rel_step));
    emit(out, "random_start", TomlValue::of_bool(a.random_start));
    emit(out, "overshoot", TomlValue::of_double(a.overshoot));
    emit(out, "cw_lr", TomlValue::of_double(a.cw_lr));
    emit(out, "cw_confidence", TomlValue::of_double(a.cw_confidence));
}

}  // namespace

void DatasetConfig::validate() const {
    if (kind == "synthetic") {
        check_arg(classes >= 2, "dataset.classes must be at least 2");
        check_arg(count >= classes, "dataset.count must cover every class");
        check_arg(test_count >= classes, "dataset.test_count must cover every class");
        check_arg(side >= 8, "dataset.side must be at least 8");
    } else if (kind == "cifar10") {
        if (path.empty()) throw ConfigError("dataset.path required for cifar10");
        if (test_path.empty()) throw ConfigError("dataset.test_path required for cifar10");
    } else {
        throw ConfigError("dataset.kind must be 'synthetic' or 'cifar10', got '" + kind + "'");
    }
}

ExperimentConfig::ExperimentConfig() {
    sweep_template.method = "pgd";
    sweep_template.norm = Norm::linf;
    sweep_template.epsilon = 8.0 / 255.0;  // replaced per sweep point
    sweep_template.steps = 20;
    sweep_template.rel_step = 0.1;
    sweep_template.random_start = false;
    sweep_epsilons = {0.0, 2.0 / 255.0, 4.0 / 255.0, 8.0 / 255.0};
}

void ExperimentConfig::validate() const {
    dataset.validate();
    train.validate();
    finetune.validate();
    eval.validate();
    sweep_template.validate();
    check_arg(!sweep_epsilons.empty(), "sweep.epsilons must not be empty");
    for (size_t i = 0; i + 1 < sweep_epsilons.size(); ++i)
        check_arg(sweep_epsilons[i] <= sweep_epsilons[i + 1], "sweep.epsilons must ascend");
    check_arg(sweep_epsilons.front() >= 0.0, "sweep.epsilons must be nonnegative");
    check_arg(!out_dir.empty(), "output.dir must not be empty");
}

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides) {
    ExperimentConfig cfg;
    if (!path.empty()) {
        TomlDoc doc = parse_toml_file(path);
        for (const auto& [key, value] : doc.values) apply_kv(cfg, key, value);
    }
    for (const std::string& ov : overrides) {
        size_t eq = ov.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("--set expects key=value, got '" + ov + "'");
        std::string key = ov.substr(0, eq);
        std::string raw = ov.substr(eq + 1);
        TomlValue value;
        try {
            value = parse_toml_scalar(raw);
        } catch (const ConfigError&) {
            value = TomlValue::of_string(raw);  // bare strings are fine on the command line
        }
        apply_kv(cfg, key, value);
    }
    if (const char* env = std::getenv("AMOC_SEED")) {
        try {
            cfg.train.seed = std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError(std::string("AMOC_SEED must be an unsigned integer, got '") + env +
                              "'");
        }
    }
    cfg.validate();
    return cfg;
}

std::string resolved_config_toml(const ExperimentConfig& cfg) {
    std::string out;
    out += "[dataset]\n";
    emit(out, "kind", TomlValue::of_string(cfg.dataset.kind));
    emit(out, "path", TomlValue::of_string(cfg.dataset.path));
    emit(out, "test_path", TomlValue::of_string(cfg.dataset.test_path));
    emit(out, "classes", TomlValue::of_int(cfg.dataset.classes));
    emit(out, "count", TomlValue::of_int(cfg.dataset.count));
    emit(out, "test_count", TomlValue::of_int(cfg.dataset.test_count));
    emit(out, "side", TomlValue::of_int(cfg.dataset.side));
    emit(out, "seed", TomlValue::of_int(static_cast<int64_t>(cfg.dataset.seed)));

    out += "\n[model]\n";
    emit(out, "backbone", TomlValue::of_string(cfg.train.arch.backbone));
    emit(out, "width", TomlValue::of_int(cfg.train.arch.width));
    emit(out, "embed_dim", TomlValue::of_int(cfg.train.arch.embed_dim));
    emit(out, "in_channels", TomlValue::of_int(cfg.train.arch.in_channels));

    out += "\n[train]\n";
    emit(out, "batch_size", TomlValue::of_int(cfg.train.batch_size));
    emit(out, "epochs", TomlValue::of_int(cfg.train.epochs));
    emit(out, "base_lr", TomlValue::of_double(cfg.train.base_lr));
    emit(out, "warmup_epochs", TomlValue::of_int(cfg.train.warmup_epochs));
    emit(out, "weight_decay", TomlValue::of_double(cfg.train.weight_decay));
    emit(out, "sgd_momentum", TomlValue::of_double(cfg.train.sgd_momentum));
    emit(out, "encoder_momentum", TomlValue::of_double(cfg.train.encoder_momentum));
    emit(out, "bank_capacity", TomlValue::of_int(cfg.train.bank_capacity));
    emit(out, "seed", TomlValue::of_int(static_cast<int64_t>(cfg.train.seed)));
    emit(out, "variant", TomlValue::of_string(variant_code(cfg.train.variant)));
    emit(out, "lambda", TomlValue::of_double(cfg.train.weights.lambda));
    emit(out, "temperature", TomlValue::of_double(cfg.train.weights.temperature));
    emit_attack(out, "train.attack", cfg.train.attack);

    out += "\n[augment]\n";
    emit(out, "crop_scale_min", TomlValue::of_double(cfg.train.augment.crop_scale_min));
    emit(out, "crop_scale_max", TomlValue::of_double(cfg.train.augment.crop_scale_max));
    emit(out, "crop_ratio_min", TomlValue::of_double(cfg.train.augment.crop_ratio_min));
    emit(out, "crop_ratio_max", TomlValue::of_double(cfg.train.augment.crop_ratio_max));
    emit(out, "flip_prob", TomlValue::of_double(cfg.train.augment.flip_prob));
    emit(out, "jitter_prob", TomlValue::of_double(cfg.train.augment.jitter_prob));
    emit(out, "jitter_brightness", TomlValue::of_double(cfg.train.augment.jitter_brightness));
    emit(out, "jitter_contrast", TomlValue::of_double(cfg.train.augment.jitter_contrast));
    emit(out, "jitter_saturation", TomlValue::of_double(cfg.train.augment.jitter_saturation));
    emit(out, "jitter_hue", TomlValue::of_double(cfg.train.augment.jitter_hue));
    emit(out, "grayscale_prob", TomlValue::of_double(cfg.train.augment.grayscale_prob));

    out += "\n[finetune]\n";
    emit(out, "objective", TomlValue::of_string(cfg.finetune.objective));
    emit(out, "batch_size", TomlValue::of_int(cfg.finetune.batch_size));
    emit(out, "epochs", TomlValue::of_int(cfg.finetune.epochs));
    emit(out, "base_lr", TomlValue::of_double(cfg.finetune.base_lr));
    emit(out, "warmup_epochs", TomlValue::of_int(cfg.finetune.warmup_epochs));
    emit(out, "weight_decay", TomlValue::of_double(cfg.finetune.weight_decay));
    emit(out, "sgd_momentum", TomlValue::of_double(cfg.finetune.sgd_momentum));
    emit(out, "trades_beta", TomlValue::of_double(cfg.finetune.weights.trades_beta));
    emit(out, "seed", TomlValue::of_int(static_cast<int64_t>(cfg.finetune.seed)));
    emit(out, "pad", TomlValue::of_int(cfg.finetune.pad));
    emit(out, "from_scratch", TomlValue::of_bool(cfg.finetune_from_scratch));
    emit_attack(out, "finetune.attack", cfg.finetune.attack);

    out += "\n[eval]\n";
    emit(out, "kind", TomlValue::of_string(cfg.eval.kind == EvalProtocol::Kind::std_ev ? "stdev"
                                                                                       : "adev"));
    emit(out, "epochs", TomlValue::of_int(cfg.eval.epochs));
    emit(out, "lr", TomlValue::of_double(cfg.eval.lr));
    emit(out, "batch_size", TomlValue::of_int(cfg.eval.batch_size));
    emit(out, "seed", TomlValue::of_int(static_cast<int64_t>(cfg.eval.seed)));
    emit_attack(out, "eval.attack", cfg.eval.attack);

    emit_attack(out, "sweep", cfg.sweep_template);
    {
        TomlValue eps;
        eps.kind = TomlValue::Kind::array;
        for (double e : cfg.sweep_epsilons) eps.items.push_back(TomlValue::of_double(e));
        emit(out, "epsilons", eps);
    }

    out += "\n[output]\n";
    emit(out, "dir", TomlValue::of_string(cfg.out_dir));
    return out;
}

LabeledImageSet load_dataset(const DatasetConfig& d, bool test_split) {
    d.validate();
    if (d.kind == "synthetic") {
        uint64_t seed = test_split ? Rng::substream(d.seed, "test_set").next_u64() : d.seed;
        int n = test_split ? d.test_count : d.count;
        return synth_toy_dataset(seed, n, d.classes, d.side);
    }
    return load_cifar10_binary(test_split ? d.test_path : d.path);
}

}  // namespace amoc
