#include "amoc/train.hpp"

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "amoc/common.hpp"

namespace amoc {

namespace {

using nlohmann::json;

std::vector<int64_t> shuffled_order(int64_t n, Rng& rng) {
    std::vector<int64_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int64_t i = n - 1; i > 0; --i) {
        int64_t j = rng.uniform_int(0, i);
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

// Batch s of the epoch; the last batch wraps to the front of the
// permutation so every step carries a full batch.
std::vector<int64_t> batch_indices(const std::vector<int64_t>& perm, int64_t s, int64_t b) {
    std::vector<int64_t> idx(b);
    int64_t n = static_cast<int64_t>(perm.size());
    for (int64_t k = 0; k < b; ++k) idx[k] = perm[(s * b + k) % n];
    return idx;
}

double staleness_proxy(int64_t steps_done, int64_t capacity, int64_t batch) {
    int64_t fill = (capacity + batch - 1) / batch;
    return static_cast<double>(std::min(steps_done, fill));
}

}  // namespace

void SgdOptimizer::step(const std::vector<ParamRef>& params, double lr) {
    if (velocity_.empty()) {
        velocity_.reserve(params.size());
        for (const ParamRef& p : params) velocity_.emplace_back(p.value->shape);
    }
    check_internal(velocity_.size() == params.size(), "optimizer slot count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        const ParamRef& p = params[i];
        Tensor& vel = velocity_[i];
        check_internal(vel.same_shape(*p.value), "optimizer slot shape mismatch");
        for (int64_t j = 0; j < p.value->numel(); ++j) {
            double g = p.grad->v[j];
            if (p.decay) g += weight_decay_ * p.value->v[j];
            vel.v[j] = momentum_ * vel.v[j] + g;
            p.value->v[j] -= lr * vel.v[j];
        }
    }
}

AttackSpec pretrain_attack_default() {
    AttackSpec spec;
    spec.method = "pgd";
    spec.norm = Norm::linf;
    spec.epsilon = 8.0 / 255.0;
    spec.steps = 5;
    spec.rel_step = 0.25;
    spec.random_start = true;
    return spec;
}

void TrainConfig::validate() const {
    check_arg(batch_size >= 1, "train: batch_size must be positive");
    check_arg(epochs >= 1, "train: epochs must be positive");
    check_arg(base_lr > 0.0, "train: base_lr must be positive");
    check_arg(warmup_epochs >= 0, "train: warmup_epochs must be nonnegative");
    check_arg(warmup_epochs < epochs, "train: warmup_epochs must be less than epochs");
    check_arg(weight_decay >= 0.0, "train: weight_decay must be nonnegative");
    check_arg(sgd_momentum >= 0.0 && sgd_momentum < 1.0, "train: sgd_momentum must be in [0,1)");
    check_arg(encoder_momentum > 0.0 && encoder_momentum < 1.0,
              "train: encoder_momentum must be in (0,1)");
    check_arg(bank_capacity >= 1, "train: bank_capacity must be positive");
    check_arg(batch_size <= bank_capacity, "train: batch_size must not exceed bank capacity");
    weights.validate();
    attack.validate();
    augment.validate();
}

double lr_at(int epoch, int epochs, double base_lr, int warmup_epochs) {
    check_arg(epochs >= 1, "lr_at: epochs must be positive");
    check_arg(warmup_epochs >= 0 && warmup_epochs < epochs, "lr_at: invalid warmup");
    check_arg(epoch >= 0 && epoch < epochs, "lr_at: epoch out of range");
    if (epoch < warmup_epochs)
        return base_lr * static_cast<double>(epoch + 1) / static_cast<double>(warmup_epochs);
    double progress =
        static_cast<double>(epoch - warmup_epochs) / static_cast<double>(epochs - warmup_epochs);
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

std::string metrics_json_line(const EpochMetrics& m) {
    json j;
    j["epoch"] = m.epoch;
    j["step"] = m.step;
    j["lr"] = m.lr;
    j["loss"] = m.loss;
    j["term_a"] = m.term_a;
    j["term_b"] = m.term_b;
    j["staleness"] = m.staleness;
    return j.dump();
}

namespace {

struct PretrainState {
    EncoderPair pair;
    MemoryBank bank_clean, bank_adv;
    SgdOptimizer opt;
    Rng order_rng, aug_rng, attack_rng;
    int epochs_done = 0;
    int64_t steps_done = 0;

    PretrainState(const TrainConfig& cfg)
        : pair(init_encoder_pair(cfg.arch, cfg.seed, cfg.encoder_momentum)),
          bank_clean(cfg.bank_capacity, cfg.arch.embed_dim,
                     Rng::substream(cfg.seed, "bank_clean").next_u64()),
          bank_adv(cfg.bank_capacity, cfg.arch.embed_dim,
                   Rng::substream(cfg.seed, "bank_adv").next_u64()),
          opt(cfg.sgd_momentum, cfg.weight_decay),
          order_rng(Rng::substream(cfg.seed, "order")),
          aug_rng(Rng::substream(cfg.seed, "augment")),
          attack_rng(Rng::substream(cfg.seed, "attack")) {}
};

Checkpoint build_pretrain_checkpoint(PretrainState& st, const TrainConfig& cfg) {
    Checkpoint ck;
    ck.arch = cfg.arch;
    ck.num_classes = 0;
    ck.epoch = st.epochs_done;
    ck.step = st.steps_done;
    ck.momentum = cfg.encoder_momentum;
    ck.bank_capacity = cfg.bank_capacity;
    ck.bank_write_clean = st.bank_clean.write_ptr();
    ck.bank_write_adv = st.bank_adv.write_ptr();
    ck.config_echo = cfg.config_echo;
    ck.rng_states["order"] = st.order_rng.state();
    ck.rng_states["augment"] = st.aug_rng.state();
    ck.rng_states["attack"] = st.attack_rng.state();

    std::vector<ParamRef> qp = st.pair.query.params();
    capture_params(ck.arrays, "q.", qp);
    capture_buffers(ck.arrays, "q.", st.pair.query.buffers());
    capture_params(ck.arrays, "k.", st.pair.key.params());
    capture_buffers(ck.arrays, "k.", st.pair.key.buffers());
    std::vector<Tensor>& slots = st.opt.slots();
    check_internal(slots.empty() || slots.size() == qp.size(), "optimizer slots out of sync");
    for (size_t i = 0; i < slots.size(); ++i)
        capture_tensor(ck.arrays, "opt.q." + qp[i].name, slots[i]);
    capture_tensor(ck.arrays, "bank_clean.storage", st.bank_clean.storage());
    capture_tensor(ck.arrays, "bank_adv.storage", st.bank_adv.storage());
    return ck;
}

void require_same_arch(const EncoderArch& a, const EncoderArch& b) {
    if (a.backbone != b.backbone || a.width != b.width || a.embed_dim != b.embed_dim ||
        a.in_channels != b.in_channels)
        throw IncompatibilityError("checkpoint architecture does not match the configured one");
}

void restore_pretrain_state(PretrainState& st, const Checkpoint& ck, const TrainConfig& cfg) {
    require_same_arch(ck.arch, cfg.arch);
    if (ck.bank_capacity != cfg.bank_capacity)
        throw IncompatibilityError("checkpoint bank capacity does not match the configured one");
    if (ck.momentum != cfg.encoder_momentum)
        throw IncompatibilityError("checkpoint encoder momentum does not match the configured one");
    check_arg(ck.epoch <= cfg.epochs, "resume: checkpoint is already past the target epochs");

    std::vector<ParamRef> qp = st.pair.query.params();
    restore_params(ck, "q.", qp);
    restore_buffers(ck, "q.", st.pair.query.buffers());
    restore_params(ck, "k.", st.pair.key.params());
    restore_buffers(ck, "k.", st.pair.key.buffers());

    if (ck.find("opt.q." + qp.front().name)) {
        std::vector<Tensor>& slots = st.opt.slots();
        slots.clear();
        for (const ParamRef& p : qp) slots.emplace_back(p.value->shape);
        for (size_t i = 0; i < qp.size(); ++i)
            restore_tensor(ck, "opt.q." + qp[i].name, slots[i]);
    }
    restore_tensor(ck, "bank_clean.storage", st.bank_clean.storage());
    restore_tensor(ck, "bank_adv.storage", st.bank_adv.storage());
    st.bank_clean.set_write_ptr(ck.bank_write_clean);
    st.bank_adv.set_write_ptr(ck.bank_write_adv);

    auto state_of = [&](const char* name) {
        auto it = ck.rng_states.find(name);
        if (it == ck.rng_states.end())
            throw FormatError(std::string("checkpoint lacks rng state '") + name + "'");
        return it->second;
    };
    st.order_rng.set_state(state_of("order"));
    st.aug_rng.set_state(state_of("augment"));
    st.attack_rng.set_state(state_of("attack"));
    st.epochs_done = ck.epoch;
    st.steps_done = ck.step;
}

PretrainResult run_pretrain(PretrainState& st, const TrainConfig& cfg,
                            const LabeledImageSet& data, std::ostream* metrics_out) {
    data.validate();
    int64_t n = data.count();
    check_arg(n >= 1, "pretrain: empty dataset");
    int64_t b = cfg.batch_size;
    int64_t steps_per_epoch = (n + b - 1) / b;
    std::vector<ParamRef> q_params = st.pair.query.params();

    PretrainResult result;
    for (int epoch = st.epochs_done; epoch < cfg.epochs; ++epoch) {
        double lr = lr_at(epoch, cfg);
        std::string order_state = st.order_rng.state();
        std::string aug_state = st.aug_rng.state();
        std::string attack_state = st.attack_rng.state();
        std::vector<int64_t> perm = shuffled_order(n, st.order_rng);

        double sum_total = 0.0, sum_ccc = 0.0, sum_second = 0.0;
        for (int64_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<int64_t> idx = batch_indices(perm, s, b);
            Tensor x = take_rows(data.images, idx);
            auto [view_q, view_k] = make_views_batch(x, cfg.augment, st.aug_rng);

            Tensor delta(view_q.shape);
            if (cfg.variant.needs_delta())
                delta = contrastive_perturb(st.pair, st.bank_adv, view_q, view_k, cfg.attack,
                                            cfg.weights.temperature, st.attack_rng);

            zero_grads(q_params);
            CombinedLossResult r =
                combined_variant_loss(cfg.variant, st.pair, st.bank_clean, st.bank_adv, view_q,
                                      view_k, &delta, cfg.weights, ContrastiveModes::training(),
                                      /*param_grads=*/true);
            if (!std::isfinite(r.total))
                throw NumericError(
                    "pretrain: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                    std::to_string(s) + " (first batch index " + std::to_string(idx[0]) +
                    "); epoch-start rng states: order=" + order_state + " augment=" + aug_state +
                    " attack=" + attack_state);

            st.opt.step(q_params, lr);
            momentum_update(st.pair);

            st.bank_clean.enqueue(r.key_clean);
            Tensor x_attacked = view_q;
            x_attacked.axpy(1.0, delta);
            LayerCtx kctx;
            Tensor k_adv = st.pair.key.forward(x_attacked, kctx, train_mode(BnBranch::adv));
            st.bank_adv.enqueue(k_adv);

            ++st.steps_done;
            sum_total += r.total;
            sum_ccc += r.ccc;
            sum_second += r.second;
        }
        st.epochs_done = epoch + 1;

        EpochMetrics m;
        m.epoch = epoch;
        m.step = st.steps_done;
        m.lr = lr;
        m.loss = sum_total / static_cast<double>(steps_per_epoch);
        m.term_a = sum_ccc / static_cast<double>(steps_per_epoch);
        m.term_b = sum_second / static_cast<double>(steps_per_epoch);
        m.staleness = staleness_proxy(st.steps_done, cfg.bank_capacity, b);
        result.metrics.push_back(m);
        if (metrics_out) *metrics_out << metrics_json_line(m) << "\n";
    }
    result.checkpoint = build_pretrain_checkpoint(st, cfg);
    return result;
}

}  // namespace

PretrainResult pretrain(const TrainConfig& cfg, const LabeledImageSet& data,
                        std::ostream* metrics_out) {
    cfg.validate();
    PretrainState st(cfg);
    return run_pretrain(st, cfg, data, metrics_out);
}

PretrainResult resume_pretrain(const Checkpoint& ck, const TrainConfig& cfg,
                               const LabeledImageSet& data, std::ostream* metrics_out) {
    cfg.validate();
    PretrainState st(cfg);
    restore_pretrain_state(st, ck, cfg);
    return run_pretrain(st, cfg, data, metrics_out);
}

// ---------------------------------------------------------------------------
// Supervised phase

FinetuneConfig::FinetuneConfig() {
    attack.method = "pgd";
    attack.norm = Norm::linf;
    attack.epsilon = 8.0 / 255.0;
    attack.steps = 10;
    attack.rel_step = 0.25;
    attack.random_start = true;
}

void FinetuneConfig::validate() const {
    check_arg(objective == "trades" || objective == "pgd_at" || objective == "standard",
              "finetune: unknown objective '" + objective + "'");
    check_arg(batch_size >= 1, "finetune: batch_size must be positive");
    check_arg(epochs >= 0, "finetune: epochs must be nonnegative");
    check_arg(base_lr > 0.0, "finetune: base_lr must be positive");
    check_arg(warmup_epochs >= 0, "finetune: warmup_epochs must be nonnegative");
    check_arg(epochs == 0 || warmup_epochs < epochs,
              "finetune: warmup_epochs must be less than epochs");
    check_arg(weight_decay >= 0.0, "finetune: weight_decay must be nonnegative");
    check_arg(sgd_momentum >= 0.0 && sgd_momentum < 1.0,
              "finetune: sgd_momentum must be in [0,1)");
    check_arg(pad >= 0, "finetune: pad must be nonnegative");
    weights.validate();
    attack.validate();
}

namespace {

// Everything but the contrastive projection head: that path is not part of
// the classifier, so supervised training leaves it untouched.
std::vector<ParamRef> classifier_trainables(ClassifierModel& model) {
    std::vector<ParamRef> out;
    for (const ParamRef& p : model.params())
        if (p.name.rfind("head.", 0) != 0) out.push_back(p);
    return out;
}

FinetuneResult run_finetune(std::unique_ptr<ClassifierModel> model, const LabeledImageSet& data,
                            const FinetuneConfig& cfg, std::ostream* metrics_out) {
    data.validate();
    FinetuneResult result;
    if (cfg.epochs == 0) {
        result.model = std::move(model);
        return result;
    }

    Rng order_rng = Rng::substream(cfg.seed, "ft_order");
    Rng aug_rng = Rng::substream(cfg.seed, "ft_augment");
    Rng attack_rng = Rng::substream(cfg.seed, "ft_attack");
    SgdOptimizer opt(cfg.sgd_momentum, cfg.weight_decay);
    std::vector<ParamRef> trainables = classifier_trainables(*model);
    std::vector<ParamRef> all_params = model->params();

    int64_t n = data.count();
    check_arg(n >= 1, "finetune: empty dataset");
    int64_t b = cfg.batch_size;
    int64_t steps_per_epoch = (n + b - 1) / b;
    int64_t steps_done = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = lr_at(epoch, cfg.epochs, cfg.base_lr, cfg.warmup_epochs);
        std::vector<int64_t> perm = shuffled_order(n, order_rng);
        double sum_loss = 0.0, sum_a = 0.0, sum_b = 0.0;

        for (int64_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<int64_t> idx = batch_indices(perm, s, b);
            Tensor x = take_rows(data.images, idx);
            std::vector<int> y(idx.size());
            for (size_t k = 0; k < idx.size(); ++k) y[k] = data.labels[idx[k]];
            Tensor xa = finetune_augment_batch(x, aug_rng, cfg.pad);

            zero_grads(all_params);
            double loss = 0.0, term_a = 0.0, term_b = 0.0;
            RunMode mode = train_mode(BnBranch::adv);
            if (cfg.objective == "trades") {
                TradesResult tr = trades_loss(*model, xa, y, cfg.weights, cfg.attack, mode,
                                              attack_rng, /*param_grads=*/true);
                loss = tr.total;
                term_a = tr.ce;
                term_b = tr.kl;
            } else if (cfg.objective == "pgd_at") {
                PgdAtResult pr =
                    pgd_at_loss(*model, xa, y, cfg.attack, mode, attack_rng, /*param_grads=*/true);
                loss = pr.loss;
                term_a = pr.loss;
            } else {
                LayerCtx ctx;
                Tensor z = model->logits(xa, ctx, mode);
                CrossEntropyResult ce = cross_entropy(z, y, /*want_grads=*/true);
                model->backward(ce.dlogits, ctx, /*param_grads=*/true, /*want_dx=*/false);
                loss = ce.loss;
                term_a = ce.loss;
            }
            if (!std::isfinite(loss))
                throw NumericError("finetune: non-finite loss at epoch " + std::to_string(epoch) +
                                   " step " + std::to_string(s) + " (first batch index " +
                                   std::to_string(idx[0]) + ")");

            opt.step(trainables, lr);
            ++steps_done;
            sum_loss += loss;
            sum_a += term_a;
            sum_b += term_b;
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.step = steps_done;
        m.lr = lr;
        m.loss = sum_loss / static_cast<double>(steps_per_epoch);
        m.term_a = sum_a / static_cast<double>(steps_per_epoch);
        m.term_b = sum_b / static_cast<double>(steps_per_epoch);
        result.metrics.push_back(m);
        if (metrics_out) *metrics_out << metrics_json_line(m) << "\n";
    }
    result.model = std::move(model);
    return result;
}

}  // namespace

FinetuneResult finetune(const Checkpoint& ck, const LabeledImageSet& data,
                        const FinetuneConfig& cfg, std::ostream* metrics_out) {
    cfg.validate();
    auto model = classifier_from_checkpoint(ck, data.num_classes, cfg.seed);
    return run_finetune(std::move(model), data, cfg, metrics_out);
}

FinetuneResult finetune_from_scratch(const EncoderArch& arch, const LabeledImageSet& data,
                                     const FinetuneConfig& cfg, std::ostream* metrics_out) {
    cfg.validate();
    auto model = std::make_unique<ClassifierModel>(arch, data.num_classes);
    Rng init_rng = Rng::substream(cfg.seed, "scratch_init");
    model->init(init_rng);
    return run_finetune(std::move(model), data, cfg, metrics_out);
}

Checkpoint classifier_checkpoint(ClassifierModel& model, int epoch,
                                 const std::string& config_echo) {
    Checkpoint ck;
    ck.arch = model.encoder().arch();
    ck.num_classes = model.num_classes();
    ck.epoch = epoch;
    ck.config_echo = config_echo;
    capture_params(ck.arrays, "q.", model.encoder().params());
    capture_buffers(ck.arrays, "q.", model.encoder().buffers());
    capture_params(ck.arrays, "", model.head_params());
    return ck;
}

std::unique_ptr<ClassifierModel> classifier_from_checkpoint(const Checkpoint& ck, int num_classes,
                                                            uint64_t seed) {
    if (ck.num_classes != 0 && ck.num_classes != num_classes)
        throw IncompatibilityError("checkpoint stores a " + std::to_string(ck.num_classes) +
                                   "-class head, requested " + std::to_string(num_classes));
    auto model = std::make_unique<ClassifierModel>(ck.arch, num_classes);
    restore_params(ck, "q.", model->encoder().params());
    restore_buffers(ck, "q.", model->encoder().buffers());
    if (ck.find("classifier.weight")) {
        restore_params(ck, "", model->head_params());
    } else {
        Rng head_rng = Rng::substream(seed, "head_init");
        model->init_head(head_rng);
    }
    return model;
}

}  // namespace amoc
