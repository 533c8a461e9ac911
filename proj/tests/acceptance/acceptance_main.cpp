// Acceptance gate for the laboratory: nine end-to-end checks, one line of
// output each ("criterion N: PASS — ..." / "criterion N: FAIL — ...").
// Exit status is the number of failed criteria. Tolerances sit next to the
// checks they guard; the shared desk-scale protocol lives in DeskProtocol.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "amoc/attacks.hpp"
#include "amoc/bank.hpp"
#include "amoc/checkpoint.hpp"
#include "amoc/data.hpp"
#include "amoc/common.hpp"
#include "amoc/encoder.hpp"
#include "amoc/eval.hpp"
#include "amoc/losses.hpp"
#include "amoc/tensor.hpp"
#include "amoc/train.hpp"
#include "oracles.hpp"

using namespace amoc;

namespace {

struct Outcome {
    bool pass = false;
    std::string details;
};

std::string fmt(double v, int prec = 2) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

std::string fmt_sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1e", v);
    return buf;
}

using Clock = std::chrono::steady_clock;

int elapsed_s(Clock::time_point start) {
    return static_cast<int>(
        std::chrono::duration_cast<std::chrono::seconds>(Clock::now() - start).count());
}

Tensor random_unit_rows(int64_t n, int64_t d, Rng& rng) {
    Tensor t({n, d});
    for (int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            t.at2(i, j) = rng.normal();
            s += t.at2(i, j) * t.at2(i, j);
        }
        for (int64_t j = 0; j < d; ++j) t.at2(i, j) /= std::sqrt(s);
    }
    return t;
}

double dot_row(const Tensor& a, int64_t i, const Tensor& b, int64_t j) {
    double s = 0.0;
    for (int64_t c = 0; c < a.shape[1]; ++c) s += a.at2(i, c) * b.at2(j, c);
    return s;
}

// Constant-gradient surface: value sum(w*x)/B, so every attack step is
// predictable in closed form.
class LinearObjective : public InputObjective {
public:
    explicit LinearObjective(Tensor w) : w_(std::move(w)) {}
    double eval(const Tensor& x, Tensor* grad) override {
        double s = 0.0;
        for (size_t i = 0; i < x.v.size(); ++i) s += w_.v[i % w_.v.size()] * x.v[i];
        if (grad)
            for (size_t i = 0; i < x.v.size(); ++i) grad->v[i] = w_.v[i % w_.v.size()];
        return s;
    }

private:
    Tensor w_;
};

double norm_of(const Tensor& delta, Norm n) {
    double v = 0.0;
    for (double x : delta.v) {
        if (n == Norm::linf)
            v = std::max(v, std::fabs(x));
        else if (n == Norm::l2)
            v += x * x;
        else
            v += std::fabs(x);
    }
    return n == Norm::l2 ? std::sqrt(v) : v;
}

// ---------------------------------------------------------------------------
// criterion 1: InfoNCE equals a cross-entropy oracle over concatenated
// logits, 1000 random draws, relative error <= 1e-6.

Outcome criterion1() {
    const double kTol = 1e-6;
    Rng rng = Rng::substream(401, "acc_c1");
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        int64_t b = 1 + rng.uniform_int(0, 5);
        int64_t d = 4 + rng.uniform_int(0, 20);
        int64_t k = 1 + rng.uniform_int(0, 39);
        double temp = 0.05 + 0.95 * rng.uniform01();
        Tensor q = random_unit_rows(b, d, rng);
        Tensor pos = random_unit_rows(b, d, rng);
        Tensor negs = random_unit_rows(k, d, rng);
        double want = 0.0;
        for (int64_t i = 0; i < b; ++i) {
            std::vector<double> z(static_cast<size_t>(k) + 1);
            z[0] = dot_row(q, i, pos, i) / temp;
            for (int64_t j = 0; j < k; ++j)
                z[static_cast<size_t>(j) + 1] = dot_row(q, i, negs, j) / temp;
            want += oracle::cross_entropy_row(z, 0);
        }
        want /= static_cast<double>(b);
        double got = info_nce(q, pos, negs, temp).loss;
        worst = std::max(worst, std::fabs(got - want) / std::max(1.0, std::fabs(want)));
    }
    return {worst <= kTol, "info_nce vs cross-entropy oracle, 1000 draws, max rel err " +
                               fmt_sci(worst) + " (tol 1e-6)"};
}

// ---------------------------------------------------------------------------
// criterion 2: analytic gradients vs central finite differences, <= 1e-4.

EncoderArch toy_arch() {
    EncoderArch arch;
    arch.width = 4;
    arch.embed_dim = 8;
    return arch;
}

std::vector<double*> sample_coords(const std::vector<ParamRef>& params,
                                   std::vector<double*>* grads) {
    std::vector<double*> coords;
    for (const ParamRef& p : params) {
        size_t n = p.value->v.size();
        for (size_t at : {size_t{0}, n / 2, n - 1}) {
            coords.push_back(&p.value->v[at]);
            if (grads) grads->push_back(&p.grad->v[at]);
        }
    }
    return coords;
}

Outcome criterion2() {
    const double kTol = 1e-4;
    Rng rng = Rng::substream(402, "acc_c2");
    double worst = 0.0;

    {  // info_nce input gradient, every query coordinate
        Tensor q = random_unit_rows(3, 8, rng);
        Tensor k = random_unit_rows(3, 8, rng);
        Tensor negs = random_unit_rows(7, 8, rng);
        InfoNceResult r = info_nce(q, k, negs, 0.2, /*want_grads=*/true);
        std::vector<double*> coords;
        for (double& v : q.v) coords.push_back(&v);
        auto f = [&] { return info_nce(q, k, negs, 0.2).loss; };
        std::vector<double> fd = oracle::fd_gradient(f, coords, 1e-6);
        worst = std::max(worst, oracle::rel_error(r.dq.v, fd));
        double temp = 0.2;
        auto ft = [&] { return info_nce(q, k, negs, temp).loss; };
        std::vector<double> fdt = oracle::fd_gradient(ft, {&temp}, 1e-6);
        worst = std::max(worst, oracle::rel_error({r.dT}, fdt));
    }

    int64_t encoder_params = 0;
    {  // combined contrastive objective, parameter gradients
        EncoderPair pair = init_encoder_pair(toy_arch(), 21, 0.999);
        for (const ParamRef& p : pair.query.params())
            encoder_params += static_cast<int64_t>(p.value->v.size());
        MemoryBank bank_clean(24, 8, 31), bank_adv(24, 8, 32);
        Tensor vq({4, 3, 16, 16}), vk({4, 3, 16, 16}), delta({4, 3, 16, 16});
        for (double& v : vq.v) v = 0.25 + 0.5 * rng.uniform01();
        for (double& v : vk.v) v = 0.25 + 0.5 * rng.uniform01();
        for (double& v : delta.v) v = 0.01 * (2.0 * rng.uniform01() - 1.0);
        LossWeights w;
        ContrastiveModes modes = ContrastiveModes::frozen();
        std::vector<ParamRef> params = pair.query.params();
        zero_grads(params);
        amoc_loss(pair, bank_clean, bank_adv, vq, vk, delta, w, modes, /*param_grads=*/true);
        std::vector<double*> grads;
        std::vector<double*> coords = sample_coords(params, &grads);
        auto f = [&] {
            return amoc_loss(pair, bank_clean, bank_adv, vq, vk, delta, w, modes, false).total;
        };
        std::vector<double> fd = oracle::fd_gradient(f, coords, 1e-5);
        std::vector<double> got(grads.size());
        for (size_t i = 0; i < grads.size(); ++i) got[i] = *grads[i];
        worst = std::max(worst, oracle::rel_error(got, fd));
    }

    {  // TRADES objective at a fixed crafted point, parameter gradients
        ClassifierModel model(toy_arch(), 3);
        Rng init_rng = Rng::substream(403, "acc_c2_trades");
        model.init(init_rng);
        Tensor x({4, 3, 16, 16});
        for (double& v : x.v) v = 0.3 + 0.4 * rng.uniform01();
        Tensor x_adv = x;
        for (double& v : x_adv.v) v += 0.02 * (2.0 * rng.uniform01() - 1.0);
        std::vector<int> y = {0, 2, 1, 1};
        LossWeights w;
        RunMode mode = frozen_batch_mode(BnBranch::adv);
        std::vector<ParamRef> params = model.params();
        zero_grads(params);
        trades_objective(model, x, x_adv, y, w, mode, /*param_grads=*/true);
        std::vector<double*> grads;
        std::vector<double*> coords = sample_coords(params, &grads);
        auto f = [&] { return trades_objective(model, x, x_adv, y, w, mode, false).total; };
        std::vector<double> fd = oracle::fd_gradient(f, coords, 1e-5);
        std::vector<double> got(grads.size());
        for (size_t i = 0; i < grads.size(); ++i) got[i] = *grads[i];
        worst = std::max(worst, oracle::rel_error(got, fd));
    }

    return {worst <= kTol, "info_nce/amoc/trades gradients vs finite differences on a " +
                               std::to_string(encoder_params) + "-parameter encoder, max rel err " +
                               fmt_sci(worst) + " (tol 1e-4)"};
}

// ---------------------------------------------------------------------------
// criterion 3: attack invariants over 500 random draws plus the closed-form
// minimal-perturbation checks.

Outcome criterion3() {
    Rng rng = Rng::substream(404, "acc_c3");
    int ball_violations = 0, box_violations = 0;
    const Norm norms[3] = {Norm::linf, Norm::l2, Norm::l1};
    for (int t = 0; t < 500; ++t) {
        Norm norm = norms[t % 3];
        AttackSpec spec;
        spec.norm = norm;
        spec.method = (norm == Norm::l1 && t % 2 == 0) ? "slide" : "pgd";
        spec.epsilon = norm == Norm::linf ? 0.005 + 0.045 * rng.uniform01()
                       : norm == Norm::l2 ? 0.1 + 0.9 * rng.uniform01()
                                          : 2.0 + 18.0 * rng.uniform01();
        spec.steps = 1 + rng.uniform_int(0, 4);
        spec.rel_step = 0.2 + 0.8 * rng.uniform01();
        spec.random_start = (t % 2 == 1);
        spec.validate();
        int64_t b = 1 + rng.uniform_int(0, 1);
        Tensor x({b, 3, 8, 8});
        for (double& v : x.v) v = rng.uniform01();
        Tensor w({1, 3, 8, 8});
        for (double& v : w.v) v = rng.normal();
        LinearObjective obj(w);
        Tensor x_adv = spec.method == "slide" ? slide(obj, x, spec, rng) : pgd(obj, x, spec, rng);
        int64_t per = x.numel() / b;
        for (int64_t i = 0; i < b; ++i) {
            Tensor delta({1, per});
            for (int64_t j = 0; j < per; ++j) delta.v[j] = x_adv.v[i * per + j] - x.v[i * per + j];
            if (norm_of(delta, norm) > spec.epsilon * (1.0 + 1e-9)) ++ball_violations;
        }
        for (double v : x_adv.v)
            if (v < 0.0 || v > 1.0) ++box_violations;
    }

    int fgsm_mismatches = 0;
    for (int t = 0; t < 20; ++t) {
        Tensor w({2, 27});
        for (double& v : w.v) v = rng.normal();
        std::vector<double> bias = {rng.normal(), rng.normal()};
        oracle::AffineLogits model(w, bias);
        Tensor x({1, 3, 3, 3});
        for (double& v : x.v) v = 0.3 + 0.4 * rng.uniform01();
        std::vector<int> y = {t % 2};
        CrossEntropyObjective obj(model, y);
        double eps = 0.002 + 0.02 * rng.uniform01();
        Tensor a = fgsm(obj, x, eps);
        AttackSpec one;
        one.steps = 1;
        one.rel_step = 1.0;
        one.random_start = false;
        one.epsilon = eps;
        Rng step_rng = Rng::substream(405, "acc_c3_fgsm");
        Tensor b = pgd(obj, x, one, step_rng);
        if (!a.bitwise_equal(b)) ++fgsm_mismatches;
    }

    double l1_worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        int64_t d = 8 + rng.uniform_int(0, 56);
        double eps = 0.5 + 4.0 * rng.uniform01();
        Tensor v({1, d});
        std::vector<double> ref(static_cast<size_t>(d));
        for (int64_t j = 0; j < d; ++j) {
            v.v[j] = 3.0 * rng.normal();
            ref[static_cast<size_t>(j)] = v.v[j];
        }
        project_l1(v, eps);
        oracle::project_l1_bisect(ref, eps);
        for (int64_t j = 0; j < d; ++j)
            l1_worst = std::max(l1_worst, std::fabs(v.v[j] - ref[static_cast<size_t>(j)]));
    }

    int df_tried = 0, df_ok = 0, cw_tried = 0, cw_ok = 0;
    for (int t = 0; t < 20; ++t) {
        int classes = 2 + rng.uniform_int(0, 2);
        Tensor w({classes, 27});
        for (double& v : w.v) v = rng.normal();
        std::vector<double> bias(static_cast<size_t>(classes));
        for (double& v : bias) v = 0.3 * rng.normal();
        oracle::AffineLogits model(w, bias);
        Tensor x({1, 3, 3, 3});
        for (double& v : x.v) v = 0.35 + 0.3 * rng.uniform01();
        double want = model.min_l2_distance(x);
        if (want < 1e-3 || want > 0.25) continue;  // keep clear of the [0,1] walls

        {
            ++df_tried;
            MinimalAttackResult r = deepfool(model, x, 50, 0.02);
            double got = 0.0;
            for (size_t j = 0; j < x.v.size(); ++j)
                got += (r.x_adv.v[j] - x.v[j]) * (r.x_adv.v[j] - x.v[j]);
            got = std::sqrt(got);
            if (r.success[0] && got >= 0.95 * want && got <= 1.05 * want * 1.02) ++df_ok;
        }
        {
            ++cw_tried;
            Tensor z = model.logits(x);
            int y = 0;
            for (int c = 1; c < classes; ++c)
                if (z.at2(0, c) > z.at2(0, y)) y = c;
            MinimalAttackResult r = cw_l2(model, x, {y}, 600, 0.01, 0.0);
            double got = 0.0;
            for (size_t j = 0; j < x.v.size(); ++j)
                got += (r.x_adv.v[j] - x.v[j]) * (r.x_adv.v[j] - x.v[j]);
            got = std::sqrt(got);
            if (r.success[0] && got >= 0.95 * want && got <= 1.05 * want + 1e-3) ++cw_ok;
        }
    }

    bool pass = ball_violations == 0 && box_violations == 0 && fgsm_mismatches == 0 &&
                l1_worst <= 1e-6 && df_tried >= 8 && df_ok == df_tried && cw_tried >= 8 &&
                cw_ok == cw_tried;
    return {pass, "500 draws: ball/box violations " + std::to_string(ball_violations) + "/" +
                      std::to_string(box_violations) + ", fgsm-vs-pgd mismatches " +
                      std::to_string(fgsm_mismatches) + ", l1 projection err " + fmt_sci(l1_worst) +
                      ", deepfool " + std::to_string(df_ok) + "/" + std::to_string(df_tried) +
                      ", cw " + std::to_string(cw_ok) + "/" + std::to_string(cw_tried) +
                      " within 5% of closed form"};
}

// ---------------------------------------------------------------------------
// criterion 4: mechanism invariants (FIFO, momentum decay, frozen key, BN
// branch isolation).

Outcome criterion4() {
    Rng rng = Rng::substream(406, "acc_c4");

    double fifo_worst = 0.0;
    {
        MemoryBank bank(32, 8, 77);
        oracle::RefFifo ref(32);
        Tensor init = bank.negatives();
        for (int64_t i = 0; i < 32; ++i) {
            std::vector<double> row(8);
            for (int64_t j = 0; j < 8; ++j) row[static_cast<size_t>(j)] = init.at2(i, j);
            ref.push(row);
        }
        int64_t pushed = 0;
        while (pushed < 10000) {
            int64_t b = 1 + rng.uniform_int(0, 7);
            Tensor keys({b, 8});
            for (int64_t i = 0; i < b; ++i) {
                std::vector<double> row(8);
                for (int64_t j = 0; j < 8; ++j) {
                    keys.at2(i, j) = rng.normal();
                    row[static_cast<size_t>(j)] = keys.at2(i, j);
                }
                ref.push(row);
            }
            bank.enqueue(keys);
            pushed += b;
            if (pushed % 1000 < 8 || pushed >= 10000) {
                Tensor got = bank.negatives();
                std::vector<std::vector<double>> a, b2;
                for (int64_t i = 0; i < 32; ++i) {
                    std::vector<double> row(8);
                    for (int64_t j = 0; j < 8; ++j) row[static_cast<size_t>(j)] = got.at2(i, j);
                    a.push_back(row);
                }
                b2.assign(ref.rows.begin(), ref.rows.end());
                std::sort(a.begin(), a.end());
                std::sort(b2.begin(), b2.end());
                for (size_t i = 0; i < a.size(); ++i)
                    for (size_t j = 0; j < 8; ++j)
                        fifo_worst = std::max(fifo_worst, std::fabs(a[i][j] - b2[i][j]));
            }
        }
    }

    double momentum_worst = 0.0;
    {
        EncoderPair pair = init_encoder_pair(toy_arch(), 5, 0.999);
        for (const ParamRef& p : pair.query.params()) p.value->zero();
        for (const ParamRef& p : pair.key.params()) p.value->fill(1.0);
        int checkpoints[] = {1, 10, 100, 1000};
        int t = 0;
        for (int target : checkpoints) {
            for (; t < target; ++t) momentum_update(pair);
            double want = std::pow(0.999, target);
            for (const ParamRef& p : pair.key.params())
                for (double v : p.value->v)
                    momentum_worst = std::max(momentum_worst, std::fabs(v - want));
        }
    }

    double key_grad = 0.0;
    bool bn_isolated = true;
    {
        EncoderPair pair = init_encoder_pair(toy_arch(), 6, 0.999);
        MemoryBank bank_clean(16, 8, 41), bank_adv(16, 8, 42);
        Tensor vq({4, 3, 16, 16}), vk({4, 3, 16, 16}), delta({4, 3, 16, 16});
        for (double& v : vq.v) v = rng.uniform01();
        for (double& v : vk.v) v = rng.uniform01();
        for (double& v : delta.v) v = 0.02 * (2.0 * rng.uniform01() - 1.0);
        zero_grads(pair.query.params());
        zero_grads(pair.key.params());
        LossWeights w;
        combined_variant_loss(parse_variant("ACA"), pair, bank_clean, bank_adv, vq, vk, &delta, w,
                              ContrastiveModes::training(), /*param_grads=*/true);
        for (const ParamRef& p : pair.key.params())
            for (double v : p.grad->v) key_grad = std::max(key_grad, std::fabs(v));

        // clean-branch forwards must leave every adv-branch buffer bit-identical
        DualBNEncoder enc(toy_arch());
        Rng enc_rng = Rng::substream(407, "acc_c4_bn");
        enc.init(enc_rng);
        std::vector<Tensor> adv_before;
        for (const BufferRef& b : enc.buffers())
            if (b.name.find(".adv.") != std::string::npos) adv_before.push_back(*b.value);
        for (int i = 0; i < 3; ++i) {
            Tensor x({4, 3, 16, 16});
            for (double& v : x.v) v = rng.uniform01();
            LayerCtx ctx;
            enc.forward(x, ctx, train_mode(BnBranch::clean));
        }
        size_t at = 0;
        for (const BufferRef& b : enc.buffers())
            if (b.name.find(".adv.") != std::string::npos)
                bn_isolated = bn_isolated && b.value->bitwise_equal(adv_before[at++]);
    }

    bool pass =
        fifo_worst <= 1e-12 && momentum_worst <= 1e-6 && key_grad == 0.0 && bn_isolated;
    return {pass, "bank vs reference FIFO over 10000 enqueues (max dev " + fmt_sci(fifo_worst) +
                      "), momentum decay m^t dev " + fmt_sci(momentum_worst) +
                      ", max key-encoder grad " + fmt_sci(key_grad) + ", BN branches " +
                      (bn_isolated ? "isolated bitwise" : "CROSS-CONTAMINATED")};
}

// ---------------------------------------------------------------------------
// Desk-scale protocol shared by criteria 5-7.

struct DeskProtocol {
    // corpus pins: 2 classes, 2000 train / 512 held-out images, 16x16
    uint64_t data_seed = 5, test_seed = 6;
    int train_images = 2000, test_images = 512, classes = 2, side = 16;
    // training pins: batch 64, 30 epochs, K = 2048
    int batch = 64, epochs = 30;
    int64_t bank = 2048;
    // free knobs, sized for a small conv encoder on one core
    int width = 8, embed = 32;
    double base_lr = 0.1;
    int warmup = 5;
    // linear-probe recipe (AdEv head training diverges above ~0.05 here)
    int probe_epochs = 20;
    double probe_lr = 0.02;
    uint64_t seeds[3] = {11, 12, 13};
};

const DeskProtocol kDesk;

LabeledImageSet desk_train() {
    return synth_toy_dataset(kDesk.data_seed, kDesk.train_images, kDesk.classes, kDesk.side);
}

LabeledImageSet desk_test() {
    return synth_toy_dataset(kDesk.test_seed, kDesk.test_images, kDesk.classes, kDesk.side);
}

TrainConfig desk_config(const std::string& variant, uint64_t seed) {
    TrainConfig cfg;
    cfg.batch_size = kDesk.batch;
    cfg.epochs = kDesk.epochs;
    cfg.bank_capacity = kDesk.bank;
    cfg.base_lr = kDesk.base_lr;
    cfg.warmup_epochs = kDesk.warmup;
    cfg.arch.width = kDesk.width;
    cfg.arch.embed_dim = kDesk.embed;
    cfg.variant = parse_variant(variant);
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

struct ProbeScore {
    double clean = 0.0;
    double pgd20 = 0.0;
};

ProbeScore probe(const Checkpoint& ck, EvalProtocol::Kind kind, const LabeledImageSet& train,
                 const LabeledImageSet& test, uint64_t seed) {
    EvalProtocol p;
    p.kind = kind;
    p.epochs = kDesk.probe_epochs;
    p.lr = kDesk.probe_lr;
    p.seed = seed;
    LinearEvalResult r = linear_eval(ck, train, test, p);
    ProbeScore s;
    s.clean = r.report.clean_pct;
    for (const AttackAccuracy& a : r.report.attacks)
        if (a.label == "pgd20_linf") s.pgd20 = a.accuracy_pct;
    return s;
}

// Pretrained checkpoints shared across the trend criteria; built once.
struct TrendRuns {
    std::vector<Checkpoint> aca;
    std::vector<double> aca_adev;
    std::vector<double> aca_clean;
    bool ready = false;
};

TrendRuns g_trend;

void build_trend_aca(const LabeledImageSet& train, const LabeledImageSet& test) {
    if (g_trend.ready) return;
    for (uint64_t seed : kDesk.seeds) {
        PretrainResult r = pretrain(desk_config("ACA", seed), train);
        ProbeScore s = probe(r.checkpoint, EvalProtocol::Kind::ad_ev, train, test, seed);
        g_trend.aca.push_back(std::move(r.checkpoint));
        g_trend.aca_adev.push_back(s.pgd20);
        g_trend.aca_clean.push_back(s.clean);
    }
    g_trend.ready = true;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::string join_pcts(const std::vector<double>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) out += (i ? "/" : "") + fmt(v[i], 1);
    return out;
}

// criterion 5: AdEv PGD20 of the full objective beats the lambda=1 clean
// ablation by >= 10 points, 3-seed means.

Outcome criterion5() {
    auto start = Clock::now();
    const double kGapPts = 10.0;
    LabeledImageSet train = desk_train(), test = desk_test();
    build_trend_aca(train, test);
    std::vector<double> ccc_adev, ccc_clean;
    for (uint64_t seed : kDesk.seeds) {
        PretrainResult r = pretrain(desk_config("CCC", seed), train);
        ProbeScore s = probe(r.checkpoint, EvalProtocol::Kind::ad_ev, train, test, seed);
        ccc_adev.push_back(s.pgd20);
        ccc_clean.push_back(s.clean);
    }
    double gap = mean_of(g_trend.aca_adev) - mean_of(ccc_adev);
    return {gap >= kGapPts,
            "AdEv PGD20 gap " + fmt(gap, 1) + "pts (need >= 10): amoc " +
                fmt(mean_of(g_trend.aca_adev), 1) + " [" + join_pcts(g_trend.aca_adev) +
                "] vs clean-contrast ablation " + fmt(mean_of(ccc_adev), 1) + " [" +
                join_pcts(ccc_adev) + "], clean " + fmt(mean_of(g_trend.aca_clean), 1) + "/" +
                fmt(mean_of(ccc_clean), 1) + ", 3 seeds, " + std::to_string(elapsed_s(start)) +
                "s"};
}

// criterion 6: variant-matrix direction — ACA AdEv >= ACC AdEv, and the
// clean-query variants stay flattened (StdEv PGD20 <= 5 points).

Outcome criterion6() {
    auto start = Clock::now();
    const double kFlatPts = 5.0;
    LabeledImageSet train = desk_train(), test = desk_test();
    build_trend_aca(train, test);
    std::vector<double> acc_adev;
    for (uint64_t seed : kDesk.seeds) {
        PretrainResult r = pretrain(desk_config("ACC", seed), train);
        acc_adev.push_back(probe(r.checkpoint, EvalProtocol::Kind::ad_ev, train, test, seed).pgd20);
    }
    std::vector<double> cac_std, caa_std;
    for (uint64_t seed : kDesk.seeds) {
        PretrainResult cac = pretrain(desk_config("CAC", seed), train);
        cac_std.push_back(
            probe(cac.checkpoint, EvalProtocol::Kind::std_ev, train, test, seed).pgd20);
        PretrainResult caa = pretrain(desk_config("CAA", seed), train);
        caa_std.push_back(
            probe(caa.checkpoint, EvalProtocol::Kind::std_ev, train, test, seed).pgd20);
    }
    double aca = mean_of(g_trend.aca_adev), acc = mean_of(acc_adev);
    double cac = mean_of(cac_std), caa = mean_of(caa_std);
    bool pass = aca >= acc && cac <= kFlatPts && caa <= kFlatPts;
    return {pass, "ACA AdEv " + fmt(aca, 1) + " vs ACC " + fmt(acc, 1) + " [" +
                      join_pcts(acc_adev) + "]; StdEv PGD20 CAC " + fmt(cac, 1) + " [" +
                      join_pcts(cac_std) + "], CAA " + fmt(caa, 1) + " [" + join_pcts(caa_std) +
                      "] (flat <= 5), 3 seeds, " + std::to_string(elapsed_s(start)) + "s"};
}

// criterion 7: warm-started TRADES at 15 epochs reaches scratch TRADES at
// 30 epochs, 3-seed mean PGD20.

Outcome criterion7() {
    auto start = Clock::now();
    LabeledImageSet train = desk_train(), test = desk_test();
    build_trend_aca(train, test);
    AttackSpec pgd20;  // defaults = the PGD20 linf report column
    std::vector<double> warm, cold;
    for (size_t i = 0; i < 3; ++i) {
        uint64_t seed = kDesk.seeds[i];
        FinetuneConfig cfg;
        cfg.seed = seed;
        cfg.batch_size = kDesk.batch;

        cfg.epochs = 15;
        FinetuneResult w = finetune(g_trend.aca[i], train, cfg);
        warm.push_back(
            robust_accuracy(*w.model, test, {pgd20}, seed).attacks[0].accuracy_pct);

        cfg.epochs = 30;
        EncoderArch arch = g_trend.aca[i].arch;
        FinetuneResult c = finetune_from_scratch(arch, train, cfg);
        cold.push_back(
            robust_accuracy(*c.model, test, {pgd20}, seed).attacks[0].accuracy_pct);
    }
    double w15 = mean_of(warm), c30 = mean_of(cold);
    return {w15 >= c30, "TRADES PGD20, 3-seed means: pretrained 15-epoch " + fmt(w15, 1) + " [" +
                            join_pcts(warm) + "] vs scratch 30-epoch " + fmt(c30, 1) + " [" +
                            join_pcts(cold) + "], " + std::to_string(elapsed_s(start)) + "s"};
}

// ---------------------------------------------------------------------------
// criterion 8: paired t-test vs precomputed references.

#include "ttest_cases.inc"

Outcome criterion8() {
    const double kTolT = 1e-10, kTolP = 1e-6;
    double worst_t = 0.0, worst_p = 0.0;
    for (const TCase& c : kTTestCases) {
        TTestResult r = paired_ttest(c.a, c.b);
        worst_t = std::max(worst_t, std::fabs(r.t - c.t));
        worst_p = std::max(worst_p, std::fabs(r.p - c.p));
    }
    bool pass = worst_t <= kTolT && worst_p <= kTolP;
    return {pass, std::to_string(kTTestCases.size()) + " fixed vectors, max |dt| " +
                      fmt_sci(worst_t) + " (tol 1e-10), max |dp| " + fmt_sci(worst_p) +
                      " (tol 1e-6)"};
}

// criterion 9: bitwise reproducibility of a pretrain run.

Outcome criterion9() {
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.epochs = 3;
    cfg.warmup_epochs = 1;
    cfg.bank_capacity = 32;
    cfg.arch.width = 4;
    cfg.arch.embed_dim = 8;
    cfg.seed = 19;
    cfg.attack.steps = 2;
    cfg.validate();
    LabeledImageSet data = synth_toy_dataset(9, 128, 2, 16);
    std::ostringstream m1, m2;
    PretrainResult r1 = pretrain(cfg, data, &m1);
    PretrainResult r2 = pretrain(cfg, data, &m2);
    bool same_metrics = m1.str() == m2.str();
    bool same_weights = r1.checkpoint.fingerprint == r2.checkpoint.fingerprint;
    return {same_metrics && same_weights,
            std::string("two runs, same seed: metrics ") +
                (same_metrics ? "byte-identical" : "DIFFER") + " (" +
                std::to_string(m1.str().size()) + " bytes), checkpoint fingerprints " +
                (same_weights ? "equal" : "DIFFER")};
}

}  // namespace

int main() {
    struct Entry {
        const char* gist;
        std::function<Outcome()> run;
    };
    const Entry entries[] = {
        {"loss oracle equivalence", criterion1},
        {"gradient checks", criterion2},
        {"attack invariants", criterion3},
        {"mechanism invariants", criterion4},
        {"desk-scale trend vs clean-contrast ablation", criterion5},
        {"variant-matrix trend", criterion6},
        {"fine-tuning benefit", criterion7},
        {"paired t-test oracle", criterion8},
        {"reproducibility", criterion9},
    };
    int failures = 0;
    for (size_t i = 0; i < std::size(entries); ++i) {
        Outcome o;
        try {
            o = entries[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string(entries[i].gist) + " threw: " + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("criterion %zu: %s — %s\n", i + 1, o.pass ? "PASS" : "FAIL",
                    o.details.c_str());
        std::fflush(stdout);
    }
    return failures;
}
