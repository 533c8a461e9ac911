#include "amoc/losses.hpp"

#include <algorithm>
#include <cmath>

#include "amoc/common.hpp"

namespace amoc {

void LossWeights::validate() const {
    check_arg(lambda > 0.0 && lambda < 1.0, "loss weights: lambda must lie in (0,1)");
    check_arg(temperature > 0.0, "loss weights: temperature must be positive");
    check_arg(trades_beta > 0.0, "loss weights: trades_beta must be positive");
}

VariantTag parse_variant(const std::string& code) {
    if (code.size() != 3) throw ConfigError("variant tag must be three letters: " + code);
    VariantTag tag;
    bool* slots[3] = {&tag.query_adv, &tag.key_adv, &tag.bank_adv};
    for (int i = 0; i < 3; ++i) {
        char c = code[i];
        if (c == 'A' || c == 'a')
            *slots[i] = true;
        else if (c == 'C' || c == 'c')
            *slots[i] = false;
        else
            throw ConfigError("variant tag letters must be A or C: " + code);
    }
    return tag;
}

std::string variant_code(const VariantTag& tag) {
    std::string s;
    s += tag.query_adv ? 'A' : 'C';
    s += tag.key_adv ? 'A' : 'C';
    s += tag.bank_adv ? 'A' : 'C';
    return s;
}

// ---------------------------------------------------------------------------

InfoNceResult info_nce(const Tensor& q, const Tensor& k_pos, const Tensor& negatives,
                       double temperature, bool want_grads) {
    check_arg(temperature > 0.0, "info_nce: temperature must be positive");
    check_arg(q.rank() == 2 && k_pos.rank() == 2 && negatives.rank() == 2,
              "info_nce: rank-2 inputs required");
    check_arg(q.same_shape(k_pos), "info_nce: query/key shape mismatch");
    check_arg(q.shape[1] == negatives.shape[1], "info_nce: negative dim mismatch");
    int64_t B = q.shape[0], K = negatives.shape[0];
    check_arg(B >= 1 && K >= 1, "info_nce: empty batch or bank");

    // Raw similarities: negatives as a (B,K) matrix, positives per row.
    Tensor sim_neg;
    matmul(q, false, negatives, true, sim_neg);
    std::vector<double> sim_pos(B);
    for (int64_t i = 0; i < B; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < q.shape[1]; ++j) s += q.at2(i, j) * k_pos.at2(i, j);
        sim_pos[i] = s;
    }

    InfoNceResult out;
    Tensor prob_neg;  // (B,K) softmax mass on the negatives
    std::vector<double> prob_pos(B);
    if (want_grads) prob_neg = Tensor({B, K});

    double loss = 0.0, dT = 0.0;
    for (int64_t i = 0; i < B; ++i) {
        double m = sim_pos[i];
        for (int64_t j = 0; j < K; ++j) m = std::max(m, sim_neg.at2(i, j));
        double z = std::exp((sim_pos[i] - m) / temperature);
        double e_pos = z;
        for (int64_t j = 0; j < K; ++j) z += std::exp((sim_neg.at2(i, j) - m) / temperature);
        double lse = m / temperature + std::log(z);
        loss += lse - sim_pos[i] / temperature;
        if (want_grads) {
            prob_pos[i] = e_pos / z;
            double mean_sim = prob_pos[i] * sim_pos[i];
            for (int64_t j = 0; j < K; ++j) {
                double p = std::exp((sim_neg.at2(i, j) - m) / temperature) / z;
                prob_neg.at2(i, j) = p;
                mean_sim += p * sim_neg.at2(i, j);
            }
            dT += (sim_pos[i] - mean_sim) / (temperature * temperature);
        }
    }
    out.loss = loss / static_cast<double>(B);
    if (!std::isfinite(out.loss)) throw NumericError("info_nce: non-finite loss");

    if (want_grads) {
        out.dT = dT / static_cast<double>(B);
        // dL/dq_i = ((p_pos-1) k_i + sum_j p_j n_j) / (B*T)
        matmul(prob_neg, false, negatives, false, out.dq);
        double inv = 1.0 / (static_cast<double>(B) * temperature);
        for (int64_t i = 0; i < B; ++i)
            for (int64_t j = 0; j < q.shape[1]; ++j)
                out.dq.at2(i, j) =
                    (out.dq.at2(i, j) + (prob_pos[i] - 1.0) * k_pos.at2(i, j)) * inv;
    }
    return out;
}

Tensor softmax_rows(const Tensor& logits) {
    check_arg(logits.rank() == 2, "softmax: rank-2 logits required");
    int64_t B = logits.shape[0], C = logits.shape[1];
    Tensor p({B, C});
    for (int64_t i = 0; i < B; ++i) {
        double m = logits.at2(i, 0);
        for (int64_t j = 1; j < C; ++j) m = std::max(m, logits.at2(i, j));
        double z = 0.0;
        for (int64_t j = 0; j < C; ++j) {
            double e = std::exp(logits.at2(i, j) - m);
            p.at2(i, j) = e;
            z += e;
        }
        for (int64_t j = 0; j < C; ++j) p.at2(i, j) /= z;
    }
    return p;
}

CrossEntropyResult cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                                 bool want_grads) {
    check_arg(logits.rank() == 2, "cross_entropy: rank-2 logits required");
    int64_t B = logits.shape[0], C = logits.shape[1];
    check_arg(static_cast<int64_t>(labels.size()) == B, "cross_entropy: label count mismatch");

    CrossEntropyResult out;
    out.pred.resize(B);
    if (want_grads) out.dlogits = Tensor({B, C});
    double loss = 0.0;
    for (int64_t i = 0; i < B; ++i) {
        int y = labels[i];
        check_arg(y >= 0 && y < C, "cross_entropy: label out of range");
        double m = logits.at2(i, 0);
        int arg = 0;
        for (int64_t j = 1; j < C; ++j)
            if (logits.at2(i, j) > m) {
                m = logits.at2(i, j);
                arg = static_cast<int>(j);
            }
        out.pred[i] = arg;
        double z = 0.0;
        for (int64_t j = 0; j < C; ++j) z += std::exp(logits.at2(i, j) - m);
        loss += m + std::log(z) - logits.at2(i, y);
        if (want_grads) {
            for (int64_t j = 0; j < C; ++j)
                out.dlogits.at2(i, j) = std::exp(logits.at2(i, j) - m) / z / static_cast<double>(B);
            out.dlogits.at2(i, y) -= 1.0 / static_cast<double>(B);
        }
    }
    out.loss = loss / static_cast<double>(B);
    if (!std::isfinite(out.loss)) throw NumericError("cross_entropy: non-finite loss");
    return out;
}

KlResult softmax_kl(const Tensor& za, const Tensor& zb, bool want_grads) {
    check_arg(za.rank() == 2 && za.same_shape(zb), "softmax_kl: matching rank-2 logits required");
    int64_t B = za.shape[0], C = za.shape[1];
    Tensor pa = softmax_rows(za);
    Tensor pb = softmax_rows(zb);

    KlResult out;
    if (want_grads) {
        out.dza = Tensor({B, C});
        out.dzb = Tensor({B, C});
    }
    double total = 0.0;
    for (int64_t i = 0; i < B; ++i) {
        double kl = 0.0;
        for (int64_t j = 0; j < C; ++j) {
            double p = pa.at2(i, j), r = pb.at2(i, j);
            if (p > 0.0) kl += p * (std::log(p) - std::log(r));
        }
        total += kl;
        if (want_grads) {
            for (int64_t j = 0; j < C; ++j) {
                double p = pa.at2(i, j), r = pb.at2(i, j);
                double logratio = p > 0.0 ? std::log(p) - std::log(r) : 0.0;
                out.dza.at2(i, j) = p * (logratio - kl) / static_cast<double>(B);
                out.dzb.at2(i, j) = (r - p) / static_cast<double>(B);
            }
        }
    }
    out.kl = total / static_cast<double>(B);
    if (!std::isfinite(out.kl)) throw NumericError("softmax_kl: non-finite divergence");
    return out;
}

// ---------------------------------------------------------------------------

ContrastiveModes ContrastiveModes::training() {
    return {train_mode(BnBranch::clean), train_mode(BnBranch::adv), train_mode(BnBranch::clean),
            train_mode(BnBranch::adv)};
}

ContrastiveModes ContrastiveModes::frozen() { return {}; }

ContrastiveModes ContrastiveModes::eval() {
    return {eval_mode(BnBranch::clean), eval_mode(BnBranch::adv), eval_mode(BnBranch::clean),
            eval_mode(BnBranch::adv)};
}

CombinedLossResult combined_variant_loss(const VariantTag& tag, EncoderPair& pair,
                                         const MemoryBank& bank_clean, const MemoryBank& bank_adv,
                                         const Tensor& view_q, const Tensor& view_k,
                                         const Tensor* delta, const LossWeights& w,
                                         const ContrastiveModes& modes, bool param_grads) {
    w.validate();
    check_arg(view_q.same_shape(view_k), "contrastive loss: view shape mismatch");
    if (tag.needs_delta()) {
        check_arg(delta != nullptr, "variant " + variant_code(tag) + " requires a perturbation");
        check_arg(delta->same_shape(view_q), "contrastive loss: delta shape mismatch");
    }

    // Clean term (always present): f_q(c(x); BN_clean) vs f_k(c'(x); BN_clean).
    LayerCtx ctx_qc, ctx_k;
    Tensor q_clean = pair.query.forward(view_q, ctx_qc, modes.query_clean);
    Tensor k_clean = pair.key.forward(view_k, ctx_k, modes.key_clean);
    InfoNceResult ccc = info_nce(q_clean, k_clean, bank_clean.negatives(), w.temperature,
                                 param_grads);

    CombinedLossResult out;
    out.ccc = ccc.loss;
    out.key_clean = k_clean;

    if (tag.all_clean()) {
        out.second = ccc.loss;
        out.total = ccc.loss;
        if (param_grads) pair.query.backward(ccc.dq, ctx_qc, true, false);
        return out;
    }

    Tensor x_adv;
    if (tag.needs_delta()) {
        x_adv = view_q;
        x_adv.axpy(1.0, *delta);
    }

    LayerCtx ctx_q2, ctx_k2;
    Tensor q2, k2;
    bool shared_query = !tag.query_adv;  // clean-query tags reuse the CCC forward
    if (tag.query_adv)
        q2 = pair.query.forward(x_adv, ctx_q2, modes.query_adv);
    else
        q2 = q_clean;
    if (tag.key_adv)
        k2 = pair.key.forward(x_adv, ctx_k2, modes.key_adv);
    else
        k2 = k_clean;
    const MemoryBank& bank2 = tag.bank_adv ? bank_adv : bank_clean;
    InfoNceResult second = info_nce(q2, k2, bank2.negatives(), w.temperature, param_grads);

    out.second = second.loss;
    out.total = w.lambda * ccc.loss + (1.0 - w.lambda) * second.loss;

    if (param_grads) {
        if (shared_query) {
            Tensor dq = ccc.dq;
            dq.scale(w.lambda);
            dq.axpy(1.0 - w.lambda, second.dq);
            pair.query.backward(dq, ctx_qc, true, false);
        } else {
            Tensor dq1 = ccc.dq;
            dq1.scale(w.lambda);
            pair.query.backward(dq1, ctx_qc, true, false);
            Tensor dq2 = second.dq;
            dq2.scale(1.0 - w.lambda);
            pair.query.backward(dq2, ctx_q2, true, false);
        }
    }
    return out;
}

double variant_loss(const VariantTag& tag, EncoderPair& pair, const MemoryBank& bank_clean,
                    const MemoryBank& bank_adv, const Tensor& view_q, const Tensor& view_k,
                    const Tensor* delta, double temperature) {
    check_arg(view_q.same_shape(view_k), "variant loss: view shape mismatch");
    if (tag.needs_delta()) {
        check_arg(delta != nullptr, "variant " + variant_code(tag) + " requires a perturbation");
        check_arg(delta->same_shape(view_q), "variant loss: delta shape mismatch");
    }
    Tensor x_adv;
    if (tag.needs_delta()) {
        x_adv = view_q;
        x_adv.axpy(1.0, *delta);
    }
    LayerCtx ctx_q, ctx_k;
    Tensor q = tag.query_adv ? pair.query.forward(x_adv, ctx_q, eval_mode(BnBranch::adv))
                             : pair.query.forward(view_q, ctx_q, eval_mode(BnBranch::clean));
    Tensor k = tag.key_adv ? pair.key.forward(x_adv, ctx_k, eval_mode(BnBranch::adv))
                           : pair.key.forward(view_k, ctx_k, eval_mode(BnBranch::clean));
    const MemoryBank& bank = tag.bank_adv ? bank_adv : bank_clean;
    return info_nce(q, k, bank.negatives(), temperature).loss;
}

AmocLossValue amoc_loss(EncoderPair& pair, const MemoryBank& bank_clean,
                        const MemoryBank& bank_adv, const Tensor& view_q, const Tensor& view_k,
                        const Tensor& delta, const LossWeights& w, const ContrastiveModes& modes,
                        bool param_grads) {
    VariantTag aca;  // defaults are the ACA routing
    CombinedLossResult r = combined_variant_loss(aca, pair, bank_clean, bank_adv, view_q, view_k,
                                                 &delta, w, modes, param_grads);
    return {r.total, r.ccc, r.second};
}

// ---------------------------------------------------------------------------

namespace {

// PGD surface for TRADES crafting: KL of the perturbed prediction against a
// frozen reference distribution.
class TradesKlObjective : public InputObjective {
public:
    TradesKlObjective(ClassifierModel& model, Tensor ref_logits, RunMode mode)
        : model_(model), ref_logits_(std::move(ref_logits)), mode_(mode) {}

    double eval(const Tensor& x, Tensor* grad) override {
        LayerCtx ctx;
        Tensor z = model_.logits(x, ctx, mode_);
        KlResult kl = softmax_kl(z, ref_logits_, grad != nullptr);
        if (grad) *grad = model_.backward(kl.dza, ctx, false, true);
        return kl.kl;
    }

private:
    ClassifierModel& model_;
    Tensor ref_logits_;
    RunMode mode_;
};

}  // namespace

Tensor trades_perturb(ClassifierModel& model, const Tensor& x, const AttackSpec& spec,
                      BnBranch branch, Rng& rng) {
    LayerCtx ctx;
    Tensor ref = model.logits(x, ctx, eval_mode(branch));
    TradesKlObjective objective(model, std::move(ref), eval_mode(branch));
    return pgd(objective, x, spec, rng);
}

TradesResult trades_objective(ClassifierModel& model, const Tensor& x, const Tensor& x_adv,
                              const std::vector<int>& y, const LossWeights& w,
                              const RunMode& mode, bool param_grads) {
    check_arg(w.trades_beta > 0.0, "trades: beta must be positive");
    LayerCtx ctx_clean, ctx_adv;
    Tensor z_clean = model.logits(x, ctx_clean, mode);
    Tensor z_adv = model.logits(x_adv, ctx_adv, mode);
    CrossEntropyResult ce = cross_entropy(z_clean, y, param_grads);
    KlResult kl = softmax_kl(z_adv, z_clean, param_grads);

    TradesResult out;
    out.ce = ce.loss;
    out.kl = kl.kl;
    out.total = ce.loss + w.trades_beta * kl.kl;
    if (param_grads) {
        Tensor dz_clean = ce.dlogits;
        dz_clean.axpy(w.trades_beta, kl.dzb);
        model.backward(dz_clean, ctx_clean, true, false);
        Tensor dz_adv = kl.dza;
        dz_adv.scale(w.trades_beta);
        model.backward(dz_adv, ctx_adv, true, false);
    }
    return out;
}

TradesResult trades_loss(ClassifierModel& model, const Tensor& x, const std::vector<int>& y,
                         const LossWeights& w, const AttackSpec& spec, const RunMode& mode,
                         Rng& rng, bool param_grads) {
    Tensor x_adv = trades_perturb(model, x, spec, mode.branch, rng);
    return trades_objective(model, x, x_adv, y, w, mode, param_grads);
}

PgdAtResult pgd_at_loss(ClassifierModel& model, const Tensor& x, const std::vector<int>& y,
                        const AttackSpec& spec, const RunMode& mode, Rng& rng, bool param_grads) {
    ClassifierSurface surface(model, eval_mode(mode.branch));
    CrossEntropyObjective objective(surface, y);
    PgdAtResult out;
    out.x_adv = pgd(objective, x, spec, rng);
    LayerCtx ctx;
    Tensor z = model.logits(out.x_adv, ctx, mode);
    CrossEntropyResult ce = cross_entropy(z, y, param_grads);
    out.loss = ce.loss;
    if (param_grads) model.backward(ce.dlogits, ctx, true, false);
    return out;
}

}  // namespace amoc
