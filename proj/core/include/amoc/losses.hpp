#pragma once

#include <string>
#include <vector>

#include "amoc/attacks.hpp"
#include "amoc/bank.hpp"
#include "amoc/encoder.hpp"

namespace amoc {

struct LossWeights {
    double lambda = 0.5;       // balance between the clean and adversarial terms
    double temperature = 0.2;  // InfoNCE T
    double trades_beta = 6.0;  // weight of the TRADES consistency term

    void validate() const;
};

// Three-letter routing code (query, key, bank), each Adversarial or Clean.
// The training term of the main method is ACA; CCC is the plain momentum-
// contrast loss.
struct VariantTag {
    bool query_adv = true;
    bool key_adv = false;
    bool bank_adv = true;

    bool needs_delta() const { return query_adv || key_adv; }
    bool all_clean() const { return !query_adv && !key_adv && !bank_adv; }
};

VariantTag parse_variant(const std::string& code);
std::string variant_code(const VariantTag& tag);

// ---------------------------------------------------------------------------
// Elementary losses

struct InfoNceResult {
    double loss = 0.0;
    double dT = 0.0;  // d loss / d temperature (want_grads only)
    Tensor dq;        // (B,d) gradient on the queries (want_grads only)
};

// Mean over the batch of -log( exp(q.k+/T) / (exp(q.k+/T) + sum exp(q.k-/T)) ).
// Row i of k_pos is the positive for row i of q; negatives come only from
// the bank snapshot. Keys and negatives are constants (no gradients).
InfoNceResult info_nce(const Tensor& q, const Tensor& k_pos, const Tensor& negatives,
                       double temperature, bool want_grads = false);

struct CrossEntropyResult {
    double loss = 0.0;
    Tensor dlogits;         // mean-reduced (want_grads only)
    std::vector<int> pred;  // argmax per row; lowest index wins ties
};

CrossEntropyResult cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                                 bool want_grads = false);

Tensor softmax_rows(const Tensor& logits);

// mean_i KL( softmax(za_i) || softmax(zb_i) ) with gradients for both logit
// sets; zb is the reference distribution.
struct KlResult {
    double kl = 0.0;
    Tensor dza, dzb;  // want_grads only
};

KlResult softmax_kl(const Tensor& za, const Tensor& zb, bool want_grads = false);

// ---------------------------------------------------------------------------
// Contrastive objectives over the encoder pair

// BN modes for the forward passes of one contrastive step.
struct ContrastiveModes {
    RunMode query_clean = frozen_batch_mode(BnBranch::clean);  // f_q on c(x)
    RunMode query_adv = frozen_batch_mode(BnBranch::adv);      // f_q on c(x)+delta
    RunMode key_clean = frozen_batch_mode(BnBranch::clean);    // f_k on c'(x)
    RunMode key_adv = frozen_batch_mode(BnBranch::adv);        // f_k on c(x)+delta

    static ContrastiveModes training();  // batch stats + running updates
    static ContrastiveModes frozen();    // batch stats, no updates (grad checks)
    static ContrastiveModes eval();      // running stats only
};

struct CombinedLossResult {
    double total = 0.0;   // lambda*ccc + (1-lambda)*second (== ccc for CCC)
    double ccc = 0.0;     // clean term
    double second = 0.0;  // routed variant term
    Tensor key_clean;     // f_k(c'(x); BN_clean) embeddings, reused for the bank
};

// Objective lambda*L_CCC + (1-lambda)*L_tag with the second term's triple
// routed by the tag: query A -> f_q(view_q+delta; BN_adv), C -> the shared
// clean query; key A -> f_k(view_q+delta; BN_adv), C -> the shared clean
// key; bank A/C selects the snapshot. The all-clean tag reduces to L_CCC
// alone. Gradients (param_grads) flow into pair.query only.
CombinedLossResult combined_variant_loss(const VariantTag& tag, EncoderPair& pair,
                                         const MemoryBank& bank_clean, const MemoryBank& bank_adv,
                                         const Tensor& view_q, const Tensor& view_k,
                                         const Tensor* delta, const LossWeights& w,
                                         const ContrastiveModes& modes, bool param_grads);

// Single routed InfoNCE term for one tag (diagnostic scalar; pure --
// evaluation statistics, nothing mutated).
double variant_loss(const VariantTag& tag, EncoderPair& pair, const MemoryBank& bank_clean,
                    const MemoryBank& bank_adv, const Tensor& view_q, const Tensor& view_k,
                    const Tensor* delta, double temperature);

struct AmocLossValue {
    double total = 0.0, ccc = 0.0, aca = 0.0;
};

// The main combined objective (ACA tag), both terms reported.
AmocLossValue amoc_loss(EncoderPair& pair, const MemoryBank& bank_clean,
                        const MemoryBank& bank_adv, const Tensor& view_q, const Tensor& view_k,
                        const Tensor& delta, const LossWeights& w, const ContrastiveModes& modes,
                        bool param_grads);

// ---------------------------------------------------------------------------
// Supervised objectives (baselines and fine-tuning)

struct TradesResult {
    double total = 0.0, ce = 0.0, kl = 0.0;
};

// Crafts the TRADES perturbation: PGD ascent of KL(p(x+delta) || p(x))
// with the clean distribution frozen. Crafting runs on evaluation BN
// statistics of the given branch.
Tensor trades_perturb(ClassifierModel& model, const Tensor& x, const AttackSpec& spec,
                      BnBranch branch, Rng& rng);

// CE(x,y) + beta * KL(p(x_adv) || p(x)) at a FIXED x_adv, with optional
// parameter gradients (two forward tapes, both backpropagated). Split from
// crafting so finite-difference checks see a pure function of parameters.
TradesResult trades_objective(ClassifierModel& model, const Tensor& x, const Tensor& x_adv,
                              const std::vector<int>& y, const LossWeights& w,
                              const RunMode& mode, bool param_grads);

// trades_perturb + trades_objective in one call.
TradesResult trades_loss(ClassifierModel& model, const Tensor& x, const std::vector<int>& y,
                         const LossWeights& w, const AttackSpec& spec, const RunMode& mode,
                         Rng& rng, bool param_grads);

// Cross-entropy at a PGD-crafted point (the adversarial-training baseline).
struct PgdAtResult {
    double loss = 0.0;
    Tensor x_adv;
};

PgdAtResult pgd_at_loss(ClassifierModel& model, const Tensor& x, const std::vector<int>& y,
                        const AttackSpec& spec, const RunMode& mode, Rng& rng, bool param_grads);

}  // namespace amoc
