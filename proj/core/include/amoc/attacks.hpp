#pragma once

#include <string>
#include <vector>

#include "amoc/bank.hpp"
#include "amoc/encoder.hpp"
#include "amoc/rng.hpp"
#include "amoc/tensor.hpp"

namespace amoc {

enum class Norm { linf, l2, l1 };

Norm parse_norm(const std::string& s);
const char* norm_name(Norm n);

// One attack configuration. `rel_step` is a fraction of epsilon: the
// absolute step size is rel_step * epsilon.
struct AttackSpec {
    std::string method = "pgd";  // pgd | fgsm | slide | deepfool | cw
    Norm norm = Norm::linf;
    double epsilon = 8.0 / 255.0;
    int steps = 20;
    double rel_step = 0.1;
    bool random_start = true;
    // method extras
    double overshoot = 0.02;  // deepfool
    double cw_lr = 0.01;      // cw
    double cw_confidence = 0.0;

    void validate() const;
    std::string label() const;  // e.g. "pgd20_linf", for report keys
};

// Evaluation-attack defaults, one spec per column of the standard table:
// PGD10/PGD20/DeepFool at linf eps=8/255, PGD50/SLIDE at l1 eps=12,
// PGD50/C&W at l2 eps=0.5.
std::vector<AttackSpec> default_attack_suite();

// Differentiable scalar objective of a batch of inputs (mean over batch).
// Attacks ascend this.
class InputObjective {
public:
    virtual ~InputObjective() = default;
    // Returns the objective value; writes d(value)/dx into *grad when grad
    // is non-null (same shape as x).
    virtual double eval(const Tensor& x, Tensor* grad) = 0;
};

// Classifier surface for label-aware attacks.
class LogitModel {
public:
    virtual ~LogitModel() = default;
    virtual int num_classes() const = 0;
    virtual Tensor logits(const Tensor& x) = 0;
    // Backward of the most recent logits() call: dlogits -> dx.
    virtual Tensor logits_grad(const Tensor& dlogits) = 0;
};

// LogitModel over a ClassifierModel with a fixed BN mode (eval statistics,
// so attack loops never touch running stats).
class ClassifierSurface : public LogitModel {
public:
    ClassifierSurface(ClassifierModel& model, const RunMode& mode) : model_(model), mode_(mode) {}
    int num_classes() const override { return model_.num_classes(); }
    Tensor logits(const Tensor& x) override;
    Tensor logits_grad(const Tensor& dlogits) override;

private:
    ClassifierModel& model_;
    RunMode mode_;
    LayerCtx ctx_;
};

// Mean cross-entropy of a classifier against fixed labels, as an input
// objective (the PGD/FGSM/SLIDE surface for evaluation attacks).
class CrossEntropyObjective : public InputObjective {
public:
    CrossEntropyObjective(LogitModel& model, const std::vector<int>& labels)
        : model_(model), labels_(labels) {}
    double eval(const Tensor& x, Tensor* grad) override;

private:
    LogitModel& model_;
    const std::vector<int>& labels_;
};

// Norm-ball projections of a perturbation delta (in place), and the random
// starts matching each ball. Exposed for tests.
void project_linf(Tensor& delta, double eps);
void project_l2(Tensor& delta, double eps);
// Per-image projection onto the l1 ball by the sorting-based simplex rule.
void project_l1(Tensor& delta, double eps);
void project_ball(Tensor& delta, Norm norm, double eps);
// Uniform-in-ball start for linf; uniform direction x uniform radius otherwise.
void random_start(Tensor& delta, Norm norm, double eps, Rng& rng);

// Projected gradient ascent of the objective within the spec's ball,
// clipped to [0,1] pixels. Perturbation per image; returns x_adv.
Tensor pgd(InputObjective& objective, const Tensor& x, const AttackSpec& spec, Rng& rng);

// Same ascent loop, continuing from a caller-provided perturbation (no
// random-start draw). The epsilon sweep warm-starts each budget from the
// previous one's adversarial example through this entry point.
Tensor pgd_from(InputObjective& objective, const Tensor& x, const Tensor& delta0,
                const AttackSpec& spec);

// Single full-epsilon signed-gradient step, no random start.
Tensor fgsm(InputObjective& objective, const Tensor& x, double epsilon);

// Sparse l1 ascent: each step perturbs only coordinates with |grad| at or
// above the 0.99 quantile, then projects onto the l1 ball.
Tensor slide(InputObjective& objective, const Tensor& x, const AttackSpec& spec, Rng& rng);

struct MinimalAttackResult {
    Tensor x_adv;
    std::vector<bool> success;  // label flipped per image
    std::vector<int> iterations;
};

// Iterative linearization toward the nearest decision boundary (l2 flavor),
// final perturbation scaled by (1+overshoot). No epsilon ball; evaluation
// gates success on the budget afterwards.
MinimalAttackResult deepfool(LogitModel& model, const Tensor& x, int max_iters, double overshoot);

// Carlini-Wagner l2 with tanh change of variables; keeps the smallest
// successful perturbation across iterates.
MinimalAttackResult cw_l2(LogitModel& model, const Tensor& x, const std::vector<int>& labels,
                          int iters, double lr, double confidence);

// Runs the spec's method against a classifier (labels required for the
// label-aware objectives). The minimal-perturbation methods ignore the
// epsilon ball here; robust_accuracy budget-gates them.
Tensor run_attack(const AttackSpec& spec, LogitModel& model, const Tensor& x,
                  const std::vector<int>& labels, Rng& rng);

// Training-time crafting (Algorithm 1 step 2): delta maximizing the
// InfoNCE of the perturbed query against the clean positive key and the
// adversarial bank snapshot. BN_adv eval statistics throughout.
Tensor contrastive_perturb(EncoderPair& pair, const MemoryBank& bank_adv, const Tensor& view_q,
                           const Tensor& view_k, const AttackSpec& spec, double temperature,
                           Rng& rng);

}  // namespace amoc
