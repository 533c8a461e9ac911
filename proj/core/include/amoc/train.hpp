#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "amoc/attacks.hpp"
#include "amoc/checkpoint.hpp"
#include "amoc/data.hpp"
#include "amoc/encoder.hpp"
#include "amoc/losses.hpp"
#include "amoc/nn.hpp"

namespace amoc {

// SGD with momentum. Decay is classic coupled L2 (g += wd * p), applied
// only to parameters flagged for decay (conv/linear weights; BN affine and
// biases are exempt).
class SgdOptimizer {
public:
    SgdOptimizer(double momentum, double weight_decay)
        : momentum_(momentum), weight_decay_(weight_decay) {}

    // Velocity slots are allocated on the first step and must then match
    // the parameter list on every later call.
    void step(const std::vector<ParamRef>& params, double lr);

    std::vector<Tensor>& slots() { return velocity_; }
    double momentum() const { return momentum_; }
    double weight_decay() const { return weight_decay_; }

private:
    double momentum_, weight_decay_;
    std::vector<Tensor> velocity_;
};

// Pre-training attack default: 5-step linf PGD at the evaluation budget.
AttackSpec pretrain_attack_default();

struct TrainConfig {
    int batch_size = 64;
    int epochs = 30;
    double base_lr = 0.1;
    int warmup_epochs = 10;
    double weight_decay = 5e-4;
    double sgd_momentum = 0.9;
    double encoder_momentum = 0.999;
    int64_t bank_capacity = 2048;
    uint64_t seed = 1;
    VariantTag variant;  // ACA
    LossWeights weights;
    AttackSpec attack = pretrain_attack_default();
    EncoderArch arch;
    AugmentationPipeline augment;
    std::string config_echo;  // resolved config text carried into checkpoints

    void validate() const;
};

// lr for one epoch: linear ramp to base_lr over the first `warmup` epochs,
// then cosine decay to zero across the rest. Constant within an epoch.
double lr_at(int epoch, int epochs, double base_lr, int warmup_epochs);
inline double lr_at(int epoch, const TrainConfig& cfg) {
    return lr_at(epoch, cfg.epochs, cfg.base_lr, cfg.warmup_epochs);
}

// One JSONL record per epoch.
struct EpochMetrics {
    int epoch = 0;
    int64_t step = 0;  // optimizer steps completed so far
    double lr = 0.0;
    double loss = 0.0;    // epoch mean of the trained objective
    double term_a = 0.0;  // clean contrastive term / CE term
    double term_b = 0.0;  // routed adversarial term / KL term
    double staleness = 0.0;  // bank age proxy in steps: min(step, ceil(K/B))
};

std::string metrics_json_line(const EpochMetrics& m);

struct PretrainResult {
    Checkpoint checkpoint;
    std::vector<EpochMetrics> metrics;
};

// Algorithm-1 driver. Per step: sample the two views, craft delta against
// the adversarial bank, compute the combined loss, update the query by
// SGD, the key by momentum, then enqueue the clean key batch into M_clean
// and a post-update adversarial key batch into M_adv. metrics_out (when
// given) receives one JSON line per epoch.
PretrainResult pretrain(const TrainConfig& cfg, const LabeledImageSet& data,
                        std::ostream* metrics_out = nullptr);

// Continues a pre-training checkpoint up to cfg.epochs. The config must
// describe the same architecture; epoch/step/rng/banks come from the file.
PretrainResult resume_pretrain(const Checkpoint& ck, const TrainConfig& cfg,
                               const LabeledImageSet& data, std::ostream* metrics_out = nullptr);

struct FinetuneConfig {
    std::string objective = "trades";  // trades | pgd_at | standard
    int batch_size = 64;
    int epochs = 10;
    double base_lr = 0.1;
    int warmup_epochs = 0;
    double weight_decay = 5e-4;
    double sgd_momentum = 0.9;
    LossWeights weights;  // trades_beta
    AttackSpec attack;    // 10-step linf PGD by default
    uint64_t seed = 7;
    int pad = 4;  // reflect-pad crop margin

    FinetuneConfig();
    void validate() const;
};

struct FinetuneResult {
    std::unique_ptr<ClassifierModel> model;
    std::vector<EpochMetrics> metrics;
};

// Full-network supervised training on the BN_adv branch, starting from a
// pre-trained query encoder (or from scratch when `from_scratch`). A fresh
// head is always initialized; epochs=0 returns that state untouched.
FinetuneResult finetune(const Checkpoint& ck, const LabeledImageSet& data,
                        const FinetuneConfig& cfg, std::ostream* metrics_out = nullptr);
FinetuneResult finetune_from_scratch(const EncoderArch& arch, const LabeledImageSet& data,
                                     const FinetuneConfig& cfg,
                                     std::ostream* metrics_out = nullptr);

// Packs a trained classifier into the checkpoint container (encoder under
// the query prefix, head under "classifier.").
Checkpoint classifier_checkpoint(ClassifierModel& model, int epoch,
                                 const std::string& config_echo);

// Rebuilds the classifier stored by classifier_checkpoint (or attaches a
// fresh head to a pre-training checkpoint when none is stored; the head is
// then initialized from `seed`).
std::unique_ptr<ClassifierModel> classifier_from_checkpoint(const Checkpoint& ck,
                                                            int num_classes, uint64_t seed);

}  // namespace amoc
