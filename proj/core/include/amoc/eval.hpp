#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "amoc/attacks.hpp"
#include "amoc/checkpoint.hpp"
#include "amoc/data.hpp"
#include "amoc/encoder.hpp"
#include "amoc/train.hpp"

namespace amoc {

// Linear-probe protocol. StdEv trains the head on clean features; AdEv on
// adversarial examples crafted end-to-end through the frozen encoder. Both
// run the encoder on the exported BN_adv branch with frozen statistics.
struct EvalProtocol {
    enum class Kind { std_ev, ad_ev };
    Kind kind = Kind::std_ev;
    int epochs = 25;
    double lr = 0.1;  // cosine-decayed, no warmup
    int batch_size = 64;
    uint64_t seed = 11;
    AttackSpec attack;  // AdEv crafting (10-step linf PGD by default)

    EvalProtocol();
    void validate() const;
};

struct AttackAccuracy {
    std::string label;
    double accuracy_pct = 0.0;
};

struct RobustnessReport {
    double clean_pct = 0.0;
    std::vector<AttackAccuracy> attacks;
    std::string fingerprint;  // of the evaluated model's parameters
    uint64_t seed = 0;

    std::string to_json() const;
    std::string to_table() const;  // aligned rows, one per attack
};

// Hash of all parameter and buffer doubles (no rounding, no mutation).
std::string model_fingerprint(ClassifierModel& model);

// Argmax predictions under frozen statistics of the given branch.
std::vector<int> predict(ClassifierModel& model, const Tensor& x, BnBranch branch);

// Accuracy percentages under each attack, on the same clean inputs. The
// minimal-perturbation attacks are budget-gated: a found point that leaves
// the spec's ball counts as a failed attack. Non-finite attack output on a
// point counts that point as misclassified (logged when `log` is given).
RobustnessReport robust_accuracy(ClassifierModel& model, const LabeledImageSet& data,
                                 const std::vector<AttackSpec>& attacks, uint64_t seed,
                                 std::ostream* log = nullptr);

struct LinearEvalResult {
    std::unique_ptr<ClassifierModel> model;
    RobustnessReport report;  // clean + PGD20 on the test set
};

LinearEvalResult linear_eval(const Checkpoint& ck, const LabeledImageSet& train_data,
                             const LabeledImageSet& test_data, const EvalProtocol& protocol);

// (epsilon, accuracy_pct) curve. Each budget's PGD warm-starts from the
// previous adversarial example and a point once misclassified stays
// misclassified (nested balls), so the curve is monotone nonincreasing.
std::vector<std::pair<double, double>> epsilon_sweep(ClassifierModel& model,
                                                     const LabeledImageSet& data,
                                                     const std::vector<double>& eps_list,
                                                     const AttackSpec& attack_template,
                                                     uint64_t seed);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    bool degenerate = false;
};

// Two-sided paired t-test on index-matched scores, n-1 dof. All-zero
// differences give p=1; constant nonzero differences give p=0 (both
// degenerate and logged).
TTestResult paired_ttest(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                         std::ostream* log = nullptr);

// Unit-norm embedding rows for the whole set, dataset order, through the
// checkpoint's query encoder on the given branch (frozen statistics).
Tensor embeddings_of(const Checkpoint& ck, const LabeledImageSet& data, BnBranch branch);

// Writes embeddings_of to a small header+float32 matrix file and the labels
// to a one-integer-per-line text file.
void export_embeddings(const Checkpoint& ck, const LabeledImageSet& data, BnBranch branch,
                       const std::string& matrix_path, const std::string& labels_path);
Tensor load_embeddings(const std::string& matrix_path);

struct PcaResult {
    Tensor projected;               // (N,2) scores on the top-2 components
    double explained_ratio = 0.0;   // top-2 variance fraction
};

// PCA of row vectors onto the top two principal components.
PcaResult pca2(const Tensor& rows);

}  // namespace amoc
