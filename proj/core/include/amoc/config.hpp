#pragma once

#include <string>
#include <vector>

#include "amoc/data.hpp"
#include "amoc/eval.hpp"
#include "amoc/toml.hpp"
#include "amoc/train.hpp"

namespace amoc {

struct DatasetConfig {
    std::string kind = "synthetic";  // synthetic | cifar10
    std::string path;                // cifar10 train batch file
    std::string test_path;           // cifar10 test batch file
    int classes = 2;
    int count = 2000;
    int test_count = 512;
    int side = 16;
    uint64_t seed = 5;

    void validate() const;
};

// Everything one experiment needs, in one file. Sections: [dataset],
// [model], [train], [train.attack], [augment], [finetune],
// [finetune.attack], [eval], [eval.attack], [sweep], [output].
struct ExperimentConfig {
    DatasetConfig dataset;
    TrainConfig train;  // arch filled from [model], augment from [augment]
    FinetuneConfig finetune;
    bool finetune_from_scratch = false;
    EvalProtocol eval;
    AttackSpec sweep_template;
    std::vector<double> sweep_epsilons;
    std::string out_dir = "out";

    ExperimentConfig();
    void validate() const;
};

// Parses the file (empty path = pure defaults), applies `--set key=value`
// overrides in order, then the AMOC_SEED environment override of
// train.seed. Unknown keys anywhere are a hard error.
ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides);

// Every effective value, emitted as a parseable TOML document. Re-loading
// this text yields the identical configuration (floats carry round-trip
// precision).
std::string resolved_config_toml(const ExperimentConfig& cfg);

// The train or test split per [dataset].
LabeledImageSet load_dataset(const DatasetConfig& d, bool test_split);

}  // namespace amoc
