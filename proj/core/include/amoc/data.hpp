#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "amoc/rng.hpp"
#include "amoc/tensor.hpp"

namespace amoc {

// In-memory dataset: images (N,C,H,W) with pixels in [0,1] plus class ids.
struct LabeledImageSet {
    Tensor images;
    std::vector<int> labels;
    int num_classes = 0;

    int64_t count() const { return images.rank() > 0 ? images.shape[0] : 0; }
    Tensor image(int64_t i) const;  // one (C,H,W) copy
    void validate() const;          // throws on any invariant violation
};

// CIFAR-10 binary batch format: 3073-byte records, 1 label byte then
// 1024 R + 1024 G + 1024 B bytes (channel-major, row-major within channel).
LabeledImageSet load_cifar10_binary(const std::string& path);
LabeledImageSet load_cifar10_binary(const std::vector<std::string>& paths);
void save_cifar10_binary(const LabeledImageSet& set, const std::string& path);

// Deterministic textured-blob corpus: each class is a low-frequency radial
// pattern (mirror-symmetric, so flips preserve identity) plus a flat class
// tint and per-image pixel noise. Linearly separable by design; the tint
// sits inside the standard attack budget while the pattern clears it.
LabeledImageSet synth_toy_dataset(uint64_t seed, int n, int classes, int side);

// Stochastic view pipeline parameters. Pretrain mode runs crop -> flip ->
// color jitter -> grayscale; finetune mode is pad-reflect crop + flip and
// lives in finetune_augment below.
struct AugmentationPipeline {
    enum class Mode { pretrain, finetune };
    Mode mode = Mode::pretrain;

    double crop_scale_min = 0.2, crop_scale_max = 1.0;
    double crop_ratio_min = 3.0 / 4.0, crop_ratio_max = 4.0 / 3.0;
    double flip_prob = 0.5;
    double jitter_prob = 0.8;
    double jitter_brightness = 0.4, jitter_contrast = 0.4, jitter_saturation = 0.4;
    double jitter_hue = 0.1;
    double grayscale_prob = 0.2;

    static AugmentationPipeline pretrain_defaults() { return {}; }
    // All probabilities zero, crop pinned to the full frame: views == input.
    static AugmentationPipeline identity();
    void validate() const;
};

// One stochastic view of x under the pipeline.
Tensor augment(const Tensor& x, const AugmentationPipeline& p, Rng& rng);

// (c(x), c'(x)) from two independent draws of the pipeline.
std::pair<Tensor, Tensor> make_views(const Tensor& x, const AugmentationPipeline& p, Rng& rng);

// Per-image view pairs for a whole (N,C,H,W) batch, drawn image by image
// (both views of image i before image i+1).
std::pair<Tensor, Tensor> make_views_batch(const Tensor& batch, const AugmentationPipeline& p,
                                           Rng& rng);

// Fine-tuning recipe: reflect-pad by `pad`, random crop back to the input
// size, random horizontal flip. Sampling is split out so tests can pin the
// offsets and flip directly.
struct FinetuneParams {
    int off_y = 0, off_x = 0;
    bool flip = false;
};
FinetuneParams sample_finetune_params(Rng& rng, int pad = 4);
Tensor apply_finetune_augment(const Tensor& x, const FinetuneParams& prm, int pad = 4);
Tensor finetune_augment(const Tensor& x, Rng& rng, int pad = 4);

// Batched convenience used by the training drivers: one augmented copy per
// image (finetune recipe).
Tensor finetune_augment_batch(const Tensor& images, Rng& rng, int pad = 4);

}  // namespace amoc
