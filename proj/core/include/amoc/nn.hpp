#pragma once

#include <memory>
#include <string>
#include <vector>

#include "amoc/rng.hpp"
#include "amoc/tensor.hpp"

namespace amoc {

// Which batch-norm statistic set a forward pass selects. Clean and
// adversarial inputs keep fully independent normalization state.
enum class BnBranch { clean, adv };

inline const char* branch_name(BnBranch b) { return b == BnBranch::clean ? "clean" : "adv"; }

// Statistic behaviour for one forward pass.
//   train:        normalize with batch statistics, advance running stats
//   frozen_batch: batch statistics, no running-stat writes (finite-difference
//                 checks need the forward to be a pure function of parameters)
//   eval:         running statistics, no writes (also used inside attack
//                 loops so crafting never pollutes the stats)
struct RunMode {
    BnBranch branch = BnBranch::clean;
    bool batch_stats = false;
    bool update_running = false;
};

inline RunMode train_mode(BnBranch b) { return {b, true, true}; }
inline RunMode frozen_batch_mode(BnBranch b) { return {b, true, false}; }
inline RunMode eval_mode(BnBranch b) { return {b, false, false}; }

// Named view of a trainable parameter. `decay` marks membership in the
// weight-decay group: conv/linear weights yes, biases and BN affine no.
struct ParamRef {
    std::string name;
    Tensor* value;
    Tensor* grad;
    bool decay;
};

// Non-trainable state (BN running statistics).
struct BufferRef {
    std::string name;
    Tensor* value;
};

// Per-layer saved state from one forward pass. A Tape (vector of these,
// owned by the caller) makes it possible to keep several forward passes
// alive at once and run their backward passes later in any order.
struct LayerCtx {
    std::vector<Tensor> saved;
    std::vector<double> meta;
    std::vector<LayerCtx> children;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual void forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode& mode) = 0;
    // dy -> dx using the matching forward's ctx. Accumulates parameter
    // gradients when param_grads; skips computing dx when !want_dx.
    virtual void backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool param_grads,
                          bool want_dx) = 0;
    virtual void params(const std::string& prefix, std::vector<ParamRef>& out) {
        (void)prefix;
        (void)out;
    }
    virtual void buffers(const std::string& prefix, std::vector<BufferRef>& out) {
        (void)prefix;
        (void)out;
    }
    virtual void init(Rng& rng) { (void)rng; }
};

// 2-D convolution, NCHW, zero padding, no bias (always followed by BN here).
class Conv2d : public Layer {
public:
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad);
    void forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode& mode) override;
    void backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool param_grads,
                  bool want_dx) override;
    void params(const std::string& prefix, std::vector<ParamRef>& out) override;
    void init(Rng& rng) override;

    Tensor weight;  // (out_ch, in_ch*k*k)
    Tensor dweight;

private:
    int in_ch_, out_ch_, k_, stride_, pad_;
};

// Batch norm with two independent statistic sets. `spatial` selects NCHW
// (per-channel over N*H*W) vs ND (per-feature over N).
class DualBatchNorm : public Layer {
public:
    DualBatchNorm(int features, bool spatial, double eps = 1e-5, double momentum = 0.1);
    void forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode& mode) override;
    void backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool param_grads,
                  bool want_dx) override;
    void params(const std::string& prefix, std::vector<ParamRef>& out) override;
    void buffers(const std::string& prefix, std::vector<BufferRef>& out) override;
    void init(Rng& rng) override;

    struct Branch {
        Tensor gamma, beta, dgamma, dbeta;
        Tensor running_mean, running_var;
    };
    Branch& branch(BnBranch b) { return b == BnBranch::clean ? clean_ : adv_; }
    const Branch& branch(BnBranch b) const { return b == BnBranch::clean ? clean_ : adv_; }
    int features() const { return features_; }

private:
    int features_;
    bool spatial_;
    double eps_, momentum_;
    Branch clean_, adv_;
};

class ReLU : public Layer {
public:
    void forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode& mode) override;
    void backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool param_grads,
                  bool want_dx) override;
};

// 2x2 stride-2 average pooling; even spatial dims required.
class AvgPool2 : public Layer {
public:
    void forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode& mode) override;
    void backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool param_grads,
                  bool want_dx) override;
};

// (N,C,H,W) -> (N,C) spatial mean.
class GlobalAvgPool : public Layer {
public:
    void forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode& mode) override;
    void backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool param_grads,
                  bool want_dx) override;
};

class Linear : public Layer {
public:
    Linear(int in, int out, bool bias = true);
    void forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode& mode) override;
    void backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool param_grads,
                  bool want_dx) override;
    void params(const std::string& prefix, std::vector<ParamRef>& out) override;
    void init(Rng& rng) override;

    Tensor weight;  // (out, in)
    Tensor bias;
    Tensor dweight, dbias;
    bool has_bias;

private:
    int in_, out_;
};

class Sequential : public Layer {
public:
    Sequential() = default;
    void add(std::unique_ptr<Layer> l) { layers_.push_back(std::move(l)); }
    size_t size() const { return layers_.size(); }
    Layer& layer(size_t i) { return *layers_[i]; }

    void forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode& mode) override;
    void backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool param_grads,
                  bool want_dx) override;
    void params(const std::string& prefix, std::vector<ParamRef>& out) override;
    void buffers(const std::string& prefix, std::vector<BufferRef>& out) override;
    void init(Rng& rng) override;

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// conv-bn-relu-conv-bn + shortcut, post-activation ReLU (ResNet basic block).
class ResidualBlock : public Layer {
public:
    ResidualBlock(int in_ch, int out_ch, int stride);
    void forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode& mode) override;
    void backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool param_grads,
                  bool want_dx) override;
    void params(const std::string& prefix, std::vector<ParamRef>& out) override;
    void buffers(const std::string& prefix, std::vector<BufferRef>& out) override;
    void init(Rng& rng) override;

private:
    bool projection_;
    Conv2d conv1_, conv2_;
    DualBatchNorm bn1_, bn2_;
    std::unique_ptr<Conv2d> conv_sc_;
    std::unique_ptr<DualBatchNorm> bn_sc_;
};

void zero_grads(const std::vector<ParamRef>& params);

}  // namespace amoc
