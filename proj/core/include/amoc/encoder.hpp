#pragma once

#include <string>
#include <vector>

#include "amoc/nn.hpp"

namespace amoc {

// Architecture knobs for the dual-BN encoder. Two backbones share the
// interface: a 4-block conv net for desk-scale runs and a CIFAR-style
// ResNet-18 for longer ones.
struct EncoderArch {
    std::string backbone = "conv4";  // conv4 | resnet18
    int width = 32;                  // base channel count
    int embed_dim = 128;             // projection output d
    int in_channels = 3;
};

// Feature extractor with independent clean/adv batch-norm state and a
// 2-layer projection head. Embeddings are L2-normalized rows.
class DualBNEncoder {
public:
    explicit DualBNEncoder(const EncoderArch& arch);

    // x: (N,C,H,W) pixels in [0,1] -> (N,d) unit rows. ctx must outlive the
    // matching backward call; several forwards can hold separate contexts.
    Tensor forward(const Tensor& x, LayerCtx& ctx, const RunMode& mode);
    // dz: (N,d) gradient on embeddings. Returns gradient on input pixels
    // when want_dx (attack crafting); accumulates parameter gradients when
    // param_grads.
    Tensor backward(const Tensor& dz, const LayerCtx& ctx, bool param_grads, bool want_dx);

    // Backbone features (N,feature_dim) without the projection head;
    // classifier heads attach here.
    Tensor features(const Tensor& x, LayerCtx& ctx, const RunMode& mode);
    Tensor features_backward(const Tensor& df, const LayerCtx& ctx, bool param_grads,
                             bool want_dx);

    std::vector<ParamRef> params();
    std::vector<BufferRef> buffers();
    void init(Rng& rng);
    void copy_from(DualBNEncoder& other);

    const EncoderArch& arch() const { return arch_; }
    int feature_dim() const { return feat_dim_; }
    int embed_dim() const { return arch_.embed_dim; }

private:
    EncoderArch arch_;
    int feat_dim_;
    Sequential backbone_;  // ends in global average pool -> (N, feature_dim)
    Sequential head_;      // Linear -> DualBN -> ReLU -> Linear
};

// Query/key encoder pair. The key tracks the query through the momentum
// rule and never receives gradients.
struct EncoderPair {
    DualBNEncoder query;
    DualBNEncoder key;
    double m;

    EncoderPair(const EncoderArch& arch, double m_coeff)
        : query(arch), key(arch), m(m_coeff) {}
};

// theta_k <- m*theta_k + (1-m)*theta_q over learnable parameters (BN affine
// included, running statistics excluded).
void momentum_update(EncoderPair& pair);

// Builds the pair, initializes the query from the seed, deep-copies into
// the key so the momentum update starts at its fixed point.
EncoderPair init_encoder_pair(const EncoderArch& arch, uint64_t seed, double m = 0.999);

// Encoder backbone plus a linear classification head (linear evaluation and
// fine-tuning both use this shape; the projection head is dropped).
class ClassifierModel {
public:
    ClassifierModel(const EncoderArch& arch, int num_classes);

    Tensor logits(const Tensor& x, LayerCtx& ctx, const RunMode& mode);
    Tensor backward(const Tensor& dlogits, const LayerCtx& ctx, bool param_grads, bool want_dx);
    // Head-only gradient path for linear evaluation (encoder stays frozen);
    // also exposes crafted-input gradients when want_dx.
    void backward_head_only(const Tensor& dlogits, const LayerCtx& ctx);

    std::vector<ParamRef> params();
    std::vector<ParamRef> head_params();
    std::vector<BufferRef> buffers();
    void init(Rng& rng);
    void init_head(Rng& rng);

    DualBNEncoder& encoder() { return encoder_; }
    Linear& head() { return head_; }
    int num_classes() const { return num_classes_; }

private:
    DualBNEncoder encoder_;
    Linear head_;
    int num_classes_;
};

}  // namespace amoc
