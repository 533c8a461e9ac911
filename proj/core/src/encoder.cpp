#include "amoc/encoder.hpp"

#include <cmath>

#include "amoc/common.hpp"

namespace amoc {

namespace {

void add_conv_block(Sequential& seq, int in_ch, int out_ch) {
    seq.add(std::make_unique<Conv2d>(in_ch, out_ch, 3, 1, 1));
    seq.add(std::make_unique<DualBatchNorm>(out_ch, true));
    seq.add(std::make_unique<ReLU>());
    seq.add(std::make_unique<AvgPool2>());
}

}  // namespace

DualBNEncoder::DualBNEncoder(const EncoderArch& arch) : arch_(arch) {
    check_arg(arch.width > 0 && arch.embed_dim > 0 && arch.in_channels > 0,
              "encoder: width, embed_dim, in_channels must be positive");
    int w = arch.width;
    if (arch.backbone == "conv4") {
        add_conv_block(backbone_, arch.in_channels, w);
        add_conv_block(backbone_, w, 2 * w);
        add_conv_block(backbone_, 2 * w, 4 * w);
        add_conv_block(backbone_, 4 * w, 4 * w);
        backbone_.add(std::make_unique<GlobalAvgPool>());
        feat_dim_ = 4 * w;
    } else if (arch.backbone == "resnet18") {
        backbone_.add(std::make_unique<Conv2d>(arch.in_channels, w, 3, 1, 1));
        backbone_.add(std::make_unique<DualBatchNorm>(w, true));
        backbone_.add(std::make_unique<ReLU>());
        int chans[4] = {w, 2 * w, 4 * w, 8 * w};
        int in = w;
        for (int stage = 0; stage < 4; ++stage) {
            int stride = stage == 0 ? 1 : 2;
            backbone_.add(std::make_unique<ResidualBlock>(in, chans[stage], stride));
            backbone_.add(std::make_unique<ResidualBlock>(chans[stage], chans[stage], 1));
            in = chans[stage];
        }
        backbone_.add(std::make_unique<GlobalAvgPool>());
        feat_dim_ = 8 * w;
    } else {
        throw ConfigError("unknown backbone '" + arch.backbone + "' (expected conv4 or resnet18)");
    }

    head_.add(std::make_unique<Linear>(feat_dim_, feat_dim_));
    head_.add(std::make_unique<DualBatchNorm>(feat_dim_, false));
    head_.add(std::make_unique<ReLU>());
    head_.add(std::make_unique<Linear>(feat_dim_, arch.embed_dim));
}

Tensor DualBNEncoder::forward(const Tensor& x, LayerCtx& ctx, const RunMode& mode) {
    ctx.children.resize(2);
    Tensor feat, u;
    backbone_.forward(x, feat, ctx.children[0], mode);
    head_.forward(feat, u, ctx.children[1], mode);

    int64_t N = u.shape[0], d = u.shape[1];
    Tensor z({N, d});
    Tensor norms({N});
    for (int64_t n = 0; n < N; ++n) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) s += u.at2(n, j) * u.at2(n, j);
        double norm = std::sqrt(s);
        if (!(norm > 1e-12))
            throw NumericError("encoder: projection output collapsed to zero norm");
        norms.v[n] = norm;
        for (int64_t j = 0; j < d; ++j) z.at2(n, j) = u.at2(n, j) / norm;
    }
    ctx.saved.clear();
    ctx.saved.push_back(z);
    ctx.saved.push_back(std::move(norms));
    return z;
}

Tensor DualBNEncoder::backward(const Tensor& dz, const LayerCtx& ctx, bool param_grads,
                               bool want_dx) {
    const Tensor& z = ctx.saved[0];
    const Tensor& norms = ctx.saved[1];
    int64_t N = dz.shape[0], d = dz.shape[1];

    // z = u/|u|  =>  du = (dz - (dz.z) z)/|u|
    Tensor du({N, d});
    for (int64_t n = 0; n < N; ++n) {
        double proj = 0.0;
        for (int64_t j = 0; j < d; ++j) proj += dz.at2(n, j) * z.at2(n, j);
        double inv = 1.0 / norms.v[n];
        for (int64_t j = 0; j < d; ++j)
            du.at2(n, j) = (dz.at2(n, j) - proj * z.at2(n, j)) * inv;
    }

    Tensor dfeat, dx;
    head_.backward(du, dfeat, ctx.children[1], param_grads, true);
    backbone_.backward(dfeat, dx, ctx.children[0], param_grads, want_dx);
    return dx;
}

Tensor DualBNEncoder::features(const Tensor& x, LayerCtx& ctx, const RunMode& mode) {
    ctx.children.resize(1);
    Tensor feat;
    backbone_.forward(x, feat, ctx.children[0], mode);
    return feat;
}

Tensor DualBNEncoder::features_backward(const Tensor& df, const LayerCtx& ctx, bool param_grads,
                                        bool want_dx) {
    Tensor dx;
    backbone_.backward(df, dx, ctx.children[0], param_grads, want_dx);
    return dx;
}

std::vector<ParamRef> DualBNEncoder::params() {
    std::vector<ParamRef> out;
    backbone_.params("backbone", out);
    head_.params("head", out);
    return out;
}

std::vector<BufferRef> DualBNEncoder::buffers() {
    std::vector<BufferRef> out;
    backbone_.buffers("backbone", out);
    head_.buffers("head", out);
    return out;
}

void DualBNEncoder::init(Rng& rng) {
    backbone_.init(rng);
    head_.init(rng);
}

void DualBNEncoder::copy_from(DualBNEncoder& other) {
    auto dst_p = params();
    auto src_p = other.params();
    check_internal(dst_p.size() == src_p.size(), "encoder copy: parameter list mismatch");
    for (size_t i = 0; i < dst_p.size(); ++i) {
        check_internal(dst_p[i].value->same_shape(*src_p[i].value),
                       "encoder copy: shape drift at " + dst_p[i].name);
        dst_p[i].value->v = src_p[i].value->v;
    }
    auto dst_b = buffers();
    auto src_b = other.buffers();
    check_internal(dst_b.size() == src_b.size(), "encoder copy: buffer list mismatch");
    for (size_t i = 0; i < dst_b.size(); ++i) dst_b[i].value->v = src_b[i].value->v;
}

void momentum_update(EncoderPair& pair) {
    auto kp = pair.key.params();
    auto qp = pair.query.params();
    check_internal(kp.size() == qp.size(), "momentum update: parameter list mismatch");
    for (size_t i = 0; i < kp.size(); ++i) {
        Tensor& k = *kp[i].value;
        const Tensor& q = *qp[i].value;
        check_internal(k.same_shape(q), "momentum update: shape drift at " + kp[i].name);
        for (int64_t j = 0; j < k.numel(); ++j)
            k.v[j] = pair.m * k.v[j] + (1.0 - pair.m) * q.v[j];
    }
}

EncoderPair init_encoder_pair(const EncoderArch& arch, uint64_t seed, double m) {
    check_arg(m > 0.0 && m < 1.0, "momentum coefficient must lie in (0,1)");
    EncoderPair pair(arch, m);
    Rng rng = Rng::substream(seed, "encoder_init");
    pair.query.init(rng);
    pair.key.copy_from(pair.query);
    return pair;
}

// ---------------------------------------------------------------------------

ClassifierModel::ClassifierModel(const EncoderArch& arch, int num_classes)
    : encoder_(arch), head_(encoder_.feature_dim(), num_classes), num_classes_(num_classes) {
    check_arg(num_classes >= 2, "classifier: need at least two classes");
}

Tensor ClassifierModel::logits(const Tensor& x, LayerCtx& ctx, const RunMode& mode) {
    ctx.children.resize(2);
    Tensor feat = encoder_.features(x, ctx.children[0], mode);
    Tensor out;
    head_.forward(feat, out, ctx.children[1], mode);
    return out;
}

Tensor ClassifierModel::backward(const Tensor& dlogits, const LayerCtx& ctx, bool param_grads,
                                 bool want_dx) {
    Tensor dfeat;
    head_.backward(dlogits, dfeat, ctx.children[1], param_grads, true);
    return encoder_.features_backward(dfeat, ctx.children[0], param_grads, want_dx);
}

void ClassifierModel::backward_head_only(const Tensor& dlogits, const LayerCtx& ctx) {
    Tensor dfeat;
    head_.backward(dlogits, dfeat, ctx.children[1], true, false);
}

std::vector<ParamRef> ClassifierModel::params() {
    std::vector<ParamRef> out = encoder_.params();
    head_.params("classifier", out);
    return out;
}

std::vector<ParamRef> ClassifierModel::head_params() {
    std::vector<ParamRef> out;
    head_.params("classifier", out);
    return out;
}

std::vector<BufferRef> ClassifierModel::buffers() { return encoder_.buffers(); }

void ClassifierModel::init(Rng& rng) {
    encoder_.init(rng);
    head_.init(rng);
}

void ClassifierModel::init_head(Rng& rng) { head_.init(rng); }

}  // namespace amoc
