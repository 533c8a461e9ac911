#include "amoc/nn.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>

namespace amoc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// Unfolds one image (C,H,W) into (C*k*k) x (Ho*Wo) patch columns.
void im2col(const double* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            double* cols) {
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                double* row = cols + ((static_cast<int64_t>(c) * k + ki) * k + kj) *
                                         static_cast<int64_t>(Ho) * Wo;
                for (int ho = 0; ho < Ho; ++ho) {
                    int hi = ho * stride - pad + ki;
                    if (hi < 0 || hi >= H) {
                        std::memset(row + static_cast<int64_t>(ho) * Wo, 0, sizeof(double) * Wo);
                        continue;
                    }
                    const double* src = x + (static_cast<int64_t>(c) * H + hi) * W;
                    for (int wo = 0; wo < Wo; ++wo) {
                        int wi = wo * stride - pad + kj;
                        row[static_cast<int64_t>(ho) * Wo + wo] =
                            (wi >= 0 && wi < W) ? src[wi] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const double* cols, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            double* x) {
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const double* row = cols + ((static_cast<int64_t>(c) * k + ki) * k + kj) *
                                               static_cast<int64_t>(Ho) * Wo;
                for (int ho = 0; ho < Ho; ++ho) {
                    int hi = ho * stride - pad + ki;
                    if (hi < 0 || hi >= H) continue;
                    double* dst = x + (static_cast<int64_t>(c) * H + hi) * W;
                    for (int wo = 0; wo < Wo; ++wo) {
                        int wi = wo * stride - pad + kj;
                        if (wi >= 0 && wi < W) dst[wi] += row[static_cast<int64_t>(ho) * Wo + wo];
                    }
                }
            }
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad)
    : weight({out_ch, static_cast<int64_t>(in_ch) * kernel * kernel}),
      dweight({out_ch, static_cast<int64_t>(in_ch) * kernel * kernel}),
      in_ch_(in_ch),
      out_ch_(out_ch),
      k_(kernel),
      stride_(stride),
      pad_(pad) {}

void Conv2d::init(Rng& rng) {
    double std = std::sqrt(2.0 / static_cast<double>(in_ch_ * k_ * k_));
    for (double& w : weight.v) w = std * rng.normal();
}

void Conv2d::forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode&) {
    check_arg(x.rank() == 4 && x.shape[1] == in_ch_, "Conv2d: bad input shape");
    int64_t N = x.shape[0];
    int H = static_cast<int>(x.shape[2]), W = static_cast<int>(x.shape[3]);
    int Ho = (H + 2 * pad_ - k_) / stride_ + 1;
    int Wo = (W + 2 * pad_ - k_) / stride_ + 1;
    check_arg(Ho > 0 && Wo > 0, "Conv2d: kernel larger than padded input");

    y = Tensor({N, out_ch_, Ho, Wo});
    ctx.saved.assign(1, x);
    ctx.meta = {static_cast<double>(Ho), static_cast<double>(Wo)};

    Tensor cols({static_cast<int64_t>(in_ch_) * k_ * k_, static_cast<int64_t>(Ho) * Wo});
    ConstMatMap Wm(weight.data(), out_ch_, weight.shape[1]);
    for (int64_t n = 0; n < N; ++n) {
        im2col(x.data() + n * in_ch_ * H * W, in_ch_, H, W, k_, stride_, pad_, Ho, Wo, cols.data());
        ConstMatMap Cm(cols.data(), cols.shape[0], cols.shape[1]);
        MatMap Ym(y.data() + n * out_ch_ * Ho * Wo, out_ch_, static_cast<int64_t>(Ho) * Wo);
        Ym.noalias() = Wm * Cm;
    }
}

void Conv2d::backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool param_grads,
                      bool want_dx) {
    const Tensor& x = ctx.saved[0];
    int64_t N = x.shape[0];
    int H = static_cast<int>(x.shape[2]), W = static_cast<int>(x.shape[3]);
    int Ho = static_cast<int>(ctx.meta[0]), Wo = static_cast<int>(ctx.meta[1]);

    if (want_dx) {
        dx = Tensor(x.shape);
    }
    Tensor cols({static_cast<int64_t>(in_ch_) * k_ * k_, static_cast<int64_t>(Ho) * Wo});
    Tensor dcols(cols.shape);
    ConstMatMap Wm(weight.data(), out_ch_, weight.shape[1]);
    MatMap dWm(dweight.data(), out_ch_, weight.shape[1]);
    for (int64_t n = 0; n < N; ++n) {
        ConstMatMap dYm(dy.data() + n * out_ch_ * Ho * Wo, out_ch_, static_cast<int64_t>(Ho) * Wo);
        if (param_grads) {
            im2col(x.data() + n * in_ch_ * H * W, in_ch_, H, W, k_, stride_, pad_, Ho, Wo,
                   cols.data());
            ConstMatMap Cm(cols.data(), cols.shape[0], cols.shape[1]);
            dWm.noalias() += dYm * Cm.transpose();
        }
        if (want_dx) {
            MatMap dCm(dcols.data(), dcols.shape[0], dcols.shape[1]);
            dCm.noalias() = Wm.transpose() * dYm;
            col2im(dcols.data(), in_ch_, H, W, k_, stride_, pad_, Ho, Wo,
                   dx.data() + n * in_ch_ * H * W);
        }
    }
}

void Conv2d::params(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weight", &weight, &dweight, true});
}

// ---------------------------------------------------------------------------
// DualBatchNorm

DualBatchNorm::DualBatchNorm(int features, bool spatial, double eps, double momentum)
    : features_(features), spatial_(spatial), eps_(eps), momentum_(momentum) {
    for (Branch* b : {&clean_, &adv_}) {
        b->gamma = Tensor::full({features}, 1.0);
        b->beta = Tensor({features});
        b->dgamma = Tensor({features});
        b->dbeta = Tensor({features});
        b->running_mean = Tensor({features});
        b->running_var = Tensor::full({features}, 1.0);
    }
}

void DualBatchNorm::init(Rng&) {}

void DualBatchNorm::forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode& mode) {
    check_arg((spatial_ && x.rank() == 4 && x.shape[1] == features_) ||
                  (!spatial_ && x.rank() == 2 && x.shape[1] == features_),
              "DualBatchNorm: bad input shape");
    Branch& br = branch(mode.branch);
    int64_t N = x.shape[0];
    int64_t spatial = spatial_ ? x.shape[2] * x.shape[3] : 1;
    int64_t M = N * spatial;  // samples per channel

    y = Tensor(x.shape);
    Tensor xhat(x.shape);
    Tensor inv({features_});
    ctx.meta = {static_cast<double>(mode.branch == BnBranch::adv), mode.batch_stats ? 1.0 : 0.0,
                static_cast<double>(M)};

    auto index = [&](int64_t n, int64_t c, int64_t s) {
        return (n * features_ + c) * spatial + s;
    };

    for (int64_t c = 0; c < features_; ++c) {
        double mean, var;
        if (mode.batch_stats) {
            double sum = 0.0, sq = 0.0;
            for (int64_t n = 0; n < N; ++n)
                for (int64_t s = 0; s < spatial; ++s) {
                    double e = x.v[index(n, c, s)];
                    sum += e;
                    sq += e * e;
                }
            mean = sum / static_cast<double>(M);
            var = sq / static_cast<double>(M) - mean * mean;
            if (var < 0) var = 0;  // guards rounding on constant inputs
            if (mode.update_running) {
                double unbiased = M > 1 ? var * static_cast<double>(M) / static_cast<double>(M - 1)
                                        : var;
                br.running_mean.v[c] = (1.0 - momentum_) * br.running_mean.v[c] + momentum_ * mean;
                br.running_var.v[c] = (1.0 - momentum_) * br.running_var.v[c] + momentum_ * unbiased;
            }
        } else {
            mean = br.running_mean.v[c];
            var = br.running_var.v[c];
        }
        double istd = 1.0 / std::sqrt(var + eps_);
        inv.v[c] = istd;
        double g = br.gamma.v[c], b = br.beta.v[c];
        for (int64_t n = 0; n < N; ++n)
            for (int64_t s = 0; s < spatial; ++s) {
                int64_t i = index(n, c, s);
                double h = (x.v[i] - mean) * istd;
                xhat.v[i] = h;
                y.v[i] = g * h + b;
            }
    }
    ctx.saved.clear();
    ctx.saved.push_back(std::move(xhat));
    ctx.saved.push_back(std::move(inv));
}

void DualBatchNorm::backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool param_grads,
                             bool want_dx) {
    const Tensor& xhat = ctx.saved[0];
    const Tensor& inv = ctx.saved[1];
    Branch& br = branch(ctx.meta[0] != 0.0 ? BnBranch::adv : BnBranch::clean);
    bool batch_stats = ctx.meta[1] != 0.0;
    double M = ctx.meta[2];

    int64_t N = dy.shape[0];
    int64_t spatial = spatial_ ? dy.shape[2] * dy.shape[3] : 1;
    if (want_dx) dx = Tensor(dy.shape);

    auto index = [&](int64_t n, int64_t c, int64_t s) {
        return (n * features_ + c) * spatial + s;
    };

    for (int64_t c = 0; c < features_; ++c) {
        double sum_dy = 0.0, sum_dyx = 0.0;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t s = 0; s < spatial; ++s) {
                int64_t i = index(n, c, s);
                sum_dy += dy.v[i];
                sum_dyx += dy.v[i] * xhat.v[i];
            }
        if (param_grads) {
            br.dgamma.v[c] += sum_dyx;
            br.dbeta.v[c] += sum_dy;
        }
        if (!want_dx) continue;
        double g = br.gamma.v[c], istd = inv.v[c];
        if (batch_stats) {
            double k = g * istd / M;
            for (int64_t n = 0; n < N; ++n)
                for (int64_t s = 0; s < spatial; ++s) {
                    int64_t i = index(n, c, s);
                    dx.v[i] = k * (M * dy.v[i] - sum_dy - xhat.v[i] * sum_dyx);
                }
        } else {
            double k = g * istd;
            for (int64_t n = 0; n < N; ++n)
                for (int64_t s = 0; s < spatial; ++s) {
                    int64_t i = index(n, c, s);
                    dx.v[i] = k * dy.v[i];
                }
        }
    }
}

void DualBatchNorm::params(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".clean.gamma", &clean_.gamma, &clean_.dgamma, false});
    out.push_back({prefix + ".clean.beta", &clean_.beta, &clean_.dbeta, false});
    out.push_back({prefix + ".adv.gamma", &adv_.gamma, &adv_.dgamma, false});
    out.push_back({prefix + ".adv.beta", &adv_.beta, &adv_.dbeta, false});
}

void DualBatchNorm::buffers(const std::string& prefix, std::vector<BufferRef>& out) {
    out.push_back({prefix + ".clean.running_mean", &clean_.running_mean});
    out.push_back({prefix + ".clean.running_var", &clean_.running_var});
    out.push_back({prefix + ".adv.running_mean", &adv_.running_mean});
    out.push_back({prefix + ".adv.running_var", &adv_.running_var});
}

// ---------------------------------------------------------------------------
// ReLU / pooling

void ReLU::forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode&) {
    y = Tensor(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) y.v[i] = x.v[i] > 0 ? x.v[i] : 0.0;
    ctx.saved.assign(1, x);
}

void ReLU::backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool, bool want_dx) {
    if (!want_dx) return;
    const Tensor& x = ctx.saved[0];
    dx = Tensor(dy.shape);
    for (int64_t i = 0; i < dy.numel(); ++i) dx.v[i] = x.v[i] > 0 ? dy.v[i] : 0.0;
}

void AvgPool2::forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode&) {
    check_arg(x.rank() == 4 && x.shape[2] % 2 == 0 && x.shape[3] % 2 == 0,
              "AvgPool2: even spatial dims required");
    int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    y = Tensor({N, C, H / 2, W / 2});
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const double* src = x.data() + nc * H * W;
        double* dst = y.data() + nc * (H / 2) * (W / 2);
        for (int64_t i = 0; i < H / 2; ++i)
            for (int64_t j = 0; j < W / 2; ++j)
                dst[i * (W / 2) + j] = 0.25 * (src[(2 * i) * W + 2 * j] + src[(2 * i) * W + 2 * j + 1] +
                                               src[(2 * i + 1) * W + 2 * j] +
                                               src[(2 * i + 1) * W + 2 * j + 1]);
    }
    ctx.meta = {static_cast<double>(H), static_cast<double>(W)};
}

void AvgPool2::backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool, bool want_dx) {
    if (!want_dx) return;
    int64_t H = static_cast<int64_t>(ctx.meta[0]), W = static_cast<int64_t>(ctx.meta[1]);
    int64_t N = dy.shape[0], C = dy.shape[1];
    dx = Tensor({N, C, H, W});
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const double* src = dy.data() + nc * (H / 2) * (W / 2);
        double* dst = dx.data() + nc * H * W;
        for (int64_t i = 0; i < H / 2; ++i)
            for (int64_t j = 0; j < W / 2; ++j) {
                double g = 0.25 * src[i * (W / 2) + j];
                dst[(2 * i) * W + 2 * j] = g;
                dst[(2 * i) * W + 2 * j + 1] = g;
                dst[(2 * i + 1) * W + 2 * j] = g;
                dst[(2 * i + 1) * W + 2 * j + 1] = g;
            }
    }
}

void GlobalAvgPool::forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode&) {
    check_arg(x.rank() == 4, "GlobalAvgPool: NCHW input required");
    int64_t N = x.shape[0], C = x.shape[1], S = x.shape[2] * x.shape[3];
    y = Tensor({N, C});
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const double* src = x.data() + nc * S;
        double s = 0.0;
        for (int64_t i = 0; i < S; ++i) s += src[i];
        y.v[nc] = s / static_cast<double>(S);
    }
    ctx.meta = {static_cast<double>(x.shape[2]), static_cast<double>(x.shape[3])};
}

void GlobalAvgPool::backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool,
                             bool want_dx) {
    if (!want_dx) return;
    int64_t H = static_cast<int64_t>(ctx.meta[0]), W = static_cast<int64_t>(ctx.meta[1]);
    int64_t N = dy.shape[0], C = dy.shape[1], S = H * W;
    dx = Tensor({N, C, H, W});
    for (int64_t nc = 0; nc < N * C; ++nc) {
        double g = dy.v[nc] / static_cast<double>(S);
        double* dst = dx.data() + nc * S;
        for (int64_t i = 0; i < S; ++i) dst[i] = g;
    }
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(int in, int out, bool bias)
    : weight({out, in}), bias({out}), dweight({out, in}), dbias({out}), has_bias(bias), in_(in), out_(out) {}

void Linear::init(Rng& rng) {
    double std = std::sqrt(2.0 / static_cast<double>(in_));
    for (double& w : weight.v) w = std * rng.normal();
    bias.zero();
}

void Linear::forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode&) {
    check_arg(x.rank() == 2 && x.shape[1] == in_, "Linear: bad input shape");
    matmul(x, false, weight, true, y);
    if (has_bias)
        for (int64_t n = 0; n < y.shape[0]; ++n)
            for (int64_t o = 0; o < out_; ++o) y.at2(n, o) += bias.v[o];
    ctx.saved.assign(1, x);
}

void Linear::backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool param_grads,
                      bool want_dx) {
    const Tensor& x = ctx.saved[0];
    if (param_grads) {
        Tensor dw;
        matmul(dy, true, x, false, dw);
        dweight.axpy(1.0, dw);
        if (has_bias)
            for (int64_t n = 0; n < dy.shape[0]; ++n)
                for (int64_t o = 0; o < out_; ++o) dbias.v[o] += dy.at2(n, o);
    }
    if (want_dx) matmul(dy, false, weight, false, dx);
}

void Linear::params(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weight", &weight, &dweight, true});
    if (has_bias) out.push_back({prefix + ".bias", &bias, &dbias, false});
}

// ---------------------------------------------------------------------------
// Sequential

void Sequential::forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode& mode) {
    ctx.children.resize(layers_.size());
    Tensor cur = x;
    for (size_t i = 0; i < layers_.size(); ++i) {
        Tensor next;
        layers_[i]->forward(cur, next, ctx.children[i], mode);
        cur = std::move(next);
    }
    y = std::move(cur);
}

void Sequential::backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool param_grads,
                          bool want_dx) {
    Tensor cur = dy;
    for (size_t i = layers_.size(); i-- > 0;) {
        bool need = want_dx || i > 0;
        Tensor prev;
        layers_[i]->backward(cur, prev, ctx.children[i], param_grads, need);
        if (need) cur = std::move(prev);
    }
    if (want_dx) dx = std::move(cur);
}

void Sequential::params(const std::string& prefix, std::vector<ParamRef>& out) {
    for (size_t i = 0; i < layers_.size(); ++i)
        layers_[i]->params(prefix + "." + std::to_string(i), out);
}

void Sequential::buffers(const std::string& prefix, std::vector<BufferRef>& out) {
    for (size_t i = 0; i < layers_.size(); ++i)
        layers_[i]->buffers(prefix + "." + std::to_string(i), out);
}

void Sequential::init(Rng& rng) {
    for (auto& l : layers_) l->init(rng);
}

// ---------------------------------------------------------------------------
// ResidualBlock

ResidualBlock::ResidualBlock(int in_ch, int out_ch, int stride)
    : projection_(stride != 1 || in_ch != out_ch),
      conv1_(in_ch, out_ch, 3, stride, 1),
      conv2_(out_ch, out_ch, 3, 1, 1),
      bn1_(out_ch, true),
      bn2_(out_ch, true) {
    if (projection_) {
        conv_sc_ = std::make_unique<Conv2d>(in_ch, out_ch, 1, stride, 0);
        bn_sc_ = std::make_unique<DualBatchNorm>(out_ch, true);
    }
}

void ResidualBlock::forward(const Tensor& x, Tensor& y, LayerCtx& ctx, const RunMode& mode) {
    ctx.children.resize(6);
    Tensor a, b, c, d, sc;
    conv1_.forward(x, a, ctx.children[0], mode);
    bn1_.forward(a, b, ctx.children[1], mode);
    Tensor r(b.shape);
    for (int64_t i = 0; i < b.numel(); ++i) r.v[i] = b.v[i] > 0 ? b.v[i] : 0.0;
    conv2_.forward(r, c, ctx.children[2], mode);
    bn2_.forward(c, d, ctx.children[3], mode);
    if (projection_) {
        Tensor t;
        conv_sc_->forward(x, t, ctx.children[4], mode);
        bn_sc_->forward(t, sc, ctx.children[5], mode);
    } else {
        sc = x;
    }
    y = Tensor(d.shape);
    for (int64_t i = 0; i < d.numel(); ++i) {
        double s = d.v[i] + sc.v[i];
        y.v[i] = s > 0 ? s : 0.0;
    }
    // saved: pre-activation of the first ReLU, and the pre-activation sum.
    ctx.saved.clear();
    ctx.saved.push_back(std::move(b));
    Tensor sum(d.shape);
    for (int64_t i = 0; i < d.numel(); ++i) sum.v[i] = d.v[i] + sc.v[i];
    ctx.saved.push_back(std::move(sum));
}

void ResidualBlock::backward(const Tensor& dy, Tensor& dx, const LayerCtx& ctx, bool param_grads,
                             bool want_dx) {
    const Tensor& pre1 = ctx.saved[0];
    const Tensor& presum = ctx.saved[1];
    Tensor dsum(dy.shape);
    for (int64_t i = 0; i < dy.numel(); ++i) dsum.v[i] = presum.v[i] > 0 ? dy.v[i] : 0.0;

    // main path
    Tensor dc, dr, da, dx_main;
    bn2_.backward(dsum, dc, ctx.children[3], param_grads, true);
    conv2_.backward(dc, dr, ctx.children[2], param_grads, true);
    for (int64_t i = 0; i < dr.numel(); ++i)
        if (pre1.v[i] <= 0) dr.v[i] = 0.0;
    bn1_.backward(dr, da, ctx.children[1], param_grads, true);
    bool need_input = want_dx;
    conv1_.backward(da, dx_main, ctx.children[0], param_grads, need_input);

    // shortcut
    if (projection_) {
        Tensor dt, dx_sc;
        bn_sc_->backward(dsum, dt, ctx.children[5], param_grads, true);
        conv_sc_->backward(dt, dx_sc, ctx.children[4], param_grads, need_input);
        if (need_input) {
            dx = std::move(dx_main);
            dx.axpy(1.0, dx_sc);
        }
    } else if (need_input) {
        dx = std::move(dx_main);
        dx.axpy(1.0, dsum);
    }
}

void ResidualBlock::params(const std::string& prefix, std::vector<ParamRef>& out) {
    conv1_.params(prefix + ".conv1", out);
    bn1_.params(prefix + ".bn1", out);
    conv2_.params(prefix + ".conv2", out);
    bn2_.params(prefix + ".bn2", out);
    if (projection_) {
        conv_sc_->params(prefix + ".conv_sc", out);
        bn_sc_->params(prefix + ".bn_sc", out);
    }
}

void ResidualBlock::buffers(const std::string& prefix, std::vector<BufferRef>& out) {
    bn1_.buffers(prefix + ".bn1", out);
    bn2_.buffers(prefix + ".bn2", out);
    if (projection_) bn_sc_->buffers(prefix + ".bn_sc", out);
}

void ResidualBlock::init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (projection_) conv_sc_->init(rng);
}

void zero_grads(const std::vector<ParamRef>& params) {
    for (const ParamRef& p : params) p.grad->zero();
}

}  // namespace amoc
