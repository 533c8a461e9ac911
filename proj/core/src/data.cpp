#include "amoc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "amoc/common.hpp"

namespace amoc {

namespace {

constexpr int kCifarSide = 32;
constexpr int kCifarChannels = 3;
constexpr size_t kCifarRecord = 1 + kCifarSide * kCifarSide * kCifarChannels;

double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

// Reflection index without edge repetition: -1 -> 1, H -> H-2.
int64_t reflect_index(int64_t i, int64_t n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return i;
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    double d = mx - mn;
    v = mx;
    s = mx > 0.0 ? d / mx : 0.0;
    if (d <= 0.0) {
        h = 0.0;
        return;
    }
    if (mx == r)
        h = std::fmod((g - b) / d + 6.0, 6.0) / 6.0;
    else if (mx == g)
        h = ((b - r) / d + 2.0) / 6.0;
    else
        h = ((r - g) / d + 4.0) / 6.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    double hh = std::fmod(h, 1.0) * 6.0;
    int sector = static_cast<int>(hh) % 6;
    double f = hh - std::floor(hh);
    double p = v * (1.0 - s);
    double q = v * (1.0 - s * f);
    double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

// Bilinear resample of a (C,h,w) region of x starting at (i0,j0) into
// (C,out_h,out_w). Source coordinates follow the half-pixel convention, so
// a full-frame same-size "resize" is exactly the identity.
Tensor crop_resize(const Tensor& x, int64_t i0, int64_t j0, int64_t h, int64_t w, int64_t out_h,
                   int64_t out_w) {
    int64_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
    Tensor out({C, out_h, out_w});
    double sy = static_cast<double>(h) / static_cast<double>(out_h);
    double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (int64_t oi = 0; oi < out_h; ++oi) {
        double fy = (oi + 0.5) * sy - 0.5;
        if (fy < 0) fy = 0;
        if (fy > h - 1) fy = static_cast<double>(h - 1);
        int64_t y0 = static_cast<int64_t>(fy);
        int64_t y1 = std::min(y0 + 1, h - 1);
        double wy = fy - y0;
        for (int64_t oj = 0; oj < out_w; ++oj) {
            double fx = (oj + 0.5) * sx - 0.5;
            if (fx < 0) fx = 0;
            if (fx > w - 1) fx = static_cast<double>(w - 1);
            int64_t x0 = static_cast<int64_t>(fx);
            int64_t x1 = std::min(x0 + 1, w - 1);
            double wx = fx - x0;
            for (int64_t c = 0; c < C; ++c) {
                const double* plane = x.data() + c * H * W;
                double a = plane[(i0 + y0) * W + (j0 + x0)];
                double b = plane[(i0 + y0) * W + (j0 + x1)];
                double d = plane[(i0 + y1) * W + (j0 + x0)];
                double e = plane[(i0 + y1) * W + (j0 + x1)];
                double top = a + (b - a) * wx;
                double bot = d + (e - d) * wx;
                out.v[(c * out_h + oi) * out_w + oj] = top + (bot - top) * wy;
            }
        }
    }
    return out;
}

Tensor hflip(const Tensor& x) {
    int64_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
    Tensor out(x.shape);
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j)
                out.v[(c * H + i) * W + j] = x.v[(c * H + i) * W + (W - 1 - j)];
    return out;
}

// Random resized crop in the torchvision style: sample area fraction and
// aspect ratio, retry up to ten times, fall back to a ratio-clamped center
// crop.
Tensor random_resized_crop(const Tensor& x, const AugmentationPipeline& p, Rng& rng) {
    int64_t H = x.shape[1], W = x.shape[2];
    double area = static_cast<double>(H * W);
    for (int attempt = 0; attempt < 10; ++attempt) {
        double target = area * rng.uniform(p.crop_scale_min, p.crop_scale_max);
        double lr = rng.uniform(std::log(p.crop_ratio_min), std::log(p.crop_ratio_max));
        double ratio = std::exp(lr);
        int64_t w = static_cast<int64_t>(std::lround(std::sqrt(target * ratio)));
        int64_t h = static_cast<int64_t>(std::lround(std::sqrt(target / ratio)));
        if (w > 0 && w <= W && h > 0 && h <= H) {
            int64_t i0 = rng.uniform_int(0, H - h);
            int64_t j0 = rng.uniform_int(0, W - w);
            return crop_resize(x, i0, j0, h, w, H, W);
        }
    }
    double in_ratio = static_cast<double>(W) / static_cast<double>(H);
    int64_t h, w;
    if (in_ratio < p.crop_ratio_min) {
        w = W;
        h = static_cast<int64_t>(std::lround(w / p.crop_ratio_min));
    } else if (in_ratio > p.crop_ratio_max) {
        h = H;
        w = static_cast<int64_t>(std::lround(h * p.crop_ratio_max));
    } else {
        h = H;
        w = W;
    }
    return crop_resize(x, (H - h) / 2, (W - w) / 2, h, w, H, W);
}

void apply_brightness(Tensor& x, double f) {
    for (double& e : x.v) e = clamp01(e * f);
}

void apply_contrast(Tensor& x, double f) {
    int64_t H = x.shape[1], W = x.shape[2], S = H * W;
    double mean = 0.0;
    for (int64_t i = 0; i < S; ++i)
        mean += luma(x.v[i], x.v[S + i], x.v[2 * S + i]);
    mean /= static_cast<double>(S);
    for (double& e : x.v) e = clamp01(f * e + (1.0 - f) * mean);
}

void apply_saturation(Tensor& x, double f) {
    int64_t S = x.shape[1] * x.shape[2];
    for (int64_t i = 0; i < S; ++i) {
        double g = luma(x.v[i], x.v[S + i], x.v[2 * S + i]);
        x.v[i] = clamp01(f * x.v[i] + (1.0 - f) * g);
        x.v[S + i] = clamp01(f * x.v[S + i] + (1.0 - f) * g);
        x.v[2 * S + i] = clamp01(f * x.v[2 * S + i] + (1.0 - f) * g);
    }
}

void apply_hue(Tensor& x, double shift) {
    int64_t S = x.shape[1] * x.shape[2];
    for (int64_t i = 0; i < S; ++i) {
        double h, s, v;
        rgb_to_hsv(x.v[i], x.v[S + i], x.v[2 * S + i], h, s, v);
        h = std::fmod(h + shift + 1.0, 1.0);
        double r, g, b;
        hsv_to_rgb(h, s, v, r, g, b);
        x.v[i] = clamp01(r);
        x.v[S + i] = clamp01(g);
        x.v[2 * S + i] = clamp01(b);
    }
}

void apply_grayscale(Tensor& x) {
    int64_t S = x.shape[1] * x.shape[2];
    for (int64_t i = 0; i < S; ++i) {
        double g = luma(x.v[i], x.v[S + i], x.v[2 * S + i]);
        x.v[i] = g;
        x.v[S + i] = g;
        x.v[2 * S + i] = g;
    }
}

}  // namespace

Tensor LabeledImageSet::image(int64_t i) const {
    check_arg(i >= 0 && i < count(), "image index out of range");
    int64_t C = images.shape[1], H = images.shape[2], W = images.shape[3];
    Tensor out({C, H, W});
    std::copy_n(images.data() + i * C * H * W, C * H * W, out.data());
    return out;
}

void LabeledImageSet::validate() const {
    check_arg(images.rank() == 4, "dataset images must be (N,C,H,W)");
    check_arg(static_cast<int64_t>(labels.size()) == images.shape[0],
              "dataset image/label count mismatch");
    check_arg(num_classes > 0, "dataset num_classes must be positive");
    for (int y : labels)
        check_arg(y >= 0 && y < num_classes, "dataset label out of range");
    for (double p : images.v)
        check_arg(p >= 0.0 && p <= 1.0, "dataset pixel outside [0,1]");
}

LabeledImageSet load_cifar10_binary(const std::string& path) {
    return load_cifar10_binary(std::vector<std::string>{path});
}

LabeledImageSet load_cifar10_binary(const std::vector<std::string>& paths) {
    check_arg(!paths.empty(), "cifar10 load: no paths given");
    std::vector<unsigned char> bytes;
    for (const std::string& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError("cannot open dataset file: " + path);
        std::vector<unsigned char> file((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
        if (file.empty() || file.size() % kCifarRecord != 0)
            throw FormatError("truncated dataset file (size not a multiple of 3073): " + path);
        bytes.insert(bytes.end(), file.begin(), file.end());
    }
    int64_t n = static_cast<int64_t>(bytes.size() / kCifarRecord);
    LabeledImageSet set;
    set.num_classes = 10;
    set.labels.resize(n);
    set.images = Tensor({n, kCifarChannels, kCifarSide, kCifarSide});
    const int64_t plane = kCifarSide * kCifarSide;
    for (int64_t i = 0; i < n; ++i) {
        const unsigned char* rec = bytes.data() + i * kCifarRecord;
        if (rec[0] >= 10)
            throw FormatError("corrupt record " + std::to_string(i) + ": label byte " +
                              std::to_string(static_cast<int>(rec[0])));
        set.labels[i] = rec[0];
        double* dst = set.images.data() + i * kCifarChannels * plane;
        for (int64_t j = 0; j < kCifarChannels * plane; ++j)
            dst[j] = static_cast<double>(rec[1 + j]) / 255.0;
    }
    return set;
}

void save_cifar10_binary(const LabeledImageSet& set, const std::string& path) {
    set.validate();
    check_arg(set.images.shape[1] == kCifarChannels && set.images.shape[2] == kCifarSide &&
                  set.images.shape[3] == kCifarSide,
              "cifar10 save: images must be 3x32x32");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + path);
    const int64_t plane = kCifarSide * kCifarSide;
    std::vector<unsigned char> rec(kCifarRecord);
    for (int64_t i = 0; i < set.count(); ++i) {
        rec[0] = static_cast<unsigned char>(set.labels[i]);
        const double* src = set.images.data() + i * kCifarChannels * plane;
        for (int64_t j = 0; j < kCifarChannels * plane; ++j)
            rec[1 + j] = static_cast<unsigned char>(std::lround(clamp01(src[j]) * 255.0));
        out.write(reinterpret_cast<const char*>(rec.data()), rec.size());
    }
    if (!out) throw FormatError("write failed: " + path);
}

LabeledImageSet synth_toy_dataset(uint64_t seed, int n, int classes, int side) {
    check_arg(classes >= 2, "synth dataset: need at least two classes");
    check_arg(n >= classes, "synth dataset: n must be at least the class count");
    check_arg(side >= 8, "synth dataset: side must be at least 8");

    Rng rng = Rng::substream(seed, "synth_toy");
    LabeledImageSet set;
    set.num_classes = classes;
    set.labels.resize(n);
    set.images = Tensor({n, 3, side, side});

    // Class identity is written twice. A radial cosine of frequency (c+1)
    // with golden-angle phase and a per-channel weight carries it at
    // amplitude well beyond 2*(8/255), so a decision boundary robust at the
    // standard budget exists; mirror symmetry keeps flips class-stable. A
    // flat chroma tint (orthogonal to the brightness axis, so color jitter
    // only rescales it) repeats it at an amplitude an attacker inside the
    // budget can flip outright — the shortcut cue standard training tends
    // to latch onto, and the first thing adversarial crafting erases.
    const double amp = 0.14;
    const double tint = 0.03;
    const double noise = 0.12;
    // Chroma basis: both rows sum to zero across (R,G,B) and have unit norm.
    const double chroma_u[3] = {M_SQRT1_2, 0.0, -M_SQRT1_2};
    const double chroma_v[3] = {1.0 / std::sqrt(6.0), -2.0 / std::sqrt(6.0), 1.0 / std::sqrt(6.0)};
    const double cy = (side - 1) / 2.0, cx = (side - 1) / 2.0;
    const double rmax = std::sqrt(cy * cy + cx * cx);
    for (int i = 0; i < n; ++i) {
        int c = i % classes;  // every class occupied for any n >= classes
        set.labels[i] = c;
        double phase = 2.39996322972865332 * c;
        double freq = 1.0 + c;
        double* img = set.images.data() + static_cast<int64_t>(i) * 3 * side * side;
        for (int k = 0; k < 3; ++k) {
            double wk = 0.7 + 0.3 * std::cos(phase + 2.0 * M_PI * k / 3.0);
            double tk = tint * (std::cos(phase) * chroma_u[k] + std::sin(phase) * chroma_v[k]);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    double r = std::sqrt((y - cy) * (y - cy) + (x - cx) * (x - cx)) / rmax;
                    double pattern = amp * wk * std::cos(2.0 * M_PI * freq * r + phase);
                    double pix = 0.5 + pattern + tk + noise * rng.normal();
                    img[(static_cast<int64_t>(k) * side + y) * side + x] = clamp01(pix);
                }
        }
    }
    return set;
}

AugmentationPipeline AugmentationPipeline::identity() {
    AugmentationPipeline p;
    p.crop_scale_min = p.crop_scale_max = 1.0;
    p.crop_ratio_min = p.crop_ratio_max = 1.0;
    p.flip_prob = 0.0;
    p.jitter_prob = 0.0;
    p.grayscale_prob = 0.0;
    return p;
}

void AugmentationPipeline::validate() const {
    check_arg(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0,
              "augmentation: crop scale range invalid");
    check_arg(crop_ratio_min > 0.0 && crop_ratio_min <= crop_ratio_max,
              "augmentation: crop ratio range invalid");
    for (double prob : {flip_prob, jitter_prob, grayscale_prob})
        check_arg(prob >= 0.0 && prob <= 1.0, "augmentation: probability outside [0,1]");
    check_arg(jitter_brightness >= 0.0 && jitter_contrast >= 0.0 && jitter_saturation >= 0.0,
              "augmentation: jitter strengths must be nonnegative");
    check_arg(jitter_hue >= 0.0 && jitter_hue <= 0.5, "augmentation: hue strength in [0,0.5]");
}

Tensor augment(const Tensor& x, const AugmentationPipeline& p, Rng& rng) {
    check_arg(x.rank() == 3 && x.shape[0] == 3, "augment: (3,H,W) image required");
    check_arg(p.mode == AugmentationPipeline::Mode::pretrain, "augment: pretrain pipeline required");
    Tensor out = random_resized_crop(x, p, rng);
    if (p.flip_prob > 0.0 && rng.uniform01() < p.flip_prob) out = hflip(out);
    if (p.jitter_prob > 0.0 && rng.uniform01() < p.jitter_prob) {
        double fb = rng.uniform(std::max(0.0, 1.0 - p.jitter_brightness), 1.0 + p.jitter_brightness);
        double fc = rng.uniform(std::max(0.0, 1.0 - p.jitter_contrast), 1.0 + p.jitter_contrast);
        double fs = rng.uniform(std::max(0.0, 1.0 - p.jitter_saturation), 1.0 + p.jitter_saturation);
        double fh = rng.uniform(-p.jitter_hue, p.jitter_hue);
        apply_brightness(out, fb);
        apply_contrast(out, fc);
        apply_saturation(out, fs);
        if (fh != 0.0) apply_hue(out, fh);
    }
    if (p.grayscale_prob > 0.0 && rng.uniform01() < p.grayscale_prob) apply_grayscale(out);
    return out;
}

std::pair<Tensor, Tensor> make_views(const Tensor& x, const AugmentationPipeline& p, Rng& rng) {
    Tensor a = augment(x, p, rng);
    Tensor b = augment(x, p, rng);
    return {std::move(a), std::move(b)};
}

std::pair<Tensor, Tensor> make_views_batch(const Tensor& batch, const AugmentationPipeline& p,
                                           Rng& rng) {
    check_arg(batch.rank() == 4, "make_views_batch: (N,C,H,W) batch required");
    int64_t n = batch.shape[0];
    int64_t per = batch.numel() / std::max<int64_t>(n, 1);
    Tensor va(batch.shape), vb(batch.shape);
    std::vector<int64_t> img_shape(batch.shape.begin() + 1, batch.shape.end());
    for (int64_t i = 0; i < n; ++i) {
        Tensor x(img_shape);
        std::copy(batch.data() + i * per, batch.data() + (i + 1) * per, x.data());
        auto [a, b] = make_views(x, p, rng);
        check_internal(a.numel() == per && b.numel() == per, "make_views_batch: view size drift");
        std::copy(a.data(), a.data() + per, va.data() + i * per);
        std::copy(b.data(), b.data() + per, vb.data() + i * per);
    }
    return {std::move(va), std::move(vb)};
}

FinetuneParams sample_finetune_params(Rng& rng, int pad) {
    FinetuneParams prm;
    prm.off_y = static_cast<int>(rng.uniform_int(0, 2 * pad));
    prm.off_x = static_cast<int>(rng.uniform_int(0, 2 * pad));
    prm.flip = rng.uniform01() < 0.5;
    return prm;
}

Tensor apply_finetune_augment(const Tensor& x, const FinetuneParams& prm, int pad) {
    check_arg(x.rank() == 3, "finetune augment: (C,H,W) image required");
    int64_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
    check_arg(H > 2 * pad && W > 2 * pad, "finetune augment: image too small for pad");
    check_arg(prm.off_y >= 0 && prm.off_y <= 2 * pad && prm.off_x >= 0 && prm.off_x <= 2 * pad,
              "finetune augment: crop offset out of range");
    Tensor out({C, H, W});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < H; ++i) {
            int64_t src_i = reflect_index(i + prm.off_y - pad, H);
            for (int64_t j = 0; j < W; ++j) {
                int64_t jj = prm.flip ? (W - 1 - j) : j;
                int64_t src_j = reflect_index(jj + prm.off_x - pad, W);
                out.v[(c * H + i) * W + j] = x.v[(c * H + src_i) * W + src_j];
            }
        }
    return out;
}

Tensor finetune_augment(const Tensor& x, Rng& rng, int pad) {
    return apply_finetune_augment(x, sample_finetune_params(rng, pad), pad);
}

Tensor finetune_augment_batch(const Tensor& images, Rng& rng, int pad) {
    check_arg(images.rank() == 4, "finetune augment: (N,C,H,W) batch required");
    Tensor out(images.shape);
    int64_t per = images.numel() / images.shape[0];
    for (int64_t i = 0; i < images.shape[0]; ++i) {
        Tensor img({images.shape[1], images.shape[2], images.shape[3]});
        std::copy_n(images.data() + i * per, per, img.data());
        Tensor aug = finetune_augment(img, rng, pad);
        std::copy_n(aug.data(), per, out.data() + i * per);
    }
    return out;
}

}  // namespace amoc
