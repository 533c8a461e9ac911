#include "amoc/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "amoc/common.hpp"
#include "amoc/losses.hpp"

namespace amoc {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// clip01(x + delta); the effective perturbation can only shrink
// coordinate-wise under the box, so ball membership survives.
Tensor box_clip(const Tensor& x, const Tensor& delta) {
    Tensor out(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) out.v[i] = clamp01(x.v[i] + delta.v[i]);
    return out;
}

// Applies fn(slice_ptr, slice_len) per leading-axis slice (whole tensor if
// rank <= 1). Projections and normalizations are per image.
template <typename Fn>
void for_each_slice(Tensor& t, Fn&& fn) {
    if (t.rank() <= 1) {
        fn(t.data(), t.numel());
        return;
    }
    int64_t n = t.shape[0], per = t.numel() / n;
    for (int64_t i = 0; i < n; ++i) fn(t.data() + i * per, per);
}

void project_l1_slice(double* d, int64_t n, double eps) {
    double l1 = 0.0;
    for (int64_t j = 0; j < n; ++j) l1 += std::fabs(d[j]);
    if (l1 <= eps * (1.0 + 1e-12)) return;
    // Sorting-based simplex projection of |d| onto the eps-ball.
    std::vector<double> u(n);
    for (int64_t j = 0; j < n; ++j) u[j] = std::fabs(d[j]);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cum = 0.0, theta = 0.0;
    for (int64_t j = 0; j < n; ++j) {
        cum += u[j];
        double cand = (cum - eps) / static_cast<double>(j + 1);
        if (u[j] - cand > 0.0) theta = cand;
    }
    for (int64_t j = 0; j < n; ++j) {
        double mag = std::fabs(d[j]) - theta;
        d[j] = mag > 0.0 ? (d[j] > 0.0 ? mag : -mag) : 0.0;
    }
}

int argmax_row(const Tensor& z, int64_t row) {
    int arg = 0;
    double best = z.at2(row, 0);
    for (int64_t j = 1; j < z.shape[1]; ++j)
        if (z.at2(row, j) > best) {
            best = z.at2(row, j);
            arg = static_cast<int>(j);
        }
    return arg;
}

}  // namespace

Norm parse_norm(const std::string& s) {
    if (s == "linf") return Norm::linf;
    if (s == "l2") return Norm::l2;
    if (s == "l1") return Norm::l1;
    throw ConfigError("unknown norm '" + s + "' (expected linf, l2 or l1)");
}

const char* norm_name(Norm n) {
    switch (n) {
        case Norm::linf: return "linf";
        case Norm::l2: return "l2";
        default: return "l1";
    }
}

void AttackSpec::validate() const {
    static const char* known[] = {"pgd", "fgsm", "slide", "deepfool", "cw"};
    bool ok = false;
    for (const char* m : known) ok = ok || method == m;
    check_arg(ok, "unknown attack method '" + method + "'");
    check_arg(epsilon >= 0.0, "attack: epsilon must be nonnegative");
    check_arg(steps >= 1, "attack: steps must be at least 1");
    check_arg(rel_step > 0.0, "attack: rel_step must be positive");
    check_arg(overshoot >= 0.0, "attack: overshoot must be nonnegative");
    check_arg(cw_lr > 0.0, "attack: cw_lr must be positive");
    check_arg(cw_confidence >= 0.0, "attack: cw_confidence must be nonnegative");
}

std::string AttackSpec::label() const {
    if (method == "fgsm") return "fgsm";
    if (method == "deepfool") return "deepfool";
    if (method == "slide") return "slide";
    if (method == "cw") return "cw_l2";
    return "pgd" + std::to_string(steps) + "_" + norm_name(norm);
}

std::vector<AttackSpec> default_attack_suite() {
    std::vector<AttackSpec> suite;
    const double eps_linf = 8.0 / 255.0;

    AttackSpec pgd10{"pgd", Norm::linf, eps_linf, 10, 0.25, true};
    AttackSpec pgd20{"pgd", Norm::linf, eps_linf, 20, 0.1, true};
    AttackSpec df{"deepfool", Norm::linf, eps_linf, 50, 1.0, false};
    df.overshoot = 0.02;
    AttackSpec pgd50_l1{"pgd", Norm::l1, 12.0, 50, 0.05, true};
    AttackSpec slide_l1{"slide", Norm::l1, 12.0, 50, 0.05, true};
    AttackSpec pgd50_l2{"pgd", Norm::l2, 0.5, 50, 0.1, true};
    AttackSpec cw{"cw", Norm::l2, 0.5, 1000, 1.0, false};
    cw.cw_lr = 0.01;

    suite.push_back(pgd10);
    suite.push_back(pgd20);
    suite.push_back(df);
    suite.push_back(pgd50_l1);
    suite.push_back(slide_l1);
    suite.push_back(pgd50_l2);
    suite.push_back(cw);
    return suite;
}

// ---------------------------------------------------------------------------
// Projections and starts

void project_linf(Tensor& delta, double eps) {
    for (double& d : delta.v) d = d > eps ? eps : (d < -eps ? -eps : d);
}

void project_l2(Tensor& delta, double eps) {
    for_each_slice(delta, [eps](double* d, int64_t n) {
        double sq = 0.0;
        for (int64_t j = 0; j < n; ++j) sq += d[j] * d[j];
        double norm = std::sqrt(sq);
        if (norm <= eps * (1.0 + 1e-12)) return;
        double s = eps / norm;
        for (int64_t j = 0; j < n; ++j) d[j] *= s;
    });
}

void project_l1(Tensor& delta, double eps) {
    for_each_slice(delta, [eps](double* d, int64_t n) { project_l1_slice(d, n, eps); });
}

void project_ball(Tensor& delta, Norm norm, double eps) {
    switch (norm) {
        case Norm::linf: project_linf(delta, eps); break;
        case Norm::l2: project_l2(delta, eps); break;
        case Norm::l1: project_l1(delta, eps); break;
    }
}

void random_start(Tensor& delta, Norm norm, double eps, Rng& rng) {
    if (norm == Norm::linf) {
        for (double& d : delta.v) d = rng.uniform(-eps, eps);
        return;
    }
    // Uniform direction scaled by a uniform radius.
    for_each_slice(delta, [&](double* d, int64_t n) {
        double norm_acc = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            d[j] = rng.normal();
            norm_acc += norm == Norm::l2 ? d[j] * d[j] : std::fabs(d[j]);
        }
        double len = norm == Norm::l2 ? std::sqrt(norm_acc) : norm_acc;
        double radius = eps * rng.uniform01();
        double s = len > 0.0 ? radius / len : 0.0;
        for (int64_t j = 0; j < n; ++j) d[j] *= s;
    });
}

// ---------------------------------------------------------------------------
// PGD family

Tensor pgd_from(InputObjective& objective, const Tensor& x, const Tensor& delta0,
                const AttackSpec& spec) {
    spec.validate();
    check_arg(delta0.same_shape(x), "pgd: start perturbation shape mismatch");
    if (spec.epsilon == 0.0) return x;

    Tensor delta = delta0;
    project_ball(delta, spec.norm, spec.epsilon);
    double step = spec.rel_step * spec.epsilon;
    Tensor x_adv = box_clip(x, delta);

    for (int t = 0; t < spec.steps; ++t) {
        Tensor grad;
        objective.eval(x_adv, &grad);
        switch (spec.norm) {
            case Norm::linf:
                for (int64_t j = 0; j < x_adv.numel(); ++j) {
                    double g = grad.v[j];
                    double s = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);  // sign(0) = 0
                    x_adv.v[j] += step * s;
                }
                break;
            case Norm::l2:
                for_each_slice(grad, [&](double* g, int64_t n) {
                    double sq = 0.0;
                    for (int64_t j = 0; j < n; ++j) sq += g[j] * g[j];
                    double norm = std::sqrt(sq);
                    if (norm <= 0.0) return;
                    int64_t off = g - grad.data();
                    for (int64_t j = 0; j < n; ++j) x_adv.v[off + j] += step * g[j] / norm;
                });
                break;
            case Norm::l1:
                for_each_slice(grad, [&](double* g, int64_t n) {
                    double l1 = 0.0;
                    for (int64_t j = 0; j < n; ++j) l1 += std::fabs(g[j]);
                    if (l1 <= 0.0) return;
                    int64_t off = g - grad.data();
                    for (int64_t j = 0; j < n; ++j) x_adv.v[off + j] += step * g[j] / l1;
                });
                break;
        }
        for (int64_t j = 0; j < x.numel(); ++j) delta.v[j] = x_adv.v[j] - x.v[j];
        project_ball(delta, spec.norm, spec.epsilon);
        x_adv = box_clip(x, delta);
    }
    return x_adv;
}

Tensor pgd(InputObjective& objective, const Tensor& x, const AttackSpec& spec, Rng& rng) {
    spec.validate();
    Tensor delta(x.shape);
    if (spec.random_start && spec.epsilon > 0.0) random_start(delta, spec.norm, spec.epsilon, rng);
    return pgd_from(objective, x, delta, spec);
}

Tensor fgsm(InputObjective& objective, const Tensor& x, double epsilon) {
    AttackSpec spec;
    spec.method = "fgsm";
    spec.norm = Norm::linf;
    spec.epsilon = epsilon;
    spec.steps = 1;
    spec.rel_step = 1.0;
    spec.random_start = false;
    Rng unused(0);
    return pgd(objective, x, spec, unused);
}

Tensor slide(InputObjective& objective, const Tensor& x, const AttackSpec& spec, Rng& rng) {
    spec.validate();
    check_arg(spec.norm == Norm::l1, "slide: l1 norm required");
    if (spec.epsilon == 0.0) return x;

    Tensor delta(x.shape);
    if (spec.random_start) random_start(delta, Norm::l1, spec.epsilon, rng);
    double step = spec.rel_step * spec.epsilon;
    Tensor x_adv = box_clip(x, delta);

    std::vector<double> mags;
    for (int t = 0; t < spec.steps; ++t) {
        Tensor grad;
        objective.eval(x_adv, &grad);
        for_each_slice(grad, [&](double* g, int64_t n) {
            // Threshold at the 0.99 quantile of |g| (nearest-rank).
            mags.resize(n);
            for (int64_t j = 0; j < n; ++j) mags[j] = std::fabs(g[j]);
            int64_t idx = static_cast<int64_t>(std::ceil(0.99 * static_cast<double>(n))) - 1;
            idx = std::max<int64_t>(0, std::min(idx, n - 1));
            std::nth_element(mags.begin(), mags.begin() + idx, mags.end());
            double thr = mags[idx];
            int64_t active = 0;
            for (int64_t j = 0; j < n; ++j)
                if (g[j] != 0.0 && std::fabs(g[j]) >= thr) ++active;
            if (active == 0) return;
            int64_t off = g - grad.data();
            double unit = step / static_cast<double>(active);
            for (int64_t j = 0; j < n; ++j) {
                if (g[j] == 0.0 || std::fabs(g[j]) < thr) continue;
                x_adv.v[off + j] += g[j] > 0.0 ? unit : -unit;
            }
        });
        for (int64_t j = 0; j < x.numel(); ++j) delta.v[j] = x_adv.v[j] - x.v[j];
        project_l1(delta, spec.epsilon);
        x_adv = box_clip(x, delta);
    }
    return x_adv;
}

// ---------------------------------------------------------------------------
// Minimal-perturbation attacks

MinimalAttackResult deepfool(LogitModel& model, const Tensor& x, int max_iters, double overshoot) {
    check_arg(max_iters >= 1, "deepfool: max_iters must be at least 1");
    check_arg(overshoot >= 0.0, "deepfool: overshoot must be nonnegative");
    int C = model.num_classes();
    check_arg(C >= 2, "deepfool: at least two classes required");

    int64_t N = x.shape[0];
    MinimalAttackResult out;
    out.x_adv = x;
    out.success.assign(N, false);
    out.iterations.assign(N, 0);
    int64_t per = x.numel() / N;

    for (int64_t i = 0; i < N; ++i) {
        Tensor xi = slice_rows(x, i, 1);
        Tensor z0 = model.logits(xi);
        if (!z0.all_finite()) throw NumericError("deepfool: non-finite logits");
        int orig = argmax_row(z0, 0);

        Tensor r_total(xi.shape);
        Tensor cur = xi;
        int taken = 0;
        bool flipped = false;
        for (int it = 0; it < max_iters; ++it) {
            Tensor z = model.logits(cur);
            if (!z.all_finite()) throw NumericError("deepfool: non-finite logits");
            if (argmax_row(z, 0) != orig) {
                flipped = true;
                break;
            }
            // Nearest linearized boundary among the other classes.
            double best_ratio = std::numeric_limits<double>::infinity();
            Tensor best_w;
            double best_f = 0.0, best_wn = 0.0;
            for (int k = 0; k < C; ++k) {
                if (k == orig) continue;
                Tensor dlogits({1, static_cast<int64_t>(C)});
                dlogits.at2(0, k) = 1.0;
                dlogits.at2(0, orig) = -1.0;
                Tensor wk = model.logits_grad(dlogits);
                double wn = l2_norm(wk);
                if (wn < 1e-12) continue;
                double fk = z.at2(0, k) - z.at2(0, orig);
                double ratio = std::fabs(fk) / wn;
                if (ratio < best_ratio) {
                    best_ratio = ratio;
                    best_w = std::move(wk);
                    best_f = fk;
                    best_wn = wn;
                }
            }
            if (!std::isfinite(best_ratio)) break;  // no usable gradient signal
            r_total.axpy(std::fabs(best_f) / (best_wn * best_wn), best_w);
            ++taken;
            cur = xi;
            cur.axpy(1.0, r_total);
        }

        Tensor adv = xi;
        adv.axpy(1.0 + overshoot, r_total);
        Tensor zf = model.logits(adv);
        out.success[i] = flipped || argmax_row(zf, 0) != orig;
        out.iterations[i] = taken;
        std::copy_n(adv.data(), per, out.x_adv.data() + i * per);
    }
    return out;
}

MinimalAttackResult cw_l2(LogitModel& model, const Tensor& x, const std::vector<int>& labels,
                          int iters, double lr, double confidence) {
    check_arg(iters >= 0, "cw: iters must be nonnegative");
    check_arg(lr > 0.0, "cw: lr must be positive");
    check_arg(confidence >= 0.0, "cw: confidence must be nonnegative");
    int64_t N = x.shape[0];
    check_arg(static_cast<int64_t>(labels.size()) == N, "cw: label count mismatch");
    int C = model.num_classes();

    MinimalAttackResult out;
    out.x_adv = x;
    out.success.assign(N, false);
    out.iterations.assign(N, iters);
    if (iters == 0) return out;

    int64_t per = x.numel() / N;
    const double c_weight = 1.0;  // fixed objective balance (no c-search at this scale)
    const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

    // tanh change of variables keeps iterates inside (0,1).
    Tensor w(x.shape);
    for (int64_t j = 0; j < x.numel(); ++j) {
        double t = 2.0 * x.v[j] - 1.0;
        t = std::max(-1.0 + 1e-6, std::min(1.0 - 1e-6, t));
        w.v[j] = std::atanh(t);
    }
    Tensor m(x.shape), v(x.shape);
    std::vector<double> best_dist(N, std::numeric_limits<double>::infinity());

    auto evaluate = [&](const Tensor& xt, Tensor* dlogits) {
        Tensor z = model.logits(xt);
        if (dlogits) *dlogits = Tensor({N, static_cast<int64_t>(C)});
        for (int64_t i = 0; i < N; ++i) {
            int y = labels[i];
            int kstar = -1;
            double other = -std::numeric_limits<double>::infinity();
            for (int k = 0; k < C; ++k) {
                if (k == y) continue;
                if (z.at2(i, k) > other) {
                    other = z.at2(i, k);
                    kstar = k;
                }
            }
            double dist = 0.0;
            for (int64_t j = 0; j < per; ++j) {
                double d = xt.v[i * per + j] - x.v[i * per + j];
                dist += d * d;
            }
            if (argmax_row(z, i) != y && dist < best_dist[i]) {
                best_dist[i] = dist;
                out.success[i] = true;
                std::copy_n(xt.data() + i * per, per, out.x_adv.data() + i * per);
            }
            if (dlogits && z.at2(i, y) - other > -confidence) {
                dlogits->at2(i, y) += c_weight;
                dlogits->at2(i, kstar) -= c_weight;
            }
        }
    };

    Tensor xt(x.shape);
    for (int t = 1; t <= iters; ++t) {
        for (int64_t j = 0; j < x.numel(); ++j) xt.v[j] = (std::tanh(w.v[j]) + 1.0) * 0.5;
        Tensor dlogits;
        evaluate(xt, &dlogits);
        Tensor dx = model.logits_grad(dlogits);
        // d/dx of ||xt - x||^2 plus the hinge pullback, then through tanh.
        double bc1 = 1.0 - std::pow(b1, t), bc2 = 1.0 - std::pow(b2, t);
        for (int64_t j = 0; j < x.numel(); ++j) {
            double th = std::tanh(w.v[j]);
            double g = (2.0 * (xt.v[j] - x.v[j]) + dx.v[j]) * 0.5 * (1.0 - th * th);
            m.v[j] = b1 * m.v[j] + (1.0 - b1) * g;
            v.v[j] = b2 * v.v[j] + (1.0 - b2) * g * g;
            w.v[j] -= lr * (m.v[j] / bc1) / (std::sqrt(v.v[j] / bc2) + adam_eps);
        }
    }
    for (int64_t j = 0; j < x.numel(); ++j) xt.v[j] = (std::tanh(w.v[j]) + 1.0) * 0.5;
    evaluate(xt, nullptr);
    return out;
}

// ---------------------------------------------------------------------------
// Model surfaces and dispatch

Tensor ClassifierSurface::logits(const Tensor& x) {
    ctx_ = LayerCtx{};
    return model_.logits(x, ctx_, mode_);
}

Tensor ClassifierSurface::logits_grad(const Tensor& dlogits) {
    return model_.backward(dlogits, ctx_, false, true);
}

double CrossEntropyObjective::eval(const Tensor& x, Tensor* grad) {
    Tensor z = model_.logits(x);
    CrossEntropyResult ce = cross_entropy(z, labels_, grad != nullptr);
    if (grad) *grad = model_.logits_grad(ce.dlogits);
    return ce.loss;
}

Tensor run_attack(const AttackSpec& spec, LogitModel& model, const Tensor& x,
                  const std::vector<int>& labels, Rng& rng) {
    spec.validate();
    if (spec.method == "deepfool") return deepfool(model, x, spec.steps, spec.overshoot).x_adv;
    if (spec.method == "cw")
        return cw_l2(model, x, labels, spec.steps, spec.cw_lr, spec.cw_confidence).x_adv;

    CrossEntropyObjective objective(model, labels);
    if (spec.method == "fgsm") return fgsm(objective, x, spec.epsilon);
    if (spec.method == "slide") return slide(objective, x, spec, rng);
    return pgd(objective, x, spec, rng);
}

namespace {

// InfoNCE of the perturbed query against fixed keys and negatives; the
// crafting surface of the pre-training attack.
class ContrastiveObjective : public InputObjective {
public:
    ContrastiveObjective(DualBNEncoder& query, Tensor keys, Tensor negatives, double temperature)
        : query_(query), keys_(std::move(keys)), negatives_(std::move(negatives)),
          temperature_(temperature) {}

    double eval(const Tensor& x, Tensor* grad) override {
        LayerCtx ctx;
        Tensor q = query_.forward(x, ctx, eval_mode(BnBranch::adv));
        InfoNceResult r = info_nce(q, keys_, negatives_, temperature_, grad != nullptr);
        if (grad) *grad = query_.backward(r.dq, ctx, false, true);
        return r.loss;
    }

private:
    DualBNEncoder& query_;
    Tensor keys_, negatives_;
    double temperature_;
};

}  // namespace

Tensor contrastive_perturb(EncoderPair& pair, const MemoryBank& bank_adv, const Tensor& view_q,
                           const Tensor& view_k, const AttackSpec& spec, double temperature,
                           Rng& rng) {
    spec.validate();
    check_arg(spec.norm == Norm::linf, "contrastive perturbation: linf norm required");

    LayerCtx kctx;
    Tensor keys = pair.key.forward(view_k, kctx, eval_mode(BnBranch::clean));
    ContrastiveObjective objective(pair.query, std::move(keys), bank_adv.negatives(), temperature);
    Tensor x_adv = pgd(objective, view_q, spec, rng);

    Tensor delta(x_adv.shape);
    for (int64_t j = 0; j < delta.numel(); ++j) delta.v[j] = x_adv.v[j] - view_q.v[j];
    return delta;
}

}  // namespace amoc
