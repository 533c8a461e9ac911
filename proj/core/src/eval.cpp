#include "amoc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "amoc/common.hpp"
#include "amoc/losses.hpp"

namespace amoc {

namespace {

using nlohmann::json;

uint64_t fnv1a64_mix(uint64_t h, const void* data, size_t bytes) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

double percent(int64_t hits, int64_t total) {
    return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

double row_norm(const double* d, int64_t n, Norm norm) {
    double acc = 0.0;
    switch (norm) {
        case Norm::linf:
            for (int64_t j = 0; j < n; ++j) acc = std::max(acc, std::fabs(d[j]));
            return acc;
        case Norm::l2:
            for (int64_t j = 0; j < n; ++j) acc += d[j] * d[j];
            return std::sqrt(acc);
        default:
            for (int64_t j = 0; j < n; ++j) acc += std::fabs(d[j]);
            return acc;
    }
}

constexpr int64_t kEvalBatch = 64;

}  // namespace

EvalProtocol::EvalProtocol() {
    attack.method = "pgd";
    attack.norm = Norm::linf;
    attack.epsilon = 8.0 / 255.0;
    attack.steps = 10;
    attack.rel_step = 0.25;
    attack.random_start = true;
}

void EvalProtocol::validate() const {
    check_arg(epochs >= 0, "eval: epochs must be nonnegative");
    check_arg(lr > 0.0, "eval: lr must be positive");
    check_arg(batch_size >= 1, "eval: batch_size must be positive");
    attack.validate();
}

std::string RobustnessReport::to_json() const {
    json j;
    j["clean"] = clean_pct;
    j["seed"] = seed;
    j["fingerprint"] = fingerprint;
    json arr = json::array();
    for (const AttackAccuracy& a : attacks)
        arr.push_back({{"attack", a.label}, {"accuracy", a.accuracy_pct}});
    j["attacks"] = arr;
    return j.dump(2);
}

std::string RobustnessReport::to_table() const {
    size_t width = 5;  // "clean"
    for (const AttackAccuracy& a : attacks) width = std::max(width, a.label.size());
    auto line = [width](const std::string& label, double pct) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%8.2f", pct);
        return label + std::string(width - label.size() + 2, ' ') + buf + "\n";
    };
    std::string out = "attack" + std::string(width - 6 + 2, ' ') + "accuracy\n";
    out += line("clean", clean_pct);
    for (const AttackAccuracy& a : attacks) out += line(a.label, a.accuracy_pct);
    return out;
}

std::string model_fingerprint(ClassifierModel& model) {
    uint64_t h = 1469598103934665603ull;
    for (const ParamRef& p : model.params()) {
        h = fnv1a64_mix(h, p.name.data(), p.name.size());
        h = fnv1a64_mix(h, p.value->v.data(), p.value->v.size() * sizeof(double));
    }
    for (const BufferRef& b : model.buffers()) {
        h = fnv1a64_mix(h, b.name.data(), b.name.size());
        h = fnv1a64_mix(h, b.value->v.data(), b.value->v.size() * sizeof(double));
    }
    return hex64(h);
}

std::vector<int> predict(ClassifierModel& model, const Tensor& x, BnBranch branch) {
    int64_t n = x.shape[0];
    std::vector<int> pred(n);
    for (int64_t b0 = 0; b0 < n; b0 += kEvalBatch) {
        int64_t bn = std::min(kEvalBatch, n - b0);
        Tensor xb = slice_rows(x, b0, bn);
        LayerCtx ctx;
        Tensor z = model.logits(xb, ctx, eval_mode(branch));
        for (int64_t i = 0; i < bn; ++i) {
            int arg = 0;
            double best = z.at2(i, 0);
            for (int64_t j = 1; j < z.shape[1]; ++j)
                if (z.at2(i, j) > best) {
                    best = z.at2(i, j);
                    arg = static_cast<int>(j);
                }
            pred[b0 + i] = arg;
        }
    }
    return pred;
}

RobustnessReport robust_accuracy(ClassifierModel& model, const LabeledImageSet& data,
                                 const std::vector<AttackSpec>& attacks, uint64_t seed,
                                 std::ostream* log) {
    data.validate();
    int64_t n = data.count();
    check_arg(n >= 1, "robust_accuracy: empty dataset");

    RobustnessReport rep;
    rep.seed = seed;
    rep.fingerprint = model_fingerprint(model);

    std::vector<int> clean_pred = predict(model, data.images, BnBranch::adv);
    int64_t clean_hits = 0;
    for (int64_t i = 0; i < n; ++i)
        if (clean_pred[i] == data.labels[i]) ++clean_hits;
    rep.clean_pct = percent(clean_hits, n);

    int64_t per = data.images.numel() / n;
    for (const AttackSpec& spec : attacks) {
        spec.validate();
        Rng rng = Rng::substream(seed, "eval_attack_" + spec.label());
        int64_t hits = 0;

        for (int64_t b0 = 0; b0 < n; b0 += kEvalBatch) {
            int64_t bn = std::min(kEvalBatch, n - b0);
            Tensor x = slice_rows(data.images, b0, bn);
            std::vector<int> y(data.labels.begin() + b0, data.labels.begin() + b0 + bn);

            Tensor x_adv;
            try {
                ClassifierSurface surface(model, eval_mode(BnBranch::adv));
                x_adv = run_attack(spec, surface, x, y, rng);
            } catch (const NumericError& e) {
                if (log)
                    *log << "attack " << spec.label() << " batch at " << b0
                         << " failed numerically (" << e.what() << "); counting batch as broken\n";
                continue;  // every point in the batch counts as misclassified
            }

            // Budget gate (bites only for the minimal-perturbation methods)
            // and per-point finiteness.
            std::vector<char> broken(bn, 0);
            for (int64_t i = 0; i < bn; ++i) {
                double* adv = x_adv.data() + i * per;
                const double* orig = x.data() + i * per;
                bool finite = true;
                for (int64_t j = 0; j < per; ++j) finite = finite && std::isfinite(adv[j]);
                if (!finite) {
                    broken[i] = 1;
                    if (log)
                        *log << "attack " << spec.label() << " produced non-finite pixels at index "
                             << (b0 + i) << "\n";
                    continue;
                }
                std::vector<double> diff(per);
                for (int64_t j = 0; j < per; ++j) diff[j] = adv[j] - orig[j];
                if (row_norm(diff.data(), per, spec.norm) > spec.epsilon * (1.0 + 1e-5))
                    std::copy_n(orig, per, adv);  // out of budget: attack failed
            }

            std::vector<int> pred = predict(model, x_adv, BnBranch::adv);
            for (int64_t i = 0; i < bn; ++i)
                if (!broken[i] && pred[i] == y[i]) ++hits;
        }
        rep.attacks.push_back({spec.label(), percent(hits, n)});
    }
    return rep;
}

LinearEvalResult linear_eval(const Checkpoint& ck, const LabeledImageSet& train_data,
                             const LabeledImageSet& test_data, const EvalProtocol& protocol) {
    protocol.validate();
    train_data.validate();
    test_data.validate();
    check_arg(train_data.num_classes == test_data.num_classes,
              "linear_eval: train/test class count mismatch");

    auto model = classifier_from_checkpoint(ck, train_data.num_classes, protocol.seed);
    Rng head_rng = Rng::substream(protocol.seed, "probe_head");
    model->init_head(head_rng);  // always a fresh probe head

    std::string encoder_before;
    {
        uint64_t h = 1469598103934665603ull;
        for (const ParamRef& p : model->encoder().params())
            h = fnv1a64_mix(h, p.value->v.data(), p.value->v.size() * sizeof(double));
        for (const BufferRef& b : model->encoder().buffers())
            h = fnv1a64_mix(h, b.value->v.data(), b.value->v.size() * sizeof(double));
        encoder_before = hex64(h);
    }

    Rng order_rng = Rng::substream(protocol.seed, "probe_order");
    Rng aug_rng = Rng::substream(protocol.seed, "probe_augment");
    Rng attack_rng = Rng::substream(protocol.seed, "probe_attack");
    SgdOptimizer opt(0.9, 5e-4);
    std::vector<ParamRef> head_params = model->head_params();

    int64_t n = train_data.count();
    int64_t b = protocol.batch_size;
    int64_t steps_per_epoch = (n + b - 1) / b;

    for (int epoch = 0; epoch < protocol.epochs; ++epoch) {
        double lr = lr_at(epoch, protocol.epochs, protocol.lr, 0);
        std::vector<int64_t> perm(n);
        for (int64_t i = 0; i < n; ++i) perm[i] = i;
        for (int64_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[order_rng.uniform_int(0, i)]);

        for (int64_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<int64_t> idx(b);
            for (int64_t k = 0; k < b; ++k) idx[k] = perm[(s * b + k) % n];
            Tensor x = take_rows(train_data.images, idx);
            std::vector<int> y(idx.size());
            for (size_t k = 0; k < idx.size(); ++k) y[k] = train_data.labels[idx[k]];

            Tensor input = x;
            if (protocol.kind == EvalProtocol::Kind::ad_ev) {
                input = finetune_augment_batch(x, aug_rng);
                ClassifierSurface surface(*model, eval_mode(BnBranch::adv));
                CrossEntropyObjective objective(surface, y);
                input = pgd(objective, input, protocol.attack, attack_rng);
            }

            LayerCtx ctx;
            Tensor z = model->logits(input, ctx, eval_mode(BnBranch::adv));
            CrossEntropyResult ce = cross_entropy(z, y, /*want_grads=*/true);
            if (!std::isfinite(ce.loss))
                throw NumericError("linear_eval: non-finite loss at epoch " +
                                   std::to_string(epoch) + " step " + std::to_string(s));
            zero_grads(head_params);
            model->backward_head_only(ce.dlogits, ctx);
            opt.step(head_params, lr);
        }
    }

    {
        uint64_t h = 1469598103934665603ull;
        for (const ParamRef& p : model->encoder().params())
            h = fnv1a64_mix(h, p.value->v.data(), p.value->v.size() * sizeof(double));
        for (const BufferRef& b2 : model->encoder().buffers())
            h = fnv1a64_mix(h, b2.value->v.data(), b2.value->v.size() * sizeof(double));
        check_internal(hex64(h) == encoder_before, "linear_eval: frozen encoder drifted");
    }

    AttackSpec pgd20;  // defaults are exactly the PGD20 linf column
    LinearEvalResult out;
    out.report = robust_accuracy(*model, test_data, {pgd20}, protocol.seed);
    out.model = std::move(model);
    return out;
}

std::vector<std::pair<double, double>> epsilon_sweep(ClassifierModel& model,
                                                     const LabeledImageSet& data,
                                                     const std::vector<double>& eps_list,
                                                     const AttackSpec& attack_template,
                                                     uint64_t seed) {
    data.validate();
    check_arg(!eps_list.empty(), "epsilon_sweep: empty budget list");
    for (size_t i = 0; i + 1 < eps_list.size(); ++i)
        check_arg(eps_list[i] <= eps_list[i + 1], "epsilon_sweep: budgets must ascend");
    check_arg(eps_list.front() >= 0.0, "epsilon_sweep: budgets must be nonnegative");
    (void)seed;  // the warm-started sweep is deterministic; kept for report plumbing

    int64_t n = data.count();
    int64_t per = data.images.numel() / n;
    std::vector<char> flipped(n, 0);
    Tensor x_cur = data.images;  // warm-start carrier across budgets

    std::vector<std::pair<double, double>> curve;
    for (double eps : eps_list) {
        AttackSpec spec = attack_template;
        spec.epsilon = eps;
        spec.random_start = false;

        if (eps > 0.0) {
            for (int64_t b0 = 0; b0 < n; b0 += kEvalBatch) {
                int64_t bn = std::min(kEvalBatch, n - b0);
                Tensor x = slice_rows(data.images, b0, bn);
                Tensor delta0 = slice_rows(x_cur, b0, bn);
                delta0.axpy(-1.0, x);
                std::vector<int> y(data.labels.begin() + b0, data.labels.begin() + b0 + bn);
                ClassifierSurface surface(model, eval_mode(BnBranch::adv));
                CrossEntropyObjective objective(surface, y);
                Tensor x_adv = pgd_from(objective, x, delta0, spec);
                std::copy_n(x_adv.data(), bn * per, x_cur.data() + b0 * per);
            }
        }

        std::vector<int> pred = predict(model, x_cur, BnBranch::adv);
        int64_t hits = 0;
        for (int64_t i = 0; i < n; ++i) {
            if (pred[i] != data.labels[i]) flipped[i] = 1;
            if (!flipped[i]) ++hits;
        }
        curve.emplace_back(eps, percent(hits, n));
    }
    return curve;
}

TTestResult paired_ttest(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                         std::ostream* log) {
    check_arg(scores_a.size() == scores_b.size(), "paired_ttest: length mismatch");
    size_t n = scores_a.size();
    check_arg(n >= 2, "paired_ttest: need at least two pairs");

    std::vector<double> d(n);
    for (size_t i = 0; i < n; ++i) d[i] = scores_a[i] - scores_b[i];
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / static_cast<double>(n - 1));

    TTestResult r;
    if (sd == 0.0) {
        r.degenerate = true;
        if (mean == 0.0) {
            r.t = 0.0;
            r.p = 1.0;
            if (log) *log << "paired_ttest: all differences are zero; p=1 by convention\n";
        } else {
            r.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                             : -std::numeric_limits<double>::infinity();
            r.p = 0.0;
            if (log) *log << "paired_ttest: constant nonzero differences; p=0 by convention\n";
        }
        return r;
    }

    r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    boost::math::students_t dist(static_cast<double>(n - 1));
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
    return r;
}

Tensor embeddings_of(const Checkpoint& ck, const LabeledImageSet& data, BnBranch branch) {
    data.validate();
    DualBNEncoder enc(ck.arch);
    restore_params(ck, "q.", enc.params());
    restore_buffers(ck, "q.", enc.buffers());

    int64_t n = data.count();
    Tensor out({n, static_cast<int64_t>(enc.embed_dim())});
    for (int64_t b0 = 0; b0 < n; b0 += kEvalBatch) {
        int64_t bn = std::min(kEvalBatch, n - b0);
        Tensor xb = slice_rows(data.images, b0, bn);
        LayerCtx ctx;
        Tensor z = enc.forward(xb, ctx, eval_mode(branch));
        std::copy_n(z.data(), bn * z.shape[1], out.data() + b0 * out.shape[1]);
    }
    return out;
}

void export_embeddings(const Checkpoint& ck, const LabeledImageSet& data, BnBranch branch,
                       const std::string& matrix_path, const std::string& labels_path) {
    Tensor z = embeddings_of(ck, data, branch);

    std::ofstream m(matrix_path, std::ios::binary | std::ios::trunc);
    check_arg(m.good(), "cannot open embeddings path: " + matrix_path);
    m << "amoc-embed 1 " << z.shape[0] << " " << z.shape[1] << "\n";
    for (double d : z.v) {
        float f = static_cast<float>(d);
        char buf[4];
        std::memcpy(buf, &f, 4);
        m.write(buf, 4);
    }
    m.close();
    if (!m.good()) throw FormatError("short write: " + matrix_path);

    std::ofstream l(labels_path, std::ios::trunc);
    check_arg(l.good(), "cannot open labels path: " + labels_path);
    for (int label : data.labels) l << label << "\n";
    l.close();
    if (!l.good()) throw FormatError("short write: " + labels_path);
}

Tensor load_embeddings(const std::string& matrix_path) {
    std::ifstream m(matrix_path, std::ios::binary);
    check_arg(m.good(), "cannot open embeddings file: " + matrix_path);
    std::string tag;
    int version = 0;
    int64_t rows = 0, cols = 0;
    m >> tag >> version >> rows >> cols;
    if (!m.good() || tag != "amoc-embed" || version != 1 || rows < 0 || cols <= 0)
        throw FormatError("not an embeddings file: " + matrix_path);
    m.get();  // the newline after the header
    Tensor z({rows, cols});
    for (double& d : z.v) {
        char buf[4];
        m.read(buf, 4);
        if (!m.good()) throw FormatError("truncated embeddings file: " + matrix_path);
        float f;
        std::memcpy(&f, buf, 4);
        d = static_cast<double>(f);
    }
    return z;
}

PcaResult pca2(const Tensor& rows) {
    check_arg(rows.rank() == 2, "pca2: matrix input required");
    int64_t n = rows.shape[0], d = rows.shape[1];
    check_arg(n >= 2 && d >= 2, "pca2: need at least 2 rows and 2 columns");

    Eigen::MatrixXd x(n, d);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) x(i, j) = rows.at2(i, j);
    Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;

    Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    check_internal(solver.info() == Eigen::Success, "pca2: eigendecomposition failed");

    // Eigen orders eigenvalues ascending.
    Eigen::MatrixXd top = solver.eigenvectors().rightCols(2).rowwise().reverse();
    Eigen::MatrixXd proj = x * top;

    PcaResult out;
    out.projected = Tensor({n, 2});
    for (int64_t i = 0; i < n; ++i) {
        out.projected.at2(i, 0) = proj(i, 0);
        out.projected.at2(i, 1) = proj(i, 1);
    }
    double total = solver.eigenvalues().sum();
    double top2 = solver.eigenvalues()(d - 1) + solver.eigenvalues()(d - 2);
    out.explained_ratio = total > 0.0 ? top2 / total : 0.0;
    return out;
}

}  // namespace amoc
