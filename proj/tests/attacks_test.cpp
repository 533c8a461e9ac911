#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

#include "amoc/attacks.hpp"
#include "amoc/common.hpp"
#include "amoc/losses.hpp"

using namespace amoc;

namespace {

// objective <w, x> with constant gradient w
class LinearObjective : public InputObjective {
public:
    explicit LinearObjective(Tensor w) : w_(std::move(w)) {}
    double eval(const Tensor& x, Tensor* grad) override {
        if (grad) *grad = w_;
        double s = 0.0;
        for (size_t i = 0; i < x.v.size(); ++i) s += w_.v[i] * x.v[i];
        return s;
    }

private:
    Tensor w_;
};

class ZeroObjective : public InputObjective {
public:
    double eval(const Tensor& x, Tensor* grad) override {
        if (grad) *grad = Tensor(x.shape);
        return 0.0;
    }
};

Tensor random_interior(Rng& rng, const std::vector<int64_t>& shape) {
    Tensor x(shape);
    for (double& v : x.v) v = 0.3 + 0.4 * rng.uniform01();
    return x;
}

double norm_of(const Tensor& d, Norm n) {
    double out = 0.0;
    switch (n) {
        case Norm::linf:
            for (double v : d.v) out = std::max(out, std::fabs(v));
            return out;
        case Norm::l2:
            for (double v : d.v) out += v * v;
            return std::sqrt(out);
        case Norm::l1:
            for (double v : d.v) out += std::fabs(v);
            return out;
    }
    return out;
}

oracle::AffineLogits random_affine(Rng& rng, int classes, int64_t d) {
    Tensor W({classes, d});
    for (double& v : W.v) v = rng.normal();
    std::vector<double> b(static_cast<size_t>(classes));
    for (double& v : b) v = 0.1 * rng.normal();
    return oracle::AffineLogits(std::move(W), std::move(b));
}

}  // namespace

TEST_CASE("attack specs: defaults cover the evaluation table in order") {
    std::vector<AttackSpec> suite = default_attack_suite();
    REQUIRE(suite.size() == 7);
    for (const AttackSpec& s : suite) s.validate();

    CHECK(suite[0].label() == "pgd10_linf");
    CHECK(suite[0].epsilon == 8.0 / 255.0);
    CHECK(suite[0].rel_step == 0.25);

    CHECK(suite[1].label() == "pgd20_linf");
    CHECK(suite[1].epsilon == 8.0 / 255.0);
    CHECK(suite[1].steps == 20);
    CHECK(suite[1].rel_step == 0.1);

    CHECK(suite[2].label() == "deepfool");
    CHECK(suite[2].steps == 50);
    CHECK(suite[2].overshoot == 0.02);

    CHECK(suite[3].label() == "pgd50_l1");
    CHECK(suite[3].epsilon == 12.0);
    CHECK(suite[3].rel_step == 0.05);

    CHECK(suite[4].label() == "slide");
    CHECK(suite[4].norm == Norm::l1);
    CHECK(suite[4].epsilon == 12.0);
    CHECK(suite[4].steps == 50);

    CHECK(suite[5].label() == "pgd50_l2");
    CHECK(suite[5].epsilon == 0.5);
    CHECK(suite[5].rel_step == 0.1);

    CHECK(suite[6].label() == "cw_l2");
    CHECK(suite[6].steps == 1000);
    CHECK(suite[6].cw_lr == 0.01);

    // no single-step column in the default table
    for (const AttackSpec& s : suite) CHECK(s.method != "fgsm");
}

TEST_CASE("attack specs: validation rejects nonsense") {
    AttackSpec s;
    s.validate();
    s.method = "bim";
    CHECK_THROWS_AS(s.validate(), ArgumentError);
    s.method = "pgd";
    s.epsilon = -0.1;
    CHECK_THROWS_AS(s.validate(), ArgumentError);
    s.epsilon = 0.03;
    s.steps = 0;
    CHECK_THROWS_AS(s.validate(), ArgumentError);
    s.steps = 10;
    s.rel_step = 0.0;
    CHECK_THROWS_AS(s.validate(), ArgumentError);

    CHECK(parse_norm("linf") == Norm::linf);
    CHECK(parse_norm("l2") == Norm::l2);
    CHECK(parse_norm("l1") == Norm::l1);
    CHECK_THROWS_AS(parse_norm("l3"), ConfigError);
}

TEST_CASE("projections: idempotent to the bit for all three balls") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor d({2, 3, 4, 4});
        for (double& v : d.v) v = 3.0 * rng.normal();
        for (Norm n : {Norm::linf, Norm::l2, Norm::l1}) {
            Tensor once = d;
            project_ball(once, n, 0.7);
            Tensor twice = once;
            project_ball(twice, n, 0.7);
            CHECK(twice.bitwise_equal(once));
        }
    }
}

TEST_CASE("projections: points already inside are untouched") {
    Rng rng(2);
    Tensor d({1, 3, 4, 4});
    for (double& v : d.v) v = 0.001 * rng.normal();
    for (Norm n : {Norm::linf, Norm::l2, Norm::l1}) {
        Tensor p = d;
        project_ball(p, n, 1.0);
        CHECK(p.bitwise_equal(d));
    }
}

TEST_CASE("projections: l1 matches an independent bisection solver") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor d({1, 16});
        for (double& v : d.v) v = 2.0 * rng.normal();
        double eps = 0.5 + 4.0 * rng.uniform01();

        std::vector<double> want = d.v;
        oracle::project_l1_bisect(want, eps);
        project_l1(d, eps);
        double diff = 0.0;
        for (size_t i = 0; i < want.size(); ++i) diff = std::max(diff, std::fabs(d.v[i] - want[i]));
        CHECK(diff < 1e-6);
        CHECK(norm_of(d, Norm::l1) <= eps * (1.0 + 1e-9));
    }
}

TEST_CASE("projections: per-image, not per-batch") {
    // two images, one far outside the ball, one inside: only the first moves
    Tensor d({2, 1, 2, 2});
    d.v = {5.0, -5.0, 5.0, -5.0, 0.01, 0.01, 0.0, 0.0};
    Tensor before = d;
    project_ball(d, Norm::l2, 1.0);
    double n0 = 0.0, n1 = 0.0;
    for (int j = 0; j < 4; ++j) n0 += d.v[static_cast<size_t>(j)] * d.v[static_cast<size_t>(j)];
    for (int j = 4; j < 8; ++j) n1 += d.v[static_cast<size_t>(j)] * d.v[static_cast<size_t>(j)];
    CHECK(std::sqrt(n0) == doctest::Approx(1.0).epsilon(1e-9));
    for (int j = 4; j < 8; ++j) CHECK(d.v[static_cast<size_t>(j)] == before.v[static_cast<size_t>(j)]);
}

TEST_CASE("pgd: a linear objective saturates the linf ball") {
    Rng rng(4);
    Tensor x = random_interior(rng, {2, 1, 4, 4});
    Tensor w(x.shape);
    for (double& v : w.v) v = rng.normal();

    AttackSpec spec;
    spec.epsilon = 0.05;
    spec.steps = 3;
    spec.rel_step = 1.0;
    spec.random_start = false;
    LinearObjective obj(w);
    Tensor x_adv = pgd(obj, x, spec, rng);

    for (size_t i = 0; i < x.v.size(); ++i) {
        double sgn = w.v[i] > 0.0 ? 1.0 : (w.v[i] < 0.0 ? -1.0 : 0.0);
        CHECK(x_adv.v[i] == x.v[i] + spec.epsilon * sgn);
    }
}

TEST_CASE("pgd: zero gradient with no random start stays put") {
    Rng rng(5);
    Tensor x = random_interior(rng, {1, 3, 4, 4});
    AttackSpec spec;
    spec.epsilon = 0.1;
    spec.steps = 10;
    spec.random_start = false;
    ZeroObjective obj;
    Tensor x_adv = pgd(obj, x, spec, rng);
    CHECK(x_adv.bitwise_equal(x));
}

TEST_CASE("pgd: zero budget returns the input bit for bit") {
    Rng rng(6);
    Tensor x = random_interior(rng, {2, 1, 4, 4});
    Tensor w(x.shape);
    for (double& v : w.v) v = rng.normal();
    LinearObjective obj(w);
    for (Norm n : {Norm::linf, Norm::l2, Norm::l1}) {
        AttackSpec spec;
        spec.norm = n;
        spec.epsilon = 0.0;
        spec.steps = 7;
        spec.random_start = true;  // even with a random start requested
        Tensor x_adv = pgd(obj, x, spec, rng);
        CHECK(x_adv.bitwise_equal(x));
    }
}

TEST_CASE("pgd: iterates respect ball and box for every norm") {
    Rng rng(7);
    oracle::AffineLogits model = random_affine(rng, 3, 3 * 4 * 4);
    std::vector<int> labels = {0, 1, 2};
    Tensor x({3, 3, 4, 4});
    for (double& v : x.v) v = rng.uniform01();
    CrossEntropyObjective obj(model, labels);

    struct Case {
        Norm norm;
        double eps;
    };
    for (Case c : {Case{Norm::linf, 0.05}, Case{Norm::l2, 0.8}, Case{Norm::l1, 6.0}}) {
        AttackSpec spec;
        spec.norm = c.norm;
        spec.epsilon = c.eps;
        spec.steps = 10;
        spec.rel_step = 0.3;
        Tensor x_adv = pgd(obj, x, spec, rng);
        for (double v : x_adv.v) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        int64_t per = x.numel() / x.dim(0);
        for (int64_t i = 0; i < x.dim(0); ++i) {
            Tensor d({per});
            for (int64_t j = 0; j < per; ++j) d.v[static_cast<size_t>(j)] =
                x_adv.v[static_cast<size_t>(i * per + j)] - x.v[static_cast<size_t>(i * per + j)];
            CHECK(norm_of(d, c.norm) <= c.eps * (1.0 + 1e-5));
        }
    }
}

TEST_CASE("fgsm: exactly a one-step full-budget pgd") {
    Rng rng(8);
    oracle::AffineLogits model = random_affine(rng, 2, 16);
    std::vector<int> labels = {0, 1};
    Tensor x({2, 1, 4, 4});
    for (double& v : x.v) v = rng.uniform01();
    CrossEntropyObjective obj(model, labels);

    Tensor via_fgsm = fgsm(obj, x, 0.03);

    AttackSpec spec;
    spec.epsilon = 0.03;
    spec.steps = 1;
    spec.rel_step = 1.0;
    spec.random_start = false;
    Rng unused(0);
    Tensor via_pgd = pgd(obj, x, spec, unused);
    CHECK(via_fgsm.bitwise_equal(via_pgd));
}

TEST_CASE("fgsm: linear objective gains exactly eps * l1(w)") {
    Rng rng(9);
    Tensor x = random_interior(rng, {1, 1, 4, 4});
    Tensor w(x.shape);
    for (double& v : w.v) v = rng.normal();
    LinearObjective obj(w);
    double before = obj.eval(x, nullptr);
    Tensor x_adv = fgsm(obj, x, 0.01);
    double after = obj.eval(x_adv, nullptr);
    double l1 = 0.0;
    for (double v : w.v) l1 += std::fabs(v);
    CHECK(after - before == doctest::Approx(0.01 * l1).epsilon(1e-9));

    CHECK(fgsm(obj, x, 0.0).bitwise_equal(x));
}

TEST_CASE("slide: perturbs only the top-quantile coordinates") {
    Rng rng(10);
    Tensor x({1, 1, 10, 10});
    for (double& v : x.v) v = 0.3 + 0.4 * rng.uniform01();
    Tensor w(x.shape);
    for (double& v : w.v) v = rng.normal();
    // top-2 magnitudes for a 100-coordinate image under the nearest-rank rule
    std::vector<size_t> order(w.v.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return std::fabs(w.v[a]) > std::fabs(w.v[b]); });

    LinearObjective obj(w);
    AttackSpec spec;
    spec.method = "slide";
    spec.norm = Norm::l1;
    spec.epsilon = 12.0;
    spec.steps = 1;
    spec.rel_step = 0.05;
    spec.random_start = false;
    Tensor x_adv = slide(obj, x, spec, rng);

    double step = spec.rel_step * spec.epsilon;
    int moved = 0;
    for (size_t i = 0; i < x.v.size(); ++i) {
        double d = x_adv.v[i] - x.v[i];
        if (d == 0.0) continue;
        ++moved;
        bool is_top = (i == order[0] || i == order[1]);
        CHECK(is_top);
        CHECK(std::fabs(d) == doctest::Approx(step / 2.0).epsilon(1e-12));
        CHECK((d > 0.0) == (w.v[i] > 0.0));
    }
    CHECK(moved == 2);
}

TEST_CASE("slide: stays inside the l1 ball over many steps") {
    Rng rng(11);
    oracle::AffineLogits model = random_affine(rng, 2, 100);
    std::vector<int> labels = {0};
    Tensor x({1, 1, 10, 10});
    for (double& v : x.v) v = rng.uniform01();
    CrossEntropyObjective obj(model, labels);

    AttackSpec spec;
    spec.method = "slide";
    spec.norm = Norm::l1;
    spec.epsilon = 3.0;
    spec.steps = 25;
    spec.rel_step = 0.3;
    Tensor x_adv = slide(obj, x, spec, rng);
    Tensor d(x.shape);
    for (size_t i = 0; i < x.v.size(); ++i) d.v[i] = x_adv.v[i] - x.v[i];
    CHECK(norm_of(d, Norm::l1) <= spec.epsilon * (1.0 + 1e-5));
    for (double v : x_adv.v) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("deepfool: lands on the boundary of an affine binary classifier") {
    Rng rng(12);
    oracle::AffineLogits model = random_affine(rng, 2, 16);
    Tensor x({1, 1, 4, 4});
    for (double& v : x.v) v = rng.uniform01();

    MinimalAttackResult flat = deepfool(model, x, 10, 0.0);
    Tensor z = model.logits(flat.x_adv);
    CHECK(std::fabs(z.at2(0, 0) - z.at2(0, 1)) < 1e-5);
    CHECK(flat.iterations[0] >= 1);

    MinimalAttackResult over = deepfool(model, x, 10, 0.02);
    CHECK(over.success[0]);
}

TEST_CASE("deepfool: perturbation size matches the closed form") {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        oracle::AffineLogits model = random_affine(rng, 4, 25);
        Tensor x({1, 1, 5, 5});
        for (double& v : x.v) v = rng.uniform01();
        double want = model.min_l2_distance(x);

        MinimalAttackResult r = deepfool(model, x, 50, 0.02);
        double got = 0.0;
        for (size_t i = 0; i < x.v.size(); ++i) {
            double d = r.x_adv.v[i] - x.v[i];
            got += d * d;
        }
        got = std::sqrt(got);
        CHECK(got == doctest::Approx(want * 1.02).epsilon(0.05));
    }
}

TEST_CASE("deepfool: non-finite logits raise a numeric error") {
    Tensor W({2, 4});
    W.v = {std::numeric_limits<double>::infinity(), 0, 0, 0, 0, 1, 0, 0};
    oracle::AffineLogits model(std::move(W), {0.0, 0.0});
    Tensor x({1, 1, 2, 2});
    x.v = {0.5, 0.5, 0.5, 0.5};
    CHECK_THROWS_AS(deepfool(model, x, 5, 0.02), NumericError);
}

TEST_CASE("cw: zero iterations is the identity with no successes") {
    Rng rng(14);
    oracle::AffineLogits model = random_affine(rng, 3, 16);
    Tensor x({2, 1, 4, 4});
    for (double& v : x.v) v = rng.uniform01();
    MinimalAttackResult r = cw_l2(model, x, {0, 1}, 0, 0.01, 0.0);
    CHECK(r.x_adv.bitwise_equal(x));
    CHECK(!r.success[0]);
    CHECK(!r.success[1]);
}

TEST_CASE("cw: finds near-minimal perturbations on an affine classifier") {
    Rng rng(15);
    int ok = 0, tried = 0;
    for (int trial = 0; trial < 20; ++trial) {
        oracle::AffineLogits model = random_affine(rng, 2, 16);
        Tensor x({1, 1, 4, 4});
        for (double& v : x.v) v = 0.2 + 0.6 * rng.uniform01();
        Tensor z = model.logits(x);
        int y = z.at2(0, 0) >= z.at2(0, 1) ? 0 : 1;
        double want = model.min_l2_distance(x);
        if (want > 0.2) continue;  // keep to cases the box cannot bind

        MinimalAttackResult r = cw_l2(model, x, {y}, 600, 0.01, 0.0);
        ++tried;
        if (!r.success[0]) continue;
        double got = 0.0;
        for (size_t i = 0; i < x.v.size(); ++i) {
            double d = r.x_adv.v[i] - x.v[i];
            got += d * d;
        }
        got = std::sqrt(got);
        CHECK(got <= want * 1.05 + 1e-3);
        CHECK(got >= want * 0.95);
        ++ok;
    }
    CHECK(ok == tried);  // every attempted case must both succeed and be tight
    CHECK(tried >= 1);
}

TEST_CASE("cw: constant classifier never succeeds on its own class") {
    Tensor W({2, 16});
    oracle::AffineLogits model(std::move(W), {0.0, 0.0});
    Tensor x({2, 1, 4, 4});
    x.fill(0.5);
    MinimalAttackResult r = cw_l2(model, x, {0, 0}, 50, 0.01, 0.0);
    CHECK(!r.success[0]);
    CHECK(!r.success[1]);
    CHECK(r.x_adv.bitwise_equal(x));
}

TEST_CASE("run_attack: dispatches every method in the default suite") {
    Rng rng(16);
    oracle::AffineLogits model = random_affine(rng, 3, 3 * 8 * 8);
    Tensor x({2, 3, 8, 8});
    for (double& v : x.v) v = rng.uniform01();
    std::vector<int> labels = {0, 2};
    for (const AttackSpec& spec : default_attack_suite()) {
        AttackSpec quick = spec;
        quick.steps = std::min(spec.steps, 5);
        Tensor x_adv = run_attack(quick, model, x, labels, rng);
        CHECK(x_adv.shape == x.shape);
        CHECK(x_adv.all_finite());
    }
    AttackSpec bogus;
    bogus.method = "none";
    CHECK_THROWS_AS(run_attack(bogus, model, x, labels, rng), ArgumentError);
}

TEST_CASE("contrastive perturbation: zero budget crafts nothing") {
    EncoderArch arch;
    arch.width = 4;
    arch.embed_dim = 8;
    EncoderPair pair = init_encoder_pair(arch, 17);
    MemoryBank bank_adv(16, 8, 18);
    Rng rng(19);
    Tensor view_q({2, 3, 16, 16}), view_k({2, 3, 16, 16});
    for (double& v : view_q.v) v = rng.uniform01();
    for (double& v : view_k.v) v = rng.uniform01();

    AttackSpec spec;
    spec.epsilon = 0.0;
    spec.steps = 5;
    spec.rel_step = 0.25;
    Tensor delta = contrastive_perturb(pair, bank_adv, view_q, view_k, spec, 0.2, rng);
    for (double v : delta.v) CHECK(v == 0.0);
}

TEST_CASE("contrastive perturbation: ascends the crafting objective") {
    EncoderArch arch;
    arch.width = 4;
    arch.embed_dim = 8;
    EncoderPair pair = init_encoder_pair(arch, 20);
    MemoryBank bank_adv(16, 8, 21);
    Rng data_rng(22);
    Tensor view_q({2, 3, 16, 16}), view_k({2, 3, 16, 16});
    for (double& v : view_q.v) v = data_rng.uniform01();
    for (double& v : view_k.v) v = data_rng.uniform01();

    AttackSpec spec;
    spec.epsilon = 8.0 / 255.0;
    spec.steps = 5;
    spec.rel_step = 0.25;

    LayerCtx kctx;
    Tensor keys = pair.key.forward(view_k, kctx, eval_mode(BnBranch::clean));
    auto crafting_loss = [&](const Tensor& input) {
        LayerCtx qctx;
        Tensor q = pair.query.forward(input, qctx, eval_mode(BnBranch::adv));
        return info_nce(q, keys, bank_adv.negatives(), 0.2).loss;
    };
    double clean = crafting_loss(view_q);

    int ascended = 0;
    const int trials = 20;
    for (uint64_t seed = 0; seed < trials; ++seed) {
        Rng craft(seed);
        Tensor delta = contrastive_perturb(pair, bank_adv, view_q, view_k, spec, 0.2, craft);
        // the perturbation respects the budget
        double mx = 0.0;
        for (double v : delta.v) mx = std::max(mx, std::fabs(v));
        CHECK(mx <= spec.epsilon * (1.0 + 1e-9));

        Tensor moved = view_q;
        moved.axpy(1.0, delta);
        if (crafting_loss(moved) >= clean) ++ascended;
    }
    CHECK(ascended >= 16);
}
