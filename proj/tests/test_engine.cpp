#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "genda/rng.hpp"
#include "genda/tensor.hpp"

using namespace genda;

namespace {

TensorT<double> random_tensor(RngStream& rng, Shape shape, double margin = 0.0) {
    std::vector<double> d(numel(shape));
    for (auto& x : d) {
        x = rng.normal();
        // keep clear of kinks so central differences stay valid
        if (margin > 0.0 && std::abs(x) < margin) x += x >= 0 ? margin : -margin;
    }
    return TensorT<double>(std::move(shape), std::move(d));
}

// scalarize an op output against a fixed random cotangent so every output
// element influences the loss differently
int dot_loss(TapeT<double>& tape, int y, const std::vector<double>& cot) {
    int c = tape.constant(tape.shape(y), std::vector<double>(cot.begin(), cot.begin() + tape.value(y).size()));
    return tape.sum(tape.mul_elem(y, c));
}

std::vector<double> cotangent(RngStream& rng, size_t n) {
    std::vector<double> c(n);
    for (auto& x : c) x = rng.normal();
    return c;
}

}  // namespace

TEST_CASE("forward values match hand calculations") {
    TapeT<double> tape;
    int a = tape.constant({2, 2}, {1, 2, 3, 4});
    int b = tape.constant({2, 1}, {5, 6});
    int c = tape.matmul(a, b);
    CHECK(tape.value(c) == std::vector<double>{17, 39});

    int x = tape.constant({3}, {-1.0, 0.0, 2.0});
    int lr = tape.leaky_relu(x, 0.2);
    CHECK(tape.value(lr)[0] == doctest::Approx(-0.2));
    CHECK(tape.value(lr)[1] == 0.0);
    CHECK(tape.value(lr)[2] == 2.0);

    int ls = tape.log_sigmoid(tape.constant({1}, {0.0}));
    CHECK(tape.value(ls)[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-12));

    int m = tape.mean(tape.constant({4}, {1, 2, 3, 6}));
    CHECK(tape.scalar(m) == doctest::Approx(3.0));
    int s = tape.sum(tape.constant({4}, {1, 2, 3, 6}));
    CHECK(tape.scalar(s) == doctest::Approx(12.0));

    int v = tape.broadcast_add(tape.constant({2, 2}, {1, 2, 3, 4}), tape.constant({2}, {10, 20}));
    CHECK(tape.value(v) == std::vector<double>{11, 22, 13, 24});
}

TEST_CASE("l2_normalize rows have unit norm") {
    RngStream rng(11);
    auto x = random_tensor(rng, {4, 7});
    TapeT<double> tape;
    int y = tape.l2_normalize(tape.constant(x));
    for (int r = 0; r < 4; ++r) {
        double ss = 0;
        for (int j = 0; j < 7; ++j) {
            double v = tape.value(y)[size_t(r) * 7 + j];
            ss += v * v;
        }
        CHECK(ss == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("grad_check passes for every op") {
    RngStream rng(42);
    const double tol = 1e-6;
    const int trials = 5;

    for (int t = 0; t < trials; ++t) {
        // unary elementwise ops under a random cotangent
        auto x = random_tensor(rng, {3, 5}, 1e-3);
        auto cot = cotangent(rng, x.size());

        auto check_unary = [&](auto op) {
            auto f = [&](TapeT<double>& tp, int in) { return dot_loss(tp, op(tp, in), cot); };
            CHECK(grad_check(f, x) < tol);
        };
        check_unary([](TapeT<double>& tp, int in) { return tp.leaky_relu(in, 0.2); });
        check_unary([](TapeT<double>& tp, int in) { return tp.tanh(in); });
        check_unary([](TapeT<double>& tp, int in) { return tp.sigmoid(in); });
        check_unary([](TapeT<double>& tp, int in) { return tp.log_sigmoid(in); });
        check_unary([](TapeT<double>& tp, int in) { return tp.scale(in, -1.7); });
        check_unary([](TapeT<double>& tp, int in) { return tp.l2_normalize(in); });

        auto fm = [&](TapeT<double>& tp, int in) { return tp.mean(in); };
        CHECK(grad_check(fm, x) < tol);
        auto fs = [&](TapeT<double>& tp, int in) { return tp.sum(in); };
        CHECK(grad_check(fs, x) < tol);

        // remap with a random gather table
        std::vector<int32_t> idx(x.size());
        for (auto& i : idx) i = int32_t(rng.below(x.size()));
        auto fr = [&](TapeT<double>& tp, int in) { return dot_loss(tp, tp.remap(in, idx), cot); };
        CHECK(grad_check(fr, x) < tol);

        // matmul, both arguments
        auto a = random_tensor(rng, {3, 4});
        auto b = random_tensor(rng, {4, 2});
        auto mm_cot = cotangent(rng, 6);
        auto f_a = [&](TapeT<double>& tp, int in) {
            return dot_loss(tp, tp.matmul(in, tp.constant(b)), mm_cot);
        };
        CHECK(grad_check(f_a, a) < tol);
        auto f_b = [&](TapeT<double>& tp, int in) {
            return dot_loss(tp, tp.matmul(tp.constant(a), in), mm_cot);
        };
        CHECK(grad_check(f_b, b) < tol);

        // binary elementwise, equal shapes and row broadcast
        auto y2 = random_tensor(rng, {3, 5});
        auto row = random_tensor(rng, {5});
        for (OpKind k : {OpKind::add, OpKind::sub, OpKind::mul_elem}) {
            auto f_eq = [&](TapeT<double>& tp, int in) {
                return dot_loss(tp, tp.apply(k, {in, tp.constant(y2)}), cot);
            };
            CHECK(grad_check(f_eq, x) < tol);
            auto f_bc = [&](TapeT<double>& tp, int in) {
                return dot_loss(tp, tp.apply(k, {tp.constant(x), in}), cot);
            };
            CHECK(grad_check(f_bc, row) < tol);
        }

        auto f_ba = [&](TapeT<double>& tp, int in) {
            return dot_loss(tp, tp.broadcast_add(tp.constant(x), in), cot);
        };
        CHECK(grad_check(f_ba, row) < tol);
    }
}

TEST_CASE("hand chain rule: d log_sigmoid(w.x) / dw at w=0 is x/2") {
    // at w=0 the logit is 0, sigmoid(0)=1/2, so the gradient is 0.5*x
    std::vector<double> xv{0.3, -1.2, 2.0, 0.7};
    TensorT<double> w = TensorT<double>::zeros({1, 4}, true);
    TapeT<double> tape;
    int win = tape.leaf(w);
    int x = tape.constant({4, 1}, xv);
    int logit = tape.matmul(win, x);
    int loss = tape.mean(tape.log_sigmoid(logit));
    tape.backward(loss);
    REQUIRE(w.grad.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(w.grad[i] == doctest::Approx(0.5 * xv[i]).epsilon(1e-12));
}

TEST_CASE("backward is linear in the loss") {
    RngStream rng(7);
    auto x0 = random_tensor(rng, {6}, 1e-3);
    const double a = 1.7, b = -0.6;

    auto grads_of = [&](int which) {
        // which: 0 -> f, 1 -> g, 2 -> a*f + b*g
        TensorT<double> x(x0.shape, x0.data, true);
        TapeT<double> tape;
        int in = tape.leaf(x);
        int f = tape.sum(tape.tanh(in));
        int g = tape.mean(tape.mul_elem(in, in));
        int loss = which == 0 ? f : which == 1 ? g : tape.add(tape.scale(f, a), tape.scale(g, b));
        tape.backward(loss);
        return x.grad;
    };

    auto gf = grads_of(0), gg = grads_of(1), gc = grads_of(2);
    for (size_t i = 0; i < gf.size(); ++i)
        CHECK(std::abs(gc[i] - (a * gf[i] + b * gg[i])) < 1e-10);
}

TEST_CASE("replay with identical inputs is bitwise identical") {
    auto run = [] {
        RngStream rng(99);
        std::vector<float> xv(24), wv(18);
        for (auto& v : xv) v = float(rng.normal());
        for (auto& v : wv) v = float(rng.normal());
        Tensor x({4, 6}, xv);
        Tensor w({6, 3}, wv, true);
        Tape tape;
        int loss = tape.mean(tape.tanh(tape.matmul(tape.constant(x), tape.leaf(w))));
        tape.backward(loss);
        return std::make_pair(tape.scalar(loss), w.grad);
    };
    auto [l1, g1] = run();
    auto [l2, g2] = run();
    CHECK(std::memcmp(&l1, &l2, sizeof l1) == 0);
    REQUIRE(g1.size() == g2.size());
    CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(float)) == 0);
}

TEST_CASE("tape is consumed by backward") {
    Tensor w({2}, {1.f, 2.f}, true);
    Tape tape;
    int loss = tape.sum(tape.leaf(w));
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), Error);
}

TEST_CASE("shape mismatch names both shapes") {
    Tape tape;
    int a = tape.constant({2, 3}, std::vector<float>(6, 1.f));
    int b = tape.constant({4, 2}, std::vector<float>(8, 1.f));
    try {
        tape.matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,2]") != std::string::npos);
    }
}

TEST_CASE("non-finite input is rejected") {
    Tape tape;
    CHECK_THROWS_AS(tape.constant({2}, {1.f, std::numeric_limits<float>::infinity()}),
                    NonFiniteError);
    Tensor nan_t({1}, {std::nanf("")});
    CHECK_THROWS_AS(tape.leaf(nan_t), NonFiniteError);
}

TEST_CASE("adam first step matches the closed form") {
    // with beta1=0 the first update is lr * g / (|g| + eps)
    const double lr = 0.1, g = 0.5, p0 = 1.0;
    TensorT<double> p({1}, {p0});
    p.grad = {g};
    AdamState<double> st;
    AdamConfig cfg;
    cfg.lr = lr;
    adam_step(p, st, cfg);
    CHECK(st.step == 1);
    CHECK(p.data[0] == doctest::Approx(p0 - lr * g / (std::abs(g) + cfg.eps)).epsilon(1e-12));
}

TEST_CASE("adam two-step recurrence matches an independent evaluation") {
    const double lr = 0.05, b1 = 0.0, b2 = 0.99, eps = 1e-8;
    const double g1 = 0.4, g2 = -1.1, p0 = 2.0;

    // hand recurrence
    double m = 0, v = 0, p = p0;
    int t = 0;
    for (double g : {g1, g2}) {
        ++t;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        double mh = m / (1 - std::pow(b1, t));
        double vh = v / (1 - std::pow(b2, t));
        p -= lr * mh / (std::sqrt(vh) + eps);
    }

    TensorT<double> tp({1}, {p0});
    AdamState<double> st;
    AdamConfig cfg{lr, b1, b2, eps};
    tp.grad = {g1};
    adam_step(tp, st, cfg);
    tp.grad = {g2};
    adam_step(tp, st, cfg);
    CHECK(tp.data[0] == doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("adam with lr=0 leaves parameters untouched") {
    RngStream rng(3);
    std::vector<float> dv(10), gv(10);
    for (auto& v : dv) v = float(rng.normal());
    for (auto& v : gv) v = float(rng.normal());
    Tensor p({10}, dv);
    p.grad = gv;
    auto before = p.data;
    AdamState<float> st;
    AdamConfig cfg;
    cfg.lr = 0.0;
    adam_step(p, st, cfg);
    CHECK(std::memcmp(before.data(), p.data.data(), sizeof(float) * 10) == 0);
}

TEST_CASE("named rng streams are independent and deterministic") {
    Streams s1(123), s2(123);
    CHECK(s1.latent.next_u64() == s2.latent.next_u64());

    // consuming one stream leaves the others on their original sequences
    Streams a(55), b(55);
    for (int i = 0; i < 100; ++i) a.data.normal();
    CHECK(a.init.next_u64() == b.init.next_u64());
    CHECK(a.latent.next_u64() == b.latent.next_u64());
    CHECK(a.augment.next_u64() == b.augment.next_u64());

    // different seeds diverge
    Streams c(56);
    CHECK(b.data.next_u64() != c.data.next_u64());
}
