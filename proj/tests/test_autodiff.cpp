#include <doctest.h>

#include <random>

#include "arch/autodiff.hpp"

using namespace arch;

TEST_CASE("forward identity returns leaf values") {
    Tape tape;
    NodeId x = tape.leaf(Tensor({1.0, 2.0, 3.0}, {3}));
    const Tensor& out = tape.forward(x);
    CHECK(out.data == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("sum of squares") {
    Tape tape;
    NodeId x = tape.leaf(Tensor({3.0, 4.0}, {2}));
    NodeId y = tape.sum(tape.square(x));
    CHECK(tape.forward(y).scalar() == doctest::Approx(25.0));
}

TEST_CASE("softmax symmetry") {
    Tape tape;
    NodeId x = tape.leaf(Tensor({0.0, 0.0}, {2}));
    NodeId y = tape.softmax(x);
    const Tensor& out = tape.forward(y);
    CHECK(out.data[0] == doctest::Approx(0.5));
    CHECK(out.data[1] == doctest::Approx(0.5));
}

TEST_CASE("backward of sum(square(x)) is 2x") {
    Tape tape;
    NodeId x = tape.leaf(Tensor({3.0, 4.0}, {2}), true);
    NodeId y = tape.sum(tape.square(x));
    tape.forward(y);
    tape.backward(y);
    CHECK(tape.grad(x).data[0] == doctest::Approx(6.0));
    CHECK(tape.grad(x).data[1] == doctest::Approx(8.0));
}

TEST_CASE("gradient of output w.r.t. an unused leaf is zero") {
    Tape tape;
    NodeId x = tape.leaf(Tensor({1.0, 1.0}, {2}), true);
    NodeId c = tape.leaf(Tensor({5.0}, {1}));
    NodeId y = tape.sum(c);
    tape.forward(y);
    tape.backward(y);
    CHECK(tape.grad(x).data == std::vector<double>{0.0, 0.0});
    (void)x;
}

TEST_CASE("backward before forward is rejected") {
    Tape tape;
    NodeId x = tape.leaf(Tensor({1.0}, {1}), true);
    NodeId y = tape.square(x);
    CHECK_THROWS_AS(tape.backward(y), std::logic_error);
}

TEST_CASE("shape mismatch is rejected with op name") {
    Tape tape;
    NodeId a = tape.leaf(Tensor({1.0, 2.0}, {2}));
    NodeId b = tape.leaf(Tensor({1.0, 2.0, 3.0}, {3}));
    CHECK_THROWS_WITH_AS(tape.add(a, b),
                         doctest::Contains("add: shape mismatch"),
                         std::invalid_argument);
}

TEST_CASE("grad_check: linear map is exact") {
    Tape tape;
    NodeId m = tape.leaf(Tensor({1.0, 2.0, 3.0, 4.0, 5.0, 6.0}, {2, 3}));
    NodeId x = tape.leaf(Tensor({0.3, -0.7, 1.1}, {3}), true);
    NodeId y = tape.sum(tape.matvec(m, x));
    CHECK(tape.grad_check(y, x, 1e-5) < 1e-10);
}

TEST_CASE("grad_check: quadratic") {
    Tape tape;
    NodeId x = tape.leaf(Tensor({0.5, -1.5, 2.0}, {3}), true);
    NodeId y = tape.sum(tape.square(x));
    CHECK(tape.grad_check(y, x, 1e-5) < 1e-8);
}

TEST_CASE("every primitive matches central differences at random points") {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> dist(-1.5, 1.5);
    auto rand_tensor = [&](std::vector<std::size_t> shape) {
        Tensor t(shape);
        for (auto& v : t.data) v = dist(rng);
        return t;
    };

    for (int trial = 0; trial < 10; ++trial) {
        // A composite touching add/sub/matvec/mean_rows/tanh/relu/softmax/
        // log/square/scale/pick/sum.
        Tape tape;
        NodeId x = tape.leaf(rand_tensor({3, 4}), true);
        NodeId d = tape.leaf(rand_tensor({3, 4}), true);
        NodeId m = tape.leaf(rand_tensor({4, 4}));
        NodeId pooled = tape.mean_rows(tape.add(x, d));
        NodeId h = tape.tanh(tape.matvec(m, pooled));
        NodeId r = tape.relu(tape.sub(h, pooled));
        NodeId p = tape.softmax(h);
        NodeId term1 = tape.log(tape.pick(p, 1));
        NodeId term2 = tape.sum(tape.square(r));
        NodeId y = tape.add(tape.scale(term1, -0.5), term2);
        CHECK(tape.grad_check(y, x, 1e-5) < 1e-4);
        CHECK(tape.grad_check(y, d, 1e-5) < 1e-4);
    }

    // Embed: gradient w.r.t. the matrix, with a repeated token.
    for (int trial = 0; trial < 10; ++trial) {
        Tape tape;
        NodeId w = tape.leaf(rand_tensor({3, 5}), true);
        NodeId e = tape.embed(w, {1, 4, 1});
        NodeId y = tape.sum(tape.square(tape.mean_rows(e)));
        CHECK(tape.grad_check(y, w, 1e-5) < 1e-4);
    }

    // KL between two softmax branches.
    for (int trial = 0; trial < 10; ++trial) {
        Tape tape;
        NodeId a = tape.leaf(rand_tensor({4}), true);
        NodeId b = tape.leaf(rand_tensor({4}), true);
        NodeId y = tape.kl_div(tape.softmax(a), tape.softmax(b));
        CHECK(tape.grad_check(y, a, 1e-5) < 1e-4);
        CHECK(tape.grad_check(y, b, 1e-5) < 1e-4);
    }
}

TEST_CASE("backward is linear in the seed") {
    Tape tape;
    NodeId x = tape.leaf(Tensor({0.4, -0.9, 1.7}, {3}), true);
    NodeId y = tape.sum(tape.square(tape.tanh(x)));
    tape.forward(y);
    tape.backward(y, Tensor({1.0}, {1}));
    const std::vector<double> g1 = tape.grad(x).data;
    tape.backward(y, Tensor({2.0}, {1}));
    const std::vector<double> g2 = tape.grad(x).data;
    for (std::size_t i = 0; i < g1.size(); ++i)
        CHECK(g2[i] == 2.0 * g1[i]);
}

TEST_CASE("forward+backward replay is bit-identical") {
    auto run = [] {
        Tape tape;
        NodeId x = tape.leaf(Tensor({0.1, 0.2, 0.3, 0.4}, {4}), true);
        NodeId y = tape.kl_div(tape.softmax(x), tape.softmax(tape.scale(x, 0.5)));
        tape.forward(y);
        tape.backward(y);
        return std::make_pair(tape.value(y).scalar(), tape.grad(x).data);
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("grad_check on a fuller composition stays under 1e-4") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    Tape tape;
    Tensor theta({20});
    for (auto& v : theta.data) v = dist(rng);
    NodeId t = tape.leaf(theta, true);
    NodeId m = tape.leaf([&] {
        Tensor mm({5, 20});
        for (auto& v : mm.data) v = dist(rng);
        return mm;
    }());
    NodeId p = tape.softmax(tape.matvec(m, t));
    NodeId y = tape.scale(tape.log(tape.pick(p, 2)), -1.0);
    CHECK(tape.grad_check(y, t, 1e-5) < 1e-4);
}
