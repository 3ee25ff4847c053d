#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "partfield/random.hpp"
#include "partfield/tape.hpp"

using namespace partfield;
using namespace partfield::ad;

namespace {

Tensor random_tensor(int r, int c, Rng& rng, double scale = 1.0) {
    Tensor t({r, c});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, scale);
    return t;
}

// Central finite differences of a scalar-valued graph w.r.t. every entry
// of every input tensor. The graph builder is re-run per perturbation, so
// this is fully independent of the reverse pass it checks.
struct GradCheck {
    std::function<Var(Tape&, std::vector<Var>&)> build;
    std::vector<Tensor> inputs;
    double h = 1e-5;
    double rel_tol = 1e-4;

    double eval(const std::vector<Tensor>& ins) const {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& t : ins) vars.push_back(tape.leaf(t, true));
        Var loss = build(tape, vars);
        return loss.value()[0];
    }

    void run() const {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
        Var loss = build(tape, vars);
        tape.backward(loss);

        for (std::size_t k = 0; k < inputs.size(); ++k) {
            const Tensor& analytic = tape.grad(vars[k]);
            REQUIRE(!analytic.empty());
            for (std::size_t i = 0; i < inputs[k].size(); ++i) {
                auto perturbed = inputs;
                perturbed[k][i] += h;
                double fp = eval(perturbed);
                perturbed[k][i] -= 2 * h;
                double fm = eval(perturbed);
                double numeric = (fp - fm) / (2 * h);
                double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
                CHECK(std::abs(numeric - analytic[i]) / denom < rel_tol);
            }
        }
    }
};

}  // namespace

TEST_CASE("square function gradient at x=3 is 6") {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(3.0), true);
    Var y = mul(x, x);
    tape.backward(y);
    CHECK(tape.grad(x)[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("sin gradient at x=0 is 1") {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(0.0), true);
    Var y = sin(x);
    tape.backward(y);
    CHECK(tape.grad(x)[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("three-layer sine MLP matches finite differences") {
    Rng rng(7);
    const int in = 3, hidden = 8;
    GradCheck gc;
    gc.inputs = {random_tensor(4, in, rng, 0.5),      // x batch
                 random_tensor(in, hidden, rng, 0.5),  // W1
                 random_tensor(1, hidden, rng, 0.1),   // b1
                 random_tensor(hidden, hidden, rng, 0.4),
                 random_tensor(1, hidden, rng, 0.1),
                 random_tensor(hidden, 1, rng, 0.4),
                 random_tensor(1, 1, rng, 0.1)};
    gc.build = [](Tape& t, std::vector<Var>& v) {
        Var h1 = sin(add(matmul(v[0], v[1]), v[2]));
        Var h2 = sin(add(matmul(h1, v[3]), v[4]));
        Var out = add(matmul(h2, v[5]), v[6]);
        return mean(mul(out, out));
    };
    gc.run();
}

TEST_CASE("primitive ops match finite differences on random trials") {
    Rng rng(11);
    using Builder = std::function<Var(Tape&, std::vector<Var>&)>;
    struct Case {
        const char* name;
        int n_inputs;
        Builder build;
        double scale;
    };
    // Each builder reduces to a scalar via a fixed random-weighted sum so
    // every output entry influences the loss.
    auto weighted = [](Tape& t, Var v, Rng& r) {
        const Tensor& val = v.value();
        Tensor w({val.rows(), val.cols()});
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = r.uniform(-1.0, 1.0);
        return sum(mul(v, t.constant(w)));
    };

    std::vector<Case> cases = {
        {"add", 2, [](Tape& t, std::vector<Var>& v) { return add(v[0], v[1]); }, 1.0},
        {"sub", 2, [](Tape& t, std::vector<Var>& v) { return sub(v[0], v[1]); }, 1.0},
        {"mul", 2, [](Tape& t, std::vector<Var>& v) { return mul(v[0], v[1]); }, 1.0},
        {"matmul", 2, [](Tape& t, std::vector<Var>& v) { return matmul(v[0], v[1]); }, 0.7},
        {"sin", 1, [](Tape& t, std::vector<Var>& v) { return sin(v[0]); }, 1.5},
        {"cos", 1, [](Tape& t, std::vector<Var>& v) { return cos(v[0]); }, 1.5},
        {"exp", 1, [](Tape& t, std::vector<Var>& v) { return exp(v[0]); }, 0.5},
        {"sigmoid", 1, [](Tape& t, std::vector<Var>& v) { return sigmoid(v[0]); }, 1.0},
        {"leaky_relu", 1,
         [](Tape& t, std::vector<Var>& v) { return leaky_relu(v[0], 0.2); }, 1.0},
        {"scale", 1, [](Tape& t, std::vector<Var>& v) { return scale(v[0], -2.5); }, 1.0},
        {"row_sum", 1, [](Tape& t, std::vector<Var>& v) { return row_sum(v[0]); }, 1.0},
        {"row_l2norm", 1, [](Tape& t, std::vector<Var>& v) { return row_l2norm(v[0]); }, 1.0},
        {"dot_rows", 2, [](Tape& t, std::vector<Var>& v) { return dot_rows(v[0], v[1]); }, 1.0},
        {"slice_cols", 1,
         [](Tape& t, std::vector<Var>& v) { return slice_cols(v[0], 1, 2); }, 1.0},
        {"row", 1, [](Tape& t, std::vector<Var>& v) { return row(v[0], 2); }, 1.0},
    };

    int trials = 0;
    for (const auto& c : cases) {
        for (int rep = 0; rep < 7; ++rep) {
            ++trials;
            std::uint64_t sub = rng.next();
            GradCheck gc;
            const int m = 3 + rep % 3, n = 4;
            if (std::string(c.name) == "matmul") {
                gc.inputs = {random_tensor(m, n, rng, c.scale), random_tensor(n, 3, rng, c.scale)};
            } else {
                for (int k = 0; k < c.n_inputs; ++k)
                    gc.inputs.push_back(random_tensor(m, n, rng, c.scale));
            }
            gc.build = [&c, sub, &weighted](Tape& t, std::vector<Var>& v) {
                Rng wr(sub);
                return weighted(t, c.build(t, v), wr);
            };
            gc.run();
        }
    }
    CHECK(trials >= 100);
}

TEST_CASE("broadcast against row vector and scalar") {
    Rng rng(3);
    for (auto op : {0, 1, 2}) {
        GradCheck gc;
        gc.inputs = {random_tensor(5, 4, rng), random_tensor(1, 4, rng)};
        gc.build = [op](Tape& t, std::vector<Var>& v) {
            Var r = op == 0 ? add(v[0], v[1]) : op == 1 ? sub(v[0], v[1]) : mul(v[0], v[1]);
            return sum(mul(r, r));
        };
        gc.run();

        GradCheck gs;
        gs.inputs = {random_tensor(5, 4, rng), Tensor::scalar(rng.normal())};
        gs.build = gc.build;
        gs.run();
    }
}

TEST_CASE("abs and clamp subgradients away from kinks") {
    GradCheck gc;
    gc.inputs = {Tensor({2, 2}, {0.5, -0.7, 1.3, -2.0})};
    gc.build = [](Tape& t, std::vector<Var>& v) { return sum(abs(v[0])); };
    gc.run();

    GradCheck gk;
    gk.inputs = {Tensor({2, 2}, {0.05, -0.7, 0.02, -2.0})};
    gk.build = [](Tape& t, std::vector<Var>& v) { return sum(clamp(v[0], -0.1, 0.1)); };
    gk.run();
}

TEST_CASE("gather and concat route gradients to the right slots") {
    Tape tape;
    Var a = tape.leaf(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}), true);
    std::vector<int> idx = {2, 0, 2};
    Var g = gather_rows(a, idx);
    tape.backward(sum(g));
    const Tensor& ga = tape.grad(a);
    CHECK(ga.at(0, 0) == 1.0);
    CHECK(ga.at(1, 0) == 0.0);
    CHECK(ga.at(2, 0) == 2.0);

    Tape t2;
    Var p = t2.leaf(Tensor({2, 2}, {1, 1, 1, 1}), true);
    Var q = t2.leaf(Tensor({2, 3}, {2, 2, 2, 2, 2, 2}), true);
    std::vector<Var> parts = {p, q};
    Var cat = concat_cols(parts);
    CHECK(cat.value().cols() == 5);
    t2.backward(sum(slice_cols(cat, 2, 3)));
    CHECK(t2.grad(p).at(0, 0) == 0.0);
    CHECK(t2.grad(q).at(0, 0) == 1.0);
}

TEST_CASE("backward of a sum of losses equals sum of backwards") {
    Rng rng(21);
    Tensor x0 = random_tensor(4, 3, rng);
    auto grad_of = [&](int which) {
        Tape tape;
        Var x = tape.leaf(x0, true);
        Var l1 = mean(mul(x, x));
        Var l2 = mean(sin(x));
        Var loss = which == 0 ? l1 : which == 1 ? l2 : add(l1, l2);
        tape.backward(loss);
        return tape.grad(x);
    };
    Tensor g1 = grad_of(0), g2 = grad_of(1), g12 = grad_of(2);
    for (std::size_t i = 0; i < g12.size(); ++i)
        CHECK(g12[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-14));
}

TEST_CASE("non-scalar loss and non-finite loss are errors") {
    Tape tape;
    Var x = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}), true);
    CHECK_THROWS(tape.backward(x));

    Tape t2;
    Var y = t2.leaf(Tensor::scalar(0.0), true);
    Var bad = log(y);  // -inf
    CHECK_THROWS(t2.backward(bad));
}

TEST_CASE("finite-check tape flags NaN mid-graph") {
    Tape tape(/*check_finite=*/true);
    Var x = tape.leaf(Tensor::scalar(-1.0), true);
    CHECK_THROWS(sqrt(x));
}

TEST_CASE("tape is reusable only after clear") {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(2.0), true);
    tape.backward(mul(x, x));
    CHECK(tape.grad(x)[0] == doctest::Approx(4.0));
    tape.clear();
    CHECK(tape.size() == 0);
}
