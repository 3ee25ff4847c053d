#include <doctest.h>

#include <cmath>

#include "partfield/adam.hpp"
#include "partfield/random.hpp"

using namespace partfield;
using namespace partfield::ad;

TEST_CASE("zero gradient leaves parameters unchanged for all t") {
    Tensor p({2, 3}, {1, -2, 3, 0.5, -0.25, 7});
    Tensor p0 = p;
    Tensor g({2, 3});
    AdamState st;
    AdamConfig cfg;
    for (int step = 0; step < 10; ++step) adam_step(p, g, st, cfg);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == p0[i]);
    CHECK(st.t == 10);
}

TEST_CASE("one step from zero with unit gradient") {
    // Hand-computed oracle: m=0.1, v=0.001, mhat=1, vhat=1,
    // update = lr * 1 / (1 + eps), so param moves to about -lr.
    Tensor p = Tensor::scalar(0.0);
    Tensor g = Tensor::scalar(1.0);
    AdamState st;
    AdamConfig cfg;
    cfg.lr = 1e-3;
    adam_step(p, g, st, cfg);
    CHECK(p[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(st.t == 1);
}

TEST_CASE("positive gradient strictly decreases the parameter") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor p = Tensor::scalar(rng.normal());
        double before = p[0];
        Tensor g = Tensor::scalar(rng.uniform(0.01, 3.0));
        AdamState st;
        AdamConfig cfg;
        adam_step(p, g, st, cfg);
        CHECK(p[0] < before);
    }
}

TEST_CASE("second moment stays nonnegative and shapes are enforced") {
    Tensor p({1, 4});
    Tensor g({1, 4}, {0.3, -0.2, 0.0, 5.0});
    AdamState st;
    AdamConfig cfg;
    for (int i = 0; i < 5; ++i) adam_step(p, g, st, cfg);
    for (std::size_t i = 0; i < st.v.size(); ++i) CHECK(st.v[i] >= 0.0);

    Tensor bad({2, 2});
    CHECK_THROWS(adam_step(p, bad, st, cfg));
}
