#include <doctest.h>

#include <cmath>
#include <vector>

#include "rulkit/adam.hpp"
#include "rulkit/finite_diff.hpp"
#include "rulkit/rng.hpp"
#include "rulkit/tape.hpp"
#include "rulkit/tensor.hpp"

using namespace rulkit;

namespace {

// Naive triple-loop product, the independent matmul oracle.
TensorD naive_matmul(const TensorD& a, const TensorD& b) {
    TensorD c = TensorD::zeros({a.dim(0), b.dim(1)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < b.dim(1); ++j)
            for (std::size_t k = 0; k < a.dim(1); ++k)
                c(i, j) += a(i, k) * b(k, j);
    return c;
}

TensorD random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1,
                      double hi = 1) {
    TensorD t = TensorD::zeros(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Scalarize a matrix/vector output so gradient checks can seed from a scalar.
Tape<double>::Var scalarize(Tape<double>& t, Tape<double>::Var v) {
    const auto& val = t.val(v);
    if (val.rank() == 2) return t.mean_all(t.mean_rows(v));
    if (val.size() == 1) return v;
    return t.mean_all(v);
}

// Generic first-order gradient check of a scalar-valued tape program.
// builder() receives leaves matching `inputs` and returns the scalar output.
template <typename Builder>
double gradcheck(const std::vector<TensorD>& inputs, Builder&& builder) {
    Tape<double> tape;
    std::vector<Tape<double>::Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
    auto out = builder(tape, leaves);
    tape.backward(out);

    std::vector<double> flat;
    for (const auto& t : inputs)
        for (double v : t.data()) flat.push_back(v);

    auto f = [&](const std::vector<double>& x) {
        std::vector<TensorD> in = inputs;
        std::size_t k = 0;
        for (auto& t : in)
            for (auto& v : t.data()) v = x[k++];
        Tape<double> tp;
        std::vector<Tape<double>::Var> lv;
        for (const auto& t : in) lv.push_back(tp.leaf(t));
        return tp.val(builder(tp, lv))(0);
    };
    const auto numeric = finite_diff(f, flat, 1e-6);

    double max_rel = 0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const TensorD g = tape.grad(leaves[i]);
        for (std::size_t j = 0; j < g.size(); ++j, ++k) {
            const double a = g(j);
            const double n = numeric[k];
            max_rel = std::max(max_rel, std::abs(a - n) /
                                            std::max({std::abs(a), std::abs(n),
                                                      1e-6}));
        }
    }
    return max_rel;
}

} // namespace

TEST_CASE("matmul basics") {
    Tape<double> t;
    auto eye = t.constant(TensorD::matrix({{1, 0}, {0, 1}}));
    auto m = t.constant(TensorD::matrix({{1, 2}, {3, 4}}));
    const TensorD got = t.val(t.matmul(eye, m));
    CHECK(got == TensorD::matrix({{1, 2}, {3, 4}}));

    auto a = t.constant(TensorD::matrix({{1, 2}}));
    auto b = t.constant(TensorD::matrix({{3}, {4}}));
    CHECK(t.val(t.matmul(a, b))(0, 0) == doctest::Approx(11).epsilon(1e-15));

    CHECK_THROWS_AS(t.matmul(m, a), ShapeError);
}

TEST_CASE("matmul agrees with the naive oracle to 1e-12") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.index(16);
        const std::size_t k = 1 + rng.index(16);
        const std::size_t n = 1 + rng.index(16);
        const TensorD a = random_tensor({m, k}, rng);
        const TensorD b = random_tensor({k, n}, rng);
        Tape<double> t;
        const TensorD got = t.val(t.matmul(t.constant(a), t.constant(b)));
        const TensorD want = naive_matmul(a, b);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(std::abs(got(i) - want(i)) < 1e-12);
    }
}

TEST_CASE("matmul vector forms match explicit sums") {
    Rng rng(11);
    const TensorD a = random_tensor({5, 3}, rng);
    const TensorD v = random_tensor({3}, rng);
    Tape<double> t;
    auto got = t.val(t.matmul(t.constant(a), t.constant(v)));
    for (std::size_t i = 0; i < 5; ++i) {
        double want = 0;
        for (std::size_t k = 0; k < 3; ++k) want += a(i, k) * v(k);
        CHECK(got(i) == doctest::Approx(want).epsilon(1e-14));
    }
    const TensorD u = random_tensor({5}, rng);
    auto got2 = t.val(t.matmul(t.constant(u), t.constant(a)));
    for (std::size_t j = 0; j < 3; ++j) {
        double want = 0;
        for (std::size_t i = 0; i < 5; ++i) want += u(i) * a(i, j);
        CHECK(got2(j) == doctest::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("softmax closed forms") {
    Tape<double> t;
    auto s1 = t.val(t.softmax_lastdim(t.constant(TensorD::vector({0, 0}))));
    CHECK(s1(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s1(1) == doctest::Approx(0.5).epsilon(1e-15));

    auto s2 = t.val(
        t.softmax_lastdim(t.constant(TensorD::vector({0.0, std::log(3.0)}))));
    CHECK(s2(0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s2(1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax is invariant to constant shifts") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const TensorD x = random_tensor({6}, rng, -5, 5);
        TensorD shifted = x;
        const double c = rng.uniform(-30, 30);
        for (auto& v : shifted.data()) v += c;
        Tape<double> t;
        auto a = t.val(t.softmax_lastdim(t.constant(x)));
        auto b = t.val(t.softmax_lastdim(t.constant(shifted)));
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(std::abs(a(i) - b(i)) < 1e-12);
    }
}

TEST_CASE("softmax rows sum to one for |x| <= 50") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const TensorD x = random_tensor({4, 7}, rng, -50, 50);
        {
            Tape<double> t;
            auto y = t.val(t.softmax_lastdim(t.constant(x)));
            for (std::size_t i = 0; i < 4; ++i) {
                double s = 0;
                for (std::size_t j = 0; j < 7; ++j) s += y(i, j);
                CHECK(std::abs(s - 1.0) < 1e-12);
            }
        }
        {
            Tape<float> t;
            auto y = t.val(t.softmax_lastdim(t.constant(x.cast<float>())));
            for (std::size_t i = 0; i < 4; ++i) {
                float s = 0;
                for (std::size_t j = 0; j < 7; ++j) s += y(i, j);
                CHECK(std::abs(double(s) - 1.0) < 1e-6);
            }
        }
    }
}

TEST_CASE("causal softmax rows are prefix distributions") {
    Rng rng(9);
    const TensorD x = random_tensor({5, 5}, rng, -3, 3);
    Tape<double> t;
    auto y = t.val(t.softmax_lastdim(t.constant(x), true));
    for (std::size_t i = 0; i < 5; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 5; ++j) {
            if (j > i) CHECK(y(i, j) == 0.0);
            s += y(i, j);
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(
        t.softmax_lastdim(t.constant(random_tensor({3, 4}, rng)), true),
        ShapeError);
}

TEST_CASE("layer_norm closed forms") {
    Tape<double> t;
    auto gamma = t.constant(TensorD::vector({1, 1}));
    auto beta = t.constant(TensorD::vector({0, 0}));

    // constant row: variance 0, so 0/sqrt(eps) -> zeros
    auto y0 = t.val(t.layer_norm(t.constant(TensorD::vector({3, 3})), gamma,
                                 beta, 1e-5));
    CHECK(y0(0) == 0.0);
    CHECK(y0(1) == 0.0);

    // [1,-1]: mean 0, var 1 -> +-1/sqrt(1+eps)
    auto y1 = t.val(t.layer_norm(t.constant(TensorD::vector({1, -1})), gamma,
                                 beta, 1e-5));
    const double want = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y1(0) == doctest::Approx(want).epsilon(1e-12));
    CHECK(y1(1) == doctest::Approx(-want).epsilon(1e-12));
    CHECK(std::abs(want - 0.999995) < 1e-6);
}

TEST_CASE("layer_norm output mean equals beta when gamma is one") {
    Rng rng(13);
    Tape<double> t;
    auto gamma = t.constant(TensorD::full({6}, 1.0));
    auto beta = t.constant(TensorD::full({6}, 0.3));
    auto y = t.val(t.layer_norm(t.constant(random_tensor({4, 6}, rng, -10, 10)),
                                gamma, beta, 1e-5));
    for (std::size_t i = 0; i < 4; ++i) {
        double mean = 0;
        for (std::size_t j = 0; j < 6; ++j) mean += y(i, j);
        mean /= 6.0;
        CHECK(mean == doctest::Approx(0.3).epsilon(1e-9));
    }
}

TEST_CASE("backward: analytic gradients of simple losses") {
    {
        // loss = sum(theta) -> gradient of ones
        Tape<double> t;
        auto theta = t.leaf(TensorD::vector({1, 2, 3}));
        auto loss = t.scale(t.mean_all(theta), 3.0);
        t.backward(loss);
        const TensorD g = t.grad(theta);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(g(i) == doctest::Approx(1.0).epsilon(1e-14));
    }
    {
        // loss = ||theta||^2, theta = [1,2] -> [2,4]
        Tape<double> t;
        auto theta = t.leaf(TensorD::vector({1, 2}));
        auto loss = t.scale(t.mean_all(t.mul(theta, theta)), 2.0);
        t.backward(loss);
        const TensorD g = t.grad(theta);
        CHECK(g(0) == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(g(1) == doctest::Approx(4.0).epsilon(1e-14));
    }
}

TEST_CASE("backward called twice is a usage error") {
    Tape<double> t;
    auto theta = t.leaf(TensorD::vector({1.0}));
    auto loss = t.mean_all(theta);
    t.backward(loss);
    CHECK_THROWS_AS(t.backward(loss), UsageError);
}

TEST_CASE("per-primitive gradients match finite differences") {
    Rng rng(17);
    const double tol = 1e-4;  // observed errors are far smaller

    SUBCASE("add same shape") {
        const auto in = std::vector<TensorD>{random_tensor({3, 4}, rng),
                                             random_tensor({3, 4}, rng)};
        CHECK(gradcheck(in, [](auto& t, const auto& l) {
                  return scalarize(t, t.add(l[0], l[1]));
              }) < tol);
    }
    SUBCASE("add row broadcast") {
        const auto in = std::vector<TensorD>{random_tensor({3, 4}, rng),
                                             random_tensor({4}, rng)};
        CHECK(gradcheck(in, [](auto& t, const auto& l) {
                  return scalarize(t, t.add(l[0], l[1]));
              }) < tol);
    }
    SUBCASE("scale and mul") {
        const auto in = std::vector<TensorD>{random_tensor({5}, rng),
                                             random_tensor({5}, rng)};
        CHECK(gradcheck(in, [](auto& t, const auto& l) {
                  return scalarize(t, t.mul(t.scale(l[0], 1.7), l[1]));
              }) < tol);
    }
    SUBCASE("matmul matrix-matrix") {
        const auto in = std::vector<TensorD>{random_tensor({3, 4}, rng),
                                             random_tensor({4, 2}, rng)};
        CHECK(gradcheck(in, [](auto& t, const auto& l) {
                  return scalarize(t, t.matmul(l[0], l[1]));
              }) < tol);
    }
    SUBCASE("matmul matrix-vector and vector-matrix") {
        const auto in = std::vector<TensorD>{random_tensor({3, 4}, rng),
                                             random_tensor({4}, rng),
                                             random_tensor({3}, rng)};
        CHECK(gradcheck(in, [](auto& t, const auto& l) {
                  auto mv = t.matmul(l[0], l[1]);  // {3}
                  auto vm = t.matmul(l[2], l[0]);  // {4}
                  return t.add(scalarize(t, mv), scalarize(t, vm));
              }) < tol);
    }
    SUBCASE("transpose") {
        const auto in = std::vector<TensorD>{random_tensor({3, 5}, rng)};
        CHECK(gradcheck(in, [](auto& t, const auto& l) {
                  return scalarize(t, t.transpose(l[0]));
              }) < tol);
    }
    SUBCASE("relu away from the kink") {
        TensorD x = random_tensor({4, 4}, rng);
        for (auto& v : x.data())
            if (std::abs(v) < 0.05) v = 0.1;  // keep clear of x = 0
        CHECK(gradcheck({x}, [](auto& t, const auto& l) {
                  return scalarize(t, t.relu(l[0]));
              }) < tol);
    }
    SUBCASE("gelu") {
        const auto in = std::vector<TensorD>{random_tensor({4, 4}, rng, -2, 2)};
        CHECK(gradcheck(in, [](auto& t, const auto& l) {
                  return scalarize(t, t.gelu(l[0]));
              }) < tol);
    }
    SUBCASE("softmax, plain and causal") {
        const auto in = std::vector<TensorD>{random_tensor({4, 4}, rng, -2, 2)};
        CHECK(gradcheck(in, [](auto& t, const auto& l) {
                  return scalarize(t, t.softmax_lastdim(l[0]));
              }) < tol);
        CHECK(gradcheck(in, [](auto& t, const auto& l) {
                  return scalarize(t, t.softmax_lastdim(l[0], true));
              }) < tol);
    }
    SUBCASE("layer_norm including gamma and beta") {
        const auto in = std::vector<TensorD>{random_tensor({3, 6}, rng, -2, 2),
                                             random_tensor({6}, rng, 0.5, 1.5),
                                             random_tensor({6}, rng)};
        CHECK(gradcheck(in, [](auto& t, const auto& l) {
                  return scalarize(t, t.layer_norm(l[0], l[1], l[2], 1e-5));
              }) < tol);
    }
    SUBCASE("means, concat, slice") {
        const auto in = std::vector<TensorD>{random_tensor({3, 4}, rng),
                                             random_tensor({3, 2}, rng)};
        CHECK(gradcheck(in, [](auto& t, const auto& l) {
                  auto cat = t.concat_lastdim({l[0], l[1]});  // {3,6}
                  auto sl = t.slice_cols(cat, 1, 4);          // {3,4}
                  return t.mean_all(t.mean_rows(sl));
              }) < tol);
    }
}

TEST_CASE("non-finite results raise NumericsError") {
    {
        Tape<double> t;
        auto big = t.constant(TensorD::vector({1e200}));
        CHECK_THROWS_AS(t.mul(big, big), NumericsError);
    }
    {
        Tape<float> t;
        auto big = t.constant(Tensor<float>::vector({1e30f}));
        CHECK_THROWS_AS(t.mul(big, big), NumericsError);
    }
}

TEST_CASE("finite_diff closed forms") {
    auto square = [](const std::vector<double>& x) { return x[0] * x[0]; };
    const auto g = finite_diff(square, {3.0}, 1e-5);
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-8));

    auto sum_sq = [](const std::vector<double>& x) {
        double s = 0;
        for (double v : x) s += v * v;
        return s;
    };
    const auto g2 = finite_diff(sum_sq, {1.0, 2.0}, 1e-5);
    CHECK(g2[0] == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(g2[1] == doctest::Approx(4.0).epsilon(1e-8));

    CHECK_THROWS_AS(finite_diff(square, {1.0}, 0.0), ConfigError);
}

TEST_CASE("adam_step closed forms") {
    SUBCASE("zero gradient, zero lambda: identity at any reachable state") {
        ParameterStore<double> params;
        params.insert("w", TensorD::vector({0.7, -0.2}));
        const auto before = params.at("w");
        AdamState<double> st;
        std::map<std::string, TensorD> zero{{"w", TensorD::zeros({2})}};
        for (int i = 0; i < 5; ++i) adam_step(params, zero, st, 0.01, 0.0);
        CHECK(params.at("w") == before);
        CHECK(st.at("w").step == 5);
    }
    SUBCASE("first step moves by ~eta*sign(g)") {
        ParameterStore<double> params;
        params.insert("w", TensorD::vector({1.0}));
        AdamState<double> st;
        std::map<std::string, TensorD> g{{"w", TensorD::vector({0.5})}};
        adam_step(params, g, st, 0.01, 0.0);
        CHECK(params.at("w")(0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    }
    SUBCASE("weight decay enters as 2*lambda*theta") {
        ParameterStore<double> params;
        params.insert("w", TensorD::vector({1.0}));
        AdamState<double> st;
        std::map<std::string, TensorD> zero{{"w", TensorD::zeros({1})}};
        // effective gradient 2*0.5*1 = 1.0 -> first-step update ~ -eta
        adam_step(params, zero, st, 0.01, 0.5);
        CHECK(params.at("w")(0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    }
    SUBCASE("lambda > 0 with zero data gradient shrinks magnitudes") {
        ParameterStore<double> params;
        params.insert("w", TensorD::vector({0.5, -0.3}));
        AdamState<double> st;
        std::map<std::string, TensorD> zero{{"w", TensorD::zeros({2})}};
        double prev0 = 0.5, prev1 = 0.3;
        for (int i = 0; i < 10; ++i) {
            adam_step(params, zero, st, 1e-3, 0.1);
            CHECK(std::abs(params.at("w")(0)) < prev0);
            CHECK(std::abs(params.at("w")(1)) < prev1);
            prev0 = std::abs(params.at("w")(0));
            prev1 = std::abs(params.at("w")(1));
        }
    }
    SUBCASE("shape mismatch is rejected") {
        ParameterStore<double> params;
        params.insert("w", TensorD::vector({1.0}));
        AdamState<double> st;
        std::map<std::string, TensorD> g{{"w", TensorD::zeros({2})}};
        CHECK_THROWS_AS(adam_step(params, g, st, 0.01, 0.0), ShapeError);
    }
}
