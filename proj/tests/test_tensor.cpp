#include <doctest.h>

#include "reidkit/tensor.hpp"

using namespace reidkit;

TEST_CASE("tensor construction enforces shape/data consistency") {
    CHECK_THROWS_AS(Tensor::from({2, 3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
    Tensor t = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK(t.numel() == 4);
    CHECK_THROWS_AS(t.item(), ShapeError);
    CHECK(Tensor::scalar(5.0).item() == 5.0);
}

TEST_CASE("relu forward matches its definition") {
    Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0});
    CHECK(relu(x).values() == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("relu backward uses subgradient 0 at 0") {
    Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0}, true);
    Graph g;
    Tensor loss;
    {
        Graph::Scope scope(g);
        loss = sum(relu(x));
    }
    g.backward(loss);
    CHECK(x.grad() == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("global average pool over one 2x2 map") {
    Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor y = global_avg_pool(x);
    CHECK(y.shape() == std::vector<std::size_t>{1, 1});
    CHECK(y.values()[0] == doctest::Approx(2.5));
}

TEST_CASE("1x1 identity kernel with stride 2 subsamples a 4x4 map") {
    std::vector<double> pixels(16);
    for (std::size_t i = 0; i < 16; ++i) pixels[i] = static_cast<double>(i);
    Tensor x = Tensor::from({1, 1, 4, 4}, pixels);
    Tensor w = Tensor::from({1, 1, 1, 1}, {1.0});
    Tensor y = conv2d(x, w, 2, 0);
    CHECK(y.shape() == std::vector<std::size_t>{1, 1, 2, 2});
    CHECK(y.values() == std::vector<double>{0, 2, 8, 10});
}

TEST_CASE("shape mismatches name both shapes") {
    Tensor a = Tensor::zeros({3, 4});
    Tensor b = Tensor::zeros({5, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[3, 4]"), ShapeError);
    CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[5, 2]"), ShapeError);
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({1, 1, 3, 3}), 3, 1),
                    ShapeError);
}

TEST_CASE("backward of sum(x*x) doubles the input") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Graph g;
    Tensor loss;
    {
        Graph::Scope scope(g);
        loss = sum(mul(x, x));
    }
    g.backward(loss);
    CHECK(x.grad() == std::vector<double>{2.0, 4.0});
    CHECK(loss.item() == doctest::Approx(5.0));
}

TEST_CASE("backward via matmul with a reused input accumulates") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Graph g;
    Tensor loss;
    {
        Graph::Scope scope(g);
        loss = matmul(reshape(x, {1, 2}), reshape(x, {2, 1}));
    }
    g.backward(loss);
    CHECK(x.grad() == std::vector<double>{2.0, 4.0});
}

TEST_CASE("backward rejects non-scalar losses") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Graph g;
    Tensor y;
    {
        Graph::Scope scope(g);
        y = mul(x, x);
    }
    CHECK_THROWS_AS(g.backward(y), ShapeError);
}

TEST_CASE("two backward passes with reset gradients agree exactly") {
    Tensor x = Tensor::from({2, 2}, {0.3, -1.2, 2.0, 0.7}, true);
    Tensor w = Tensor::from({2, 2}, {1.5, 0.2, -0.4, 0.9}, true);
    Graph g;
    Tensor loss;
    {
        Graph::Scope scope(g);
        loss = sum(relu(matmul(x, w)));
    }
    g.backward(loss);
    const auto gx1 = x.grad();
    const auto gw1 = w.grad();
    g.zero_grads();
    g.backward(loss);
    CHECK(x.grad() == gx1);
    CHECK(w.grad() == gw1);
}

TEST_CASE("forward evaluation is bit-deterministic") {
    Tensor x = Tensor::from({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    Tensor w = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
    const auto first = matmul(x, w).values();
    for (int i = 0; i < 3; ++i) CHECK(matmul(x, w).values() == first);
}

TEST_CASE("concat along both axes with backward routing") {
    Tensor a = Tensor::from({1, 2}, {1.0, 2.0}, true);
    Tensor b = Tensor::from({1, 2}, {3.0, 4.0}, true);
    Tensor rows = concat({a, b}, 0);
    CHECK(rows.shape() == std::vector<std::size_t>{2, 2});
    CHECK(rows.values() == std::vector<double>{1, 2, 3, 4});
    Tensor cols = concat({a, b}, 1);
    CHECK(cols.shape() == std::vector<std::size_t>{1, 4});
    CHECK(cols.values() == std::vector<double>{1, 2, 3, 4});

    Graph g;
    Tensor loss;
    {
        Graph::Scope scope(g);
        loss = sum(mul(concat({a, b}, 1), Tensor::from({1, 4}, {1, 2, 3, 4})));
    }
    g.backward(loss);
    CHECK(a.grad() == std::vector<double>{1.0, 2.0});
    CHECK(b.grad() == std::vector<double>{3.0, 4.0});
}

TEST_CASE("max_pool2d picks the first maximum on ties") {
    Tensor x = Tensor::from({1, 1, 2, 2}, {7.0, 7.0, 1.0, 0.0}, true);
    Graph g;
    Tensor loss;
    {
        Graph::Scope scope(g);
        loss = sum(max_pool2d(x, 2, 2));
    }
    CHECK(loss.item() == 7.0);
    g.backward(loss);
    CHECK(x.grad() == std::vector<double>{1.0, 0.0, 0.0, 0.0});
}

TEST_CASE("batch_norm matches the spec examples") {
    SUBCASE("identity parameters in eval mode") {
        BNState state(3);
        state.eps = 0.0;
        Tensor x = Tensor::from({2, 3}, {1, -2, 3, 0.5, 0.25, -0.125});
        Tensor y = batch_norm(x, state, BNMode::Eval);
        CHECK(y.values() == x.values());
    }
    SUBCASE("train mode normalizes {0,2} to {-1,+1}") {
        BNState state(1);
        state.eps = 1e-12;
        Tensor x = Tensor::from({2, 1}, {0.0, 2.0});
        Tensor y = batch_norm(x, state, BNMode::Train);
        CHECK(y.values()[0] == doctest::Approx(-1.0));
        CHECK(y.values()[1] == doctest::Approx(1.0));
    }
    SUBCASE("running mean update with momentum 0.1") {
        BNState state(1);
        Tensor x = Tensor::from({2, 1}, {1.0, 1.0});  // batch mean 1
        batch_norm(x, state, BNMode::Train);
        CHECK(state.running_mean[0] == doctest::Approx(0.1).epsilon(1e-12));
        // biased batch variance is 0 here
        CHECK(state.running_var[0] == doctest::Approx(0.9).epsilon(1e-12));
    }
    SUBCASE("batch size 1 is rejected in train mode") {
        BNState state(2);
        Tensor x = Tensor::from({1, 2}, {1.0, 2.0});
        CHECK_THROWS_AS(batch_norm(x, state, BNMode::Train), ShapeError);
        CHECK_NOTHROW(batch_norm(x, state, BNMode::Eval));
    }
}

TEST_CASE("eval-mode batch_norm leaves running statistics untouched") {
    BNState state(2);
    state.running_mean = {0.5, -0.5};
    state.running_var = {2.0, 3.0};
    Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
    batch_norm(x, state, BNMode::Eval);
    CHECK(state.running_mean == std::vector<double>{0.5, -0.5});
    CHECK(state.running_var == std::vector<double>{2.0, 3.0});
}
