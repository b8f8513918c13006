#include <catch_amalgamated.hpp>

#include "pqvae/adam.hpp"
#include "pqvae/net.hpp"
#include "testutil.hpp"

using namespace pqvae;

TEST_CASE("forward identity layer passes input through") {
    DenseNet net = make_identity_net(3);
    Tensor batch = Tensor::row_major(1, 3);
    batch.data = {1.0, 2.0, 3.0};
    auto res = forward(net, batch);
    CHECK(res.output.data == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("forward zero weights yields the bias") {
    DenseNet net;
    DenseLayer layer;
    layer.weight = Tensor::row_major(2, 3);
    layer.bias = Tensor({2});
    layer.bias.data = {0.5, -1.5};
    net.layers.push_back(layer);

    testutil::Rng rng(7);
    Tensor batch = testutil::random_tensor({4, 3}, rng);
    auto res = forward(net, batch);
    for (std::size_t r = 0; r < 4; ++r) {
        CHECK(res.output(r, 0) == 0.5);
        CHECK(res.output(r, 1) == -1.5);
    }
}

TEST_CASE("forward matches direct matrix arithmetic on a fixed seed") {
    testutil::Rng rng(42);
    Rng init = Rng::with_salt(42, 9);
    DenseNet net = make_mlp(5, {6}, 4, init);
    Tensor batch = testutil::random_tensor({3, 5}, rng);

    Tensor hidden = testutil::oracle_dense(batch, net.layers[0].weight, net.layers[0].bias, true);
    Tensor expected = testutil::oracle_dense(hidden, net.layers[1].weight, net.layers[1].bias, false);

    auto res = forward(net, batch);
    for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(res.output.data[i] == Catch::Approx(expected.data[i]).margin(1e-12));

    auto res2 = forward(net, batch);
    CHECK(res.output.data == res2.output.data);  // deterministic
}

TEST_CASE("forward rejects shape mismatch") {
    Rng init = Rng::with_salt(1, 9);
    DenseNet net = make_mlp(5, {}, 2, init);
    Tensor bad = Tensor::row_major(3, 4);
    CHECK_THROWS_AS(forward(net, bad), Error);
}

TEST_CASE("backward of a linear map gives the outer-product weight gradient") {
    DenseNet net;
    DenseLayer layer;
    layer.weight = Tensor::row_major(2, 3);
    layer.weight.data = {1.0, -1.0, 2.0, 0.5, 0.25, -2.0};
    layer.bias = Tensor({2});
    net.layers.push_back(layer);

    Tensor x = Tensor::row_major(1, 3);
    x.data = {3.0, -1.0, 2.0};
    auto fwd = forward(net, x);

    Tensor gy = Tensor::row_major(1, 2);
    gy.data = {0.7, -0.3};
    auto bwd = backward(net, fwd.cache, gy);

    for (std::size_t o = 0; o < 2; ++o)
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(bwd.grads.weight[0](o, i) == Catch::Approx(gy.data[o] * x.data[i]));
    CHECK(bwd.grads.bias[0].data == std::vector<double>{0.7, -0.3});
}

TEST_CASE("ReLU with all-negative pre-activations blocks the gradient") {
    DenseNet net;
    DenseLayer layer;
    layer.weight = Tensor::row_major(2, 2);
    layer.weight.data = {1.0, 0.0, 0.0, 1.0};
    layer.bias = Tensor({2});
    layer.bias.data = {-10.0, -10.0};
    layer.activation = Activation::relu;
    DenseLayer out_layer;
    out_layer.weight = Tensor::row_major(2, 2);
    out_layer.weight.data = {1.0, 2.0, 3.0, 4.0};
    out_layer.bias = Tensor({2});
    net.layers.push_back(layer);
    net.layers.push_back(out_layer);

    Tensor x = Tensor::row_major(1, 2);
    x.data = {0.5, 0.5};  // pre-activations 0.5 - 10 < 0
    auto fwd = forward(net, x);
    Tensor gy = Tensor::row_major(1, 2);
    gy.data = {1.0, 1.0};
    auto bwd = backward(net, fwd.cache, gy);
    CHECK(bwd.grad_input.data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("backward rejects a cache from a different net") {
    Rng init = Rng::with_salt(3, 9);
    DenseNet net = make_mlp(4, {5}, 2, init);
    DenseNet other = make_mlp(4, {6}, 2, init);
    Tensor x = Tensor::row_major(2, 4, 0.1);
    auto fwd = forward(net, x);
    Tensor gy = Tensor::row_major(2, 2, 1.0);
    CHECK_THROWS_AS(backward(other, fwd.cache, gy), Error);

    Tensor bad_gy = Tensor::row_major(3, 2, 1.0);
    CHECK_THROWS_AS(backward(net, fwd.cache, bad_gy), Error);
}

TEST_CASE("analytic gradients match central finite differences on a random 3-layer net") {
    Rng init = Rng::with_salt(11, 9);
    DenseNet net = make_mlp(4, {5, 6}, 3, init);
    testutil::Rng rng(12);
    Tensor x = testutil::random_tensor({4, 4}, rng);
    Tensor target = testutil::random_tensor({4, 3}, rng);

    auto loss_value = [&]() { return mse(forward(net, x).output, target); };

    auto fwd = forward(net, x);
    Tensor grad_out(fwd.output.shape);
    const double scale = 2.0 / static_cast<double>(fwd.output.size());
    for (std::size_t i = 0; i < grad_out.size(); ++i)
        grad_out.data[i] = scale * (fwd.output.data[i] - target.data[i]);
    auto bwd = backward(net, fwd.cache, grad_out);

    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        Tensor fd_w = testutil::finite_difference_grad(net.layers[li].weight, loss_value);
        Tensor fd_b = testutil::finite_difference_grad(net.layers[li].bias, loss_value);
        CHECK(testutil::max_relative_error(bwd.grads.weight[li], fd_w) < 1e-4);
        CHECK(testutil::max_relative_error(bwd.grads.bias[li], fd_b) < 1e-4);
    }

    // and the input gradient
    Tensor fd_x = testutil::finite_difference_grad(x, loss_value);
    CHECK(testutil::max_relative_error(bwd.grad_input, fd_x) < 1e-4);
}

TEST_CASE("adam with zero gradients is the identity") {
    Rng init = Rng::with_salt(5, 9);
    DenseNet net = make_mlp(3, {4}, 2, init);
    const std::vector<double> before = net.layers[0].weight.data;

    auto params = net_params(net);
    AdamState opt = AdamState::for_params({params.begin(), params.end()}, AdamConfig{});
    Gradients zero;
    for (const auto& layer : net.layers) {
        zero.weight.emplace_back(layer.weight.shape);
        zero.bias.emplace_back(layer.bias.shape);
    }
    for (int step = 0; step < 5; ++step) adam_step(opt, params, grad_ptrs(zero));

    CHECK(net.layers[0].weight.data == before);
    CHECK(opt.step == 5);
}

TEST_CASE("adam moves parameters against a constant gradient") {
    Tensor param = Tensor::vector_of({1.0, -1.0});
    Tensor grad = Tensor::vector_of({0.5, -0.25});
    std::vector<Tensor*> params{&param};
    AdamState opt = AdamState::for_params({&param}, AdamConfig{.learning_rate = 0.01});
    for (int step = 0; step < 50; ++step) adam_step(opt, params, {&grad});
    CHECK(param[0] < 1.0);   // positive gradient pushes down
    CHECK(param[1] > -1.0);  // negative gradient pushes up
}

TEST_CASE("adam descends a quadratic bowl") {
    testutil::Rng rng(77);
    Tensor param = testutil::random_tensor({6}, rng, -2.0, 2.0);
    auto loss = [&]() {
        double acc = 0.0;
        for (double v : param.data) acc += v * v;
        return acc;
    };
    const double initial = loss();
    std::vector<Tensor*> params{&param};
    AdamState opt = AdamState::for_params({&param}, AdamConfig{.learning_rate = 0.05});
    for (int step = 0; step < 10; ++step) {
        Tensor grad(param.shape);
        for (std::size_t i = 0; i < param.size(); ++i) grad.data[i] = 2.0 * param.data[i];
        adam_step(opt, params, {&grad});
    }
    CHECK(loss() < initial);
}

TEST_CASE("adam rejects non-finite gradients") {
    Tensor param = Tensor::vector_of({1.0});
    Tensor grad = Tensor::vector_of({std::numeric_limits<double>::infinity()});
    std::vector<Tensor*> params{&param};
    AdamState opt = AdamState::for_params({&param}, AdamConfig{});
    CHECK_THROWS_AS(adam_step(opt, params, {&grad}), Error);
    CHECK(param[0] == 1.0);  // nothing applied
    CHECK(opt.step == 0);
}
