#include <catch_amalgamated.hpp>

#include "pqvae/quantizer.hpp"
#include "testutil.hpp"

using namespace pqvae;

namespace {

Codebook make_codebook(std::vector<std::vector<double>> rows, double gamma = 0.99) {
    Tensor words = Tensor::row_major(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) words(r, c) = rows[r][c];
    return Codebook::from_codewords(std::move(words), gamma);
}

}  // namespace

TEST_CASE("assign maps a codeword-valued input to itself") {
    Codebook cb = make_codebook({{0, 0}, {1, 1}, {2, 2}, {3, 3}});
    Tensor z = Tensor::row_major(1, 2);
    z.data = {3.0, 3.0};
    Assignment asg = assign(cb, z);
    CHECK(asg.indices == std::vector<std::size_t>{3});
    CHECK(asg.quantization_error == 0.0);
    CHECK(asg.quantized.data == std::vector<double>{3.0, 3.0});
}

TEST_CASE("assign picks the geometrically nearest codeword") {
    Codebook cb = make_codebook({{0, 0}, {10, 10}});
    Tensor z = Tensor::row_major(1, 2);
    z.data = {1.0, 1.0};
    CHECK(assign(cb, z).indices == std::vector<std::size_t>{0});
}

TEST_CASE("assign ties break to the lowest index") {
    Codebook cb = make_codebook({{-1, 0}, {1, 0}, {-1, 0}});
    Tensor z = Tensor::row_major(2, 2);  // origin is equidistant from 0 and 1; row 2 duplicates row 0
    z.data = {0.0, 0.0, -1.0, 0.0};
    Assignment asg = assign(cb, z);
    CHECK(asg.indices == std::vector<std::size_t>{0, 0});
}

TEST_CASE("assign matches the exhaustive scan oracle on random points") {
    testutil::Rng rng(314);
    Codebook cb = testutil::random_codebook(8, 3, rng);

    Tensor z = testutil::random_tensor({100, 3}, rng);
    Assignment asg = assign(cb, z);
    for (std::size_t r = 0; r < z.rows(); ++r)
        CHECK(asg.indices[r] == testutil::oracle_nearest(cb.codewords, z.row(r)));
}

TEST_CASE("assign is idempotent on its own output") {
    testutil::Rng rng(99);
    Codebook cb = testutil::random_codebook(6, 4, rng);

    Tensor z = testutil::random_tensor({40, 4}, rng, -2.0, 2.0);
    Assignment first = assign(cb, z);
    Assignment second = assign(cb, first.quantized);
    CHECK(second.indices == first.indices);
    CHECK(second.quantization_error == 0.0);
}

TEST_CASE("assign rejects non-finite input") {
    Codebook cb = make_codebook({{0, 0}, {1, 1}});
    Tensor z = Tensor::row_major(1, 2);
    z.data = {0.0, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(assign(cb, z), Error);
}

TEST_CASE("straight_through forwards the quantized value bitwise") {
    testutil::Rng rng(55);
    Tensor z_e = testutil::random_tensor({5, 3}, rng);
    Tensor z_q = testutil::random_tensor({5, 3}, rng);
    Tensor out = straight_through(z_e, z_q);
    CHECK(out.data == z_q.data);

    Tensor same = straight_through(z_e, z_e);
    CHECK(same.data == z_e.data);

    Tensor bad = Tensor::row_major(4, 3);
    CHECK_THROWS_AS(straight_through(z_e, bad), Error);
}

TEST_CASE("commitment loss basics and oracle") {
    Tensor z_e = Tensor::row_major(1, 2);
    z_e.data = {1.0, 0.0};
    Tensor z_q = Tensor::row_major(1, 2);
    CHECK(commitment_loss(z_e, z_q) == 1.0);
    CHECK(commitment_loss(z_q, z_q) == 0.0);

    testutil::Rng rng(123);
    Tensor a = testutil::random_tensor({9, 4}, rng);
    Tensor b = testutil::random_tensor({9, 4}, rng);
    double acc = 0.0;
    for (std::size_t r = 0; r < 9; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            const double d = a(r, c) - b(r, c);
            acc += d * d;
        }
    CHECK(commitment_loss(a, b) == Catch::Approx(acc / 9.0).margin(1e-12));
}

TEST_CASE("minibatch update moves a fully-assigned codeword to the batch mean") {
    Codebook cb = make_codebook({{100, 100}, {200, 200}});
    Tensor z = Tensor::row_major(4, 2);
    z.data = {1, 2, 3, 4, 5, 6, 7, 8};
    Assignment asg;
    asg.indices = {0, 0, 0, 0};
    asg.quantized = Tensor::row_major(4, 2);
    update_codebook_minibatch(cb, asg, z);
    CHECK(cb.codewords(0, 0) == 4.0);
    CHECK(cb.codewords(0, 1) == 5.0);
    // untouched cluster keeps its codeword
    CHECK(cb.codewords(1, 0) == 200.0);
    CHECK(cb.codewords(1, 1) == 200.0);
}

TEST_CASE("minibatch update matches a group-by-mean oracle") {
    testutil::Rng rng(21);
    Codebook cb = testutil::random_codebook(4, 3, rng);
    Tensor z = testutil::random_tensor({30, 3}, rng);
    Assignment asg = assign(cb, z);

    // independent group-by means
    std::vector<double> mean(4 * 3, 0.0);
    std::vector<int> count(4, 0);
    for (std::size_t r = 0; r < 30; ++r) {
        count[asg.indices[r]]++;
        for (std::size_t c = 0; c < 3; ++c) mean[asg.indices[r] * 3 + c] += z(r, c);
    }
    Tensor before = cb.codewords;
    update_codebook_minibatch(cb, asg, z);
    for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t c = 0; c < 3; ++c) {
            const double expected =
                count[k] > 0 ? mean[k * 3 + c] / count[k] : before(k, c);
            CHECK(cb.codewords(k, c) == Catch::Approx(expected).margin(1e-12));
        }
}

TEST_CASE("one minibatch update never increases quantization error on the same batch") {
    testutil::Rng rng(654);
    for (int trial = 0; trial < 10; ++trial) {
        Codebook cb = testutil::random_codebook(5, 2, rng, -2.0, 2.0);
        Tensor z = testutil::random_tensor({50, 2}, rng, -2.0, 2.0);

        Assignment asg = assign(cb, z);
        const double before = asg.quantization_error;
        update_codebook_minibatch(cb, asg, z);
        const double after = assign(cb, z).quantization_error;
        CHECK(after <= before + 1e-12);
    }
}

TEST_CASE("ema update with lambda zero is a bitwise no-op") {
    testutil::Rng rng(31);
    Codebook cb = testutil::random_codebook(4, 2, rng);
    cb.ema_counts = testutil::random_tensor({4}, rng, 0.0, 2.0);
    cb.ema_sums = testutil::random_tensor({4, 2}, rng);
    const Codebook before = cb;

    Tensor z = testutil::random_tensor({20, 2}, rng);
    Assignment asg = assign(cb, z);
    update_codebook_ema(cb, asg, z, 0.0);
    CHECK(cb.codewords.data == before.codewords.data);
    CHECK(cb.ema_counts.data == before.ema_counts.data);
    CHECK(cb.ema_sums.data == before.ema_sums.data);
}

TEST_CASE("ema update on fresh accumulators reproduces the minibatch average") {
    // With zeroed accumulators the decay factor cancels: e = sum/count.
    testutil::Rng rng(77);
    Codebook ema_cb = testutil::random_codebook(3, 2, rng);
    Codebook mini_cb = ema_cb;

    Tensor z = testutil::random_tensor({24, 2}, rng);
    Assignment asg = assign(ema_cb, z);
    update_codebook_ema(ema_cb, asg, z, 1.0);
    update_codebook_minibatch(mini_cb, asg, z);
    for (std::size_t i = 0; i < ema_cb.codewords.size(); ++i)
        CHECK(ema_cb.codewords.data[i] == Catch::Approx(mini_cb.codewords.data[i]).margin(1e-12));
}

TEST_CASE("small gamma forgets history and approaches the minibatch average") {
    testutil::Rng rng(78);
    Codebook cb = testutil::random_codebook(3, 2, rng, -1.0, 1.0, 1e-8);
    cb.ema_counts = testutil::random_tensor({3}, rng, 0.5, 1.5);  // stale history
    cb.ema_sums = testutil::random_tensor({3, 2}, rng);

    Tensor z = testutil::random_tensor({24, 2}, rng);
    Assignment asg = assign(cb, z);
    Codebook mini_cb = cb;
    update_codebook_ema(cb, asg, z, 1.0);
    update_codebook_minibatch(mini_cb, asg, z);
    for (std::size_t k = 0; k < 3; ++k) {
        bool used = false;
        for (std::size_t r = 0; r < 24; ++r) used = used || asg.indices[r] == k;
        if (!used) continue;
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(cb.codewords(k, c) == Catch::Approx(mini_cb.codewords(k, c)).margin(1e-6));
    }
}

TEST_CASE("empty clusters persist unchanged under ema") {
    Codebook cb = make_codebook({{0, 0}, {50, 50}});
    Tensor z = Tensor::row_major(3, 2);
    z.data = {0.1, 0.1, -0.1, 0.0, 0.0, -0.1};  // all near codeword 0
    Assignment asg = assign(cb, z);
    update_codebook_ema(cb, asg, z, 1.0);
    CHECK(cb.codewords(1, 0) == 50.0);
    CHECK(cb.codewords(1, 1) == 50.0);
    CHECK(cb.ema_counts[1] == 0.0);
}

TEST_CASE("repeated ema updates converge to the k-means centroids") {
    // Three well-separated clusters, one codeword rooted in each.
    Tensor centers = Tensor::row_major(3, 2);
    centers.data = {0.0, 0.0, 5.0, 5.0, -5.0, 5.0};
    testutil::Rng rng(2024);
    Tensor data = testutil::gaussian_clusters(centers, 200, 0.2, rng);

    Tensor init = Tensor::row_major(3, 2);
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t c = 0; c < 2; ++c) init(k, c) = data(k, c);  // one point per cluster
    Codebook cb = Codebook::from_codewords(init, 0.99);

    for (int iter = 0; iter < 300; ++iter) {
        // fresh batch of 100 points per update
        Tensor batch = Tensor::row_major(100, 2);
        for (std::size_t r = 0; r < 100; ++r) {
            const std::size_t src = rng.uniform_index(data.rows());
            batch(r, 0) = data(src, 0);
            batch(r, 1) = data(src, 1);
        }
        Assignment asg = assign(cb, batch);
        update_codebook_ema(cb, asg, batch, 1.0);
    }

    Tensor centroids = testutil::kmeans_oracle(data, init);
    for (std::size_t k = 0; k < 3; ++k) {
        const double dist = std::sqrt(squared_distance(cb.codewords.row(k), centroids.row(k), 2));
        CHECK(dist < 0.05);
    }
}

TEST_CASE("distance ratio is zero on codewords and one at equidistance") {
    Codebook cb = make_codebook({{0, 0}, {2, 0}, {9, 9}});
    Tensor on_words = Tensor::row_major(2, 2);
    on_words.data = {0, 0, 2, 0};
    CHECK(distance_ratio(cb, on_words) == 0.0);

    Tensor midpoint = Tensor::row_major(1, 2);
    midpoint.data = {1.0, 0.0};  // equidistant from the first two codewords
    CHECK(distance_ratio(cb, midpoint) == Catch::Approx(1.0));
}

TEST_CASE("distance ratio matches a two-smallest scan oracle") {
    testutil::Rng rng(400);
    Codebook cb = testutil::random_codebook(7, 3, rng);
    Tensor z = testutil::random_tensor({60, 3}, rng, -2.0, 2.0);

    double sum1 = 0.0, sum2 = 0.0;
    for (std::size_t r = 0; r < 60; ++r) {
        std::vector<double> dists;
        for (std::size_t k = 0; k < 7; ++k)
            dists.push_back(std::sqrt(squared_distance(z.row(r), cb.codewords.row(k), 3)));
        std::sort(dists.begin(), dists.end());
        sum1 += dists[0];
        sum2 += dists[1];
    }
    CHECK(distance_ratio(cb, z) == Catch::Approx(sum1 / sum2).margin(1e-12));
}

TEST_CASE("distance ratio stays in [0,1] and needs two codewords") {
    testutil::Rng rng(500);
    for (int trial = 0; trial < 20; ++trial) {
        Codebook cb = make_codebook({{}});
        cb.codewords = testutil::random_tensor({5, 2}, rng, -3.0, 3.0);
        cb.ema_counts = Tensor({5});
        cb.ema_sums = Tensor(cb.codewords.shape);
        Tensor z = testutil::random_tensor({17, 2}, rng, -3.0, 3.0);
        const double ratio = distance_ratio(cb, z);
        CHECK(ratio >= 0.0);
        CHECK(ratio <= 1.0);
    }

    Codebook single = make_codebook({{1, 1}});
    Tensor z = Tensor::row_major(1, 2);
    CHECK_THROWS_AS(distance_ratio(single, z), Error);
}
