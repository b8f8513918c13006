#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "pqvae/rng.hpp"
#include "pqvae/tensor.hpp"

namespace pqvae {

// Small positive guard for the EMA count denominator.
inline constexpr double kEmaCountEpsilon = 1e-10;

// K codewords of dimension d, plus EMA accumulators used by the moving
// average update. `ema_counts[i]` is the decayed mass assigned to codeword i
// and `ema_sums[i]` the decayed sum of assigned latents.
struct Codebook {
    Tensor codewords;   // [K x d]
    Tensor ema_counts;  // [K]
    Tensor ema_sums;    // [K x d]
    double gamma = 0.99;

    std::size_t num_codewords() const { return codewords.shape.empty() ? 0 : codewords.shape[0]; }
    std::size_t dim() const { return codewords.shape.size() < 2 ? 0 : codewords.shape[1]; }

    static Codebook from_codewords(Tensor words, double gamma = 0.99) {
        Codebook cb;
        cb.ema_counts = Tensor({words.shape[0]});
        cb.ema_sums = Tensor(words.shape);
        cb.codewords = std::move(words);
        cb.gamma = gamma;
        return cb;
    }

    // Seeded data-dependent init: codewords are rows sampled from `samples`.
    static Codebook init_from_samples(const Tensor& samples, std::size_t K, double gamma,
                                      Rng& rng) {
        require(samples.shape.size() == 2 && samples.rows() > 0, errc::config,
                "Codebook::init_from_samples: need a non-empty rank-2 sample matrix");
        const std::size_t d = samples.cols();
        const std::size_t n = samples.rows();
        Tensor words = Tensor::row_major(K, d);
        // Sample without replacement while rows last, then wrap to uniform
        // draws; duplicate codewords are unavoidable when K > n.
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        for (std::size_t i = n; i-- > 1;) {
            const std::size_t j = rng.uniform_index(i + 1);
            std::swap(order[i], order[j]);
        }
        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t src = k < n ? order[k] : rng.uniform_index(n);
            for (std::size_t c = 0; c < d; ++c) words(k, c) = samples(src, c);
        }
        return from_codewords(std::move(words), gamma);
    }
};

// Nearest-codeword assignment of a batch. `quantized` rows are exact copies
// of the chosen codewords.
struct Assignment {
    std::vector<std::size_t> indices;  // [B]
    Tensor quantized;                  // [B x d]
    double quantization_error = 0.0;   // mean squared distance to chosen codeword
};

// Nearest neighbor search over the codebook; ties break to the lowest index.
inline Assignment assign(const Codebook& cb, const Tensor& z_e) {
    const std::size_t K = cb.num_codewords();
    const std::size_t d = cb.dim();
    require(K >= 1, errc::config, "assign: empty codebook");
    require(z_e.shape.size() == 2 && z_e.cols() == d, errc::shape,
            "assign: input width does not match codeword dimension");
    require(z_e.all_finite(), errc::input, "assign: non-finite input");

    const std::size_t B = z_e.rows();
    Assignment out;
    out.indices.resize(B);
    out.quantized = Tensor::row_major(B, d);

    double total = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
        const double* x = z_e.row(r);
        std::size_t best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            const double dist = squared_distance(x, cb.codewords.row(k), d);
            if (dist < best_dist) {
                best_dist = dist;
                best = k;
            }
        }
        out.indices[r] = best;
        const double* w = cb.codewords.row(best);
        double* q = out.quantized.row(r);
        for (std::size_t c = 0; c < d; ++c) q[c] = w[c];
        total += best_dist;
    }
    out.quantization_error = B > 0 ? total / static_cast<double>(B) : 0.0;
    return out;
}

// Forward value of the straight-through estimator: the quantized tensor,
// bitwise. The backward contract (gradient copied unchanged to z_e, nothing
// to the codewords) is realized by the training step's gradient routing.
inline Tensor straight_through(const Tensor& z_e, const Tensor& z_q) {
    require_same_shape(z_e, z_q, "straight_through");
    return z_q;
}

// Mean over batch rows of the squared distance between encoder output and its
// (stop-gradient) codeword.
inline double commitment_loss(const Tensor& z_e, const Tensor& z_q) {
    require_same_shape(z_e, z_q, "commitment_loss");
    require(z_e.shape.size() == 2 && z_e.rows() > 0, errc::shape,
            "commitment_loss: need a non-empty rank-2 batch");
    const std::size_t B = z_e.rows();
    const std::size_t d = z_e.cols();
    double acc = 0.0;
    for (std::size_t r = 0; r < B; ++r) acc += squared_distance(z_e.row(r), z_q.row(r), d);
    return acc / static_cast<double>(B);
}

// Replace each non-empty codeword with the mean of the latents assigned to
// it; codewords with no assigned points stay untouched.
inline void update_codebook_minibatch(Codebook& cb, const Assignment& asg, const Tensor& z_e) {
    const std::size_t K = cb.num_codewords();
    const std::size_t d = cb.dim();
    require(asg.indices.size() == z_e.rows() && z_e.cols() == d, errc::state,
            "update_codebook_minibatch: assignment does not match batch");

    std::vector<double> counts(K, 0.0);
    std::vector<double> sums(K * d, 0.0);
    for (std::size_t r = 0; r < z_e.rows(); ++r) {
        const std::size_t k = asg.indices[r];
        counts[k] += 1.0;
        const double* x = z_e.row(r);
        double* s = sums.data() + k * d;
        for (std::size_t c = 0; c < d; ++c) s[c] += x[c];
    }
    for (std::size_t k = 0; k < K; ++k) {
        if (counts[k] == 0.0) continue;
        double* w = cb.codewords.row(k);
        const double* s = sums.data() + k * d;
        for (std::size_t c = 0; c < d; ++c) w[c] = s[c] / counts[k];
    }
}

// Exponential moving average update with the quantizer-strength weight
// applied to the accumulation increment:
//   n_i <- gamma n_i + (1-gamma) lambda count_i
//   m_i <- gamma m_i + (1-gamma) lambda sum_i
//   e_i <- m_i / max(n_i, eps)   (only where mass exists)
// lambda == 0 is a complete no-op so a zero-strength quantizer leaves the
// codebook bitwise intact, accumulators included.
inline void update_codebook_ema(Codebook& cb, const Assignment& asg, const Tensor& z_e,
                                double lambda) {
    require(lambda >= 0.0, errc::config, "update_codebook_ema: lambda must be >= 0");
    require(cb.gamma > 0.0 && cb.gamma < 1.0, errc::config,
            "update_codebook_ema: gamma must lie in (0,1)");
    if (lambda == 0.0) return;

    const std::size_t K = cb.num_codewords();
    const std::size_t d = cb.dim();
    require(asg.indices.size() == z_e.rows() && z_e.cols() == d, errc::state,
            "update_codebook_ema: assignment does not match batch");

    std::vector<double> counts(K, 0.0);
    std::vector<double> sums(K * d, 0.0);
    for (std::size_t r = 0; r < z_e.rows(); ++r) {
        const std::size_t k = asg.indices[r];
        counts[k] += 1.0;
        const double* x = z_e.row(r);
        double* s = sums.data() + k * d;
        for (std::size_t c = 0; c < d; ++c) s[c] += x[c];
    }

    const double g = cb.gamma;
    for (std::size_t k = 0; k < K; ++k) {
        cb.ema_counts[k] = g * cb.ema_counts[k] + (1.0 - g) * lambda * counts[k];
        double* m = cb.ema_sums.row(k);
        const double* s = sums.data() + k * d;
        for (std::size_t c = 0; c < d; ++c) m[c] = g * m[c] + (1.0 - g) * lambda * s[c];
        if (cb.ema_counts[k] > kEmaCountEpsilon) {
            const double denom = std::max(cb.ema_counts[k], kEmaCountEpsilon);
            double* w = cb.codewords.row(k);
            for (std::size_t c = 0; c < d; ++c) w[c] = m[c] / denom;
        }
    }
}

// Mean nearest-codeword distance over mean second-nearest distance, plain
// Euclidean. 0 when every point sits on a codeword, 1 when first and second
// neighbors are equally far on average.
inline double distance_ratio(const Codebook& cb, const Tensor& z_e) {
    const std::size_t K = cb.num_codewords();
    require(K >= 2, errc::config, "distance_ratio: need at least two codewords");
    const std::size_t d = cb.dim();
    require(z_e.shape.size() == 2 && z_e.cols() == d && z_e.rows() >= 1, errc::shape,
            "distance_ratio: input shape mismatch");

    double sum_d1 = 0.0;
    double sum_d2 = 0.0;
    for (std::size_t r = 0; r < z_e.rows(); ++r) {
        const double* x = z_e.row(r);
        double d1 = std::numeric_limits<double>::infinity();
        double d2 = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            const double dist = squared_distance(x, cb.codewords.row(k), d);
            if (dist < d1) {
                d2 = d1;
                d1 = dist;
            } else if (dist < d2) {
                d2 = dist;
            }
        }
        sum_d1 += std::sqrt(d1);
        sum_d2 += std::sqrt(d2);
    }
    if (sum_d2 == 0.0) return 0.0;  // all points on coincident codewords
    return sum_d1 / sum_d2;
}

}  // namespace pqvae
