#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

#include "pqvae/net.hpp"
#include "pqvae/quantizer.hpp"

namespace pqvae {

// M independent sub-quantizers over a contiguous partition of the latent
// vector: chunk m covers dimensions [m*d, (m+1)*d) with d = D/M. All
// sub-codebooks share the same K, so concatenation reaches K^M full codewords.
struct ProductCodebook {
    std::vector<Codebook> subs;

    std::size_t num_subs() const { return subs.size(); }
    std::size_t sub_dim() const { return subs.empty() ? 0 : subs.front().dim(); }
    std::size_t latent_dim() const { return num_subs() * sub_dim(); }
    std::size_t codebook_size() const { return subs.empty() ? 0 : subs.front().num_codewords(); }

    void validate() const {
        require(!subs.empty(), errc::config, "ProductCodebook: no sub-codebooks");
        for (const auto& cb : subs) {
            require(cb.num_codewords() == codebook_size(), errc::config,
                    "ProductCodebook: sub-codebooks must share K");
            require(cb.dim() == sub_dim(), errc::config,
                    "ProductCodebook: sub-codebooks must share dimension");
        }
    }

    // Reconstruct the full codeword for one slot's worth of indices.
    std::vector<double> reconstruct(const std::uint32_t* indices) const {
        std::vector<double> out(latent_dim());
        const std::size_t d = sub_dim();
        for (std::size_t m = 0; m < subs.size(); ++m) {
            const double* w = subs[m].codewords.row(indices[m]);
            for (std::size_t c = 0; c < d; ++c) out[m * d + c] = w[c];
        }
        return out;
    }
};

// Discrete encoding of one item: M indices per latent slot, slot-major
// (slot 0's M indices first, then slot 1's, ...).
struct CodeVector {
    std::vector<std::uint32_t> indices;  // [slots * M]
    std::size_t slots = 1;               // N

    std::size_t num_subs() const { return slots == 0 ? 0 : indices.size() / slots; }
    std::uint32_t at(std::size_t slot, std::size_t m) const { return indices[slot * num_subs() + m]; }

    bool operator==(const CodeVector& other) const = default;
};

struct PqAssignment {
    std::vector<Assignment> subs;  // one per sub-quantizer
    Tensor quantized;              // [B x D], concatenation of sub-quantized chunks
    double quantization_error = 0.0;  // mean over rows of the full squared distance
};

// Slice each row into M contiguous chunks, assign each chunk with its
// sub-codebook, and concatenate the quantized chunks back together. Because
// the chunks partition the coordinates, the full squared quantization error
// is exactly the sum of the per-sub errors.
inline PqAssignment pq_assign(const ProductCodebook& pcb, const Tensor& z_e) {
    pcb.validate();
    const std::size_t M = pcb.num_subs();
    const std::size_t d = pcb.sub_dim();
    const std::size_t D = pcb.latent_dim();
    require(z_e.shape.size() == 2 && z_e.cols() == D, errc::shape,
            "pq_assign: input width does not match latent dimension");

    const std::size_t B = z_e.rows();
    PqAssignment out;
    out.subs.reserve(M);
    out.quantized = Tensor::row_major(B, D);

    for (std::size_t m = 0; m < M; ++m) {
        Tensor chunk = Tensor::row_major(B, d);
        for (std::size_t r = 0; r < B; ++r) {
            const double* src = z_e.row(r) + m * d;
            double* dst = chunk.row(r);
            for (std::size_t c = 0; c < d; ++c) dst[c] = src[c];
        }
        Assignment asg = assign(pcb.subs[m], chunk);
        for (std::size_t r = 0; r < B; ++r) {
            const double* src = asg.quantized.row(r);
            double* dst = out.quantized.row(r) + m * d;
            for (std::size_t c = 0; c < d; ++c) dst[c] = src[c];
        }
        out.quantization_error += asg.quantization_error;
        out.subs.push_back(std::move(asg));
    }
    return out;
}

// Encode a batch of raw inputs to discrete codes: run the encoder, view its
// output as `slots` latent vectors of width D per item, and quantize each
// slot with the shared product codebook.
inline std::vector<CodeVector> encode(const ProductCodebook& pcb, const DenseNet& encoder,
                                      const Tensor& batch, std::size_t slots = 1) {
    require(slots >= 1, errc::config, "encode: slots must be >= 1");
    const std::size_t D = pcb.latent_dim();
    require(encoder.output_dim() == slots * D, errc::config,
            "encode: encoder output dim must equal slots * latent dim");

    const Tensor z = forward(encoder, batch).output;  // [B x slots*D]
    const std::size_t B = batch.rows();

    // View as (B*slots) x D, one row per latent slot.
    Tensor rows = Tensor::row_major(B * slots, D);
    rows.data = z.data;
    const PqAssignment asg = pq_assign(pcb, rows);

    const std::size_t M = pcb.num_subs();
    std::vector<CodeVector> codes(B);
    for (std::size_t item = 0; item < B; ++item) {
        codes[item].slots = slots;
        codes[item].indices.resize(slots * M);
        for (std::size_t n = 0; n < slots; ++n)
            for (std::size_t m = 0; m < M; ++m)
                codes[item].indices[n * M + m] =
                    static_cast<std::uint32_t>(asg.subs[m].indices[item * slots + n]);
    }
    return codes;
}

inline bool is_power_of_two(std::size_t k) { return k > 0 && (k & (k - 1)) == 0; }

inline int bits_per_index(int K) {
    require(K >= 1, errc::config, "bits_per_index: K must be >= 1");
    int bits = 0;
    while ((1 << bits) < K) ++bits;
    return bits;  // ceil(log2 K)
}

// Code length in bits: N * M * log2(K). For K that is not a power of two the
// per-index cost rounds up to ceil(log2 K); callers that care surface a
// warning (see the CLI).
inline int rate_bits(int N, int M, int K) {
    require(K >= 1, errc::config, "rate_bits: K must be >= 1");
    require(N >= 1 && M >= 1, errc::config, "rate_bits: N and M must be >= 1");
    return N * M * bits_per_index(K);
}

}  // namespace pqvae
