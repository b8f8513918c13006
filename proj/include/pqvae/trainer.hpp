#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "pqvae/adam.hpp"
#include "pqvae/dataset.hpp"
#include "pqvae/net.hpp"
#include "pqvae/product_quantizer.hpp"

namespace pqvae {

enum class CodebookUpdate : unsigned char { minibatch = 0, ema = 1, loss_gradient = 2 };

inline const char* codebook_update_name(CodebookUpdate m) {
    switch (m) {
        case CodebookUpdate::minibatch: return "minibatch";
        case CodebookUpdate::ema: return "ema";
        case CodebookUpdate::loss_gradient: return "loss_gradient";
    }
    return "unknown";
}

struct TrainConfig {
    std::size_t codebook_size = 8;  // K, codewords per sub-quantizer
    std::size_t num_subs = 1;       // M sub-quantizers
    std::size_t latent_dim = 2;     // D, width of one latent slot
    std::size_t latent_slots = 1;   // N slots per item; encoder emits N*D values
    double beta = 0.25;             // commitment weight
    double lambda = 1.0;            // quantizer strength
    double gamma = 0.99;            // EMA decay
    double learning_rate = 2e-4;
    std::size_t batch_size = 100;
    std::size_t iterations = 1000;
    CodebookUpdate update_mode = CodebookUpdate::ema;
    std::uint64_t seed = 1;
    std::vector<std::size_t> encoder_hidden = {500, 500, 2000};  // decoder mirrors this

    void validate() const {
        require(beta >= 0.0, errc::config, "TrainConfig: beta must be >= 0");
        require(lambda >= 0.0, errc::config, "TrainConfig: lambda must be >= 0");
        require(gamma > 0.0 && gamma < 1.0, errc::config, "TrainConfig: gamma must lie in (0,1)");
        require(batch_size >= 1, errc::config, "TrainConfig: batch_size must be >= 1");
        require(num_subs >= 1 && latent_dim >= 1 && latent_slots >= 1, errc::config,
                "TrainConfig: structural sizes must be positive");
        require(latent_dim % num_subs == 0, errc::config,
                "TrainConfig: num_subs must divide latent_dim");
        require(codebook_size >= 2, errc::config,
                "TrainConfig: codebook_size must be >= 2 (distance ratio is undefined for K < 2)");
    }
};

// Per-iteration training telemetry. Entropies are in bits and bounded by
// log2(K); usage counts are per sub-quantizer over the batch's slot rows.
struct DiagnosticsRecord {
    std::size_t iteration = 0;
    double recon_error = 0.0;
    double quant_error = 0.0;
    double distance_ratio = 0.0;
    std::vector<double> code_entropy_per_sub;
    std::vector<std::vector<std::size_t>> codeword_usage;
};

struct TrainResult {
    DenseNet encoder;
    DenseNet decoder;
    ProductCodebook codebook;
    std::vector<DiagnosticsRecord> log;
    bool aborted = false;
    std::string abort_reason;
    std::size_t abort_iteration = 0;
};

struct LossTerms {
    double total = 0.0;
    double reconstruction = 0.0;
    double commitment = 0.0;      // mean over slot rows of ||z_e - sg(z_q)||^2
    double codeword_term = 0.0;   // mean over slot rows of ||sg(z_e) - z_q||^2
};

// Scalar loss: mse(x, xhat) + lambda * (beta * commitment + codeword term).
// The two quantization terms share a value and differ only in gradient
// routing; outside loss_gradient mode the codeword term carries no gradient
// (the EMA / minibatch rules own the codewords) but is still reported.
inline LossTerms total_loss(const Tensor& x, const Tensor& xhat, const Tensor& z_e,
                            const Tensor& z_q, double beta, double lambda) {
    require(beta >= 0.0 && lambda >= 0.0, errc::config,
            "total_loss: weights must be non-negative");
    LossTerms terms;
    terms.reconstruction = mse(x, xhat);
    terms.commitment = commitment_loss(z_e, z_q);
    terms.codeword_term = terms.commitment;
    terms.total = terms.reconstruction + lambda * (beta * terms.commitment + terms.codeword_term);
    return terms;
}

namespace detail {

inline std::vector<std::size_t> sample_batch(Rng& rng, std::size_t n, std::size_t batch) {
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = rng.uniform_index(n);
    return idx;
}

inline Tensor gather_rows(const Tensor& features, const std::vector<std::size_t>& idx) {
    Tensor out = Tensor::row_major(idx.size(), features.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const double* src = features.row(idx[r]);
        double* dst = out.row(r);
        for (std::size_t c = 0; c < features.cols(); ++c) dst[c] = src[c];
    }
    return out;
}

// Column slice [m*d, (m+1)*d) of a rank-2 tensor.
inline Tensor chunk_columns(const Tensor& t, std::size_t m, std::size_t d) {
    Tensor out = Tensor::row_major(t.rows(), d);
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const double* src = t.row(r) + m * d;
        double* dst = out.row(r);
        for (std::size_t c = 0; c < d; ++c) dst[c] = src[c];
    }
    return out;
}

inline double entropy_bits(const std::vector<std::size_t>& counts) {
    std::size_t total = 0;
    for (std::size_t c : counts) total += c;
    if (total == 0) return 0.0;
    double h = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

inline ProductCodebook init_codebook_from_batch(const Tensor& slot_rows, std::size_t num_subs,
                                                std::size_t codebook_size, double gamma,
                                                Rng& rng) {
    const std::size_t d = slot_rows.cols() / num_subs;
    ProductCodebook pcb;
    pcb.subs.reserve(num_subs);
    for (std::size_t m = 0; m < num_subs; ++m) {
        Tensor chunk = chunk_columns(slot_rows, m, d);
        pcb.subs.push_back(Codebook::init_from_samples(chunk, codebook_size, gamma, rng));
    }
    return pcb;
}

}  // namespace detail

// Everything one optimizer step needs: scalar loss terms, the assignment,
// and the gradients for every parameter group. Codeword gradients are only
// populated when requested (loss_gradient mode); in the EMA and minibatch
// modes the codewords are not part of the differentiated loss.
struct StepGradients {
    LossTerms loss;
    PqAssignment assignment;      // over slot rows, [B*N x D]
    Tensor encoder_output;        // [B x N*D]
    Tensor decoder_output;        // [B x L]
    Gradients encoder_grads;
    Gradients decoder_grads;
    std::vector<Tensor> codeword_grads;  // one [K x d] tensor per sub-quantizer
};

// Forward + backward of the full loss on one batch. Gradient routing:
//   - reconstruction reaches the encoder through the straight-through copy
//     (the decoder-input gradient lands on z_e unchanged);
//   - the commitment term pulls z_e toward its frozen codeword;
//   - the codeword term pushes codewords toward frozen encoder outputs and
//     is the only gradient codewords ever receive.
inline StepGradients compute_step_gradients(const DenseNet& encoder, const DenseNet& decoder,
                                            const ProductCodebook& pcb, const Tensor& x,
                                            std::size_t slots, double beta, double lambda,
                                            bool codeword_gradients) {
    const std::size_t B = x.rows();
    const std::size_t D = pcb.latent_dim();
    const std::size_t M = pcb.num_subs();
    const std::size_t d = pcb.sub_dim();
    const std::size_t slot_rows_count = B * slots;

    StepGradients step;
    auto enc_fwd = forward(encoder, x);  // [B x N*D]
    Tensor slot_rows = Tensor::row_major(slot_rows_count, D);
    slot_rows.data = enc_fwd.output.data;

    step.assignment = pq_assign(pcb, slot_rows);

    Tensor decoder_input = Tensor::row_major(B, slots * D);
    decoder_input.data = straight_through(slot_rows, step.assignment.quantized).data;
    auto dec_fwd = forward(decoder, decoder_input);

    step.loss = total_loss(x, dec_fwd.output, slot_rows, step.assignment.quantized, beta, lambda);

    // d mse / d xhat
    Tensor grad_xhat(dec_fwd.output.shape);
    const double recon_scale = 2.0 / static_cast<double>(x.size());
    for (std::size_t i = 0; i < grad_xhat.size(); ++i)
        grad_xhat.data[i] = recon_scale * (dec_fwd.output.data[i] - x.data[i]);

    auto dec_bwd = backward(decoder, dec_fwd.cache, grad_xhat);

    Tensor grad_z = Tensor::row_major(B, slots * D);
    grad_z.data = dec_bwd.grad_input.data;
    const double commit_scale = lambda * beta * 2.0 / static_cast<double>(slot_rows_count);
    for (std::size_t i = 0; i < grad_z.size(); ++i)
        grad_z.data[i] += commit_scale * (slot_rows.data[i] - step.assignment.quantized.data[i]);

    auto enc_bwd = backward(encoder, enc_fwd.cache, grad_z);

    if (codeword_gradients) {
        step.codeword_grads.reserve(M);
        const double code_scale = lambda * 2.0 / static_cast<double>(slot_rows_count);
        for (std::size_t m = 0; m < M; ++m) {
            Tensor g = Tensor::row_major(pcb.codebook_size(), d);
            const Assignment& asg = step.assignment.subs[m];
            const Codebook& cb = pcb.subs[m];
            for (std::size_t r = 0; r < slot_rows_count; ++r) {
                const std::size_t k = asg.indices[r];
                const double* z = slot_rows.row(r) + m * d;
                const double* w = cb.codewords.row(k);
                double* gr = g.row(k);
                for (std::size_t c = 0; c < d; ++c) gr[c] += code_scale * (w[c] - z[c]);
            }
            step.codeword_grads.push_back(std::move(g));
        }
    }

    step.encoder_output = std::move(enc_fwd.output);
    step.decoder_output = std::move(dec_fwd.output);
    step.encoder_grads = std::move(enc_bwd.grads);
    step.decoder_grads = std::move(dec_bwd.grads);
    return step;
}

// One full PQ-VAE training run. Reconstruction gradients reach the encoder
// through the straight-through path, commitment gradients reach the encoder
// only, and codewords move by the configured update rule. Bit-reproducible
// for a fixed config.
inline TrainResult train(const TrainConfig& config, const Dataset& data) {
    config.validate();
    data.validate();
    require(data.size() > 0, errc::config, "train: empty dataset");

    const std::size_t L = data.dim();
    const std::size_t D = config.latent_dim;
    const std::size_t N = config.latent_slots;
    const std::size_t M = config.num_subs;
    const std::size_t B = config.batch_size;
    const std::size_t d = D / M;
    const std::size_t slot_rows_per_batch = B * N;

    Rng init_rng = Rng::with_salt(config.seed, 1);
    Rng batch_rng = Rng::with_salt(config.seed, 2);
    Rng codebook_rng = Rng::with_salt(config.seed, 3);

    TrainResult result;
    result.encoder = make_mlp(L, config.encoder_hidden, N * D, init_rng);
    std::vector<std::size_t> mirrored(config.encoder_hidden.rbegin(), config.encoder_hidden.rend());
    result.decoder = make_mlp(N * D, mirrored, L, init_rng);

    // Codebooks start as rows sampled from the first batch's encoder output;
    // iteration 1 then reuses that same batch.
    const std::vector<std::size_t> first_idx = detail::sample_batch(batch_rng, data.size(), B);
    {
        const Tensor x0 = detail::gather_rows(data.features, first_idx);
        Tensor z0 = forward(result.encoder, x0).output;
        Tensor slot_rows = Tensor::row_major(slot_rows_per_batch, D);
        slot_rows.data = z0.data;
        result.codebook = detail::init_codebook_from_batch(slot_rows, M, config.codebook_size,
                                                           config.gamma, codebook_rng);
    }

    AdamConfig adam_cfg;
    adam_cfg.learning_rate = config.learning_rate;
    auto enc_params = net_params(result.encoder);
    auto dec_params = net_params(result.decoder);
    AdamState enc_opt = AdamState::for_params(
        {enc_params.begin(), enc_params.end()}, adam_cfg);
    AdamState dec_opt = AdamState::for_params(
        {dec_params.begin(), dec_params.end()}, adam_cfg);

    std::vector<Tensor*> code_params;
    AdamState code_opt;
    if (config.update_mode == CodebookUpdate::loss_gradient) {
        for (auto& sub : result.codebook.subs) code_params.push_back(&sub.codewords);
        code_opt = AdamState::for_params({code_params.begin(), code_params.end()}, adam_cfg);
    }

    result.log.reserve(config.iterations);
    for (std::size_t t = 1; t <= config.iterations; ++t) {
        const std::vector<std::size_t> idx =
            t == 1 ? first_idx : detail::sample_batch(batch_rng, data.size(), B);
        const Tensor x = detail::gather_rows(data.features, idx);

        const bool want_code_grads = config.update_mode == CodebookUpdate::loss_gradient;
        const StepGradients step =
            compute_step_gradients(result.encoder, result.decoder, result.codebook, x, N,
                                   config.beta, config.lambda, want_code_grads);

        // Abort before touching any parameter so the returned artifacts are
        // the last fully applied state.
        bool finite = std::isfinite(step.loss.total);
        for (const auto* grads : {&step.encoder_grads, &step.decoder_grads}) {
            for (const auto& g : grads->weight) finite = finite && g.all_finite();
            for (const auto& g : grads->bias) finite = finite && g.all_finite();
        }
        for (const auto& g : step.codeword_grads) finite = finite && g.all_finite();
        if (!finite) {
            result.aborted = true;
            result.abort_iteration = t;
            result.abort_reason = "non-finite loss or gradient at iteration " + std::to_string(t);
            break;
        }

        // Diagnostics describe the state the step was computed on, before
        // this iteration's parameter and codebook updates land.
        Tensor slot_rows = Tensor::row_major(slot_rows_per_batch, D);
        slot_rows.data = step.encoder_output.data;
        DiagnosticsRecord rec;
        rec.iteration = t;
        rec.recon_error = step.loss.reconstruction;
        rec.quant_error = step.assignment.quantization_error;
        rec.code_entropy_per_sub.resize(M);
        rec.codeword_usage.assign(M, std::vector<std::size_t>(config.codebook_size, 0));
        double ratio_sum = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            for (std::size_t r = 0; r < slot_rows_per_batch; ++r)
                rec.codeword_usage[m][step.assignment.subs[m].indices[r]]++;
            rec.code_entropy_per_sub[m] = detail::entropy_bits(rec.codeword_usage[m]);
            ratio_sum += distance_ratio(result.codebook.subs[m],
                                        detail::chunk_columns(slot_rows, m, d));
        }
        rec.distance_ratio = ratio_sum / static_cast<double>(M);
        result.log.push_back(std::move(rec));

        adam_step(enc_opt, enc_params, grad_ptrs(step.encoder_grads));
        adam_step(dec_opt, dec_params, grad_ptrs(step.decoder_grads));

        switch (config.update_mode) {
            case CodebookUpdate::minibatch:
                for (std::size_t m = 0; m < M; ++m)
                    update_codebook_minibatch(result.codebook.subs[m], step.assignment.subs[m],
                                              detail::chunk_columns(slot_rows, m, d));
                break;
            case CodebookUpdate::ema:
                for (std::size_t m = 0; m < M; ++m)
                    update_codebook_ema(result.codebook.subs[m], step.assignment.subs[m],
                                        detail::chunk_columns(slot_rows, m, d), config.lambda);
                break;
            case CodebookUpdate::loss_gradient: {
                std::vector<const Tensor*> gp;
                for (const auto& g : step.codeword_grads) gp.push_back(&g);
                adam_step(code_opt, code_params, gp);
                break;
            }
        }
    }

    return result;
}

struct SweepPoint {
    double lambda = 0.0;
    double distance_ratio = 0.0;
    double recon_error = 0.0;
};

// Mean of a diagnostic over the final 10% of iterations (at least one).
inline double final_window_mean(const std::vector<DiagnosticsRecord>& log,
                                double DiagnosticsRecord::* field) {
    require(!log.empty(), errc::state, "final_window_mean: empty log");
    const std::size_t window = std::max<std::size_t>(1, log.size() / 10);
    double acc = 0.0;
    for (std::size_t i = log.size() - window; i < log.size(); ++i) acc += log[i].*field;
    return acc / static_cast<double>(window);
}

// Grid used when the CLI's sweep is not given explicit lambda values; chosen
// so the resulting distance ratios bracket the useful operating range.
inline const std::vector<double>& default_lambda_grid() {
    static const std::vector<double> grid = {0.003, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0};
    return grid;
}

// One full training run per lambda; rows sorted by lambda. Ratio and
// reconstruction error are final-window means.
inline std::vector<SweepPoint> sweep_lambda(const TrainConfig& config, const Dataset& data,
                                            std::vector<double> grid) {
    require(!grid.empty(), errc::config, "sweep_lambda: empty grid");
    std::sort(grid.begin(), grid.end());
    std::vector<SweepPoint> rows;
    rows.reserve(grid.size());
    for (double lambda : grid) {
        TrainConfig run_cfg = config;
        run_cfg.lambda = lambda;
        const TrainResult run = train(run_cfg, data);
        require(!run.log.empty(), errc::config, "sweep_lambda: run produced no iterations");
        SweepPoint p;
        p.lambda = lambda;
        p.distance_ratio = final_window_mean(run.log, &DiagnosticsRecord::distance_ratio);
        p.recon_error = final_window_mean(run.log, &DiagnosticsRecord::recon_error);
        rows.push_back(p);
    }
    return rows;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Write per-item 2-D latents with label and assigned code to a CSV stream.
// Only defined for a 2-dimensional single-slot latent space; the code index
// is the lexicographic rank of the M sub-indices (the plain index for M=1).
inline void export_latents(const DenseNet& encoder, const ProductCodebook& pcb,
                           const Dataset& data, std::ostream& out) {
    require(pcb.latent_dim() == 2, errc::config,
            "export_latents: latent dimension must be 2");
    require(encoder.output_dim() == 2, errc::config,
            "export_latents: encoder must emit a single 2-D latent per item");

    out << "x1,x2,label,code_index\n";
    if (data.size() == 0) return;

    const Tensor z = forward(encoder, data.features).output;
    const PqAssignment pq = pq_assign(pcb, z);
    const std::size_t K = pcb.codebook_size();
    for (std::size_t r = 0; r < data.size(); ++r) {
        std::size_t code = 0;
        for (std::size_t m = 0; m < pcb.num_subs(); ++m)
            code = code * K + pq.subs[m].indices[r];
        out << detail::format_double(z(r, 0)) << ',' << detail::format_double(z(r, 1)) << ','
            << data.labels[r] << ',' << code << '\n';
    }
}

}  // namespace pqvae
