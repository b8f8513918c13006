#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pqvae/product_quantizer.hpp"

namespace pqvae {

// M tables of K x K squared Euclidean distances between sub-codewords.
// Storing squared distances makes the per-subspace sum equal the full
// squared distance between reconstructed codewords, with no square roots at
// query time.
struct LookupTables {
    std::size_t num_subs = 0;       // M
    std::size_t codebook_size = 0;  // K
    std::vector<double> entries;    // [M * K * K], sub-major, row a, column b

    double at(std::size_t m, std::size_t a, std::size_t b) const {
        return entries[(m * codebook_size + a) * codebook_size + b];
    }
    double& at(std::size_t m, std::size_t a, std::size_t b) {
        return entries[(m * codebook_size + a) * codebook_size + b];
    }
};

inline LookupTables build_tables(const ProductCodebook& pcb) {
    pcb.validate();
    const std::size_t M = pcb.num_subs();
    const std::size_t K = pcb.codebook_size();
    const std::size_t d = pcb.sub_dim();

    LookupTables lt;
    lt.num_subs = M;
    lt.codebook_size = K;
    lt.entries.assign(M * K * K, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
        const Codebook& cb = pcb.subs[m];
        for (std::size_t a = 0; a < K; ++a) {
            for (std::size_t b = a + 1; b < K; ++b) {
                const double dist = squared_distance(cb.codewords.row(a), cb.codewords.row(b), d);
                lt.at(m, a, b) = dist;
                lt.at(m, b, a) = dist;
            }
        }
    }
    return lt;
}

// Quantized-space database: one discrete code per item plus its identifier,
// with class labels carried only for evaluation.
struct EncodingDatabase {
    std::vector<std::uint64_t> item_ids;
    std::vector<CodeVector> codes;
    std::vector<int> labels;  // empty when unlabeled
    std::size_t num_subs = 0;       // M
    std::size_t slots = 0;          // N
    std::size_t codebook_size = 0;  // K

    std::size_t size() const { return codes.size(); }
    bool has_labels() const { return !labels.empty(); }

    void validate() const {
        require(item_ids.size() == codes.size(), errc::state,
                "EncodingDatabase: ids/codes length mismatch");
        require(labels.empty() || labels.size() == codes.size(), errc::state,
                "EncodingDatabase: labels length mismatch");
        for (const auto& code : codes) {
            require(code.slots == slots && code.indices.size() == slots * num_subs, errc::state,
                    "EncodingDatabase: code inconsistent with parameter stamp");
            for (std::uint32_t idx : code.indices)
                require(idx < codebook_size, errc::state,
                        "EncodingDatabase: code index out of range");
        }
    }
};

inline void check_code_stamp(const LookupTables& lt, const CodeVector& code, const char* where) {
    require(code.slots >= 1 && code.indices.size() == code.slots * lt.num_subs,
            errc::stamp_mismatch,
            std::string(where) + ": code does not match table parameters");
    for (std::uint32_t idx : code.indices)
        require(idx < lt.codebook_size, errc::stamp_mismatch,
                std::string(where) + ": code index out of table range");
}

// Distance between two discrete encodings: the sum over all slots and
// sub-quantizers of the tabulated sub-codeword distances.
inline double lut_distance(const LookupTables& lt, const CodeVector& q, const CodeVector& x) {
    check_code_stamp(lt, q, "lut_distance");
    check_code_stamp(lt, x, "lut_distance");
    require(q.slots == x.slots, errc::stamp_mismatch, "lut_distance: slot count mismatch");

    const std::size_t M = lt.num_subs;
    double acc = 0.0;
    for (std::size_t n = 0; n < q.slots; ++n)
        for (std::size_t m = 0; m < M; ++m)
            acc += lt.at(m, q.indices[n * M + m], x.indices[n * M + m]);
    return acc;
}

struct QueryHit {
    std::uint64_t item_id = 0;
    double distance = 0.0;
};

// The k database items closest to the query, ascending by distance with ties
// broken by ascending item id. Asking for more items than exist returns all.
inline std::vector<QueryHit> query_topk(const EncodingDatabase& db, const LookupTables& lt,
                                        const CodeVector& q, std::size_t k) {
    require(k >= 1, errc::config, "query_topk: k must be >= 1");
    if (db.size() == 0) return {};
    require(db.num_subs == lt.num_subs && db.codebook_size == lt.codebook_size,
            errc::stamp_mismatch, "query_topk: database/tables parameter mismatch");

    std::vector<QueryHit> hits(db.size());
    for (std::size_t i = 0; i < db.size(); ++i)
        hits[i] = {db.item_ids[i], lut_distance(lt, q, db.codes[i])};

    const std::size_t take = std::min(k, hits.size());
    auto by_distance_then_id = [](const QueryHit& a, const QueryHit& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.item_id < b.item_id;
    };
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(),
                      by_distance_then_id);
    hits.resize(take);
    return hits;
}

// Average precision of one query within the top R ranks: precision summed at
// each relevant rank, divided by min(R, number of relevant items in the
// database). Zero when the database holds nothing relevant.
inline double average_precision(const EncodingDatabase& db, const LookupTables& lt,
                                const CodeVector& query, int query_label, std::size_t R) {
    require(R >= 1, errc::config, "average_precision: R must be >= 1");
    require(db.has_labels(), errc::config, "average_precision: database has no labels");

    std::size_t total_relevant = 0;
    for (int lbl : db.labels)
        if (lbl == query_label) ++total_relevant;
    if (total_relevant == 0) return 0.0;

    const std::vector<QueryHit> ranked = query_topk(db, lt, query, R);

    std::unordered_map<std::uint64_t, int> label_of;
    label_of.reserve(db.size());
    for (std::size_t i = 0; i < db.size(); ++i) label_of.emplace(db.item_ids[i], db.labels[i]);

    std::size_t hits = 0;
    double precision_sum = 0.0;
    for (std::size_t pos = 0; pos < ranked.size(); ++pos) {
        if (label_of.at(ranked[pos].item_id) == query_label) {
            ++hits;
            precision_sum += static_cast<double>(hits) / static_cast<double>(pos + 1);
        }
    }
    return precision_sum / static_cast<double>(std::min(R, total_relevant));
}

// Mean over queries of average precision at R.
inline double mean_average_precision(const EncodingDatabase& db, const LookupTables& lt,
                                     const std::vector<std::pair<CodeVector, int>>& queries,
                                     std::size_t R) {
    require(!queries.empty(), errc::config, "mean_average_precision: no queries");
    db.validate();
    double acc = 0.0;
    for (const auto& [code, label] : queries) acc += average_precision(db, lt, code, label, R);
    return acc / static_cast<double>(queries.size());
}

}  // namespace pqvae
