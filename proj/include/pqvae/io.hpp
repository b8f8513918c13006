#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pqvae/retrieval.hpp"
#include "pqvae/trainer.hpp"

// Binary artifact containers. Exact layouts are documented in
// docs/FORMATS.md; integers and reals are little-endian, doubles everywhere
// except the index's distance tables, which are 32-bit.

namespace pqvae {

inline constexpr char kModelMagic[8] = {'P', 'Q', 'V', 'A', 'E', '0', '0', '1'};
inline constexpr char kIndexMagic[8] = {'P', 'Q', 'I', 'D', 'X', '0', '0', '1'};

namespace detail {

class LittleEndianWriter {
public:
    explicit LittleEndianWriter(std::ostream& out) : out_(out) {}

    void bytes(const void* src, std::size_t n) {
        out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 8);
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }

private:
    std::ostream& out_;
};

class LittleEndianReader {
public:
    LittleEndianReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

    void bytes(void* dst, std::size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            raise(errc::parse, name_ + ": truncated at byte offset " +
                                   std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())));
        offset_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
               (std::uint32_t(b[3]) << 24);
    }
    std::uint64_t u64() {
        unsigned char b[8];
        bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::size_t offset() const { return offset_; }
    const std::string& name() const { return name_; }

private:
    std::istream& in_;
    std::string name_;
    std::size_t offset_ = 0;
};

}  // namespace detail

// Write-temp-then-rename so partially written artifacts never appear under
// the target name.
inline void atomic_write_file(const std::string& path,
                              const std::function<void(std::ostream&)>& writer) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), errc::io, "cannot open " + tmp + " for writing");
        writer(out);
        require(out.good(), errc::io, "write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    require(!ec, errc::io, "cannot rename " + tmp + " to " + path + ": " + ec.message());
}

// Trained model artifact: encoder, decoder, product codebook, slot count.
struct Model {
    DenseNet encoder;
    DenseNet decoder;
    ProductCodebook codebook;
    std::size_t latent_slots = 1;

    std::size_t input_dim() const { return encoder.input_dim(); }
    std::size_t latent_dim() const { return codebook.latent_dim(); }
    std::size_t num_subs() const { return codebook.num_subs(); }
    std::size_t codebook_size() const { return codebook.codebook_size(); }

    void validate() const {
        encoder.validate();
        decoder.validate();
        codebook.validate();
        require(encoder.output_dim() == latent_slots * codebook.latent_dim(), errc::config,
                "Model: encoder output does not match slots * latent dim");
        require(decoder.input_dim() == encoder.output_dim(), errc::config,
                "Model: decoder input does not match encoder output");
    }
};

namespace detail {

inline void write_net(LittleEndianWriter& w, const DenseNet& net) {
    w.u32(static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& layer : net.layers) {
        w.u32(static_cast<std::uint32_t>(layer.in_dim()));
        w.u32(static_cast<std::uint32_t>(layer.out_dim()));
        w.u8(static_cast<std::uint8_t>(layer.activation));
        for (double v : layer.weight.data) w.f64(v);
        for (double v : layer.bias.data) w.f64(v);
    }
}

inline DenseNet read_net(LittleEndianReader& r) {
    DenseNet net;
    const std::uint32_t count = r.u32();
    require(count >= 1 && count <= 64, errc::parse,
            r.name() + ": implausible layer count " + std::to_string(count));
    for (std::uint32_t li = 0; li < count; ++li) {
        const std::uint32_t in = r.u32();
        const std::uint32_t out = r.u32();
        const std::uint8_t act = r.u8();
        require(act <= 1, errc::parse, r.name() + ": unknown activation flag");
        DenseLayer layer;
        layer.weight = Tensor::row_major(out, in);
        layer.bias = Tensor({out});
        layer.activation = static_cast<Activation>(act);
        for (double& v : layer.weight.data) v = r.f64();
        for (double& v : layer.bias.data) v = r.f64();
        net.layers.push_back(std::move(layer));
    }
    return net;
}

inline void write_codebook(LittleEndianWriter& w, const Codebook& cb) {
    w.u32(static_cast<std::uint32_t>(cb.num_codewords()));
    w.u32(static_cast<std::uint32_t>(cb.dim()));
    w.f64(cb.gamma);
    for (double v : cb.codewords.data) w.f64(v);
    for (double v : cb.ema_counts.data) w.f64(v);
    for (double v : cb.ema_sums.data) w.f64(v);
}

inline Codebook read_codebook(LittleEndianReader& r) {
    const std::uint32_t K = r.u32();
    const std::uint32_t d = r.u32();
    Codebook cb;
    cb.gamma = r.f64();
    cb.codewords = Tensor::row_major(K, d);
    cb.ema_counts = Tensor({K});
    cb.ema_sums = Tensor::row_major(K, d);
    for (double& v : cb.codewords.data) v = r.f64();
    for (double& v : cb.ema_counts.data) v = r.f64();
    for (double& v : cb.ema_sums.data) v = r.f64();
    return cb;
}

}  // namespace detail

inline void write_model(std::ostream& out, const Model& model) {
    model.validate();
    detail::LittleEndianWriter w(out);
    w.bytes(kModelMagic, 8);
    w.u32(static_cast<std::uint32_t>(model.input_dim()));
    w.u32(static_cast<std::uint32_t>(model.latent_dim()));
    w.u32(static_cast<std::uint32_t>(model.latent_slots));
    w.u32(static_cast<std::uint32_t>(model.num_subs()));
    w.u32(static_cast<std::uint32_t>(model.codebook_size()));
    detail::write_net(w, model.encoder);
    detail::write_net(w, model.decoder);
    w.u32(static_cast<std::uint32_t>(model.num_subs()));
    w.u32(static_cast<std::uint32_t>(model.latent_dim()));
    w.u32(static_cast<std::uint32_t>(model.codebook_size()));
    for (const auto& sub : model.codebook.subs) detail::write_codebook(w, sub);
}

inline Model read_model(std::istream& in, const std::string& name) {
    detail::LittleEndianReader r(in, name);
    char magic[8];
    r.bytes(magic, 8);
    require(std::memcmp(magic, kModelMagic, 8) == 0, errc::parse,
            name + ": bad magic, not a PQVAE001 model file");

    Model model;
    const std::uint32_t input_dim = r.u32();
    const std::uint32_t latent_dim = r.u32();
    model.latent_slots = r.u32();
    const std::uint32_t num_subs = r.u32();
    const std::uint32_t codebook_size = r.u32();

    model.encoder = detail::read_net(r);
    model.decoder = detail::read_net(r);

    const std::uint32_t M = r.u32();
    const std::uint32_t D = r.u32();
    const std::uint32_t K = r.u32();
    require(M == num_subs && D == latent_dim && K == codebook_size, errc::parse,
            name + ": codebook block disagrees with header");
    for (std::uint32_t m = 0; m < M; ++m)
        model.codebook.subs.push_back(detail::read_codebook(r));

    require(model.input_dim() == input_dim, errc::parse,
            name + ": encoder input dim disagrees with header");
    model.validate();
    return model;
}

inline void save_model(const std::string& path, const Model& model) {
    atomic_write_file(path, [&](std::ostream& out) { write_model(out, model); });
}

inline Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), errc::io, "cannot open " + path);
    return read_model(in, path);
}

// Retrieval index: parameter stamp, distance tables (32-bit reals), item
// ids, bit-packed codes (ceil(log2 K) bits per index, byte-aligned per
// item), and an optional label block.
struct RetrievalIndex {
    LookupTables tables;
    EncodingDatabase database;
};

namespace detail {

inline std::size_t packed_code_bytes(std::size_t num_subs, std::size_t slots, int bits) {
    return (num_subs * slots * static_cast<std::size_t>(bits) + 7) / 8;
}

inline void pack_code(const CodeVector& code, int bits, std::vector<std::uint8_t>& out) {
    std::fill(out.begin(), out.end(), 0);
    std::size_t bit_pos = 0;
    for (std::uint32_t idx : code.indices) {
        for (int b = 0; b < bits; ++b) {
            if (idx & (1u << b)) out[(bit_pos + b) / 8] |= std::uint8_t(1u << ((bit_pos + b) % 8));
        }
        bit_pos += static_cast<std::size_t>(bits);
    }
}

inline CodeVector unpack_code(const std::vector<std::uint8_t>& in, std::size_t num_subs,
                              std::size_t slots, int bits) {
    CodeVector code;
    code.slots = slots;
    code.indices.assign(num_subs * slots, 0);
    std::size_t bit_pos = 0;
    for (auto& idx : code.indices) {
        for (int b = 0; b < bits; ++b) {
            if (in[(bit_pos + b) / 8] & (1u << ((bit_pos + b) % 8))) idx |= 1u << b;
        }
        bit_pos += static_cast<std::size_t>(bits);
    }
    return code;
}

}  // namespace detail

inline void write_index(std::ostream& out, const RetrievalIndex& index) {
    index.database.validate();
    require(index.tables.num_subs == index.database.num_subs &&
                index.tables.codebook_size == index.database.codebook_size,
            errc::stamp_mismatch, "write_index: tables/database parameter mismatch");

    detail::LittleEndianWriter w(out);
    w.bytes(kIndexMagic, 8);
    w.u32(static_cast<std::uint32_t>(index.database.num_subs));
    w.u32(static_cast<std::uint32_t>(index.database.slots));
    w.u32(static_cast<std::uint32_t>(index.database.codebook_size));
    for (double v : index.tables.entries) w.f32(static_cast<float>(v));

    w.u64(index.database.size());
    for (std::uint64_t id : index.database.item_ids) w.u64(id);

    const int bits = bits_per_index(static_cast<int>(index.database.codebook_size));
    std::vector<std::uint8_t> packed(
        detail::packed_code_bytes(index.database.num_subs, index.database.slots, bits));
    for (const auto& code : index.database.codes) {
        detail::pack_code(code, bits, packed);
        if (!packed.empty()) w.bytes(packed.data(), packed.size());
    }

    w.u8(index.database.has_labels() ? 1 : 0);
    if (index.database.has_labels())
        for (int lbl : index.database.labels) w.i32(lbl);
}

inline RetrievalIndex read_index(std::istream& in, const std::string& name) {
    detail::LittleEndianReader r(in, name);
    char magic[8];
    r.bytes(magic, 8);
    require(std::memcmp(magic, kIndexMagic, 8) == 0, errc::parse,
            name + ": bad magic, not a PQIDX001 index file");

    RetrievalIndex index;
    const std::uint32_t M = r.u32();
    const std::uint32_t N = r.u32();
    const std::uint32_t K = r.u32();
    require(M >= 1 && N >= 1 && K >= 1, errc::parse, name + ": bad parameter stamp");

    index.tables.num_subs = M;
    index.tables.codebook_size = K;
    index.tables.entries.resize(std::size_t{M} * K * K);
    for (double& v : index.tables.entries) v = static_cast<double>(r.f32());

    index.database.num_subs = M;
    index.database.slots = N;
    index.database.codebook_size = K;
    const std::uint64_t count = r.u64();
    index.database.item_ids.resize(count);
    for (auto& id : index.database.item_ids) id = r.u64();

    const int bits = bits_per_index(static_cast<int>(K));
    std::vector<std::uint8_t> packed(detail::packed_code_bytes(M, N, bits));
    index.database.codes.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        if (!packed.empty()) r.bytes(packed.data(), packed.size());
        index.database.codes.push_back(detail::unpack_code(packed, M, N, bits));
    }

    const std::uint8_t has_labels = r.u8();
    require(has_labels <= 1, errc::parse, name + ": bad label flag");
    if (has_labels) {
        index.database.labels.resize(count);
        for (auto& lbl : index.database.labels) lbl = r.i32();
    }
    index.database.validate();
    return index;
}

inline void save_index(const std::string& path, const RetrievalIndex& index) {
    atomic_write_file(path, [&](std::ostream& out) { write_index(out, index); });
}

inline RetrievalIndex load_index(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), errc::io, "cannot open " + path);
    return read_index(in, path);
}

// Diagnostics stream: one JSON object per line, iteration-ordered.
inline void write_diagnostics(std::ostream& out, const std::vector<DiagnosticsRecord>& log) {
    for (const auto& rec : log) {
        nlohmann::json j;
        j["iteration"] = rec.iteration;
        j["recon_error"] = rec.recon_error;
        j["quant_error"] = rec.quant_error;
        j["distance_ratio"] = rec.distance_ratio;
        j["code_entropy_per_sub"] = rec.code_entropy_per_sub;
        j["codeword_usage"] = rec.codeword_usage;
        out << j.dump() << '\n';
    }
}

inline std::vector<DiagnosticsRecord> read_diagnostics(std::istream& in,
                                                       const std::string& name) {
    std::vector<DiagnosticsRecord> log;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        require(!j.is_discarded(), errc::parse,
                name + ": bad JSON at line " + std::to_string(line_no));
        DiagnosticsRecord rec;
        rec.iteration = j.at("iteration").get<std::size_t>();
        rec.recon_error = j.at("recon_error").get<double>();
        rec.quant_error = j.at("quant_error").get<double>();
        rec.distance_ratio = j.at("distance_ratio").get<double>();
        rec.code_entropy_per_sub = j.at("code_entropy_per_sub").get<std::vector<double>>();
        rec.codeword_usage =
            j.at("codeword_usage").get<std::vector<std::vector<std::size_t>>>();
        log.push_back(std::move(rec));
    }
    return log;
}

// Sweep table: CSV with one row per lambda.
inline void write_sweep(std::ostream& out, const std::vector<SweepPoint>& rows) {
    out << "lambda,distance_ratio,recon_error\n";
    for (const auto& row : rows)
        out << detail::format_double(row.lambda) << ',' << detail::format_double(row.distance_ratio)
            << ',' << detail::format_double(row.recon_error) << '\n';
}

// Plain-text encodings: id, label, then the M*N code indices.
inline void write_encodings(std::ostream& out, const std::vector<std::uint64_t>& ids,
                            const std::vector<int>& labels,
                            const std::vector<CodeVector>& codes) {
    require(ids.size() == codes.size() && labels.size() == codes.size(), errc::state,
            "write_encodings: length mismatch");
    const std::size_t width = codes.empty() ? 0 : codes.front().indices.size();
    out << "id,label";
    for (std::size_t c = 0; c < width; ++c) out << ",code" << c;
    out << '\n';
    for (std::size_t i = 0; i < codes.size(); ++i) {
        out << ids[i] << ',' << labels[i];
        for (std::uint32_t idx : codes[i].indices) out << ',' << idx;
        out << '\n';
    }
}

struct EncodingsFile {
    std::vector<std::uint64_t> ids;
    std::vector<int> labels;
    std::vector<CodeVector> codes;
};

inline EncodingsFile read_encodings(std::istream& in, const std::string& name,
                                    std::size_t num_subs, std::size_t slots) {
    EncodingsFile out;
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), errc::parse, name + ": empty encodings file");
    const std::size_t expected = num_subs * slots;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        require(cells.size() == expected + 2, errc::parse,
                name + ": line " + std::to_string(line_no) + " has " +
                    std::to_string(cells.size()) + " fields, expected " +
                    std::to_string(expected + 2));
        try {
            out.ids.push_back(std::stoull(cells[0]));
            out.labels.push_back(std::stoi(cells[1]));
            CodeVector code;
            code.slots = slots;
            for (std::size_t c = 0; c < expected; ++c)
                code.indices.push_back(static_cast<std::uint32_t>(std::stoul(cells[c + 2])));
            out.codes.push_back(std::move(code));
        } catch (const std::exception&) {
            raise(errc::parse, name + ": bad number at line " + std::to_string(line_no));
        }
    }
    return out;
}

}  // namespace pqvae
