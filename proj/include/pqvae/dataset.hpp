#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "pqvae/rng.hpp"
#include "pqvae/tensor.hpp"

namespace pqvae {

// Affine normalization applied uniformly to every feature on load;
// raw = (normalized - offset) / scale.
struct Normalization {
    double scale = 1.0;
    double offset = 0.0;
};

struct Dataset {
    Tensor features;  // [num_items x L]
    std::vector<int> labels;
    std::string source;
    Normalization normalization;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }

    void validate() const {
        require(labels.size() == size(), errc::state, "Dataset: labels/features length mismatch");
        require(features.all_finite(), errc::input, "Dataset: non-finite features");
    }

    // Row range [begin, end) as an independent dataset.
    Dataset slice(std::size_t begin, std::size_t end) const {
        require(begin <= end && end <= size(), errc::config, "Dataset::slice: bad range");
        Dataset out;
        out.features = Tensor::row_major(end - begin, dim());
        for (std::size_t r = begin; r < end; ++r)
            for (std::size_t c = 0; c < dim(); ++c) out.features(r - begin, c) = features(r, c);
        out.labels.assign(labels.begin() + begin, labels.begin() + end);
        out.source = source;
        out.normalization = normalization;
        return out;
    }
};

namespace detail {

class BigEndianReader {
public:
    BigEndianReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        require(in_.good(), errc::io, "cannot open " + path);
    }

    std::uint32_t read_u32() {
        unsigned char buf[4];
        read_bytes(buf, 4);
        return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
               (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
    }

    void read_bytes(void* dst, std::size_t n) {
        in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            raise(errc::parse, path_ + ": truncated at byte offset " +
                                   std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())));
        offset_ += n;
    }

    std::size_t offset() const { return offset_; }

private:
    std::string path_;
    std::ifstream in_;
    std::size_t offset_ = 0;
};

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// MNIST-style IDX pair: big-endian image file (magic 0x00000803) and label
// file (magic 0x00000801). Pixels are scaled to [0,1].
inline Dataset load_mnist(const std::string& images_path, const std::string& labels_path,
                          std::size_t limit = 0) {
    detail::BigEndianReader images(images_path);
    const std::uint32_t img_magic = images.read_u32();
    require(img_magic == kIdxImagesMagic, errc::parse,
            images_path + ": bad IDX image magic " + std::to_string(img_magic));
    const std::uint32_t count = images.read_u32();
    const std::uint32_t rows = images.read_u32();
    const std::uint32_t cols = images.read_u32();

    detail::BigEndianReader labels(labels_path);
    const std::uint32_t lbl_magic = labels.read_u32();
    require(lbl_magic == kIdxLabelsMagic, errc::parse,
            labels_path + ": bad IDX label magic " + std::to_string(lbl_magic));
    const std::uint32_t label_count = labels.read_u32();
    require(label_count == count, errc::parse,
            "IDX image/label count mismatch: " + std::to_string(count) + " images vs " +
                std::to_string(label_count) + " labels");

    const std::size_t take = limit > 0 && limit < count ? limit : count;
    const std::size_t L = static_cast<std::size_t>(rows) * cols;

    Dataset ds;
    ds.source = "mnist:" + images_path;
    ds.normalization = {1.0 / 255.0, 0.0};
    ds.features = Tensor::row_major(take, L);
    ds.labels.resize(take);

    std::vector<unsigned char> pixel_row(L);
    for (std::size_t i = 0; i < take; ++i) {
        images.read_bytes(pixel_row.data(), L);
        for (std::size_t c = 0; c < L; ++c)
            ds.features(i, c) = static_cast<double>(pixel_row[c]) / 255.0;
        unsigned char lbl;
        labels.read_bytes(&lbl, 1);
        ds.labels[i] = static_cast<int>(lbl);
    }
    return ds;
}

inline constexpr std::size_t kCifarRecordBytes = 3073;  // 1 label byte + 32*32*3 pixels

// One CIFAR-10 binary batch: repeated records of a label byte followed by
// 3072 pixel bytes. An empty file yields an empty dataset.
inline Dataset load_cifar10(const std::string& path, std::size_t limit = 0) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    require(in.good(), errc::io, "cannot open " + path);
    const std::size_t file_size = static_cast<std::size_t>(in.tellg());
    require(file_size % kCifarRecordBytes == 0, errc::parse,
            path + ": size " + std::to_string(file_size) + " is not a multiple of " +
                std::to_string(kCifarRecordBytes));
    in.seekg(0);

    const std::size_t count = file_size / kCifarRecordBytes;
    const std::size_t take = limit > 0 && limit < count ? limit : count;
    const std::size_t L = kCifarRecordBytes - 1;

    Dataset ds;
    ds.source = "cifar10:" + path;
    ds.normalization = {1.0 / 255.0, 0.0};
    ds.features = Tensor::row_major(take, L);
    ds.labels.resize(take);

    std::vector<unsigned char> record(kCifarRecordBytes);
    for (std::size_t i = 0; i < take; ++i) {
        in.read(reinterpret_cast<char*>(record.data()), kCifarRecordBytes);
        require(static_cast<std::size_t>(in.gcount()) == kCifarRecordBytes, errc::parse,
                path + ": truncated at byte offset " + std::to_string(i * kCifarRecordBytes));
        ds.labels[i] = static_cast<int>(record[0]);
        for (std::size_t c = 0; c < L; ++c)
            ds.features(i, c) = static_cast<double>(record[c + 1]) / 255.0;
    }
    return ds;
}

// Concatenation of several CIFAR batch files.
inline Dataset load_cifar10(const std::vector<std::string>& paths, std::size_t limit = 0) {
    require(!paths.empty(), errc::config, "load_cifar10: no batch files given");
    Dataset all = load_cifar10(paths[0], limit);
    for (std::size_t p = 1; p < paths.size(); ++p) {
        if (limit > 0 && all.size() >= limit) break;
        Dataset next =
            load_cifar10(paths[p], limit > 0 ? limit - all.size() : 0);
        Tensor merged = Tensor::row_major(all.size() + next.size(), all.dim());
        std::copy(all.features.data.begin(), all.features.data.end(), merged.data.begin());
        std::copy(next.features.data.begin(), next.features.data.end(),
                  merged.data.begin() + static_cast<std::ptrdiff_t>(all.features.size()));
        all.features = std::move(merged);
        all.labels.insert(all.labels.end(), next.labels.begin(), next.labels.end());
    }
    all.source = "cifar10:" + paths[0] + (paths.size() > 1 ? ",..." : "");
    return all;
}

struct SyntheticSpec {
    std::size_t num_clusters = 10;
    std::size_t points_per_cluster = 100;
    std::size_t dimension = 16;
    double cluster_std = 0.05;
    std::uint64_t seed = 1;

    void validate() const {
        require(num_clusters >= 1 && points_per_cluster >= 1 && dimension >= 1, errc::config,
                "SyntheticSpec: counts and dimension must be positive");
        require(cluster_std > 0.0, errc::config, "SyntheticSpec: cluster_std must be > 0");
    }
};

// Isotropic Gaussian clusters with centers drawn uniformly in [0,1]^dim.
// Items are emitted round-robin over clusters (item i belongs to cluster
// i mod num_clusters) so any prefix/suffix split stays class-balanced.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng center_rng = Rng::with_salt(spec.seed, 0x5e7);
    Rng noise_rng = Rng::with_salt(spec.seed, 0x901e);

    const std::size_t n = spec.num_clusters * spec.points_per_cluster;
    Tensor centers = Tensor::row_major(spec.num_clusters, spec.dimension);
    for (double& v : centers.data) v = center_rng.uniform();

    Dataset ds;
    ds.source = "synthetic:seed=" + std::to_string(spec.seed);
    ds.features = Tensor::row_major(n, spec.dimension);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cluster = i % spec.num_clusters;
        ds.labels[i] = static_cast<int>(cluster);
        for (std::size_t c = 0; c < spec.dimension; ++c)
            ds.features(i, c) = centers(cluster, c) + spec.cluster_std * noise_rng.normal();
    }
    return ds;
}

}  // namespace pqvae
