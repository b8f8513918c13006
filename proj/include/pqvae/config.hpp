#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pqvae/dataset.hpp"
#include "pqvae/trainer.hpp"

namespace pqvae {

// Everything a pipeline run needs, from one flat key=value file plus
// command-line overrides. Self-describing configs are what make reruns
// byte-reproducible, so there are no environment-variable knobs.
struct PipelineConfig {
    std::string dataset = "synthetic";  // synthetic | mnist | cifar10
    std::string mnist_images;
    std::string mnist_labels;
    std::vector<std::string> cifar_batches;
    std::size_t limit_items = 0;   // keep only the first n items (0 = all)
    std::size_t query_split = 0;   // trailing items held out of training/database as queries
    SyntheticSpec synthetic;
    TrainConfig train;

    void validate() const {
        require(dataset == "synthetic" || dataset == "mnist" || dataset == "cifar10",
                errc::config, "config: dataset must be synthetic, mnist, or cifar10");
        train.validate();
        if (dataset == "synthetic") synthetic.validate();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        require(pos == value.size() && v >= 0, errc::config, "");
        return static_cast<std::size_t>(v);
    } catch (...) {
        raise(errc::config, "config: bad integer for " + key + ": '" + value + "'");
    }
}

inline double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        require(pos == value.size(), errc::config, "");
        return v;
    } catch (...) {
        raise(errc::config, "config: bad real for " + key + ": '" + value + "'");
    }
}

}  // namespace detail

inline void apply_config_entry(PipelineConfig& cfg, const std::string& key,
                               const std::string& value) {
    using detail::parse_real;
    using detail::parse_size;

    if (key == "dataset") cfg.dataset = value;
    else if (key == "mnist_images") cfg.mnist_images = value;
    else if (key == "mnist_labels") cfg.mnist_labels = value;
    else if (key == "cifar_batches") cfg.cifar_batches = detail::split_list(value);
    else if (key == "limit_items") cfg.limit_items = parse_size(key, value);
    else if (key == "query_split") cfg.query_split = parse_size(key, value);
    else if (key == "synthetic_clusters") cfg.synthetic.num_clusters = parse_size(key, value);
    else if (key == "synthetic_points_per_cluster")
        cfg.synthetic.points_per_cluster = parse_size(key, value);
    else if (key == "synthetic_dim") cfg.synthetic.dimension = parse_size(key, value);
    else if (key == "synthetic_std") cfg.synthetic.cluster_std = parse_real(key, value);
    else if (key == "synthetic_seed") cfg.synthetic.seed = parse_size(key, value);
    else if (key == "codebook_size") cfg.train.codebook_size = parse_size(key, value);
    else if (key == "num_subs") cfg.train.num_subs = parse_size(key, value);
    else if (key == "latent_dim") cfg.train.latent_dim = parse_size(key, value);
    else if (key == "latent_slots") cfg.train.latent_slots = parse_size(key, value);
    else if (key == "beta") cfg.train.beta = parse_real(key, value);
    else if (key == "lambda") cfg.train.lambda = parse_real(key, value);
    else if (key == "gamma") cfg.train.gamma = parse_real(key, value);
    else if (key == "learning_rate") cfg.train.learning_rate = parse_real(key, value);
    else if (key == "batch_size") cfg.train.batch_size = parse_size(key, value);
    else if (key == "iterations") cfg.train.iterations = parse_size(key, value);
    else if (key == "seed") cfg.train.seed = parse_size(key, value);
    else if (key == "encoder_hidden") {
        cfg.train.encoder_hidden.clear();
        for (const auto& item : detail::split_list(value))
            cfg.train.encoder_hidden.push_back(parse_size(key, item));
    } else if (key == "codebook_update") {
        if (value == "minibatch") cfg.train.update_mode = CodebookUpdate::minibatch;
        else if (value == "ema") cfg.train.update_mode = CodebookUpdate::ema;
        else if (value == "loss_gradient") cfg.train.update_mode = CodebookUpdate::loss_gradient;
        else raise(errc::config, "config: unknown codebook_update '" + value + "'");
    } else {
        raise(errc::config, "config: unknown key '" + key + "'");
    }
}

// key = value lines; '#' starts a comment; blank lines ignored.
inline void apply_config_text(PipelineConfig& cfg, std::istream& in, const std::string& name) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, errc::config,
                name + ": line " + std::to_string(line_no) + " is not key=value");
        apply_config_entry(cfg, detail::trim(line.substr(0, eq)),
                           detail::trim(line.substr(eq + 1)));
    }
}

inline PipelineConfig load_config(const std::string& path,
                                  const std::vector<std::string>& overrides = {}) {
    PipelineConfig cfg;
    std::ifstream in(path);
    require(in.good(), errc::io, "cannot open config " + path);
    apply_config_text(cfg, in, path);
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        require(eq != std::string::npos, errc::config, "override is not key=value: '" + ov + "'");
        apply_config_entry(cfg, detail::trim(ov.substr(0, eq)), detail::trim(ov.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

inline Dataset load_dataset(const PipelineConfig& cfg) {
    Dataset ds;
    if (cfg.dataset == "synthetic") {
        ds = generate_synthetic(cfg.synthetic);
        if (cfg.limit_items > 0 && cfg.limit_items < ds.size())
            ds = ds.slice(0, cfg.limit_items);
    } else if (cfg.dataset == "mnist") {
        require(!cfg.mnist_images.empty() && !cfg.mnist_labels.empty(), errc::config,
                "config: mnist dataset needs mnist_images and mnist_labels");
        ds = load_mnist(cfg.mnist_images, cfg.mnist_labels, cfg.limit_items);
    } else {
        require(!cfg.cifar_batches.empty(), errc::config,
                "config: cifar10 dataset needs cifar_batches");
        ds = load_cifar10(cfg.cifar_batches, cfg.limit_items);
    }
    require(ds.size() > cfg.query_split, errc::config,
            "config: query_split must leave at least one training item");
    return ds;
}

// Items before the split train the model and populate the database; the
// trailing `query_split` items are the held-out query set.
inline Dataset database_split(const PipelineConfig& cfg, const Dataset& full) {
    return full.slice(0, full.size() - cfg.query_split);
}

inline Dataset query_split(const PipelineConfig& cfg, const Dataset& full) {
    return full.slice(full.size() - cfg.query_split, full.size());
}

}  // namespace pqvae
