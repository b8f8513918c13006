#pragma once

#include <algorithm>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pqvae/config.hpp"
#include "pqvae/io.hpp"

namespace pqvae {

// Exit codes, one per error category so scripts can branch on failures.
inline int exit_code_for(errc kind) {
    switch (kind) {
        case errc::config:
        case errc::shape:
        case errc::state:
        case errc::input: return 2;
        case errc::io: return 3;
        case errc::parse: return 4;
        case errc::stamp_mismatch: return 5;
        case errc::training: return 6;
    }
    return 1;
}

namespace cli_detail {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

inline PipelineConfig load(const CommonArgs& common) {
    require(!common.config_path.empty(), errc::config, "missing --config");
    return load_config(common.config_path, common.overrides);
}

inline Dataset select_split(const PipelineConfig& cfg, const Dataset& full,
                            const std::string& split, std::size_t& id_offset) {
    if (split == "db") {
        id_offset = 0;
        return database_split(cfg, full);
    }
    if (split == "query") {
        id_offset = full.size() - cfg.query_split;
        return query_split(cfg, full);
    }
    require(split == "all", errc::config, "split must be db, query, or all");
    id_offset = 0;
    return full;
}

inline void warn_rate(std::ostream& out, std::size_t K) {
    if (!is_power_of_two(K))
        out << "warning: codebook_size " << K
            << " is not a power of two; rate uses ceil(log2 K) bits per index\n";
}

inline Model train_model(const PipelineConfig& cfg, const Dataset& db,
                         std::vector<DiagnosticsRecord>& log_out, std::ostream& out) {
    const TrainResult result = train(cfg.train, db);
    require(!result.aborted, errc::training,
            "training aborted: " + result.abort_reason + " (last good iteration " +
                std::to_string(result.abort_iteration - 1) + ")");
    log_out = result.log;
    Model model;
    model.encoder = result.encoder;
    model.decoder = result.decoder;
    model.codebook = result.codebook;
    model.latent_slots = cfg.train.latent_slots;
    if (!result.log.empty())
        out << "trained " << result.log.size() << " iterations, final recon_error "
            << detail::format_double(result.log.back().recon_error) << "\n";
    return model;
}

inline std::vector<CodeVector> encode_split(const Model& model, const Dataset& part) {
    return encode(model.codebook, model.encoder, part.features, model.latent_slots);
}

inline void check_model_index_stamp(const Model& model, const RetrievalIndex& index) {
    require(model.num_subs() == index.database.num_subs &&
                model.latent_slots == index.database.slots &&
                model.codebook_size() == index.database.codebook_size,
            errc::stamp_mismatch,
            "model and index parameter stamps disagree (M/N/K: model " +
                std::to_string(model.num_subs()) + "/" + std::to_string(model.latent_slots) +
                "/" + std::to_string(model.codebook_size()) + ", index " +
                std::to_string(index.database.num_subs) + "/" +
                std::to_string(index.database.slots) + "/" +
                std::to_string(index.database.codebook_size) + ")");
}

}  // namespace cli_detail

// Full command-line surface. `args` excludes the program name. Returns the
// process exit code; all output goes through the supplied streams so tests
// can drive commands in-process.
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Product-quantized autoencoder training and lookup-table retrieval"};
    app.require_subcommand(1);

    cli_detail::CommonArgs common;

    // train
    auto* cmd_train = app.add_subcommand("train", "Train a model and write PQVAE001 + diagnostics");
    std::string model_out = "model.pqvae";
    std::string log_out_path = "diagnostics.jsonl";
    cmd_train->add_option("--config", common.config_path, "key=value config file")->required();
    cmd_train->add_option("--set", common.overrides, "config override key=value");
    cmd_train->add_option("--model-out", model_out, "output model path");
    cmd_train->add_option("--log-out", log_out_path, "output diagnostics path");

    // sweep-lambda
    auto* cmd_sweep = app.add_subcommand("sweep-lambda", "Train once per lambda, emit ratio/error curve");
    std::string sweep_out = "sweep.csv";
    std::string lambda_list;
    cmd_sweep->add_option("--config", common.config_path, "key=value config file")->required();
    cmd_sweep->add_option("--set", common.overrides, "config override key=value");
    cmd_sweep->add_option("--lambdas", lambda_list, "comma-separated lambda grid (default built-in)");
    cmd_sweep->add_option("--out", sweep_out, "output CSV path");

    // encode
    auto* cmd_encode = app.add_subcommand("encode", "Encode a dataset split to discrete codes");
    std::string model_path;
    std::string split = "db";
    std::string encode_out = "encodings.csv";
    cmd_encode->add_option("--config", common.config_path, "key=value config file")->required();
    cmd_encode->add_option("--set", common.overrides, "config override key=value");
    cmd_encode->add_option("--model", model_path, "trained PQVAE001 model")->required();
    cmd_encode->add_option("--split", split, "db | query | all");
    cmd_encode->add_option("--out", encode_out, "output encodings CSV");

    // build-index
    auto* cmd_build = app.add_subcommand("build-index", "Build a PQIDX001 index from encodings");
    std::string encodings_path;
    std::string index_out = "index.pqidx";
    bool drop_labels = false;
    cmd_build->add_option("--model", model_path, "trained PQVAE001 model")->required();
    cmd_build->add_option("--encodings", encodings_path, "encodings CSV")->required();
    cmd_build->add_option("--out", index_out, "output index path");
    cmd_build->add_flag("--no-labels", drop_labels, "omit the label block");

    // query
    auto* cmd_query = app.add_subcommand("query", "Rank database items for one query");
    std::string index_path;
    std::string code_arg;
    std::size_t row = 0;
    std::size_t topk = 10;
    cmd_query->add_option("--index", index_path, "PQIDX001 index")->required();
    cmd_query->add_option("--code", code_arg, "explicit code indices, comma separated");
    cmd_query->add_option("--config", common.config_path, "config (for --row queries)");
    cmd_query->add_option("--set", common.overrides, "config override key=value");
    cmd_query->add_option("--model", model_path, "model (for --row queries)");
    cmd_query->add_option("--row", row, "encode this row of the query split as the query");
    cmd_query->add_option("--k", topk, "number of results");

    // evaluate
    auto* cmd_eval = app.add_subcommand("evaluate", "Mean average precision of the query split");
    std::size_t rank_depth = 1000;
    std::string report_out;
    cmd_eval->add_option("--config", common.config_path, "key=value config file")->required();
    cmd_eval->add_option("--set", common.overrides, "config override key=value");
    cmd_eval->add_option("--model", model_path, "trained PQVAE001 model")->required();
    cmd_eval->add_option("--index", index_path, "PQIDX001 index")->required();
    cmd_eval->add_option("--R", rank_depth, "rank depth for mAP");
    cmd_eval->add_option("--report", report_out, "write machine-readable JSON report here");

    // export-latents
    auto* cmd_export = app.add_subcommand("export-latents", "Write 2-D latent scatter CSV");
    std::string scatter_out = "latents.csv";
    cmd_export->add_option("--config", common.config_path, "key=value config file")->required();
    cmd_export->add_option("--set", common.overrides, "config override key=value");
    cmd_export->add_option("--model", model_path, "trained PQVAE001 model")->required();
    cmd_export->add_option("--split", split, "db | query | all");
    cmd_export->add_option("--out", scatter_out, "output CSV path");

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));

        if (cmd_train->parsed()) {
            const PipelineConfig cfg = cli_detail::load(common);
            const Dataset full = load_dataset(cfg);
            const Dataset db = database_split(cfg, full);
            std::vector<DiagnosticsRecord> log;
            const Model model = cli_detail::train_model(cfg, db, log, out);
            save_model(model_out, model);
            atomic_write_file(log_out_path,
                              [&](std::ostream& os) { write_diagnostics(os, log); });
            cli_detail::warn_rate(out, cfg.train.codebook_size);
            out << "rate: "
                << rate_bits(static_cast<int>(cfg.train.latent_slots),
                             static_cast<int>(cfg.train.num_subs),
                             static_cast<int>(cfg.train.codebook_size))
                << " bits per item\n";
            out << "model: " << model_out << "\ndiagnostics: " << log_out_path << "\n";
        } else if (cmd_sweep->parsed()) {
            const PipelineConfig cfg = cli_detail::load(common);
            const Dataset full = load_dataset(cfg);
            const Dataset db = database_split(cfg, full);
            std::vector<double> grid;
            if (lambda_list.empty()) {
                grid = default_lambda_grid();
            } else {
                for (const auto& item : detail::split_list(lambda_list))
                    grid.push_back(detail::parse_real("lambdas", item));
            }
            const std::vector<SweepPoint> rows = sweep_lambda(cfg.train, db, grid);
            atomic_write_file(sweep_out, [&](std::ostream& os) { write_sweep(os, rows); });
            for (const auto& r : rows)
                out << "lambda " << detail::format_double(r.lambda) << ": distance_ratio "
                    << detail::format_double(r.distance_ratio) << ", recon_error "
                    << detail::format_double(r.recon_error) << "\n";
            out << "sweep: " << sweep_out << "\n";
        } else if (cmd_encode->parsed()) {
            const PipelineConfig cfg = cli_detail::load(common);
            const Model model = load_model(model_path);
            const Dataset full = load_dataset(cfg);
            std::size_t id_offset = 0;
            const Dataset part = cli_detail::select_split(cfg, full, split, id_offset);
            const std::vector<CodeVector> codes = cli_detail::encode_split(model, part);
            std::vector<std::uint64_t> ids(codes.size());
            for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = id_offset + i;
            atomic_write_file(encode_out, [&](std::ostream& os) {
                write_encodings(os, ids, part.labels, codes);
            });
            out << "encoded " << codes.size() << " items to " << encode_out << "\n";
        } else if (cmd_build->parsed()) {
            const Model model = load_model(model_path);
            std::ifstream enc_in(encodings_path);
            require(enc_in.good(), errc::io, "cannot open " + encodings_path);
            const EncodingsFile enc = read_encodings(enc_in, encodings_path, model.num_subs(),
                                                     model.latent_slots);
            RetrievalIndex index;
            index.tables = build_tables(model.codebook);
            index.database.num_subs = model.num_subs();
            index.database.slots = model.latent_slots;
            index.database.codebook_size = model.codebook_size();
            index.database.item_ids = enc.ids;
            index.database.codes = enc.codes;
            if (!drop_labels) index.database.labels = enc.labels;
            save_index(index_out, index);
            out << "indexed " << index.database.size() << " items to " << index_out << "\n";
        } else if (cmd_query->parsed()) {
            const RetrievalIndex index = load_index(index_path);
            CodeVector query_code;
            if (!code_arg.empty()) {
                query_code.slots = index.database.slots;
                for (const auto& item : detail::split_list(code_arg))
                    query_code.indices.push_back(
                        static_cast<std::uint32_t>(detail::parse_size("code", item)));
            } else {
                require(!model_path.empty() && !common.config_path.empty(), errc::config,
                        "query needs either --code or --model + --config + --row");
                const PipelineConfig cfg = cli_detail::load(common);
                const Model model = load_model(model_path);
                cli_detail::check_model_index_stamp(model, index);
                const Dataset full = load_dataset(cfg);
                std::size_t id_offset = 0;
                const Dataset queries = cli_detail::select_split(cfg, full, "query", id_offset);
                require(row < queries.size(), errc::config,
                        "--row is beyond the query split size");
                const Dataset one = queries.slice(row, row + 1);
                query_code = cli_detail::encode_split(model, one).front();
            }
            for (const auto& hit : query_topk(index.database, index.tables, query_code, topk))
                out << hit.item_id << ' ' << detail::format_double(hit.distance) << '\n';
        } else if (cmd_eval->parsed()) {
            const PipelineConfig cfg = cli_detail::load(common);
            const Model model = load_model(model_path);
            const RetrievalIndex index = load_index(index_path);
            cli_detail::check_model_index_stamp(model, index);
            require(index.database.has_labels(), errc::config,
                    "evaluate needs an index with a label block");
            const Dataset full = load_dataset(cfg);
            std::size_t id_offset = 0;
            const Dataset queries = cli_detail::select_split(cfg, full, "query", id_offset);
            require(queries.size() > 0, errc::config, "evaluate: empty query split");
            const std::vector<CodeVector> codes = cli_detail::encode_split(model, queries);
            std::vector<std::pair<CodeVector, int>> query_set(codes.size());
            for (std::size_t i = 0; i < codes.size(); ++i)
                query_set[i] = {codes[i], queries.labels[i]};
            const double map_value =
                mean_average_precision(index.database, index.tables, query_set, rank_depth);
            const int rate = rate_bits(static_cast<int>(model.latent_slots),
                                       static_cast<int>(model.num_subs()),
                                       static_cast<int>(model.codebook_size()));
            cli_detail::warn_rate(out, model.codebook_size());
            out << "mAP@" << rank_depth << " = " << detail::format_double(map_value) << " ("
                << query_set.size() << " queries, " << index.database.size()
                << " database items, " << rate << " bits)\n";
            if (!report_out.empty()) {
                nlohmann::json j;
                j["map"] = map_value;
                j["rank_depth"] = rank_depth;
                j["num_queries"] = query_set.size();
                j["num_database"] = index.database.size();
                j["rate_bits"] = rate;
                atomic_write_file(report_out,
                                  [&](std::ostream& os) { os << j.dump(2) << '\n'; });
            }
        } else if (cmd_export->parsed()) {
            const PipelineConfig cfg = cli_detail::load(common);
            const Model model = load_model(model_path);
            const Dataset full = load_dataset(cfg);
            std::size_t id_offset = 0;
            const Dataset part = cli_detail::select_split(cfg, full, split, id_offset);
            atomic_write_file(scatter_out, [&](std::ostream& os) {
                export_latents(model.encoder, model.codebook, part, os);
            });
            out << "latents: " << scatter_out << "\n";
        }
        return 0;
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: usage: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << errc_name(e.kind()) << ": " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "error: internal: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace pqvae
