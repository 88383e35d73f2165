// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tokrec/common.hpp"
#include "tokrec/io.hpp"
#include "tokrec/pipeline.hpp"

using nlohmann::json;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    size_t start = 0;
    while (start <= s.size()) {
        size_t comma = s.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"token-weighted multi-target training for generative recommenders"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    uint64_t seed = 0;
    std::string out_base = "out";
    int threads = 0;
    bool quiet = false;
    app.add_option("--config", config_path, "JSON run config; flags win over it");
    CLI::Option* seed_opt =
        app.add_option("--seed", seed, "override the top-level seed");
    app.add_option("--out", out_base, "output base directory")
        ->capture_default_str();
    CLI::Option* threads_opt =
        app.add_option("--threads", threads, "training worker threads");
    app.add_flag("--quiet", quiet, "suppress progress output");

    CLI::App* c_synth = app.add_subcommand("synth", "generate a synthetic dataset");
    CLI::App* c_ingest =
        app.add_subcommand("ingest", "normalize an interaction log");
    std::string in_path, emb_path;
    c_ingest->add_option("--input", in_path, "interactions file (jsonl or csv)")
        ->required();
    c_ingest->add_option("--embeddings", emb_path,
                         "optional item embeddings (jsonl or binary)");
    CLI::App* c_quant =
        app.add_subcommand("quantize", "fit codebooks and assign semantic ids");
    CLI::App* c_analyze =
        app.add_subcommand("analyze", "dispersion, filter-ratio and purity reports");
    CLI::App* c_train = app.add_subcommand("train", "train the recommender");
    CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    CLI::App* c_ablate =
        app.add_subcommand("ablate", "run a weighting-mode ablation grid");

    std::string data_dir, quant_dir, train_dir;
    for (CLI::App* c : {c_quant, c_analyze, c_train, c_eval, c_ablate})
        c->add_option("--data", data_dir, "data directory (synth/ingest output)")
            ->required();
    for (CLI::App* c : {c_analyze, c_train, c_eval, c_ablate})
        c->add_option("--quant", quant_dir, "quantize output directory")
            ->required();
    c_eval->add_option("--train", train_dir, "train output directory")->required();

    std::string modes_csv = "none,fg,fr,multi,multi+curriculum";
    int num_seeds = 5;
    c_ablate->add_option("--modes", modes_csv, "comma-separated weighting modes")
        ->capture_default_str();
    c_ablate->add_option("--seeds", num_seeds, "seeds per mode")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        std::string cfg_text =
            config_path.empty() ? "{}" : tokrec::read_file(config_path);
        json root = json::parse(cfg_text, nullptr, false);
        if (root.is_discarded())
            throw tokrec::ContractError("config: invalid JSON in " + config_path);
        if (seed_opt->count() > 0) root["seed"] = seed;
        if (threads_opt->count() > 0) root["train"]["threads"] = threads;
        tokrec::RunConfig cfg = tokrec::parse_run_config(root.dump());

        std::string dir;
        if (c_synth->parsed()) {
            dir = tokrec::cmd_synth(cfg, out_base, quiet);
        } else if (c_ingest->parsed()) {
            dir = tokrec::cmd_ingest(cfg, in_path, emb_path, out_base, quiet);
        } else if (c_quant->parsed()) {
            dir = tokrec::cmd_quantize(cfg, data_dir, out_base, quiet);
        } else if (c_analyze->parsed()) {
            dir = tokrec::cmd_analyze(cfg, data_dir, quant_dir, out_base, quiet);
        } else if (c_train->parsed()) {
            dir = tokrec::cmd_train(cfg, data_dir, quant_dir, out_base, quiet);
        } else if (c_eval->parsed()) {
            dir = tokrec::cmd_eval(cfg, train_dir, data_dir, quant_dir, out_base,
                                   quiet);
        } else if (c_ablate->parsed()) {
            dir = tokrec::cmd_ablate(cfg, data_dir, quant_dir, out_base,
                                     split_csv(modes_csv), num_seeds, quiet)
                      .dir;
        }
        if (quiet) std::cout << dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
