// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tokrec/metrics.hpp"
#include "tokrec/quantizer.hpp"
#include "tokrec/synthetic.hpp"
#include "tokrec/trainer.hpp"
#include "tokrec/weights.hpp"

namespace tokrec {

// One JSON config drives every command; sections may be omitted and fall
// back to these defaults. Unknown keys anywhere are rejected.
struct DataConfig {
    SynthConfig synth;          // flattened into the "data" section
    std::string format = "jsonl"; // ingest input: jsonl | csv
    int core_min_count = 5;
    int max_items = 20;
};

struct WeightsConfig {
    double beta = 0.99;
    std::string filter_weighting = "item"; // item | prefix
};

struct ModelSection {
    int embed_dim = 64;
    int ffn_dim = 256;
    int enc_layers = 2;
    int dec_layers = 2;
    int heads = 4;
    int max_positions = 256;
    double dropout = 0.0;
    bool tied_output = true;
    std::string precision = "f32"; // f32 | f64
};

struct EvalSection {
    std::vector<int> ks = {5, 10};
    int beam_width = 0; // 0 = 2 * max(ks)
    std::string split = "test"; // test | valid
    bool head_by_mass = false;
};

struct RunConfig {
    uint64_t seed = 42;
    DataConfig data;
    QuantizeConfig quantizer;
    WeightsConfig weights;
    ModelSection model;
    TrainConfig train;
    EvalSection eval;

    void validate() const;
    std::string to_json() const;            // canonical effective config
    std::string hash(const std::string& command) const; // 16 hex chars
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path); // empty path = defaults

// Commands. Each creates (or reuses) a content-addressed directory
// <out_base>/<command>-<hash>/, writes its artifacts plus an effective
// config.json through atomic renames, and returns the directory. Identical
// inputs and seed produce byte-identical artifacts. Missing upstream
// artifacts raise IoError naming the command that produces them.
std::string cmd_synth(const RunConfig& cfg, const std::string& out_base,
                      bool quiet = false);
// embeddings_path is optional (empty = none); without it the resulting data
// directory supports splitting but not quantization.
std::string cmd_ingest(const RunConfig& cfg, const std::string& input_path,
                       const std::string& embeddings_path,
                       const std::string& out_base, bool quiet = false);
std::string cmd_quantize(const RunConfig& cfg, const std::string& data_dir,
                         const std::string& out_base, bool quiet = false);
std::string cmd_analyze(const RunConfig& cfg, const std::string& data_dir,
                        const std::string& quant_dir, const std::string& out_base,
                        bool quiet = false);
std::string cmd_train(const RunConfig& cfg, const std::string& data_dir,
                      const std::string& quant_dir, const std::string& out_base,
                      bool quiet = false);
std::string cmd_eval(const RunConfig& cfg, const std::string& train_dir,
                     const std::string& data_dir, const std::string& quant_dir,
                     const std::string& out_base, bool quiet = false);

struct AblateCell {
    std::string mode;
    uint64_t seed = 0;
    std::map<std::string, double> metrics;
};

struct AblateResult {
    std::vector<AblateCell> cells;
    // mode -> metric -> value; stdev is the sample standard deviation
    std::map<std::string, std::map<std::string, double>> mean, stdev;
    std::string dir;
};

AblateResult cmd_ablate(const RunConfig& cfg, const std::string& data_dir,
                        const std::string& quant_dir, const std::string& out_base,
                        const std::vector<std::string>& modes, int num_seeds,
                        bool quiet = false);

// Shared plumbing also used by tests.
SplitDataset load_split(const RunConfig& cfg, const std::string& data_dir);
TrainData build_train_data(const SplitDataset& split, const SemanticIdTable& ids,
                           const ItemEmbeddingTable& emb, double beta,
                           int max_items);

} // namespace tokrec
