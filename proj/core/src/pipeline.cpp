// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokrec/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <nlohmann/json.hpp>

#include "tokrec/io.hpp"
#include "tokrec/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tokrec {

namespace {

// section seeds derived from the top-level seed when not set explicitly
constexpr uint64_t kSynthSeedTag = 1;
constexpr uint64_t kQuantSeedTag = 2;
constexpr uint64_t kTrainSeedTag = 3;
constexpr uint64_t kModelSeedTag = 0x0DE1;

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok)
            throw ContractError("config: unknown key \"" + key + "\" in " + where);
    }
}

const json* section(const json& root, const char* name) {
    if (!root.contains(name)) return nullptr;
    const json& s = root.at(name);
    if (!s.is_object())
        throw ContractError("config: section \"" + std::string(name) +
                            "\" must be an object");
    return &s;
}

template <typename T>
void read_field(const json& obj, const char* key, const std::string& where, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ContractError("config: bad value for \"" + std::string(key) +
                            "\" in " + where);
    }
}

uint64_t fnv1a64(const std::string& bytes) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string make_run_dir(const RunConfig& cfg, const std::string& out_base,
                         const std::string& command) {
    fs::path dir = fs::path(out_base) / (command + "-" + cfg.hash(command));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError(dir.string() + ": cannot create directory: " + ec.message());
    atomic_write((dir / "config.json").string(), cfg.to_json() + "\n");
    return dir.string();
}

std::string artifact(const std::string& dir, const char* name,
                     const std::string& command, const char* producer) {
    fs::path p = fs::path(dir) / name;
    if (!fs::exists(p))
        throw IoError(command + ": missing " + p.string() + " (produced by the " +
                      producer + " command)");
    return p.string();
}

ModelConfig make_model_cfg(const RunConfig& cfg) {
    TokenSpace space{cfg.quantizer.L, cfg.quantizer.K};
    ModelConfig mc;
    mc.vocab = space.vocab();
    mc.embed_dim = cfg.model.embed_dim;
    mc.ffn_dim = cfg.model.ffn_dim;
    mc.enc_layers = cfg.model.enc_layers;
    mc.dec_layers = cfg.model.dec_layers;
    mc.heads = cfg.model.heads;
    mc.max_positions = cfg.model.max_positions;
    mc.dropout = cfg.model.dropout;
    mc.tied_output = cfg.model.tied_output;
    mc.seed = derive_seed(cfg.train.seed, kModelSeedTag);
    return mc;
}

// item -> times it appears as a training target; the popularity notion used
// by frequency weighting, head/tail, and deciles alike
std::map<ItemId, int64_t> train_target_counts(const SplitDataset& split) {
    std::map<ItemId, int64_t> counts;
    for (const SplitSample& s : split.train) counts[s.target] += 1;
    return counts;
}

ItemEmbeddingTable load_embeddings(const std::string& data_dir,
                                   const std::string& command) {
    fs::path p = fs::path(data_dir) / "embeddings.jsonl";
    if (!fs::exists(p))
        throw IoError(command + ": missing " + p.string() +
                      " (produced by the synth command, or passed to ingest)");
    return read_embeddings_jsonl(p.string());
}

json eval_flat_metrics(const json& report, const std::vector<int>& ks) {
    json m = json::object();
    for (int k : ks) {
        std::string ks_str = std::to_string(k);
        m["hit@" + ks_str] = report.at("hit").at(ks_str);
        m["ndcg@" + ks_str] = report.at("ndcg").at(ks_str);
        m["head_hit@" + ks_str] = report.at("head").at("hit").at(ks_str);
        m["head_ndcg@" + ks_str] = report.at("head").at("ndcg").at(ks_str);
        m["tail_hit@" + ks_str] = report.at("tail").at("hit").at(ks_str);
        m["tail_ndcg@" + ks_str] = report.at("tail").at("ndcg").at(ks_str);
    }
    m["decile_l1"] = report.at("decile").at("l1");
    return m;
}

} // namespace

void RunConfig::validate() const {
    data.synth.validate();
    require(data.format == "jsonl" || data.format == "csv",
            "config: data.format must be jsonl or csv");
    require(data.core_min_count >= 0, "config: data.core_min_count negative");
    require(data.max_items >= 1, "config: data.max_items must be positive");
    require(quantizer.L >= 1, "config: quantizer.L must be positive");
    require(quantizer.K >= 1, "config: quantizer.K must be positive");
    require(quantizer.iters >= 1, "config: quantizer.iters must be positive");
    require(weights.beta >= 0.0 && weights.beta < 1.0,
            "config: weights.beta outside [0, 1)");
    require(weights.filter_weighting == "item" ||
                weights.filter_weighting == "prefix",
            "config: weights.filter_weighting must be item or prefix");
    require(model.precision == "f32" || model.precision == "f64",
            "config: model.precision must be f32 or f64");
    make_model_cfg(*this).validate();
    train.validate();
    require(!eval.ks.empty(), "config: eval.ks must not be empty");
    for (int k : eval.ks) require(k >= 1, "config: eval.ks entries must be positive");
    require(eval.beam_width >= 0, "config: eval.beam_width negative");
    require(eval.split == "test" || eval.split == "valid",
            "config: eval.split must be test or valid");
}

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    json& d = j["data"];
    d["items"] = data.synth.items;
    d["dim"] = data.synth.dim;
    d["branching"] = data.synth.branching;
    d["level_spread"] = data.synth.level_spread;
    d["item_noise"] = data.synth.item_noise;
    d["zipf_s"] = data.synth.zipf_s;
    d["users"] = data.synth.users;
    d["mean_history"] = data.synth.mean_history;
    d["min_history"] = data.synth.min_history;
    d["stay_prob"] = data.synth.stay_prob;
    d["seed"] = data.synth.seed;
    d["format"] = data.format;
    d["core_min_count"] = data.core_min_count;
    d["max_items"] = data.max_items;
    json& q = j["quantizer"];
    q["flavor"] = to_string(quantizer.flavor);
    q["L"] = quantizer.L;
    q["K"] = quantizer.K;
    q["iters"] = quantizer.iters;
    q["seed"] = quantizer.seed;
    json& w = j["weights"];
    w["beta"] = weights.beta;
    w["filter_weighting"] = weights.filter_weighting;
    json& m = j["model"];
    m["embed_dim"] = model.embed_dim;
    m["ffn_dim"] = model.ffn_dim;
    m["enc_layers"] = model.enc_layers;
    m["dec_layers"] = model.dec_layers;
    m["heads"] = model.heads;
    m["max_positions"] = model.max_positions;
    m["dropout"] = model.dropout;
    m["tied_output"] = model.tied_output;
    m["precision"] = model.precision;
    json& t = j["train"];
    t["mode"] = tokrec::to_string(train.mode);
    t["batch"] = train.batch;
    t["steps"] = train.steps;
    t["lr"] = train.lr;
    t["beta1"] = train.beta1;
    t["beta2"] = train.beta2;
    t["eps"] = train.eps;
    t["weight_decay"] = train.weight_decay;
    t["curriculum_c"] = train.curriculum_c;
    t["freeze_lambda"] = train.freeze_lambda;
    t["threads"] = train.threads;
    t["log_every"] = train.log_every;
    t["seed"] = train.seed;
    json& e = j["eval"];
    e["ks"] = eval.ks;
    e["beam_width"] = eval.beam_width;
    e["split"] = eval.split;
    e["head_by_mass"] = eval.head_by_mass;
    return j.dump(2);
}

std::string RunConfig::hash(const std::string& command) const {
    uint64_t h = fnv1a64(command + "\n" + to_json());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return std::string(buf);
}

RunConfig parse_run_config(const std::string& json_text) {
    json root = json::parse(json_text, nullptr, false);
    if (root.is_discarded()) throw ContractError("config: invalid JSON");
    if (!root.is_object()) throw ContractError("config: top level must be an object");
    reject_unknown(root, "the top level",
                   {"seed", "data", "quantizer", "weights", "model", "train", "eval"});

    RunConfig cfg;
    read_field(root, "seed", "the top level", cfg.seed);

    bool synth_seed_set = false, quant_seed_set = false, train_seed_set = false;
    if (const json* d = section(root, "data")) {
        reject_unknown(*d, "data",
                       {"items", "dim", "branching", "level_spread", "item_noise",
                        "zipf_s", "users", "mean_history", "min_history",
                        "stay_prob", "seed", "format", "core_min_count",
                        "max_items"});
        read_field(*d, "items", "data", cfg.data.synth.items);
        read_field(*d, "dim", "data", cfg.data.synth.dim);
        read_field(*d, "branching", "data", cfg.data.synth.branching);
        read_field(*d, "level_spread", "data", cfg.data.synth.level_spread);
        read_field(*d, "item_noise", "data", cfg.data.synth.item_noise);
        read_field(*d, "zipf_s", "data", cfg.data.synth.zipf_s);
        read_field(*d, "users", "data", cfg.data.synth.users);
        read_field(*d, "mean_history", "data", cfg.data.synth.mean_history);
        read_field(*d, "min_history", "data", cfg.data.synth.min_history);
        read_field(*d, "stay_prob", "data", cfg.data.synth.stay_prob);
        read_field(*d, "format", "data", cfg.data.format);
        read_field(*d, "core_min_count", "data", cfg.data.core_min_count);
        read_field(*d, "max_items", "data", cfg.data.max_items);
        if (d->contains("seed")) {
            read_field(*d, "seed", "data", cfg.data.synth.seed);
            synth_seed_set = true;
        }
    }
    if (const json* q = section(root, "quantizer")) {
        reject_unknown(*q, "quantizer", {"flavor", "L", "K", "iters", "seed"});
        if (q->contains("flavor")) {
            std::string flavor;
            read_field(*q, "flavor", "quantizer", flavor);
            cfg.quantizer.flavor = quant_flavor_from_string(flavor);
        }
        read_field(*q, "L", "quantizer", cfg.quantizer.L);
        read_field(*q, "K", "quantizer", cfg.quantizer.K);
        read_field(*q, "iters", "quantizer", cfg.quantizer.iters);
        if (q->contains("seed")) {
            read_field(*q, "seed", "quantizer", cfg.quantizer.seed);
            quant_seed_set = true;
        }
    }
    if (const json* w = section(root, "weights")) {
        reject_unknown(*w, "weights", {"beta", "filter_weighting"});
        read_field(*w, "beta", "weights", cfg.weights.beta);
        read_field(*w, "filter_weighting", "weights", cfg.weights.filter_weighting);
    }
    if (const json* m = section(root, "model")) {
        reject_unknown(*m, "model",
                       {"embed_dim", "ffn_dim", "enc_layers", "dec_layers", "heads",
                        "max_positions", "dropout", "tied_output", "precision"});
        read_field(*m, "embed_dim", "model", cfg.model.embed_dim);
        read_field(*m, "ffn_dim", "model", cfg.model.ffn_dim);
        read_field(*m, "enc_layers", "model", cfg.model.enc_layers);
        read_field(*m, "dec_layers", "model", cfg.model.dec_layers);
        read_field(*m, "heads", "model", cfg.model.heads);
        read_field(*m, "max_positions", "model", cfg.model.max_positions);
        read_field(*m, "dropout", "model", cfg.model.dropout);
        read_field(*m, "tied_output", "model", cfg.model.tied_output);
        read_field(*m, "precision", "model", cfg.model.precision);
    }
    if (const json* t = section(root, "train")) {
        reject_unknown(*t, "train",
                       {"mode", "batch", "steps", "lr", "beta1", "beta2", "eps",
                        "weight_decay", "curriculum_c", "freeze_lambda", "threads",
                        "log_every", "seed"});
        if (t->contains("mode")) {
            std::string mode;
            read_field(*t, "mode", "train", mode);
            cfg.train.mode = weighting_mode_from_string(mode);
        }
        read_field(*t, "batch", "train", cfg.train.batch);
        read_field(*t, "steps", "train", cfg.train.steps);
        read_field(*t, "lr", "train", cfg.train.lr);
        read_field(*t, "beta1", "train", cfg.train.beta1);
        read_field(*t, "beta2", "train", cfg.train.beta2);
        read_field(*t, "eps", "train", cfg.train.eps);
        read_field(*t, "weight_decay", "train", cfg.train.weight_decay);
        read_field(*t, "curriculum_c", "train", cfg.train.curriculum_c);
        read_field(*t, "freeze_lambda", "train", cfg.train.freeze_lambda);
        read_field(*t, "threads", "train", cfg.train.threads);
        read_field(*t, "log_every", "train", cfg.train.log_every);
        if (t->contains("seed")) {
            read_field(*t, "seed", "train", cfg.train.seed);
            train_seed_set = true;
        }
    }
    if (const json* e = section(root, "eval")) {
        reject_unknown(*e, "eval", {"ks", "beam_width", "split", "head_by_mass"});
        read_field(*e, "ks", "eval", cfg.eval.ks);
        read_field(*e, "beam_width", "eval", cfg.eval.beam_width);
        read_field(*e, "split", "eval", cfg.eval.split);
        read_field(*e, "head_by_mass", "eval", cfg.eval.head_by_mass);
    }

    if (!synth_seed_set) cfg.data.synth.seed = derive_seed(cfg.seed, kSynthSeedTag);
    if (!quant_seed_set) cfg.quantizer.seed = derive_seed(cfg.seed, kQuantSeedTag);
    if (!train_seed_set) cfg.train.seed = derive_seed(cfg.seed, kTrainSeedTag);
    cfg.train.f64 = cfg.model.precision == "f64";
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    if (path.empty()) return parse_run_config("{}");
    return parse_run_config(read_file(path));
}

SplitDataset load_split(const RunConfig& cfg, const std::string& data_dir) {
    std::string path = artifact(data_dir, "interactions.jsonl", "pipeline",
                                "synth or ingest");
    InteractionDataset ds = read_interactions_jsonl(path);
    if (cfg.data.core_min_count > 1)
        ds = core_filter(ds, cfg.data.core_min_count);
    return leave_one_out_split(ds);
}

TrainData build_train_data(const SplitDataset& split, const SemanticIdTable& ids,
                           const ItemEmbeddingTable& emb, double beta,
                           int max_items) {
    TrainData data;
    data.space = TokenSpace{ids.L, ids.K};
    DispersionProfile profile = dispersion_profile(ids, emb);
    data.w_fg = front_greater_weights(profile);
    FrequencyTable freq =
        token_frequencies(std::span<const SplitSample>(split.train), ids, beta);
    data.samples.reserve(split.train.size());
    std::vector<ItemId> with_target;
    for (const SplitSample& s : split.train) {
        with_target.assign(s.history.begin(), s.history.end());
        with_target.push_back(s.target);
        FlatSample flat =
            flatten_history(std::span<const ItemId>(with_target), ids, max_items);
        TrainSample ts;
        ts.x = std::move(flat.x);
        ts.y = std::move(flat.y);
        ts.item_row = static_cast<int32_t>(ids.row_of(s.target));
        // frequency_weights wants raw codes, not layer-offset tokens
        ts.w_fr = frequency_weights(ids.id_of(ts.item_row), freq);
        data.samples.push_back(std::move(ts));
    }
    return data;
}

std::string cmd_synth(const RunConfig& cfg, const std::string& out_base,
                      bool quiet) {
    cfg.validate();
    std::string dir = make_run_dir(cfg, out_base, "synth");
    SynthResult r = generate_synthetic(cfg.data.synth);
    write_interactions_jsonl(r.interactions,
                             (fs::path(dir) / "interactions.jsonl").string());
    write_embeddings_jsonl(r.emb, (fs::path(dir) / "embeddings.jsonl").string());
    if (!quiet)
        std::cout << "synth: " << r.emb.ids.size() << " items, "
                  << r.interactions.users.size() << " users, "
                  << r.interactions.interaction_count() << " interactions -> "
                  << dir << "\n";
    return dir;
}

std::string cmd_ingest(const RunConfig& cfg, const std::string& input_path,
                       const std::string& embeddings_path,
                       const std::string& out_base, bool quiet) {
    cfg.validate();
    std::string dir = make_run_dir(cfg, out_base, "ingest");
    InteractionDataset ds = cfg.data.format == "csv"
                                ? read_interactions_csv(input_path)
                                : read_interactions_jsonl(input_path);
    write_interactions_jsonl(ds, (fs::path(dir) / "interactions.jsonl").string());
    if (!embeddings_path.empty()) {
        ItemEmbeddingTable emb =
            embeddings_path.size() > 6 &&
                    embeddings_path.substr(embeddings_path.size() - 6) == ".jsonl"
                ? read_embeddings_jsonl(embeddings_path)
                : read_embeddings_binary(embeddings_path);
        write_embeddings_jsonl(emb, (fs::path(dir) / "embeddings.jsonl").string());
    }
    if (!quiet)
        std::cout << "ingest: " << ds.users.size() << " users, "
                  << ds.interaction_count() << " interactions -> " << dir << "\n";
    return dir;
}

std::string cmd_quantize(const RunConfig& cfg, const std::string& data_dir,
                         const std::string& out_base, bool quiet) {
    cfg.validate();
    ItemEmbeddingTable emb = load_embeddings(data_dir, "quantize");
    std::string dir = make_run_dir(cfg, out_base, "quantize");
    CodebookSet cb = fit_codebooks(emb, cfg.quantizer);
    SemanticIdTable ids = assign_ids(emb, cb, cfg.quantizer.seed);
    write_codebooks(cb, (fs::path(dir) / "codebooks.bin").string());
    write_id_table(ids, (fs::path(dir) / "ids.jsonl").string());
    if (!quiet)
        std::cout << "quantize: " << to_string(cb.flavor) << " L=" << cb.L
                  << " K=" << cb.K << ", recon error "
                  << reconstruction_error(emb, cb, ids) << " -> " << dir << "\n";
    return dir;
}

std::string cmd_analyze(const RunConfig& cfg, const std::string& data_dir,
                        const std::string& quant_dir, const std::string& out_base,
                        bool quiet) {
    cfg.validate();
    ItemEmbeddingTable emb = load_embeddings(data_dir, "analyze");
    SemanticIdTable ids = read_id_table(
        artifact(quant_dir, "ids.jsonl", "analyze", "quantize"), cfg.quantizer.K);
    SplitDataset split = load_split(cfg, data_dir);
    std::string dir = make_run_dir(cfg, out_base, "analyze");

    DispersionProfile profile = dispersion_profile(ids, emb);
    std::vector<double> w_fg = front_greater_weights(profile);
    FilterRatioWeighting fw = cfg.weights.filter_weighting == "prefix"
                                  ? FilterRatioWeighting::PrefixUniform
                                  : FilterRatioWeighting::ItemWeighted;
    std::vector<double> ratios = layer_filter_ratio(ids, fw);
    std::map<ItemId, int64_t> counts = train_target_counts(split);
    std::map<int32_t, double> gains = purity_gain(ids, counts);

    TokenSpace space{ids.L, ids.K};
    std::vector<double> layer_gain(ids.L, 0.0);
    std::vector<int64_t> layer_n(ids.L, 0);
    json token_gain = json::object();
    for (const auto& [token, gain] : gains) {
        int layer = space.layer_of(token);
        layer_gain[layer] += gain;
        layer_n[layer] += 1;
        token_gain[std::to_string(token)] = gain;
    }
    for (int l = 0; l < ids.L; ++l)
        if (layer_n[l] > 0) layer_gain[l] /= static_cast<double>(layer_n[l]);

    json report;
    report["dispersion"]["mu"] = profile.mu;
    report["dispersion"]["delta"] = profile.delta;
    report["dispersion"]["weights"] = w_fg;
    report["filter_ratio"]["weighting"] = cfg.weights.filter_weighting;
    report["filter_ratio"]["per_layer"] = ratios;
    report["purity"]["layer_mean_gain"] = layer_gain;
    report["purity"]["token_gain"] = token_gain;
    atomic_write((fs::path(dir) / "analysis.json").string(), report.dump(2) + "\n");
    if (!quiet)
        std::cout << "analyze: mu[0]=" << profile.mu[0] << " mu[" << ids.L
                  << "]=" << profile.mu[ids.L] << " -> " << dir << "\n";
    return dir;
}

std::string cmd_train(const RunConfig& cfg, const std::string& data_dir,
                      const std::string& quant_dir, const std::string& out_base,
                      bool quiet) {
    cfg.validate();
    ItemEmbeddingTable emb = load_embeddings(data_dir, "train");
    SemanticIdTable ids = read_id_table(
        artifact(quant_dir, "ids.jsonl", "train", "quantize"), cfg.quantizer.K);
    SplitDataset split = load_split(cfg, data_dir);
    require(cfg.model.max_positions >= cfg.data.max_items * cfg.quantizer.L,
            "config: model.max_positions too small for data.max_items * L");
    std::string dir = make_run_dir(cfg, out_base, "train");

    TrainData data = build_train_data(split, ids, emb, cfg.weights.beta,
                                      cfg.data.max_items);
    ModelConfig model_cfg = make_model_cfg(cfg);
    auto sink = [&](const TrainLogEntry& e) {
        if (quiet) return;
        std::cout << "t=" << e.t << " combined=" << e.combined << " loss=["
                  << e.loss[0] << ", " << e.loss[1] << ", " << e.loss[2]
                  << "] alpha=[" << e.alpha[0] << ", " << e.alpha[1] << ", "
                  << e.alpha[2] << "]\n";
    };
    TrainResult result = train_model(model_cfg, cfg.train, data, sink);

    std::string log_text;
    for (const TrainLogEntry& e : result.log) {
        json j;
        j["t"] = e.t;
        j["alpha"] = e.alpha;
        j["loss"]["fg"] = e.loss[0];
        j["loss"]["fr"] = e.loss[1];
        j["loss"]["or"] = e.loss[2];
        j["loss"]["combined"] = e.combined;
        log_text += j.dump();
        log_text += '\n';
    }
    atomic_write((fs::path(dir) / "train_log.jsonl").string(), log_text);
    write_checkpoint(result.checkpoint, (fs::path(dir) / "checkpoint.bin").string());
    if (!quiet)
        std::cout << "train: " << to_string(cfg.train.mode) << ", "
                  << cfg.train.steps << " steps over " << data.samples.size()
                  << " samples -> " << dir << "\n";
    return dir;
}

std::string cmd_eval(const RunConfig& cfg, const std::string& train_dir,
                     const std::string& data_dir, const std::string& quant_dir,
                     const std::string& out_base, bool quiet) {
    cfg.validate();
    Checkpoint ck =
        read_checkpoint(artifact(train_dir, "checkpoint.bin", "eval", "train"));
    SemanticIdTable ids = read_id_table(
        artifact(quant_dir, "ids.jsonl", "eval", "quantize"), cfg.quantizer.K);
    SplitDataset split = load_split(cfg, data_dir);
    std::string dir = make_run_dir(cfg, out_base, "eval");

    const std::vector<SplitSample>& samples =
        cfg.eval.split == "valid" ? split.valid : split.test;
    require(!samples.empty(), "eval: the " + cfg.eval.split + " split is empty");
    PrefixTrie trie = build_trie(ids);
    std::map<ItemId, int64_t> counts = train_target_counts(split);

    EvalConfig ec;
    ec.ks = cfg.eval.ks;
    ec.beam_width = cfg.eval.beam_width;
    ec.max_items = cfg.data.max_items;
    ec.head_by_mass = cfg.eval.head_by_mass;

    EvalReport report;
    if (ck.train_cfg.f64) {
        Model<double> m;
        m.cfg = ck.model_cfg;
        m.layout = ParamLayout::build(ck.model_cfg);
        require(ck.params.size() == m.layout.total, "eval: checkpoint size mismatch");
        m.params.assign(ck.params.begin(), ck.params.end());
        report = evaluate(m, std::span<const SplitSample>(samples), ids, trie,
                          counts, ec);
    } else {
        Model<float> m;
        m.cfg = ck.model_cfg;
        m.layout = ParamLayout::build(ck.model_cfg);
        require(ck.params.size() == m.layout.total, "eval: checkpoint size mismatch");
        m.params.resize(ck.params.size());
        for (size_t i = 0; i < ck.params.size(); ++i)
            m.params[i] = static_cast<float>(ck.params[i]);
        report = evaluate(m, std::span<const SplitSample>(samples), ids, trie,
                          counts, ec);
    }
    atomic_write((fs::path(dir) / "eval.json").string(), report.to_json() + "\n");
    if (!quiet) {
        int k_show = cfg.eval.ks.back();
        std::cout << "eval: hit@" << k_show << "=" << report.overall.hit[k_show]
                  << " ndcg@" << k_show << "=" << report.overall.ndcg[k_show]
                  << " over " << report.overall.count << " " << cfg.eval.split
                  << " users -> " << dir << "\n";
    }
    return dir;
}

AblateResult cmd_ablate(const RunConfig& cfg, const std::string& data_dir,
                        const std::string& quant_dir, const std::string& out_base,
                        const std::vector<std::string>& modes, int num_seeds,
                        bool quiet) {
    cfg.validate();
    require(!modes.empty(), "ablate: no modes given");
    require(num_seeds >= 1, "ablate: num_seeds must be positive");
    for (const std::string& m : modes) weighting_mode_from_string(m);

    AblateResult result;
    result.dir = make_run_dir(cfg, out_base, "ablate");
    for (const std::string& mode : modes) {
        for (int j = 0; j < num_seeds; ++j) {
            RunConfig cell_cfg = cfg;
            cell_cfg.train.mode = weighting_mode_from_string(mode);
            cell_cfg.train.seed = cfg.train.seed + static_cast<uint64_t>(j);
            std::string train_dir =
                cmd_train(cell_cfg, data_dir, quant_dir, out_base, quiet);
            std::string eval_dir = cmd_eval(cell_cfg, train_dir, data_dir,
                                            quant_dir, out_base, quiet);
            json report = json::parse(
                read_file((fs::path(eval_dir) / "eval.json").string()));
            json flat = eval_flat_metrics(report, cell_cfg.eval.ks);
            AblateCell cell;
            cell.mode = mode;
            cell.seed = cell_cfg.train.seed;
            for (const auto& [key, value] : flat.items())
                cell.metrics[key] = value.get<double>();
            result.cells.push_back(std::move(cell));
        }
    }

    for (const std::string& mode : modes) {
        std::map<std::string, std::vector<double>> values;
        for (const AblateCell& cell : result.cells)
            if (cell.mode == mode)
                for (const auto& [key, v] : cell.metrics) values[key].push_back(v);
        for (const auto& [key, vs] : values) {
            double mean = 0.0;
            for (double v : vs) mean += v;
            mean /= static_cast<double>(vs.size());
            double var = 0.0;
            for (double v : vs) var += (v - mean) * (v - mean);
            double stdev =
                vs.size() > 1 ? std::sqrt(var / static_cast<double>(vs.size() - 1))
                              : 0.0;
            result.mean[mode][key] = mean;
            result.stdev[mode][key] = stdev;
        }
    }

    json out;
    out["cells"] = json::array();
    for (const AblateCell& cell : result.cells) {
        json c;
        c["mode"] = cell.mode;
        c["seed"] = cell.seed;
        c["metrics"] = cell.metrics;
        out["cells"].push_back(c);
    }
    out["mean"] = result.mean;
    out["stdev"] = result.stdev;
    atomic_write((fs::path(result.dir) / "ablate.json").string(),
                 out.dump(2) + "\n");
    if (!quiet)
        std::cout << "ablate: " << modes.size() << " modes x " << num_seeds
                  << " seeds -> " << result.dir << "\n";
    return result;
}

} // namespace tokrec
