// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokrec/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace tokrec {

namespace {

constexpr uint32_t kEmbVersion = 1;
constexpr uint32_t kCkptVersion = 1;

void put_u32(std::string& s, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    s.append(b, 4);
}

void put_u64(std::string& s, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    s.append(b, 8);
}

void put_f32(std::string& s, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(s, bits);
}

void put_f64(std::string& s, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(s, bits);
}

struct Cursor {
    const std::string& bytes;
    const std::string& path;
    size_t off = 0;

    void need(size_t n) const {
        if (off + n > bytes.size())
            throw IoError(path + ": truncated file");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[off + i]))
                 << (8 * i);
        off += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[off + i]))
                 << (8 * i);
        off += 8;
        return v;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string take(size_t n) {
        need(n);
        std::string s = bytes.substr(off, n);
        off += n;
        return s;
    }
};

json parse_json_line(const std::string& line, const std::string& path, size_t lineno) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
        throw IoError(path + ":" + std::to_string(lineno) + ": invalid JSON");
    return j;
}

uint32_t payload_crc(const std::string& payload) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32_z(crc, reinterpret_cast<const Bytef*>(payload.data()),
                  payload.size());
    return static_cast<uint32_t>(crc);
}

json model_cfg_json(const ModelConfig& c) {
    json j;
    j["vocab"] = c.vocab;
    j["embed_dim"] = c.embed_dim;
    j["ffn_dim"] = c.ffn_dim;
    j["enc_layers"] = c.enc_layers;
    j["dec_layers"] = c.dec_layers;
    j["heads"] = c.heads;
    j["max_positions"] = c.max_positions;
    j["dropout"] = c.dropout;
    j["tied_output"] = c.tied_output;
    j["seed"] = c.seed;
    return j;
}

ModelConfig model_cfg_from_json(const json& j) {
    ModelConfig c;
    c.vocab = j.at("vocab").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.enc_layers = j.at("enc_layers").get<int>();
    c.dec_layers = j.at("dec_layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.tied_output = j.at("tied_output").get<bool>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

json train_cfg_json(const TrainConfig& c) {
    json j;
    j["mode"] = to_string(c.mode);
    j["batch"] = c.batch;
    j["steps"] = c.steps;
    j["lr"] = c.lr;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["eps"] = c.eps;
    j["weight_decay"] = c.weight_decay;
    j["curriculum_c"] = c.curriculum_c;
    j["freeze_lambda"] = c.freeze_lambda;
    j["f64"] = c.f64;
    j["threads"] = c.threads;
    j["log_every"] = c.log_every;
    j["seed"] = c.seed;
    return j;
}

TrainConfig train_cfg_from_json(const json& j) {
    TrainConfig c;
    c.mode = weighting_mode_from_string(j.at("mode").get<std::string>());
    c.batch = j.at("batch").get<int>();
    c.steps = j.at("steps").get<int64_t>();
    c.lr = j.at("lr").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.eps = j.at("eps").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.curriculum_c = j.at("curriculum_c").get<double>();
    c.freeze_lambda = j.at("freeze_lambda").get<bool>();
    c.f64 = j.at("f64").get<bool>();
    c.threads = j.at("threads").get<int>();
    c.log_every = j.at("log_every").get<int64_t>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

} // namespace

void atomic_write(const std::string& path, const std::string& bytes) {
    fs::path dest(path);
    fs::path tmp = dest;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(path + ": cannot open for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError(path + ": write failed");
    }
    std::error_code ec;
    fs::rename(tmp, dest, ec);
    if (ec) throw IoError(path + ": rename failed: " + ec.message());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError(path + ": read failed");
    return std::move(ss).str();
}

ItemEmbeddingTable read_embeddings_jsonl(const std::string& path) {
    std::string body = read_file(path);
    std::istringstream in(body);
    std::vector<ItemId> ids;
    std::vector<double> data;
    int dim = -1;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = parse_json_line(line, path, lineno);
        if (!j.contains("item") || !j.contains("vec"))
            throw IoError(path + ":" + std::to_string(lineno) +
                          ": expected fields item and vec");
        ids.push_back(j.at("item").get<std::string>());
        std::vector<double> vec = j.at("vec").get<std::vector<double>>();
        if (dim < 0) dim = static_cast<int>(vec.size());
        if (static_cast<int>(vec.size()) != dim)
            throw IoError(path + ":" + std::to_string(lineno) +
                          ": inconsistent vector width");
        data.insert(data.end(), vec.begin(), vec.end());
    }
    if (ids.empty()) throw IoError(path + ": no embeddings");
    return ItemEmbeddingTable::create(std::move(ids), std::move(data), dim);
}

void write_embeddings_jsonl(const ItemEmbeddingTable& emb, const std::string& path) {
    std::string out;
    for (size_t i = 0; i < emb.ids.size(); ++i) {
        json j;
        j["item"] = emb.ids[i];
        auto row = emb.row(i);
        j["vec"] = std::vector<double>(row.begin(), row.end());
        out += j.dump();
        out += '\n';
    }
    atomic_write(path, out);
}

ItemEmbeddingTable read_embeddings_binary(const std::string& path,
                                          std::vector<ItemId> ids) {
    std::string body = read_file(path);
    Cursor cur{body, path};
    if (cur.take(4) != "TKRC") throw IoError(path + ": bad magic, expected TKRC");
    uint32_t version = cur.u32();
    if (version != kEmbVersion)
        throw IoError(path + ": unsupported version " + std::to_string(version));
    uint32_t n = cur.u32();
    uint32_t d = cur.u32();
    if (n == 0 || d == 0) throw IoError(path + ": empty embedding table");
    if (body.size() != cur.off + static_cast<size_t>(n) * d * 4)
        throw IoError(path + ": size does not match header");
    std::vector<double> data(static_cast<size_t>(n) * d);
    for (auto& v : data) v = static_cast<double>(cur.f32());
    if (ids.empty()) {
        ids.reserve(n);
        for (uint32_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
    }
    if (ids.size() != n) throw IoError(path + ": id list size mismatch");
    return ItemEmbeddingTable::create(std::move(ids), std::move(data),
                                      static_cast<int>(d));
}

void write_embeddings_binary(const ItemEmbeddingTable& emb, const std::string& path) {
    std::string out = "TKRC";
    put_u32(out, kEmbVersion);
    put_u32(out, static_cast<uint32_t>(emb.ids.size()));
    put_u32(out, static_cast<uint32_t>(emb.dim));
    for (double v : emb.data) put_f32(out, static_cast<float>(v));
    atomic_write(path, out);
}

CodebookSet read_codebooks(const std::string& path) {
    std::string body = read_file(path);
    Cursor cur{body, path};
    uint32_t hlen = cur.u32();
    json h = json::parse(cur.take(hlen), nullptr, false);
    if (h.is_discarded()) throw IoError(path + ": invalid codebook header");
    CodebookSet cb;
    cb.flavor = quant_flavor_from_string(h.at("flavor").get<std::string>());
    cb.L = h.at("L").get<int>();
    cb.K = h.at("K").get<int>();
    cb.dim = h.at("d").get<int>();
    cb.seed = h.at("seed").get<uint64_t>();
    if (cb.L <= 0 || cb.K <= 0 || cb.dim <= 0)
        throw IoError(path + ": non-positive codebook dimensions");
    if (cb.flavor == QuantFlavor::PQ && cb.dim % cb.L != 0)
        throw IoError(path + ": PQ requires L to divide d");
    size_t total = static_cast<size_t>(cb.L) * cb.K * cb.centroid_dim();
    if (body.size() != cur.off + total * 4)
        throw IoError(path + ": centroid block size mismatch");
    cb.centroids.resize(total);
    for (auto& v : cb.centroids) v = static_cast<double>(cur.f32());
    return cb;
}

void write_codebooks(const CodebookSet& cb, const std::string& path) {
    json h;
    h["flavor"] = to_string(cb.flavor);
    h["L"] = cb.L;
    h["K"] = cb.K;
    h["d"] = cb.dim;
    h["seed"] = cb.seed;
    std::string header = h.dump();
    std::string out;
    put_u32(out, static_cast<uint32_t>(header.size()));
    out += header;
    for (double v : cb.centroids) put_f32(out, static_cast<float>(v));
    atomic_write(path, out);
}

SemanticIdTable read_id_table(const std::string& path, int K) {
    std::string body = read_file(path);
    std::istringstream in(body);
    std::vector<ItemId> items;
    std::vector<int32_t> codes;
    int L = -1;
    std::string line;
    size_t lineno = 0;
    int32_t max_code = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = parse_json_line(line, path, lineno);
        if (!j.contains("item") || !j.contains("codes"))
            throw IoError(path + ":" + std::to_string(lineno) +
                          ": expected fields item and codes");
        items.push_back(j.at("item").get<std::string>());
        std::vector<int32_t> row = j.at("codes").get<std::vector<int32_t>>();
        if (L < 0) L = static_cast<int>(row.size());
        if (static_cast<int>(row.size()) != L)
            throw IoError(path + ":" + std::to_string(lineno) +
                          ": inconsistent code length");
        for (int32_t c : row) max_code = std::max(max_code, c);
        codes.insert(codes.end(), row.begin(), row.end());
    }
    if (items.empty()) throw IoError(path + ": no ids");
    if (K <= 0) K = max_code + 1;
    return SemanticIdTable::create(L, K, std::move(items), std::move(codes));
}

void write_id_table(const SemanticIdTable& ids, const std::string& path) {
    std::string out;
    for (size_t i = 0; i < ids.items.size(); ++i) {
        json j;
        j["item"] = ids.items[i];
        auto row = ids.id_of(i);
        j["codes"] = std::vector<int32_t>(row.begin(), row.end());
        out += j.dump();
        out += '\n';
    }
    atomic_write(path, out);
}

void write_checkpoint(const Checkpoint& ck, const std::string& path) {
    bool f64 = ck.train_cfg.f64;
    std::string payload;
    json tensors = json::array();
    auto add_tensor = [&](const char* name, const std::vector<double>& values) {
        json t;
        t["name"] = name;
        t["offset"] = payload.size();
        t["count"] = values.size();
        tensors.push_back(t);
        if (f64)
            for (double v : values) put_f64(payload, v);
        else
            for (double v : values) put_f32(payload, static_cast<float>(v));
    };
    add_tensor("params", ck.params);
    add_tensor("adam_m", ck.adam_m);
    add_tensor("adam_v", ck.adam_v);

    json manifest;
    manifest["model"] = model_cfg_json(ck.model_cfg);
    manifest["train"] = train_cfg_json(ck.train_cfg);
    manifest["step"] = ck.step;
    manifest["precision"] = f64 ? "f64" : "f32";
    manifest["log_lambda"] = ck.log_lambda;
    manifest["lambda_m"] = ck.lambda_m;
    manifest["lambda_v"] = ck.lambda_v;
    manifest["tensors"] = tensors;
    manifest["crc32"] = payload_crc(payload);
    std::string mbytes = manifest.dump();

    std::string out = "TKCP";
    put_u32(out, kCkptVersion);
    put_u64(out, mbytes.size());
    out += mbytes;
    out += payload;
    atomic_write(path, out);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::string body = read_file(path);
    Cursor cur{body, path};
    if (cur.take(4) != "TKCP") throw IoError(path + ": bad magic, expected TKCP");
    uint32_t version = cur.u32();
    if (version != kCkptVersion)
        throw IoError(path + ": unsupported version " + std::to_string(version));
    uint64_t mlen = cur.u64();
    json manifest = json::parse(cur.take(mlen), nullptr, false);
    if (manifest.is_discarded()) throw IoError(path + ": invalid manifest");

    std::string payload = body.substr(cur.off);
    uint32_t crc = manifest.at("crc32").get<uint32_t>();
    if (payload_crc(payload) != crc)
        throw IoError(path + ": checksum mismatch, checkpoint corrupt");

    Checkpoint ck;
    ck.model_cfg = model_cfg_from_json(manifest.at("model"));
    ck.train_cfg = train_cfg_from_json(manifest.at("train"));
    ck.step = manifest.at("step").get<int64_t>();
    auto arr3 = [&](const char* key) {
        auto v = manifest.at(key).get<std::vector<double>>();
        if (v.size() != 3) throw IoError(path + ": bad " + std::string(key));
        return std::array<double, 3>{v[0], v[1], v[2]};
    };
    ck.log_lambda = arr3("log_lambda");
    ck.lambda_m = arr3("lambda_m");
    ck.lambda_v = arr3("lambda_v");

    bool f64 = manifest.at("precision").get<std::string>() == "f64";
    size_t width = f64 ? 8 : 4;
    auto read_tensor = [&](const json& t) {
        size_t offset = t.at("offset").get<size_t>();
        size_t count = t.at("count").get<size_t>();
        if (offset + count * width > payload.size())
            throw IoError(path + ": tensor out of bounds");
        std::vector<double> v(count);
        Cursor pc{payload, path};
        pc.off = offset;
        for (size_t i = 0; i < count; ++i)
            v[i] = f64 ? pc.f64() : static_cast<double>(pc.f32());
        return v;
    };
    for (const json& t : manifest.at("tensors")) {
        std::string name = t.at("name").get<std::string>();
        if (name == "params") ck.params = read_tensor(t);
        else if (name == "adam_m") ck.adam_m = read_tensor(t);
        else if (name == "adam_v") ck.adam_v = read_tensor(t);
        else throw IoError(path + ": unknown tensor " + name);
    }
    if (ck.params.empty()) throw IoError(path + ": missing params tensor");
    return ck;
}

} // namespace tokrec
