// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "tokrec/common.hpp"
#include "tokrec/io.hpp"
#include "tokrec/rng.hpp"

using namespace tokrec;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() /
                   ("tokrec_io_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

// Values exactly representable in f32, for binary round trips.
ItemEmbeddingTable sample_embeddings(int n, int dim) {
    std::vector<ItemId> ids;
    std::vector<double> data;
    for (int i = 0; i < n; ++i) {
        ids.push_back("item" + std::to_string(i));
        for (int d = 0; d < dim; ++d)
            data.push_back(static_cast<double>(i * dim + d) * 0.25 - 3.0);
    }
    return ItemEmbeddingTable::create(std::move(ids), std::move(data), dim);
}

Checkpoint sample_checkpoint(bool f64) {
    Checkpoint ck;
    ck.model_cfg.vocab = 18;
    ck.model_cfg.embed_dim = 8;
    ck.model_cfg.ffn_dim = 16;
    ck.model_cfg.enc_layers = 1;
    ck.model_cfg.dec_layers = 1;
    ck.model_cfg.heads = 2;
    ck.model_cfg.max_positions = 32;
    ck.model_cfg.dropout = 0.125;
    ck.model_cfg.tied_output = false;
    ck.model_cfg.seed = 99;
    ck.train_cfg.mode = WeightingMode::Multi;
    ck.train_cfg.batch = 12;
    ck.train_cfg.steps = 77;
    ck.train_cfg.lr = 0.5;
    ck.train_cfg.curriculum_c = 0.0625;
    ck.train_cfg.freeze_lambda = true;
    ck.train_cfg.f64 = f64;
    ck.train_cfg.log_every = 5;
    ck.train_cfg.seed = 1234;
    ck.step = 77;
    ck.log_lambda = {0.5, -0.25, 0.125};
    Rng rng(6);
    for (int i = 0; i < 40; ++i) {
        double v = rng.normal();
        if (!f64) v = static_cast<double>(static_cast<float>(v));
        ck.params.push_back(v);
        ck.adam_m.push_back(f64 ? v * 0.5 : static_cast<double>(static_cast<float>(v * 0.5f)));
        ck.adam_v.push_back(0.25);
    }
    ck.lambda_m = {0.1, 0.2, 0.3};
    ck.lambda_v = {0.01, 0.02, 0.03};
    return ck;
}

} // namespace

TEST_SUITE("io") {

TEST_CASE("atomic_write round-trips binary bytes and leaves no temp file") {
    auto dir = temp_dir();
    std::string bytes = std::string("head\0tail\xff", 10);
    std::string path = (dir / "blob.bin").string();
    atomic_write(path, bytes);
    CHECK(read_file(path) == bytes);

    size_t entries = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        ++entries;
        CHECK(e.path().extension() != ".tmp");
    }
    CHECK(entries == 1);

    CHECK_THROWS_AS(read_file((dir / "missing.bin").string()), IoError);
}

TEST_CASE("jsonl embeddings survive a write-read cycle exactly") {
    auto dir = temp_dir();
    ItemEmbeddingTable emb = sample_embeddings(5, 3);
    emb.data[4] = 0.1237519; // full double precision must survive JSON
    std::string path = (dir / "emb.jsonl").string();
    write_embeddings_jsonl(emb, path);
    auto back = read_embeddings_jsonl(path);
    CHECK(back.ids == emb.ids);
    CHECK(back.dim == emb.dim);
    CHECK(back.data == emb.data);
}

TEST_CASE("binary embeddings round-trip with generated or explicit ids") {
    auto dir = temp_dir();
    ItemEmbeddingTable emb = sample_embeddings(4, 2);
    std::string path = (dir / "emb.bin").string();
    write_embeddings_binary(emb, path);

    auto anon = read_embeddings_binary(path);
    CHECK(anon.data == emb.data);
    CHECK(anon.ids == std::vector<ItemId>{"0", "1", "2", "3"});

    auto named = read_embeddings_binary(path, emb.ids);
    CHECK(named.ids == emb.ids);
    CHECK(named.data == emb.data);

    std::vector<ItemId> too_few = {"a", "b"};
    CHECK_THROWS_AS(read_embeddings_binary(path, too_few), IoError);
}

TEST_CASE("binary embedding corruption is reported") {
    auto dir = temp_dir();
    ItemEmbeddingTable emb = sample_embeddings(3, 2);
    std::string path = (dir / "emb.bin").string();
    write_embeddings_binary(emb, path);
    std::string bytes = read_file(path);

    SUBCASE("bad magic") {
        bytes[0] = 'X';
        atomic_write(path, bytes);
        CHECK_THROWS_WITH_AS(read_embeddings_binary(path),
                             doctest::Contains("magic"), IoError);
    }
    SUBCASE("truncated") {
        atomic_write(path, bytes.substr(0, bytes.size() - 3));
        CHECK_THROWS_AS(read_embeddings_binary(path), IoError);
    }
    SUBCASE("size mismatch") {
        atomic_write(path, bytes + std::string(4, '\0'));
        CHECK_THROWS_WITH_AS(read_embeddings_binary(path),
                             doctest::Contains("size"), IoError);
    }
}

TEST_CASE("codebooks round-trip every header field and centroid") {
    auto dir = temp_dir();
    CodebookSet cb;
    cb.flavor = QuantFlavor::PQ;
    cb.L = 2;
    cb.K = 3;
    cb.dim = 4;
    cb.seed = 321;
    for (int i = 0; i < cb.L * cb.K * cb.centroid_dim(); ++i)
        cb.centroids.push_back(static_cast<double>(i) * 0.5 - 1.5); // f32 exact
    std::string path = (dir / "codebooks.bin").string();
    write_codebooks(cb, path);
    auto back = read_codebooks(path);
    CHECK(back.flavor == cb.flavor);
    CHECK(back.L == cb.L);
    CHECK(back.K == cb.K);
    CHECK(back.dim == cb.dim);
    CHECK(back.seed == cb.seed);
    CHECK(back.centroids == cb.centroids);
}

TEST_CASE("PQ codebooks reject a dimension not divisible by L") {
    auto dir = temp_dir();
    CodebookSet cb;
    cb.flavor = QuantFlavor::PQ;
    cb.L = 3;
    cb.K = 2;
    cb.dim = 8; // centroid_dim truncates to 2, header is inconsistent
    cb.centroids.assign(static_cast<size_t>(cb.L * cb.K * cb.centroid_dim()), 0.0);
    std::string path = (dir / "badpq.bin").string();
    write_codebooks(cb, path);
    CHECK_THROWS_WITH_AS(read_codebooks(path), doctest::Contains("divide"),
                         IoError);
}

TEST_CASE("id tables round-trip and K can be inferred") {
    auto dir = temp_dir();
    auto ids = SemanticIdTable::create(
        2, 5, {"a", "b", "c"}, {0, 3, 1, 3, 2, 0});
    std::string path = (dir / "ids.jsonl").string();
    write_id_table(ids, path);

    auto kept = read_id_table(path, 5);
    CHECK(kept.K == 5);
    CHECK(kept.L == 2);
    CHECK(kept.items == ids.items);
    CHECK(kept.codes == ids.codes);

    auto inferred = read_id_table(path); // max code 3 -> K = 4
    CHECK(inferred.K == 4);
    CHECK(inferred.codes == ids.codes);
}

TEST_CASE("checkpoints round-trip in both precisions") {
    auto dir = temp_dir();
    for (bool f64 : {false, true}) {
        Checkpoint ck = sample_checkpoint(f64);
        std::string path = (dir / (f64 ? "ck64.bin" : "ck32.bin")).string();
        write_checkpoint(ck, path);
        Checkpoint back = read_checkpoint(path);

        CHECK(back.model_cfg.vocab == ck.model_cfg.vocab);
        CHECK(back.model_cfg.dropout == ck.model_cfg.dropout);
        CHECK(back.model_cfg.tied_output == ck.model_cfg.tied_output);
        CHECK(back.model_cfg.seed == ck.model_cfg.seed);
        CHECK(back.train_cfg.mode == ck.train_cfg.mode);
        CHECK(back.train_cfg.batch == ck.train_cfg.batch);
        CHECK(back.train_cfg.steps == ck.train_cfg.steps);
        CHECK(back.train_cfg.lr == ck.train_cfg.lr);
        CHECK(back.train_cfg.curriculum_c == ck.train_cfg.curriculum_c);
        CHECK(back.train_cfg.freeze_lambda == ck.train_cfg.freeze_lambda);
        CHECK(back.train_cfg.f64 == ck.train_cfg.f64);
        CHECK(back.train_cfg.log_every == ck.train_cfg.log_every);
        CHECK(back.train_cfg.seed == ck.train_cfg.seed);
        CHECK(back.step == ck.step);
        CHECK(back.log_lambda == ck.log_lambda);
        CHECK(back.lambda_m == ck.lambda_m);
        CHECK(back.lambda_v == ck.lambda_v);
        CHECK(back.params == ck.params);
        CHECK(back.adam_m == ck.adam_m);
        CHECK(back.adam_v == ck.adam_v);
    }
}

TEST_CASE("checkpoint corruption is detected") {
    auto dir = temp_dir();
    Checkpoint ck = sample_checkpoint(false);
    std::string path = (dir / "ck.bin").string();
    write_checkpoint(ck, path);
    std::string bytes = read_file(path);

    SUBCASE("flipped payload byte fails the checksum") {
        bytes[bytes.size() - 2] = static_cast<char>(bytes[bytes.size() - 2] ^ 0x40);
        atomic_write(path, bytes);
        CHECK_THROWS_WITH_AS(read_checkpoint(path), doctest::Contains("checksum"),
                             IoError);
    }
    SUBCASE("truncation") {
        atomic_write(path, bytes.substr(0, 10));
        CHECK_THROWS_AS(read_checkpoint(path), IoError);
    }
    SUBCASE("wrong magic") {
        bytes[1] = 'X';
        atomic_write(path, bytes);
        CHECK_THROWS_WITH_AS(read_checkpoint(path), doctest::Contains("magic"),
                             IoError);
    }
}

} // TEST_SUITE
