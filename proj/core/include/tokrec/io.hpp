// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokrec/quantizer.hpp"
#include "tokrec/trainer.hpp"
#include "tokrec/types.hpp"

namespace tokrec {

// All writers go through a temp file in the destination directory followed
// by an atomic rename, so partially written artifacts never appear under
// their final name.
void atomic_write(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

// JSONL embeddings: {"item": id, "vec": [floats]} per line, one item each.
ItemEmbeddingTable read_embeddings_jsonl(const std::string& path);
void write_embeddings_jsonl(const ItemEmbeddingTable& emb, const std::string& path);

// Binary embeddings: magic "TKRC", u32 version, u32 item count, u32 dim,
// then count*dim little-endian f32 values in row order. Item ids are the row
// indices rendered in decimal unless explicit ids are passed.
ItemEmbeddingTable read_embeddings_binary(const std::string& path,
                                          std::vector<ItemId> ids = {});
void write_embeddings_binary(const ItemEmbeddingTable& emb, const std::string& path);

// Codebooks: u32 header length + JSON header {flavor, L, K, d, seed}
// followed by the centroid block as little-endian f32, layer by layer.
CodebookSet read_codebooks(const std::string& path);
void write_codebooks(const CodebookSet& cb, const std::string& path);

// Semantic ids: JSONL {"item": id, "codes": [ints]}. The file does not carry
// K; pass the codebook's K, or 0 to infer max code + 1.
SemanticIdTable read_id_table(const std::string& path, int K = 0);
void write_id_table(const SemanticIdTable& ids, const std::string& path);

// Checkpoint: magic "TKCP", u32 version, u64 manifest length, JSON manifest
// (configs, step, rng state, lambda state, tensor directory, payload crc32),
// then the tensor payload. Tensors are stored as little-endian f32 or f64
// depending on the training precision; Adam moments ride along so a resumed
// run continues exactly. Loading verifies the checksum.
void write_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

} // namespace tokrec
