// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tokrec/quantizer.hpp"
#include "tokrec/types.hpp"

namespace tokrec {

// One user's interactions, already sorted by timestamp (ties keep input
// order). Repeated items are allowed.
struct UserHistory {
    std::string user;
    std::vector<ItemId> items;
};

struct InteractionDataset {
    std::vector<UserHistory> users;

    size_t interaction_count() const;
    // item -> number of occurrences across all users
    std::map<ItemId, int64_t> item_counts() const;
};

// Reads {"user":..., "item":..., "ts":...} JSON objects, one per line.
// Unknown fields are ignored; a missing field or an unparsable ts raises
// IoError with the offending line number.
InteractionDataset read_interactions_jsonl(const std::string& path);

// CSV with a header naming at least user,item,ts (extra columns ignored).
InteractionDataset read_interactions_csv(const std::string& path);

void write_interactions_jsonl(const InteractionDataset& ds, const std::string& path);

// Iteratively removes items and users with fewer than min_count interactions
// until a fixpoint.
InteractionDataset core_filter(const InteractionDataset& ds, int min_count = 5);

// A history prefix and the single item it should predict.
struct SplitSample {
    std::string user;
    std::vector<ItemId> history; // at least one item
    ItemId target;
};

// Leave-one-out protocol: per user the last item is the test target, the
// second-to-last the validation target, and every in-between prefix of the
// remaining portion becomes a training sample. Users with fewer than three
// interactions contribute training samples only.
struct SplitDataset {
    std::vector<SplitSample> train;
    std::vector<SplitSample> valid;
    std::vector<SplitSample> test;
    size_t skipped_users = 0; // too short for valid/test
};

SplitDataset leave_one_out_split(const InteractionDataset& ds);

// Token-level training pair: x is the flattened, truncated history, y the
// target's L code tokens. Both use the layer-offset vocabulary.
struct FlatSample {
    std::vector<int32_t> x;
    std::vector<int32_t> y;
};

// history = context items followed by the target as the last element; needs
// at least one non-target item. Only the most recent max_items context items
// are kept.
FlatSample flatten_history(std::span<const ItemId> history,
                           const SemanticIdTable& ids, int max_items);

} // namespace tokrec
