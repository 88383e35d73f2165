// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokrec/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tokrec/io.hpp"

namespace tokrec {

using nlohmann::json;

ItemEmbeddingTable ItemEmbeddingTable::create(std::vector<ItemId> ids,
                                              std::vector<double> data, int dim) {
    require(dim > 0, "embedding table: dim must be positive");
    require(data.size() == ids.size() * static_cast<size_t>(dim),
            "embedding table: data size does not match ids * dim");
    ItemEmbeddingTable t;
    t.ids = std::move(ids);
    t.data = std::move(data);
    t.dim = dim;
    t.index_.reserve(t.ids.size());
    for (size_t i = 0; i < t.ids.size(); ++i) {
        bool fresh = t.index_.emplace(t.ids[i], i).second;
        require(fresh, "embedding table: duplicate item id " + t.ids[i]);
    }
    return t;
}

size_t ItemEmbeddingTable::index_of(const ItemId& id) const {
    auto it = index_.find(id);
    require(it != index_.end(), "embedding table: unknown item id " + id);
    return it->second;
}

size_t InteractionDataset::interaction_count() const {
    size_t n = 0;
    for (const auto& u : users) n += u.items.size();
    return n;
}

std::map<ItemId, int64_t> InteractionDataset::item_counts() const {
    std::map<ItemId, int64_t> counts;
    for (const auto& u : users)
        for (const auto& it : u.items) ++counts[it];
    return counts;
}

namespace {

struct RawRow {
    std::string user;
    ItemId item;
    double ts;
    size_t order; // input position, breaks timestamp ties
};

// Group by user in first-appearance order, sort each user by ts with input
// order breaking ties.
InteractionDataset assemble(std::vector<RawRow>&& rows) {
    InteractionDataset ds;
    std::unordered_map<std::string, size_t> user_slot;
    std::vector<std::vector<RawRow>> per_user;
    for (auto& r : rows) {
        auto [it, fresh] = user_slot.emplace(r.user, per_user.size());
        if (fresh) per_user.emplace_back();
        per_user[it->second].push_back(std::move(r));
    }
    for (auto& bucket : per_user) {
        std::stable_sort(bucket.begin(), bucket.end(),
                         [](const RawRow& a, const RawRow& b) { return a.ts < b.ts; });
        UserHistory u{bucket.front().user, {}};
        u.items.reserve(bucket.size());
        for (auto& r : bucket) u.items.push_back(std::move(r.item));
        ds.users.push_back(std::move(u));
    }
    return ds;
}

} // namespace

InteractionDataset read_interactions_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open interactions file " + path);
    std::vector<RawRow> rows;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
        }
        for (const char* key : {"user", "item", "ts"})
            if (!j.contains(key))
                throw IoError(path + ":" + std::to_string(lineno) +
                              ": missing field \"" + key + "\"");
        if (!j["ts"].is_number())
            throw IoError(path + ":" + std::to_string(lineno) + ": ts is not a number");
        rows.push_back({j["user"].get<std::string>(), j["item"].get<std::string>(),
                        j["ts"].get<double>(), rows.size()});
    }
    return assemble(std::move(rows));
}

InteractionDataset read_interactions_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open interactions file " + path);
    std::string line;
    if (!std::getline(in, line)) return {};
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        if (!s.empty() && s.back() == ',') out.push_back("");
        return out;
    };
    auto header = split(line);
    int ui = -1, ii = -1, ti = -1;
    for (size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "user") ui = static_cast<int>(c);
        if (header[c] == "item") ii = static_cast<int>(c);
        if (header[c] == "ts") ti = static_cast<int>(c);
    }
    if (ui < 0 || ii < 0 || ti < 0)
        throw IoError(path + ": header must name user, item and ts columns");
    std::vector<RawRow> rows;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split(line);
        size_t need = static_cast<size_t>(std::max({ui, ii, ti})) + 1;
        if (cells.size() < need)
            throw IoError(path + ":" + std::to_string(lineno) + ": too few columns");
        double ts;
        try {
            size_t used = 0;
            ts = std::stod(cells[ti], &used);
            if (used != cells[ti].size()) throw std::invalid_argument("trailing junk");
        } catch (const std::exception&) {
            throw IoError(path + ":" + std::to_string(lineno) + ": bad ts \"" +
                          cells[ti] + "\"");
        }
        rows.push_back({cells[ui], cells[ii], ts, rows.size()});
    }
    return assemble(std::move(rows));
}

void write_interactions_jsonl(const InteractionDataset& ds, const std::string& path) {
    std::string out;
    size_t ts = 0; // synthetic ordering timestamp
    for (const auto& u : ds.users) {
        size_t pos = 0;
        for (const auto& item : u.items) {
            json j;
            j["user"] = u.user;
            j["item"] = item;
            j["ts"] = ts + pos;
            out += j.dump();
            out += '\n';
            ++pos;
        }
        ts += u.items.size();
    }
    atomic_write(path, out);
}

InteractionDataset core_filter(const InteractionDataset& ds, int min_count) {
    require(min_count >= 1, "core_filter: min_count must be >= 1");
    InteractionDataset cur = ds;
    for (;;) {
        auto counts = cur.item_counts();
        bool changed = false;
        InteractionDataset next;
        for (const auto& u : cur.users) {
            UserHistory kept{u.user, {}};
            for (const auto& item : u.items) {
                if (counts[item] >= min_count) kept.items.push_back(item);
                else changed = true;
            }
            if (kept.items.size() >= static_cast<size_t>(min_count))
                next.users.push_back(std::move(kept));
            else if (!kept.items.empty() || !u.items.empty())
                changed = true;
        }
        cur = std::move(next);
        if (!changed) return cur;
    }
}

SplitDataset leave_one_out_split(const InteractionDataset& ds) {
    SplitDataset out;
    for (const auto& u : ds.users) {
        const auto& v = u.items;
        size_t n = v.size();
        // Training samples cover every prefix of the training portion, which
        // excludes the validation and test targets when they exist.
        size_t train_end = n >= 3 ? n - 2 : n;
        for (size_t k = 1; k < train_end; ++k)
            out.train.push_back({u.user, {v.begin(), v.begin() + k}, v[k]});
        if (n >= 3) {
            out.valid.push_back({u.user, {v.begin(), v.begin() + (n - 2)}, v[n - 2]});
            out.test.push_back({u.user, {v.begin(), v.begin() + (n - 1)}, v[n - 1]});
        } else {
            ++out.skipped_users;
        }
    }
    return out;
}

FlatSample flatten_history(std::span<const ItemId> history,
                           const SemanticIdTable& ids, int max_items) {
    require(max_items >= 1, "flatten_history: max_items must be >= 1");
    require(history.size() >= 2,
            "flatten_history: need at least one context item plus the target");
    TokenSpace space(ids.L, ids.K);
    auto context = history.first(history.size() - 1);
    if (context.size() > static_cast<size_t>(max_items))
        context = context.last(static_cast<size_t>(max_items));
    FlatSample s;
    s.x.reserve(context.size() * ids.L);
    for (const auto& item : context) {
        auto codes = ids.id_of(ids.row_of(item));
        for (int l = 0; l < ids.L; ++l) s.x.push_back(space.token(l, codes[l]));
    }
    auto target = ids.id_of(ids.row_of(history.back()));
    s.y.reserve(ids.L);
    for (int l = 0; l < ids.L; ++l) s.y.push_back(space.token(l, target[l]));
    return s;
}

} // namespace tokrec
