// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "tokrec/common.hpp"
#include "tokrec/dataset.hpp"
#include "tokrec/quantizer.hpp"
#include "tokrec/types.hpp"

using namespace tokrec;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    fs::path d = fs::temp_directory_path() /
                 ("tokrec_dataset_" + std::to_string(++counter) + "_" +
                  std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
}

std::string write_temp(const fs::path& dir, const std::string& name,
                       const std::string& body) {
    fs::path p = dir / name;
    std::ofstream f(p);
    f << body;
    return p.string();
}

SemanticIdTable toy_ids(int L, int K, std::vector<ItemId> items,
                        std::vector<int32_t> codes) {
    return SemanticIdTable::create(L, K, std::move(items), std::move(codes));
}

// Reference fixpoint: recount and drop until nothing changes, the slow way.
InteractionDataset brute_force_core(InteractionDataset ds, int min_count) {
    for (;;) {
        std::map<ItemId, int64_t> ic = ds.item_counts();
        InteractionDataset next;
        bool changed = false;
        for (auto& u : ds.users) {
            std::vector<ItemId> kept;
            for (auto& it : u.items)
                if (ic[it] >= min_count) kept.push_back(it);
            if (kept.size() != u.items.size()) changed = true;
            if (static_cast<int>(kept.size()) >= min_count)
                next.users.push_back({u.user, kept});
            else if (!kept.empty())
                changed = true;
        }
        if (!changed) return ds;
        ds = std::move(next);
    }
}

} // namespace

TEST_SUITE("dataset") {

TEST_CASE("jsonl rows are grouped per user and sorted by timestamp") {
    auto dir = temp_dir();
    auto path = write_temp(dir, "rows.jsonl",
                           R"({"user":"u1","item":"c","ts":3})" "\n"
                           R"({"user":"u1","item":"a","ts":1})" "\n"
                           R"({"user":"u1","item":"b","ts":2})" "\n");
    auto ds = read_interactions_jsonl(path);
    REQUIRE(ds.users.size() == 1);
    CHECK(ds.users[0].items == std::vector<ItemId>{"a", "b", "c"});
}

TEST_CASE("empty file gives an empty dataset") {
    auto dir = temp_dir();
    auto ds = read_interactions_jsonl(write_temp(dir, "empty.jsonl", ""));
    CHECK(ds.users.empty());
    CHECK(ds.interaction_count() == 0);
}

TEST_CASE("unknown extra fields are ignored") {
    auto dir = temp_dir();
    auto path = write_temp(dir, "extra.jsonl",
                           R"({"user":"u1","item":"a","ts":1,"rating":5})" "\n"
                           R"({"user":"u1","item":"b","ts":2,"note":"x"})" "\n"
                           R"({"user":"u2","item":"a","ts":9,"w":[1,2]})" "\n"
                           R"({"user":"u2","item":"c","ts":5})" "\n"
                           R"({"user":"u2","item":"d","ts":7})" "\n");
    auto ds = read_interactions_jsonl(path);
    REQUIRE(ds.users.size() == 2);
    CHECK(ds.users[0].items == std::vector<ItemId>{"a", "b"});
    CHECK(ds.users[1].items == std::vector<ItemId>{"c", "d", "a"});
}

TEST_CASE("missing fields and bad timestamps name the line") {
    auto dir = temp_dir();
    auto no_item = write_temp(dir, "no_item.jsonl",
                              R"({"user":"u1","item":"a","ts":1})" "\n"
                              R"({"user":"u1","ts":2})" "\n");
    CHECK_THROWS_WITH_AS(read_interactions_jsonl(no_item),
                         doctest::Contains(":2: missing field"), IoError);
    auto bad_ts = write_temp(dir, "bad_ts.jsonl",
                             R"({"user":"u1","item":"a","ts":"soon"})" "\n");
    CHECK_THROWS_WITH_AS(read_interactions_jsonl(bad_ts),
                         doctest::Contains(":1: ts"), IoError);
}

TEST_CASE("timestamp ties keep input order") {
    auto dir = temp_dir();
    auto path = write_temp(dir, "ties.jsonl",
                           R"({"user":"u","item":"x","ts":5})" "\n"
                           R"({"user":"u","item":"y","ts":5})" "\n"
                           R"({"user":"u","item":"z","ts":5})" "\n");
    auto ds = read_interactions_jsonl(path);
    CHECK(ds.users[0].items == std::vector<ItemId>{"x", "y", "z"});
}

TEST_CASE("csv parses the header and ignores extra columns") {
    auto dir = temp_dir();
    auto path = write_temp(dir, "rows.csv",
                           "item,rating,user,ts\n"
                           "a,5,u1,2\n"
                           "b,1,u1,1\n");
    auto ds = read_interactions_csv(path);
    REQUIRE(ds.users.size() == 1);
    CHECK(ds.users[0].items == std::vector<ItemId>{"b", "a"});

    auto no_ts = write_temp(dir, "no_ts.csv", "user,item\nu1,a\n");
    CHECK_THROWS_AS(read_interactions_csv(no_ts), IoError);
    auto bad = write_temp(dir, "bad.csv", "user,item,ts\nu1,a,xyz\n");
    CHECK_THROWS_WITH_AS(read_interactions_csv(bad),
                         doctest::Contains(":2: bad ts"), IoError);
}

TEST_CASE("interactions round-trip through jsonl") {
    auto dir = temp_dir();
    InteractionDataset ds;
    ds.users.push_back({"u1", {"a", "b", "a"}});
    ds.users.push_back({"u2", {"c"}});
    auto path = (dir / "out.jsonl").string();
    write_interactions_jsonl(ds, path);
    auto back = read_interactions_jsonl(path);
    REQUIRE(back.users.size() == 2);
    CHECK(back.users[0].items == ds.users[0].items);
    CHECK(back.users[1].items == ds.users[1].items);
    CHECK(back.item_counts() == ds.item_counts());
}

TEST_CASE("core filter is the identity when everything is frequent") {
    InteractionDataset ds;
    // 5 users x 5 items, every item appears 5 times, every user has 5.
    for (int u = 0; u < 5; ++u) {
        UserHistory h{"u" + std::to_string(u), {}};
        for (int i = 0; i < 5; ++i) h.items.push_back("i" + std::to_string(i));
        ds.users.push_back(h);
    }
    auto out = core_filter(ds, 5);
    REQUIRE(out.users.size() == 5);
    for (int u = 0; u < 5; ++u) CHECK(out.users[u].items == ds.users[u].items);
}

TEST_CASE("core filter matches a brute-force fixpoint on a mixed fixture") {
    InteractionDataset ds;
    // 10 users; "rare" appears 4 times, and dropping it pushes u0 below 5.
    for (int u = 0; u < 10; ++u) {
        UserHistory h{"u" + std::to_string(u), {}};
        int len = u == 0 ? 5 : 6;
        for (int k = 0; k < len; ++k)
            h.items.push_back("i" + std::to_string((u + k) % 8));
        if (u < 4) h.items[0] = "rare";
        ds.users.push_back(h);
    }
    auto fast = core_filter(ds, 5);
    auto slow = brute_force_core(ds, 5);
    REQUIRE(fast.users.size() == slow.users.size());
    for (size_t i = 0; i < fast.users.size(); ++i) {
        CHECK(fast.users[i].user == slow.users[i].user);
        CHECK(fast.users[i].items == slow.users[i].items);
    }
    // Fixpoint: applying it again changes nothing.
    auto again = core_filter(fast, 5);
    REQUIRE(again.users.size() == fast.users.size());
    for (size_t i = 0; i < fast.users.size(); ++i)
        CHECK(again.users[i].items == fast.users[i].items);
    // The rare item is gone everywhere.
    for (auto& [item, n] : fast.item_counts()) {
        CHECK(item != "rare");
        CHECK(n >= 5);
    }
}

TEST_CASE("removing an item can cascade into removing a user") {
    InteractionDataset ds;
    // u0 has 5 interactions but one is the scarce item A (4 total); the other
    // users keep every remaining item frequent.
    ds.users.push_back({"u0", {"A", "b", "c", "d", "e"}});
    ds.users.push_back({"u1", {"A", "b", "c", "d", "e", "f"}});
    ds.users.push_back({"u2", {"A", "b", "c", "d", "e", "f"}});
    ds.users.push_back({"u3", {"A", "b", "c", "d", "e", "f"}});
    ds.users.push_back({"u4", {"b", "c", "d", "e", "f"}});
    ds.users.push_back({"u5", {"b", "c", "d", "e", "f"}});
    auto out = core_filter(ds, 5);
    auto slow = brute_force_core(ds, 5);
    REQUIRE(out.users.size() == slow.users.size());
    for (size_t i = 0; i < out.users.size(); ++i)
        CHECK(out.users[i].items == slow.users[i].items);
    for (auto& u : out.users) CHECK(u.user != "u0");
    CHECK(out.item_counts().count("A") == 0);
}

TEST_CASE("leave-one-out assigns last to test and second-to-last to valid") {
    InteractionDataset ds;
    ds.users.push_back({"u", {"a", "b", "c", "d"}});
    auto split = leave_one_out_split(ds);
    REQUIRE(split.test.size() == 1);
    REQUIRE(split.valid.size() == 1);
    CHECK(split.test[0].target == "d");
    CHECK(split.test[0].history == std::vector<ItemId>{"a", "b", "c"});
    CHECK(split.valid[0].target == "c");
    CHECK(split.valid[0].history == std::vector<ItemId>{"a", "b"});
    // Training samples are the prefixes of the train portion [a, b].
    REQUIRE(split.train.size() == 1);
    CHECK(split.train[0].history == std::vector<ItemId>{"a"});
    CHECK(split.train[0].target == "b");
}

TEST_CASE("users with fewer than three interactions skip valid and test") {
    InteractionDataset ds;
    ds.users.push_back({"u0", {"a", "b"}});
    ds.users.push_back({"u1", {"a", "b", "c"}});
    auto split = leave_one_out_split(ds);
    CHECK(split.skipped_users == 1);
    CHECK(split.valid.size() == 1);
    CHECK(split.test.size() == 1);
    // The short user still contributes its training prefix.
    REQUIRE(split.train.size() == 1);
    CHECK(split.train[0].user == "u0");
}

TEST_CASE("split sizes count eligible users on a synthetic set") {
    InteractionDataset ds;
    int eligible = 0;
    for (int u = 0; u < 100; ++u) {
        UserHistory h{"u" + std::to_string(u), {}};
        int len = 2 + (u % 7);
        for (int k = 0; k < len; ++k) h.items.push_back("i" + std::to_string(k));
        if (len >= 3) ++eligible;
        ds.users.push_back(std::move(h));
    }
    auto split = leave_one_out_split(ds);
    CHECK(static_cast<int>(split.test.size()) == eligible);
    CHECK(static_cast<int>(split.valid.size()) == eligible);
    CHECK(split.skipped_users == 100 - static_cast<size_t>(eligible));
}

TEST_CASE("split roles never overlap within a user") {
    InteractionDataset ds;
    ds.users.push_back({"u", {"a", "b", "c", "d", "e", "f"}});
    auto split = leave_one_out_split(ds);
    // Positions: train targets must come from v[1..n-3], valid from v[n-2],
    // test from v[n-1]; together with the base item they cover v exactly.
    std::set<std::string> train_targets;
    for (auto& s : split.train) train_targets.insert(s.target);
    CHECK(train_targets == std::set<std::string>{"b", "c", "d"});
    CHECK(split.valid[0].target == "e");
    CHECK(split.test[0].target == "f");
}

TEST_CASE("flatten_history offsets codes by layer") {
    auto ids = toy_ids(2, 8, {"i1", "i2"}, {3, 7, 1, 0});
    std::vector<ItemId> history = {"i1", "i2"};
    auto flat = flatten_history(history, ids, 20);
    CHECK(flat.x == std::vector<int32_t>{3, 8 + 7});
    CHECK(flat.y == std::vector<int32_t>{1, 8 + 0});
}

TEST_CASE("flatten_history truncates to the most recent items") {
    std::vector<ItemId> items;
    std::vector<int32_t> codes;
    for (int i = 0; i < 30; ++i) {
        items.push_back("i" + std::to_string(i));
        codes.push_back(i % 5);
        codes.push_back(i / 5);
    }
    auto ids = toy_ids(2, 8, items, codes);
    std::vector<ItemId> history(items);
    auto flat = flatten_history(history, ids, 20);
    // 29 context items truncated to 20, each contributing L = 2 tokens.
    CHECK(flat.x.size() == 20 * 2);
    // The first kept context item is i9 (30 items: 29 context, keep last 20).
    CHECK(flat.x[0] == 9 % 5);
    CHECK(flat.y.size() == 2);
}

TEST_CASE("flatten_history rejects target-only histories and unknown items") {
    auto ids = toy_ids(2, 8, {"i1"}, {0, 0});
    std::vector<ItemId> only_target = {"i1"};
    CHECK_THROWS_AS(flatten_history(only_target, ids, 20), ContractError);
    std::vector<ItemId> unknown = {"i1", "mystery"};
    CHECK_THROWS_AS(flatten_history(unknown, ids, 20), ContractError);
}

TEST_CASE("layer-offset tokenization is injective and invertible") {
    TokenSpace space(4, 16);
    std::set<int32_t> seen;
    for (int l = 0; l < 4; ++l) {
        for (int c = 0; c < 16; ++c) {
            int32_t tok = space.token(l, c);
            CHECK(seen.insert(tok).second);
            CHECK(space.layer_of(tok) == l);
            CHECK(space.code_of(tok) == c);
        }
    }
    CHECK(space.vocab() == 4 * 16 + 2);
    CHECK(space.pad() == 64);
    CHECK(space.bos() == 65);
    CHECK_THROWS_AS(space.token(0, 16), ContractError);
    CHECK_THROWS_AS(space.token(4, 0), ContractError);
    CHECK_THROWS_AS(space.layer_of(space.pad()), ContractError);
}

} // TEST_SUITE
