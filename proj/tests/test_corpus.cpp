#include "simrec/corpus.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <sstream>

using namespace simrec;

namespace {

InteractionLog log_from(const std::string& tsv) {
    std::istringstream in(tsv);
    return parse_interactions(in);
}

std::unordered_map<std::string, std::string> titles_for(const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::string> titles;
    for (const auto& id : ids) titles[id] = "title of " + id;
    return titles;
}

std::string temp_path(const std::string& name) {
    return std::string("/tmp/simrec_corpus_test_") + name;
}

}  // namespace

TEST_CASE("parse_interactions basics") {
    auto log = log_from("u1\ti1\t100\n");
    REQUIRE(log.records.size() == 1);
    CHECK(log.records[0].user_id == "u1");
    CHECK(log.records[0].item_id == "i1");
    CHECK(log.records[0].timestamp == 100);

    CHECK(log_from("").records.empty());

    CHECK_THROWS_AS(log_from("u1\ti1\tabc\n"), DataError);
    CHECK_THROWS_WITH_AS(log_from("u1\ti1\t1\nu2\ti2\txyz\n"), doctest::Contains("line 2"),
                         DataError);
    CHECK_THROWS_AS(log_from("u1\ti1\n"), DataError);
    CHECK_THROWS_AS(log_from("u1\ti1\t1\textra\n"), DataError);
}

TEST_CASE("preprocess removes rare items before users") {
    // Item X appears 3 times; with n=5 it disappears even though its users stay.
    std::string tsv;
    for (int u = 0; u < 3; ++u) {
        const std::string uid = "u" + std::to_string(u);
        tsv += uid + "\tX\t0\n";
        for (int t = 1; t <= 5; ++t)
            tsv += uid + "\tY" + std::to_string(t) + "\t" + std::to_string(t) + "\n";
    }
    auto titles = titles_for({"X", "Y1", "Y2", "Y3", "Y4", "Y5"});
    for (int t = 0; t < 15; ++t) tsv += "filler\tY1\t" + std::to_string(t) + "\n";

    const Corpus corpus = preprocess(log_from(tsv), titles, 5);
    CHECK(corpus.item_index_of.find("X") == corpus.item_index_of.end());
    CHECK(corpus.item_index_of.count("Y1") == 1);
}

TEST_CASE("preprocess identity when filters pass everything") {
    std::string tsv;
    for (int u = 0; u < 4; ++u)
        for (int t = 0; t < 5; ++t)
            tsv += "u" + std::to_string(u) + "\ti" + std::to_string(t) + "\t" + std::to_string(t) + "\n";
    auto titles = titles_for({"i0", "i1", "i2", "i3", "i4"});
    const Corpus corpus = preprocess(log_from(tsv), titles, 0);
    CHECK(corpus.user_count() == 4);
    CHECK(corpus.item_count == 5);
    CHECK(corpus.interaction_count() == 20);
}

TEST_CASE("preprocess two-stage fixture: hand-enumerated survivors") {
    // 6 users, 8 items. Counts by item: a:6 b:5 c:4 d:3 e:5 f:2 g:5 h:4.
    // n=4 keeps {a,b,c,e,g,h}; untitled item 'h' is dropped when titles are
    // required; then users with fewer than 4 remaining interactions go.
    struct Row {
        const char* u;
        const char* i;
    };
    const std::vector<Row> rows = {
        {"u1", "a"}, {"u1", "b"}, {"u1", "c"}, {"u1", "d"}, {"u1", "e"},
        {"u2", "a"}, {"u2", "b"}, {"u2", "c"}, {"u2", "e"}, {"u2", "g"},
        {"u3", "a"}, {"u3", "b"}, {"u3", "g"}, {"u3", "h"}, {"u3", "f"},
        {"u4", "a"}, {"u4", "b"}, {"u4", "c"}, {"u4", "e"}, {"u4", "g"},
        {"u5", "a"}, {"u5", "d"}, {"u5", "h"}, {"u5", "f"}, {"u5", "g"},
        {"u6", "a"}, {"u6", "b"}, {"u6", "c"}, {"u6", "e"}, {"u6", "g"},
        {"u6", "d"}, {"u6", "e"}, {"u6", "h"}, {"u6", "h"},
    };
    std::string tsv;
    int ts = 0;
    for (const auto& row : rows)
        tsv += std::string(row.u) + "\t" + row.i + "\t" + std::to_string(ts++) + "\n";
    auto titles = titles_for({"a", "b", "c", "d", "e", "f", "g"});  // no title for h

    const Corpus corpus = preprocess(log_from(tsv), titles, 4, 4, true);

    // Hand application: count filter keeps {a,b,c,e,g,h}; title filter drops h.
    // Remaining per user: u1:4 u2:5 u3:3 u4:5 u5:2 u6:6 -> u3, u5 removed.
    REQUIRE(corpus.user_count() == 4);
    std::vector<std::string> users = corpus.user_ids;
    std::sort(users.begin(), users.end());
    CHECK(users == std::vector<std::string>{"u1", "u2", "u4", "u6"});
    std::vector<std::string> items(corpus.item_ids.begin() + 1, corpus.item_ids.end());
    std::sort(items.begin(), items.end());
    CHECK(items == std::vector<std::string>{"a", "b", "c", "e", "g"});

    // Reversing the stages would keep u3 (5 interactions before the item
    // filters); the pinned order must not.
    CHECK(corpus.user_index_of.find("u3") == corpus.user_index_of.end());

    // Item g survives the raw count filter (5) but the user removals leave it
    // with only 3 occurrences, fewer than n=4.
    std::int64_t g_count = 0;
    const ItemIndex g_idx = corpus.item_index_of.at("g");
    for (const auto& seq : corpus.user_sequences)
        g_count += std::count(seq.begin(), seq.end(), g_idx);
    CHECK(g_count == 3);
}

TEST_CASE("preprocess orders by timestamp with input-order ties") {
    std::string tsv;
    tsv += "u1\tb\t5\n";
    tsv += "u1\ta\t3\n";
    tsv += "u1\tc\t5\n";  // ties with b; b came first in the input
    tsv += "u1\td\t1\n";
    tsv += "u1\te\t9\n";
    auto titles = titles_for({"a", "b", "c", "d", "e"});
    const Corpus corpus = preprocess(log_from(tsv), titles, 0, 5);
    REQUIRE(corpus.user_count() == 1);
    std::vector<std::string> seq;
    for (ItemIndex i : corpus.user_sequences[0])
        seq.push_back(corpus.item_ids[static_cast<std::size_t>(i)]);
    CHECK(seq == std::vector<std::string>{"d", "a", "b", "c", "e"});
}

TEST_CASE("preprocess empty result errors") {
    auto titles = titles_for({"i1"});
    CHECK_THROWS_AS(preprocess(log_from("u1\ti1\t1\n"), titles, 0, 5), DataError);
}

TEST_CASE("split_leave_one_out") {
    std::string tsv;
    for (int t = 0; t < 5; ++t) tsv += "u1\ti" + std::to_string(t) + "\t" + std::to_string(t) + "\n";
    auto titles = titles_for({"i0", "i1", "i2", "i3", "i4"});
    const Corpus corpus = preprocess(log_from(tsv), titles, 0);
    const SplitCorpus split = split_leave_one_out(corpus);
    REQUIRE(split.user_count() == 1);
    CHECK(split.train[0].size() == 3);
    CHECK(corpus.item_ids[static_cast<std::size_t>(split.valid[0])] == "i3");
    CHECK(corpus.item_ids[static_cast<std::size_t>(split.test[0])] == "i4");

    // Round trip: train ++ [valid, test] == full sequence.
    std::vector<ItemIndex> rebuilt = split.train[0];
    rebuilt.push_back(split.valid[0]);
    rebuilt.push_back(split.test[0]);
    CHECK(rebuilt == corpus.user_sequences[0]);
}

TEST_CASE("split allows repeated items") {
    std::string tsv;
    const std::vector<std::string> seq = {"a", "b", "a", "b", "a"};
    for (std::size_t t = 0; t < seq.size(); ++t)
        tsv += "u1\t" + seq[t] + "\t" + std::to_string(t) + "\n";
    const Corpus corpus = preprocess(log_from(tsv), titles_for({"a", "b"}), 0);
    const SplitCorpus split = split_leave_one_out(corpus);
    CHECK(split.train[0].size() == 3);
    CHECK(corpus.item_ids[static_cast<std::size_t>(split.valid[0])] == "b");
    CHECK(corpus.item_ids[static_cast<std::size_t>(split.test[0])] == "a");
}

TEST_CASE("split rejects too-short sequences") {
    Corpus corpus;
    corpus.item_count = 2;
    corpus.item_ids = {"", "a", "b"};
    corpus.titles = {"", "ta", "tb"};
    corpus.user_ids = {"u1"};
    corpus.user_sequences = {{1, 2}};
    CHECK_THROWS_AS(split_leave_one_out(corpus), DataError);
}

TEST_CASE("density") {
    Corpus corpus;
    corpus.item_count = 4;
    corpus.user_sequences = {{1, 2}, {1, 2, 3}, {1, 2, 3, 4}};
    CHECK(density(corpus) == 2.25);

    Corpus single;
    single.item_count = 1;
    single.user_sequences = {{1, 1, 1}};
    CHECK(density(single) == 3.0);

    Corpus empty;
    CHECK_THROWS_AS(density(empty), DataError);
}

TEST_CASE("density is invariant under relabeling") {
    Corpus corpus;
    corpus.item_count = 5;
    corpus.user_sequences = {{1, 2, 3}, {4, 5}, {2, 2, 2, 2}};
    const double base = density(corpus);

    // Permute item labels (1..5 -> 5..1) and shuffle user order.
    Corpus relabeled;
    relabeled.item_count = 5;
    relabeled.user_sequences = {{4, 4, 4, 4}, {2, 1}, {5, 4, 3}};
    CHECK(density(relabeled) == base);
}

TEST_CASE("train_frequency counts train sequences only") {
    Corpus corpus;
    corpus.item_count = 3;
    corpus.item_ids = {"", "a", "b", "c"};
    corpus.titles = {"", "", "", ""};
    corpus.user_ids = {"u1", "u2"};
    // u1: [a,b,a,b,c] -> train [a,b,a]; u2: [b,b,b,a,c] -> train [b,b,b]
    corpus.user_sequences = {{1, 2, 1, 2, 3}, {2, 2, 2, 1, 3}};
    const SplitCorpus split = split_leave_one_out(corpus);
    const FrequencyTable freq = train_frequency(split);
    CHECK(freq.at(1) == 2);
    CHECK(freq.at(2) == 4);
    CHECK(freq.at(3) == 0);  // only appears as valid/test targets

    std::int64_t expected_total = 0;
    for (const auto& seq : corpus.user_sequences)
        expected_total += static_cast<std::int64_t>(seq.size()) - 2;
    CHECK(freq.total() == expected_total);
}

TEST_CASE("corpus serialization round trip") {
    std::string tsv;
    for (int u = 0; u < 3; ++u)
        for (int t = 0; t < 6; ++t)
            tsv += "user" + std::to_string(u) + "\titem" + std::to_string((u + t) % 7) + "\t" +
                   std::to_string(t) + "\n";
    auto titles = titles_for({"item0", "item1", "item2", "item3", "item4", "item5", "item6"});
    titles["item3"] = "ünïcode títle";
    const Corpus corpus = preprocess(log_from(tsv), titles, 0);

    const std::string path = temp_path("roundtrip.corpus");
    save_corpus(path, corpus);
    const Corpus loaded = load_corpus(path);
    CHECK(loaded.item_count == corpus.item_count);
    CHECK(loaded.user_ids == corpus.user_ids);
    CHECK(loaded.item_ids == corpus.item_ids);
    CHECK(loaded.titles == corpus.titles);
    CHECK(loaded.user_sequences == corpus.user_sequences);
    CHECK(loaded.item_index_of.at("item3") == corpus.item_index_of.at("item3"));
    std::remove(path.c_str());
}

TEST_CASE("split round-trips over every user of a random corpus") {
    std::string tsv;
    std::vector<std::string> ids;
    for (int i = 0; i < 12; ++i) ids.push_back("i" + std::to_string(i));
    int ts = 0;
    for (int u = 0; u < 9; ++u)
        for (int t = 0; t < 5 + (u % 4); ++t)
            tsv += "u" + std::to_string(u) + "\t" + ids[static_cast<std::size_t>((u * 3 + t * 5) % 12)] +
                   "\t" + std::to_string(ts++) + "\n";
    const Corpus corpus = preprocess(log_from(tsv), titles_for(ids), 0);
    const SplitCorpus split = split_leave_one_out(corpus);
    for (std::int32_t u = 0; u < corpus.user_count(); ++u) {
        std::vector<ItemIndex> rebuilt = split.train[static_cast<std::size_t>(u)];
        rebuilt.push_back(split.valid[static_cast<std::size_t>(u)]);
        rebuilt.push_back(split.test[static_cast<std::size_t>(u)]);
        CHECK(rebuilt == corpus.user_sequences[static_cast<std::size_t>(u)]);
        CHECK(split.train[static_cast<std::size_t>(u)].size() ==
              corpus.user_sequences[static_cast<std::size_t>(u)].size() - 2);
    }
}

TEST_CASE("density sweep monotonicity on a fixture") {
    // Built so that raising the item-count threshold removes rare items and
    // concentrates interactions.
    std::string tsv;
    int ts = 0;
    for (int u = 0; u < 6; ++u) {
        const std::string uid = "u" + std::to_string(u);
        for (int t = 0; t < 6; ++t) tsv += uid + "\tcommon" + std::to_string(t % 3) + "\t" + std::to_string(ts++) + "\n";
        tsv += uid + "\trare" + std::to_string(u) + "\t" + std::to_string(ts++) + "\n";
    }
    std::vector<std::string> ids = {"common0", "common1", "common2"};
    for (int u = 0; u < 6; ++u) ids.push_back("rare" + std::to_string(u));
    auto titles = titles_for(ids);

    const double d0 = density(preprocess(log_from(tsv), titles, 0));
    const double d2 = density(preprocess(log_from(tsv), titles, 2));
    CHECK(d2 >= d0);
}
