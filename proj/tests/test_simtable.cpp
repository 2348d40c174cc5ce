#include "simrec/simtable.hpp"

#include "simrec/io.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

using namespace simrec;

namespace {

Corpus corpus_with_titles(const std::vector<std::string>& titles) {
    Corpus corpus;
    corpus.item_count = static_cast<ItemIndex>(titles.size());
    corpus.item_ids.emplace_back();
    corpus.titles.emplace_back();
    for (std::size_t i = 0; i < titles.size(); ++i) {
        corpus.item_ids.push_back("item" + std::to_string(i + 1));
        corpus.item_index_of[corpus.item_ids.back()] = static_cast<ItemIndex>(i + 1);
        corpus.titles.push_back(titles[i]);
    }
    corpus.user_ids = {"u0"};
    corpus.user_sequences = {{1}};
    return corpus;
}

EmbeddingSet random_embeddings(ItemIndex count, std::int32_t dim, std::uint64_t seed) {
    EmbeddingSet emb;
    emb.dim = dim;
    emb.vectors = Mat<double>::Zero(count + 1, dim);
    Rng rng(seed);
    for (ItemIndex i = 1; i <= count; ++i)
        for (std::int32_t j = 0; j < dim; ++j) emb.vectors(i, j) = rng.normal();
    return emb;
}

void check_tables_match(const SimilarityTable& a, const SimilarityTable& b, double tol) {
    REQUIRE(a.item_count() == b.item_count());
    for (ItemIndex i = 1; i <= a.item_count(); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        REQUIRE(a.items[idx] == b.items[idx]);
        REQUIRE(a.probs[idx].size() == b.probs[idx].size());
        for (std::size_t e = 0; e < a.probs[idx].size(); ++e)
            CHECK(std::fabs(a.probs[idx][e] - b.probs[idx][e]) < tol);
    }
}

}  // namespace

TEST_CASE("hashed title embeddings: identical titles, unit norms") {
    const Corpus corpus = corpus_with_titles({"lavender oil 1 oz", "Lavender OIL 1 OZ",
                                              "steel hammer", "x"});
    const EmbeddingSet emb = embed_titles_hashed(corpus, 128, 9);
    // Case-insensitive identical titles give identical vectors: cosine 1.
    CHECK((emb.vectors.row(1) - emb.vectors.row(2)).norm() == 0.0);
    for (ItemIndex i = 1; i <= 4; ++i)
        CHECK(emb.vectors.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(embed_titles_hashed(corpus, 4, 9), ConfigError);
    Corpus bad = corpus_with_titles({"ok title", ""});
    CHECK_THROWS_AS(embed_titles_hashed(bad, 64, 9), DataError);
}

TEST_CASE("hashed embeddings track the trigram-multiset cosine oracle") {
    const std::string t1 = "lavender oil 1 oz";
    const std::string t2 = "lavender oil 4 oz";
    const std::string t3 = "steel hammer";
    // Frozen oracle values from the exact multiset computation (no hashing):
    // cos(t1, t2) = 0.8 exactly (shared trigram counts), cos(t1, t3) = 0.
    const double oracle12 = testsupport::trigram_multiset_cosine(t1, t2);
    const double oracle13 = testsupport::trigram_multiset_cosine(t1, t3);
    CHECK(oracle12 == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(oracle13 == doctest::Approx(0.0).epsilon(1e-12));

    const Corpus corpus = corpus_with_titles({t1, t2, t3});
    const EmbeddingSet emb = embed_titles_hashed(corpus, 512, 9);
    const double cos12 = emb.vectors.row(1).dot(emb.vectors.row(2));
    const double cos13 = emb.vectors.row(1).dot(emb.vectors.row(3));
    CHECK(cos12 > cos13);
    // Bucket collisions can only nudge the cosine; dim 512 keeps it close.
    CHECK(cos12 == doctest::Approx(oracle12).epsilon(0.08));
    CHECK(std::fabs(cos13 - oracle13) < 0.08);
}

TEST_CASE("build_similarity_table worked example") {
    // Three items arranged so row 1 keeps exactly cosines {0.9, 0.5}: with
    // unit vectors u, a = 0.9u + sqrt(1-0.81)w, b = 0.5u + sqrt(0.75)w2.
    EmbeddingSet emb;
    emb.dim = 3;
    emb.vectors = Mat<double>::Zero(4, 3);
    emb.vectors.row(1) << 1.0, 0.0, 0.0;
    emb.vectors.row(2) << 0.9, std::sqrt(1.0 - 0.81), 0.0;
    emb.vectors.row(3) << 0.5, 0.0, std::sqrt(0.75);

    SimilarityConfig cfg;
    cfg.top_k = 2;
    cfg.threshold = 0.0;
    cfg.temperature = 0.5;
    const SimilarityTable table = build_similarity_table(emb, cfg);
    REQUIRE(table.items[1] == std::vector<ItemIndex>{2, 3});
    CHECK(table.probs[1][0] == doctest::Approx(0.6900).epsilon(1e-4));
    CHECK(table.probs[1][1] == doctest::Approx(0.3100).epsilon(1e-4));
}

TEST_CASE("threshold 1.0 with distinct titles empties every row") {
    const Corpus corpus = corpus_with_titles({"alpha beta gamma", "delta epsilon", "zeta eta"});
    const EmbeddingSet emb = embed_titles_hashed(corpus, 256, 4);
    SimilarityConfig cfg;
    cfg.threshold = 1.0;
    const SimilarityTable table = build_similarity_table(emb, cfg);
    for (ItemIndex i = 1; i <= 3; ++i) CHECK(table.items[static_cast<std::size_t>(i)].empty());
    CHECK(table.empty_rows().size() == 3);
}

TEST_CASE("single survivor takes all the mass") {
    const Corpus corpus = corpus_with_titles({"same title", "same title", "different words"});
    const EmbeddingSet emb = embed_titles_hashed(corpus, 256, 4);
    SimilarityConfig cfg;
    cfg.threshold = 0.99;
    const SimilarityTable table = build_similarity_table(emb, cfg);
    REQUIRE(table.items[1] == std::vector<ItemIndex>{2});
    CHECK(table.probs[1][0] == 1.0);
    REQUIRE(table.items[2] == std::vector<ItemIndex>{1});
    CHECK(table.items[3].empty());
}

TEST_CASE("include_self puts the item in its own row") {
    const Corpus corpus = corpus_with_titles({"same title", "same title", "different words"});
    const EmbeddingSet emb = embed_titles_hashed(corpus, 256, 4);
    SimilarityConfig cfg;
    cfg.threshold = 0.99;
    cfg.include_self = true;
    const SimilarityTable table = build_similarity_table(emb, cfg);
    REQUIRE(table.items[1] == std::vector<ItemIndex>{1, 2});  // cosine ties, lower index first
    CHECK(table.probs[1][0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("tie at the K boundary goes to the lower index") {
    // Items 2 and 3 are identical vectors; top_k = 1 must pick index 2.
    EmbeddingSet emb;
    emb.dim = 2;
    emb.vectors = Mat<double>::Zero(4, 2);
    emb.vectors.row(1) << 1.0, 0.0;
    emb.vectors.row(2) << 0.8, 0.6;
    emb.vectors.row(3) << 0.8, 0.6;
    SimilarityConfig cfg;
    cfg.top_k = 1;
    const SimilarityTable table = build_similarity_table(emb, cfg);
    REQUIRE(table.items[1] == std::vector<ItemIndex>{2});
}

TEST_CASE("temperature validation") {
    EmbeddingSet emb = random_embeddings(3, 8, 5);
    SimilarityConfig cfg;
    cfg.temperature = 0.0;
    CHECK_THROWS_AS(build_similarity_table(emb, cfg), ConfigError);
    cfg.temperature = -1.0;
    CHECK_THROWS_AS(build_similarity_table(emb, cfg), ConfigError);
}

TEST_CASE("brute-force equivalence on random embeddings") {
    for (const ItemIndex count : {20, 120}) {
        const EmbeddingSet emb = random_embeddings(count, 16, 1000 + static_cast<std::uint64_t>(count));
        SimilarityConfig cfg;
        cfg.top_k = 15;
        cfg.threshold = 0.05;
        cfg.temperature = 0.7;
        const SimilarityTable fast = build_similarity_table(emb, cfg);
        const SimilarityTable naive = testsupport::naive_similarity_reference(emb, cfg);
        check_tables_match(fast, naive, 1e-9);
    }
}

TEST_CASE("row mass, top-k and threshold invariants on random embeddings") {
    const EmbeddingSet emb = random_embeddings(80, 12, 4242);
    SimilarityConfig cfg;
    cfg.top_k = 7;
    cfg.threshold = -0.1;
    cfg.temperature = 2.0;
    const SimilarityTable table = build_similarity_table(emb, cfg);

    Mat<double> unit = emb.vectors;
    for (ItemIndex i = 1; i <= 80; ++i) unit.row(i) /= unit.row(i).norm();

    for (ItemIndex i = 1; i <= 80; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        CHECK(table.items[idx].size() <= 7);
        if (table.items[idx].empty()) continue;
        double sum = 0.0;
        for (std::size_t e = 0; e < table.items[idx].size(); ++e) {
            const ItemIndex j = table.items[idx][e];
            CHECK(j != 0);
            CHECK(j != i);  // include_self defaults off
            const double cosine = unit.row(i).dot(unit.row(j));
            CHECK(cosine >= cfg.threshold);
            CHECK(table.probs[idx][e] > 0.0);
            CHECK(table.probs[idx][e] <= 1.0);
            sum += table.probs[idx][e];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("scale invariance of the similarity table") {
    const EmbeddingSet emb = random_embeddings(40, 10, 777);
    EmbeddingSet scaled = emb;
    scaled.vectors *= 37.5;
    SimilarityConfig cfg;
    cfg.top_k = 6;
    cfg.threshold = 0.1;
    cfg.temperature = 0.9;
    check_tables_match(build_similarity_table(emb, cfg), build_similarity_table(scaled, cfg), 1e-12);
}

TEST_CASE("temperature monotonicity: colder rows concentrate") {
    const EmbeddingSet emb = random_embeddings(30, 10, 31);
    SimilarityConfig hot;
    hot.top_k = 8;
    hot.threshold = -1.0;
    hot.temperature = 2.0;
    SimilarityConfig cold = hot;
    cold.temperature = 0.5;
    const SimilarityTable t_hot = build_similarity_table(emb, hot);
    const SimilarityTable t_cold = build_similarity_table(emb, cold);
    for (ItemIndex i = 1; i <= 30; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (t_hot.probs[idx].size() < 2) continue;
        const double max_hot = *std::max_element(t_hot.probs[idx].begin(), t_hot.probs[idx].end());
        const double max_cold = *std::max_element(t_cold.probs[idx].begin(), t_cold.probs[idx].end());
        CHECK(max_cold > max_hot);
    }
}

TEST_CASE("SIMREC_THREADS does not change the table") {
    const EmbeddingSet emb = random_embeddings(60, 12, 808);
    SimilarityConfig cfg;
    cfg.top_k = 9;
    cfg.threshold = 0.0;
    cfg.temperature = 1.0;
    const SimilarityTable single = build_similarity_table(emb, cfg);
    setenv("SIMREC_THREADS", "4", 1);
    const SimilarityTable threaded = build_similarity_table(emb, cfg);
    unsetenv("SIMREC_THREADS");
    for (ItemIndex i = 1; i <= 60; ++i) {
        CHECK(single.items[static_cast<std::size_t>(i)] == threaded.items[static_cast<std::size_t>(i)]);
        CHECK(single.probs[static_cast<std::size_t>(i)] == threaded.probs[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("embedding file round trip is bit-identical for f32 payloads") {
    const Corpus corpus = corpus_with_titles({"one title", "two title", "three title"});
    EmbeddingSet emb;
    emb.dim = 5;
    emb.vectors = Mat<double>::Zero(4, 5);
    Rng rng(99);
    for (ItemIndex i = 1; i <= 3; ++i)
        for (std::int32_t j = 0; j < 5; ++j)
            emb.vectors(i, j) = static_cast<double>(static_cast<float>(rng.normal()));

    const std::string path = "/tmp/simrec_simtable_test.emb";
    save_embeddings(path, emb, corpus);
    const EmbeddingSet loaded = load_embeddings(path, corpus);
    CHECK(loaded.dim == 5);
    CHECK(loaded.vectors == emb.vectors);
    std::remove(path.c_str());
}

TEST_CASE("embedding TSV fixture form and error paths") {
    const Corpus corpus = corpus_with_titles({"one", "two"});
    const std::string path = "/tmp/simrec_simtable_test.tsv";

    write_file(path, "item1\t1.0,2.0,3.0\nitem2\t4.0,5.0,6.0\n");
    const EmbeddingSet emb = load_embeddings(path, corpus);
    CHECK(emb.dim == 3);
    CHECK(emb.vectors(1, 0) == 1.0);
    CHECK(emb.vectors(2, 2) == 6.0);

    write_file(path, "item1\t1.0,2.0,3.0\n");  // item2 missing
    CHECK_THROWS_WITH_AS(load_embeddings(path, corpus), doctest::Contains("item2"), DataError);

    write_file(path, "item1\t1.0,2.0,3.0\nitem2\t4.0,5.0\n");
    CHECK_THROWS_AS(load_embeddings(path, corpus), DataError);

    write_file(path, "item1\t1.0,2.0,3.0\nitem2\t0.0,0.0,0.0\n");
    CHECK_THROWS_AS(load_embeddings(path, corpus), DataError);
    std::remove(path.c_str());
}

TEST_CASE("similarity table file round trip renormalizes rows") {
    const EmbeddingSet emb = random_embeddings(50, 8, 2020);
    SimilarityConfig cfg;
    cfg.top_k = 10;
    cfg.threshold = 0.0;
    cfg.temperature = 1.5;
    const SimilarityTable table = build_similarity_table(emb, cfg);

    const std::string path = "/tmp/simrec_simtable_test.sim";
    save_similarity_table(path, table);
    const SimilarityTable loaded = load_similarity_table(path);
    CHECK(loaded.config.top_k == cfg.top_k);
    CHECK(loaded.config.threshold == cfg.threshold);
    CHECK(loaded.config.temperature == cfg.temperature);
    CHECK(loaded.config.include_self == cfg.include_self);

    for (ItemIndex i = 1; i <= 50; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        REQUIRE(loaded.items[idx] == table.items[idx]);
        double sum = 0.0;
        for (std::size_t e = 0; e < loaded.probs[idx].size(); ++e) {
            CHECK(loaded.probs[idx][e] ==
                  doctest::Approx(table.probs[idx][e]).epsilon(1e-6));
            sum += loaded.probs[idx][e];
        }
        if (!loaded.items[idx].empty()) CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
    std::remove(path.c_str());
}
