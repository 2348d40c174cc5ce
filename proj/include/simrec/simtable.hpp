#pragma once

#include "simrec/corpus.hpp"
#include "simrec/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace simrec {

/// One vector per item, rows 1..item_count (row 0 unused). Held in double
/// precision; the file payload is f32.
struct EmbeddingSet {
    std::int32_t dim = 0;
    Mat<double> vectors;  // (item_count + 1) x dim

    std::int32_t item_count() const { return static_cast<std::int32_t>(vectors.rows()) - 1; }
};

struct SimilarityConfig {
    std::int32_t top_k = 1000;
    double threshold = 0.0;   // keep pairs with cosine >= threshold
    double temperature = 1.0; // softmax over cosine / temperature
    bool include_self = false;

    void validate() const {
        if (top_k < 1) throw ConfigError("top_k must be >= 1");
        if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
        if (threshold < -1.0 || threshold > 1.0) throw ConfigError("threshold must be in [-1, 1]");
    }
};

/// Sparse per-item similarity distribution: row i holds the surviving
/// neighbours of item i with softmax(cosine / temperature) probabilities.
/// Rows may legally be empty (all neighbours below threshold); the training
/// loss skips those targets.
struct SimilarityTable {
    SimilarityConfig config;
    std::vector<std::vector<ItemIndex>> items;  // size item_count + 1, [0] empty
    std::vector<std::vector<double>> probs;     // parallel to items

    std::int32_t item_count() const { return static_cast<std::int32_t>(items.size()) - 1; }

    /// Build report: rows that ended up with no surviving neighbour.
    std::vector<ItemIndex> empty_rows() const;
};

/// Reads `SIMREC-EMB\x01` binary or the TSV fixture form
/// (`item_id<TAB>v1,v2,...`), mapping external ids onto corpus indices.
/// Every corpus item must be present; vectors must be nonzero.
EmbeddingSet load_embeddings(const std::string& path, const Corpus& corpus);

void save_embeddings(const std::string& path, const EmbeddingSet& emb, const Corpus& corpus);

/// Deterministic offline stand-in for a text-embedding model: lowercase the
/// title, take overlapping byte trigrams (whole title if shorter than 3),
/// hash each with mix64(seed ^ fnv1a64(trigram)) into [0, dim), accumulate
/// counts, L2-normalize. Identical titles give identical vectors.
EmbeddingSet embed_titles_hashed(const Corpus& corpus, std::int32_t dim, std::uint64_t seed);

/// Per item: cosine against all other items (self excluded unless
/// include_self), keep top-K (ties broken by lower index), drop entries with
/// cosine < threshold, softmax over cosine / temperature. Exact, O(|V|^2 dim).
SimilarityTable build_similarity_table(const EmbeddingSet& emb, const SimilarityConfig& cfg);

// `SIMREC-SIM\x01` container; probabilities stored f32 and renormalized in
// double on load so row sums stay within 1e-9 of 1.
void save_similarity_table(const std::string& path, const SimilarityTable& table);
SimilarityTable load_similarity_table(const std::string& path);

}  // namespace simrec
