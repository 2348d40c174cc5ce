#include "simrec/simtable.hpp"

#include "simrec/io.hpp"
#include "simrec/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <thread>

namespace simrec {

namespace {

constexpr const char* kEmbMagic = "SIMREC-EMB\x01";
constexpr const char* kSimMagic = "SIMREC-SIM\x01";

int env_thread_cap() {
    const char* env = std::getenv("SIMREC_THREADS");
    if (env == nullptr) return 1;
    const int n = std::atoi(env);
    return n < 1 ? 1 : n;
}

/// Runs fn(i) for i in [0, n) across up to env_thread_cap() threads. Each
/// index writes to its own output slot, so results do not depend on the
/// thread count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
    const int threads = std::min<std::int64_t>(env_thread_cap(), n);
    if (threads <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::int64_t i = t; i < n; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

void check_vector_nonzero(const Mat<double>& vectors, ItemIndex i, const std::string& what) {
    if (vectors.row(i).squaredNorm() == 0.0)
        throw DataError(what + ": zero embedding vector for item index " + std::to_string(i));
}

EmbeddingSet parse_embedding_tsv(const std::string& bytes, const std::string& path,
                                 const Corpus& corpus) {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < bytes.size()) {
        std::size_t end = bytes.find('\n', start);
        if (end == std::string::npos) end = bytes.size();
        std::string line = bytes.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError(path + ": line " + std::to_string(line_no) + ": expected item_id<TAB>values");
        ids.push_back(line.substr(0, tab));
        std::vector<double> v;
        std::size_t p = tab + 1;
        while (p <= line.size()) {
            std::size_t comma = line.find(',', p);
            if (comma == std::string::npos) comma = line.size();
            try {
                v.push_back(std::stod(line.substr(p, comma - p)));
            } catch (const std::exception&) {
                throw DataError(path + ": line " + std::to_string(line_no) + ": bad number");
            }
            p = comma + 1;
        }
        if (!rows.empty() && v.size() != rows.front().size())
            throw DataError(path + ": line " + std::to_string(line_no) + ": dimension mismatch (" +
                            std::to_string(v.size()) + " vs " + std::to_string(rows.front().size()) + ")");
        rows.push_back(std::move(v));
    }
    if (rows.empty()) throw DataError(path + ": no embedding rows");

    EmbeddingSet emb;
    emb.dim = static_cast<std::int32_t>(rows.front().size());
    emb.vectors = Mat<double>::Zero(corpus.item_count + 1, emb.dim);
    std::vector<bool> seen(static_cast<std::size_t>(corpus.item_count) + 1, false);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto it = corpus.item_index_of.find(ids[r]);
        if (it == corpus.item_index_of.end()) continue;  // extra items are ignored
        for (std::int32_t j = 0; j < emb.dim; ++j) emb.vectors(it->second, j) = rows[r][static_cast<std::size_t>(j)];
        seen[static_cast<std::size_t>(it->second)] = true;
    }
    std::string missing;
    int missing_count = 0;
    for (ItemIndex i = 1; i <= corpus.item_count; ++i) {
        if (!seen[static_cast<std::size_t>(i)]) {
            ++missing_count;
            if (missing_count <= 20) missing += (missing.empty() ? "" : ", ") + corpus.item_ids[static_cast<std::size_t>(i)];
        }
    }
    if (missing_count > 0)
        throw DataError(path + ": " + std::to_string(missing_count) +
                        " corpus items missing from embedding file: " + missing);
    for (ItemIndex i = 1; i <= corpus.item_count; ++i) check_vector_nonzero(emb.vectors, i, path);
    return emb;
}

}  // namespace

std::vector<ItemIndex> SimilarityTable::empty_rows() const {
    std::vector<ItemIndex> out;
    for (ItemIndex i = 1; i <= item_count(); ++i)
        if (items[static_cast<std::size_t>(i)].empty()) out.push_back(i);
    return out;
}

EmbeddingSet load_embeddings(const std::string& path, const Corpus& corpus) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 11 || bytes.compare(0, 11, kEmbMagic, 11) != 0)
        return parse_embedding_tsv(bytes, path, corpus);

    ByteReader r(bytes, path);
    r.expect_magic(std::string(kEmbMagic, 11));
    const std::uint32_t count = r.u32();
    const std::uint32_t dim = r.u32();
    if (dim == 0) throw DataError(path + ": zero embedding dimension");

    EmbeddingSet emb;
    emb.dim = static_cast<std::int32_t>(dim);
    emb.vectors = Mat<double>::Zero(corpus.item_count + 1, emb.dim);
    std::vector<bool> seen(static_cast<std::size_t>(corpus.item_count) + 1, false);
    for (std::uint32_t n = 0; n < count; ++n) {
        const std::string id = r.str();
        const auto it = corpus.item_index_of.find(id);
        if (it == corpus.item_index_of.end()) {
            for (std::uint32_t j = 0; j < dim; ++j) r.f32();
            continue;
        }
        for (std::uint32_t j = 0; j < dim; ++j)
            emb.vectors(it->second, static_cast<std::int32_t>(j)) = static_cast<double>(r.f32());
        seen[static_cast<std::size_t>(it->second)] = true;
    }
    if (!r.at_end()) throw DataError(path + ": trailing bytes after embedding payload");

    std::string missing;
    int missing_count = 0;
    for (ItemIndex i = 1; i <= corpus.item_count; ++i) {
        if (!seen[static_cast<std::size_t>(i)]) {
            ++missing_count;
            if (missing_count <= 20) missing += (missing.empty() ? "" : ", ") + corpus.item_ids[static_cast<std::size_t>(i)];
        }
    }
    if (missing_count > 0)
        throw DataError(path + ": " + std::to_string(missing_count) +
                        " corpus items missing from embedding file: " + missing);
    for (ItemIndex i = 1; i <= corpus.item_count; ++i) check_vector_nonzero(emb.vectors, i, path);
    return emb;
}

void save_embeddings(const std::string& path, const EmbeddingSet& emb, const Corpus& corpus) {
    if (emb.item_count() != corpus.item_count)
        throw DataError("save_embeddings: embedding set does not match corpus vocabulary");
    ByteWriter w;
    w.raw(kEmbMagic, 11);
    w.u32(static_cast<std::uint32_t>(corpus.item_count));
    w.u32(static_cast<std::uint32_t>(emb.dim));
    for (ItemIndex i = 1; i <= corpus.item_count; ++i) {
        w.str(corpus.item_ids[static_cast<std::size_t>(i)]);
        for (std::int32_t j = 0; j < emb.dim; ++j)
            w.f32(static_cast<float>(emb.vectors(i, j)));
    }
    write_file(path, w.bytes());
}

EmbeddingSet embed_titles_hashed(const Corpus& corpus, std::int32_t dim, std::uint64_t seed) {
    if (dim < 8) throw ConfigError("embed_titles_hashed: dim must be >= 8");
    EmbeddingSet emb;
    emb.dim = dim;
    emb.vectors = Mat<double>::Zero(corpus.item_count + 1, dim);
    const std::uint64_t seed_mix = mix64(seed);
    for (ItemIndex i = 1; i <= corpus.item_count; ++i) {
        std::string title = corpus.titles[static_cast<std::size_t>(i)];
        if (title.empty())
            throw DataError("embed_titles_hashed: empty title for item " +
                            corpus.item_ids[static_cast<std::size_t>(i)]);
        for (char& c : title) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        auto bucket_of = [&](const char* data, std::size_t len) {
            return static_cast<std::int32_t>(mix64(seed_mix ^ fnv1a64(data, len)) %
                                             static_cast<std::uint64_t>(dim));
        };
        if (title.size() < 3) {
            emb.vectors(i, bucket_of(title.data(), title.size())) += 1.0;
        } else {
            for (std::size_t p = 0; p + 3 <= title.size(); ++p)
                emb.vectors(i, bucket_of(title.data() + p, 3)) += 1.0;
        }
        emb.vectors.row(i) /= emb.vectors.row(i).norm();
    }
    return emb;
}

SimilarityTable build_similarity_table(const EmbeddingSet& emb, const SimilarityConfig& cfg) {
    cfg.validate();
    const ItemIndex count = emb.item_count();
    if (count < 1) throw DataError("build_similarity_table: empty embedding set");

    // Row-normalize once; cosine becomes a plain dot product in double.
    Mat<double> unit = emb.vectors;
    for (ItemIndex i = 1; i <= count; ++i) {
        const double norm = unit.row(i).norm();
        if (norm == 0.0)
            throw DataError("build_similarity_table: zero vector at item index " + std::to_string(i));
        unit.row(i) /= norm;
    }

    SimilarityTable table;
    table.config = cfg;
    table.items.assign(static_cast<std::size_t>(count) + 1, {});
    table.probs.assign(static_cast<std::size_t>(count) + 1, {});

    parallel_for(count, [&](std::int64_t row) {
        const ItemIndex i = static_cast<ItemIndex>(row) + 1;
        Vec<double> cosine = unit.bottomRows(count) * unit.row(i).transpose();  // item j at [j-1]

        std::vector<ItemIndex> candidates;
        candidates.reserve(static_cast<std::size_t>(count));
        for (ItemIndex j = 1; j <= count; ++j)
            if (cfg.include_self || j != i) candidates.push_back(j);

        // Top-K by cosine, equal cosines broken toward the lower index.
        auto better = [&](ItemIndex a, ItemIndex b) {
            const double ca = cosine(a - 1), cb = cosine(b - 1);
            return ca != cb ? ca > cb : a < b;
        };
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.top_k), candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                          candidates.end(), better);
        candidates.resize(k);

        // Rows are emitted in ascending item order, as a masked full-vocabulary
        // softmax would produce them.
        std::sort(candidates.begin(), candidates.end());
        std::vector<ItemIndex> kept;
        std::vector<double> logits;
        for (const ItemIndex j : candidates) {
            if (cosine(j - 1) >= cfg.threshold) {
                kept.push_back(j);
                logits.push_back(cosine(j - 1) / cfg.temperature);
            }
        }
        if (kept.empty()) return;  // legal empty row, reported via empty_rows()

        const double max_logit = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double& l : logits) {
            l = std::exp(l - max_logit);
            sum += l;
        }
        for (double& l : logits) l /= sum;
        table.items[static_cast<std::size_t>(i)] = std::move(kept);
        table.probs[static_cast<std::size_t>(i)] = std::move(logits);
    });
    return table;
}

void save_similarity_table(const std::string& path, const SimilarityTable& table) {
    ByteWriter w;
    w.raw(kSimMagic, 11);
    w.u32(static_cast<std::uint32_t>(table.config.top_k));
    w.f64(table.config.threshold);
    w.f64(table.config.temperature);
    w.u8(table.config.include_self ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(table.item_count()));
    for (ItemIndex i = 1; i <= table.item_count(); ++i) {
        const auto& items = table.items[static_cast<std::size_t>(i)];
        const auto& probs = table.probs[static_cast<std::size_t>(i)];
        w.u32(static_cast<std::uint32_t>(items.size()));
        for (std::size_t e = 0; e < items.size(); ++e) {
            w.u32(static_cast<std::uint32_t>(items[e]));
            w.f32(static_cast<float>(probs[e]));
        }
    }
    write_file(path, w.bytes());
}

SimilarityTable load_similarity_table(const std::string& path) {
    const std::string bytes = read_file(path);
    ByteReader r(bytes, path);
    r.expect_magic(std::string(kSimMagic, 11));
    SimilarityTable table;
    table.config.top_k = static_cast<std::int32_t>(r.u32());
    table.config.threshold = r.f64();
    table.config.temperature = r.f64();
    table.config.include_self = r.u8() != 0;
    const std::uint32_t count = r.u32();
    table.items.assign(count + 1, {});
    table.probs.assign(count + 1, {});
    for (std::uint32_t i = 1; i <= count; ++i) {
        const std::uint32_t entries = r.u32();
        auto& items = table.items[i];
        auto& probs = table.probs[i];
        items.reserve(entries);
        probs.reserve(entries);
        double sum = 0.0;
        for (std::uint32_t e = 0; e < entries; ++e) {
            const auto item = r.u32();
            if (item < 1 || item > count)
                throw DataError(path + ": row " + std::to_string(i) + " references item " +
                                std::to_string(item) + " outside 1.." + std::to_string(count));
            items.push_back(static_cast<ItemIndex>(item));
            probs.push_back(static_cast<double>(r.f32()));
            sum += probs.back();
        }
        // f32 storage rounds each entry; renormalize so row sums hold at 1e-9.
        if (entries > 0) {
            if (!(sum > 0.0)) throw DataError(path + ": non-positive probability row " + std::to_string(i));
            for (double& p : probs) p /= sum;
        }
    }
    if (!r.at_end()) throw DataError(path + ": trailing bytes after table payload");
    return table;
}

}  // namespace simrec
