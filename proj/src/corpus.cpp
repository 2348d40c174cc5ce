#include "simrec/corpus.hpp"

#include "simrec/io.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <numeric>

namespace simrec {

namespace {

constexpr const char* kCorpusMagic = "SIMREC-CORPUS\x01";

std::int64_t parse_timestamp(const std::string& field, std::size_t line_no) {
    std::int64_t ts = 0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, ts);
    if (ec != std::errc() || ptr != last)
        throw DataError("line " + std::to_string(line_no) + ": non-integer timestamp '" + field + "'");
    return ts;
}

}  // namespace

std::int64_t Corpus::interaction_count() const {
    std::int64_t n = 0;
    for (const auto& seq : user_sequences) n += static_cast<std::int64_t>(seq.size());
    return n;
}

std::int64_t FrequencyTable::total() const {
    return std::accumulate(freq.begin(), freq.end(), std::int64_t{0});
}

InteractionLog parse_interactions(std::istream& in) {
    InteractionLog log;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos ||
            line.find('\t', tab2 + 1) != std::string::npos)
            throw DataError("line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
        InteractionRecord rec;
        rec.user_id = line.substr(0, tab1);
        rec.item_id = line.substr(tab1 + 1, tab2 - tab1 - 1);
        rec.timestamp = parse_timestamp(line.substr(tab2 + 1), line_no);
        if (rec.user_id.empty() || rec.item_id.empty())
            throw DataError("line " + std::to_string(line_no) + ": empty user or item id");
        log.records.push_back(std::move(rec));
    }
    return log;
}

std::unordered_map<std::string, std::string> parse_titles(std::istream& in) {
    std::unordered_map<std::string, std::string> titles;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError("line " + std::to_string(line_no) + ": expected 2 tab-separated fields");
        titles[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return titles;
}

Corpus preprocess(const InteractionLog& log,
                  const std::unordered_map<std::string, std::string>& titles,
                  std::int64_t min_item_count, std::int32_t min_user_len,
                  bool require_title) {
    if (min_user_len < 1) throw ConfigError("min_user_len must be >= 1");
    if (min_item_count < 0) throw ConfigError("min_item_count must be >= 0");

    // Stage 1: item frequency over the raw log.
    std::unordered_map<std::string, std::int64_t> raw_count;
    for (const auto& rec : log.records) ++raw_count[rec.item_id];

    auto item_survives = [&](const std::string& id) {
        if (raw_count[id] < min_item_count) return false;
        if (require_title) {
            const auto it = titles.find(id);
            if (it == titles.end() || it->second.empty()) return false;
        }
        return true;
    };

    // Stage 2: user filter on remaining interaction counts.
    std::unordered_map<std::string, std::int64_t> user_remaining;
    for (const auto& rec : log.records)
        if (item_survives(rec.item_id)) ++user_remaining[rec.user_id];

    Corpus corpus;
    corpus.titles.emplace_back();
    corpus.item_ids.emplace_back();

    // Index assignment by first occurrence in the filtered log (input order).
    struct Timed {
        ItemIndex item;
        std::int64_t ts;
        std::int64_t order;
    };
    std::vector<std::vector<Timed>> pending;
    for (std::int64_t order = 0; order < static_cast<std::int64_t>(log.records.size()); ++order) {
        const auto& rec = log.records[static_cast<std::size_t>(order)];
        if (!item_survives(rec.item_id)) continue;
        if (user_remaining[rec.user_id] < min_user_len) continue;

        auto [uit, user_is_new] = corpus.user_index_of.try_emplace(
            rec.user_id, static_cast<std::int32_t>(corpus.user_ids.size()));
        if (user_is_new) {
            corpus.user_ids.push_back(rec.user_id);
            pending.emplace_back();
        }
        auto [iit, item_is_new] = corpus.item_index_of.try_emplace(
            rec.item_id, static_cast<ItemIndex>(corpus.item_ids.size()));
        if (item_is_new) {
            corpus.item_ids.push_back(rec.item_id);
            const auto tit = titles.find(rec.item_id);
            corpus.titles.push_back(tit == titles.end() ? std::string() : tit->second);
        }
        pending[static_cast<std::size_t>(uit->second)].push_back({iit->second, rec.timestamp, order});
    }

    if (corpus.user_ids.empty())
        throw DataError("preprocess: no users survive filtering (empty corpus)");

    corpus.item_count = static_cast<ItemIndex>(corpus.item_ids.size()) - 1;
    corpus.user_sequences.resize(pending.size());
    for (std::size_t u = 0; u < pending.size(); ++u) {
        auto& recs = pending[u];
        std::sort(recs.begin(), recs.end(), [](const Timed& a, const Timed& b) {
            return a.ts != b.ts ? a.ts < b.ts : a.order < b.order;
        });
        auto& seq = corpus.user_sequences[u];
        seq.reserve(recs.size());
        for (const auto& r : recs) seq.push_back(r.item);
    }
    return corpus;
}

SplitCorpus split_leave_one_out(const Corpus& corpus) {
    SplitCorpus split;
    split.corpus = &corpus;
    split.train.reserve(corpus.user_sequences.size());
    for (std::size_t u = 0; u < corpus.user_sequences.size(); ++u) {
        const auto& seq = corpus.user_sequences[u];
        if (seq.size() < 3)
            throw DataError("split: user " + corpus.user_ids[u] + " has sequence of length " +
                            std::to_string(seq.size()) + " (< 3, cannot split)");
        split.train.emplace_back(seq.begin(), seq.end() - 2);
        split.valid.push_back(seq[seq.size() - 2]);
        split.test.push_back(seq.back());
    }
    return split;
}

double density(const Corpus& corpus) {
    if (corpus.item_count <= 0) throw DataError("density: corpus has no items");
    return static_cast<double>(corpus.interaction_count()) / static_cast<double>(corpus.item_count);
}

FrequencyTable train_frequency(const SplitCorpus& split) {
    FrequencyTable table;
    table.freq.assign(static_cast<std::size_t>(split.corpus->item_count) + 1, 0);
    for (const auto& seq : split.train)
        for (const ItemIndex item : seq) ++table.freq[static_cast<std::size_t>(item)];
    return table;
}

void save_corpus(const std::string& path, const Corpus& corpus) {
    ByteWriter w;
    w.raw(kCorpusMagic, 14);
    w.u32(static_cast<std::uint32_t>(corpus.item_count));
    w.u32(static_cast<std::uint32_t>(corpus.user_count()));
    for (ItemIndex i = 1; i <= corpus.item_count; ++i) {
        w.str(corpus.item_ids[static_cast<std::size_t>(i)]);
        w.str(corpus.titles[static_cast<std::size_t>(i)]);
    }
    for (std::int32_t u = 0; u < corpus.user_count(); ++u) {
        w.str(corpus.user_ids[static_cast<std::size_t>(u)]);
        const auto& seq = corpus.user_sequences[static_cast<std::size_t>(u)];
        w.u32(static_cast<std::uint32_t>(seq.size()));
        for (const ItemIndex item : seq) w.u32(static_cast<std::uint32_t>(item));
    }
    write_file(path, w.bytes());
}

Corpus load_corpus(const std::string& path) {
    const std::string bytes = read_file(path);
    ByteReader r(bytes, path);
    r.expect_magic(std::string(kCorpusMagic, 14));
    Corpus corpus;
    corpus.item_count = static_cast<ItemIndex>(r.u32());
    const std::uint32_t users = r.u32();
    corpus.item_ids.emplace_back();
    corpus.titles.emplace_back();
    for (ItemIndex i = 1; i <= corpus.item_count; ++i) {
        corpus.item_ids.push_back(r.str());
        corpus.titles.push_back(r.str());
        corpus.item_index_of[corpus.item_ids.back()] = i;
    }
    for (std::uint32_t u = 0; u < users; ++u) {
        corpus.user_ids.push_back(r.str());
        corpus.user_index_of[corpus.user_ids.back()] = static_cast<std::int32_t>(u);
        const std::uint32_t len = r.u32();
        std::vector<ItemIndex> seq;
        seq.reserve(len);
        for (std::uint32_t t = 0; t < len; ++t) {
            const auto item = static_cast<ItemIndex>(r.u32());
            if (item < 1 || item > corpus.item_count)
                throw DataError(path + ": item index " + std::to_string(item) + " out of range");
            seq.push_back(item);
        }
        corpus.user_sequences.push_back(std::move(seq));
    }
    if (!r.at_end()) throw DataError(path + ": trailing bytes after corpus payload");
    return corpus;
}

}  // namespace simrec
