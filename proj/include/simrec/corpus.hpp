#pragma once

#include "simrec/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace simrec {

struct InteractionRecord {
    std::string user_id;
    std::string item_id;
    std::int64_t timestamp = 0;
};

/// Raw interaction log as parsed; may be unordered, duplicates allowed.
struct InteractionLog {
    std::vector<InteractionRecord> records;
};

/// Processed dataset. Internal item indices are 1..item_count (0 is padding),
/// assigned by first occurrence in the filtered log; user sequences are
/// chronologically sorted with timestamp ties broken by input order.
struct Corpus {
    std::int32_t item_count = 0;
    std::vector<std::vector<ItemIndex>> user_sequences;
    std::vector<std::string> titles;    // size item_count + 1, [0] unused
    std::vector<std::string> item_ids;  // size item_count + 1, [0] unused
    std::vector<std::string> user_ids;  // size user_sequences.size()
    std::unordered_map<std::string, ItemIndex> item_index_of;
    std::unordered_map<std::string, std::int32_t> user_index_of;

    std::int32_t user_count() const { return static_cast<std::int32_t>(user_sequences.size()); }
    std::int64_t interaction_count() const;
};

/// Leave-one-out split: per user, train = first |u|-2 items, then one
/// validation item and one test item. Holds a pointer to the parent corpus,
/// which must outlive the split.
struct SplitCorpus {
    const Corpus* corpus = nullptr;
    std::vector<std::vector<ItemIndex>> train;
    std::vector<ItemIndex> valid;
    std::vector<ItemIndex> test;

    std::int32_t user_count() const { return static_cast<std::int32_t>(train.size()); }
};

/// Item occurrence counts over training sequences only. Index 0 unused.
struct FrequencyTable {
    std::vector<std::int64_t> freq;  // size item_count + 1

    std::int64_t at(ItemIndex i) const { return freq[static_cast<std::size_t>(i)]; }
    std::int64_t total() const;
};

/// Parses `user<TAB>item<TAB>timestamp` lines. Errors carry the line number.
InteractionLog parse_interactions(std::istream& in);

/// Parses `item<TAB>title` lines.
std::unordered_map<std::string, std::string> parse_titles(std::istream& in);

/// Raw-log preprocessing, applied in this order:
///   1. drop items with fewer than min_item_count occurrences in the raw log,
///   2. drop items without a title (when require_title),
///   3. drop users with fewer than min_user_len remaining interactions.
/// Each filter runs exactly once; items may end up rarer than min_item_count
/// because of the user filter.
Corpus preprocess(const InteractionLog& log,
                  const std::unordered_map<std::string, std::string>& titles,
                  std::int64_t min_item_count, std::int32_t min_user_len = 5,
                  bool require_title = true);

SplitCorpus split_leave_one_out(const Corpus& corpus);

/// Interactions per item over the full (pre-split) sequences.
double density(const Corpus& corpus);

FrequencyTable train_frequency(const SplitCorpus& split);

// Versioned binary container, magic "SIMREC-CORPUS\x01" (see docs/FORMATS.md).
void save_corpus(const std::string& path, const Corpus& corpus);
Corpus load_corpus(const std::string& path);

}  // namespace simrec
