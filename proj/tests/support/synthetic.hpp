#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace simrec::testsupport {

/// Twin-pair dataset generator. Items come in pairs sharing a title; one twin
/// of each designated cold pair never appears in any training sequence but is
/// the test target of its users. Users draw their history from one cluster of
/// pairs, so contexts are predictive of cluster items.
struct SyntheticSpec {
    std::int32_t n_pairs = 250;
    std::int32_t pairs_per_cluster = 10;
    std::int32_t cold_stride = 5;  // every cold_stride-th pair is a cold pair
    std::int32_t users_per_cold_item = 8;
    std::int32_t normal_users = 1600;
    std::int32_t min_len = 8;   // raw sequence length, test item included
    std::int32_t max_len = 16;
    std::uint64_t seed = 1234;
};

struct SyntheticData {
    std::string interactions_tsv;
    std::string titles_tsv;
    std::vector<std::string> cold_item_ids;  // items absent from all training data
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

/// Small variant (fast pipelines: smoke runs, determinism checks).
SyntheticSpec small_synthetic_spec();

}  // namespace simrec::testsupport
