#pragma once

#include "simrec/corpus.hpp"
#include "simrec/net.hpp"
#include "simrec/types.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace simrec {

struct EvalConfig {
    std::int32_t k = 10;
    std::int32_t num_negatives = 100;
    std::int32_t repeats = 5;
    std::uint64_t seed = 0;
    enum class Target { Validation, Test } target = Target::Test;

    void validate() const {
        if (k < 1) throw ConfigError("eval: k must be >= 1");
        if (num_negatives < 1) throw ConfigError("eval: num_negatives must be >= 1");
        if (k > num_negatives + 1) throw ConfigError("eval: k must be <= num_negatives + 1");
        if (repeats < 1) throw ConfigError("eval: repeats must be >= 1");
    }
};

/// Read-only candidate scorer. score() must be side-effect free.
struct Scorer {
    virtual ~Scorer() = default;
    virtual double score(std::int32_t user, ItemIndex item) const = 0;
    virtual std::string kind() const = 0;
};

/// Scores with <f, E_item> where f is the hidden state at the last position
/// of the user's history (train prefix; plus the validation item when
/// evaluating test targets). Hidden states are precomputed per user.
class ModelScorer : public Scorer {
public:
    ModelScorer(const ModelParams<double>& params, const SplitCorpus& split,
                EvalConfig::Target target);
    double score(std::int32_t user, ItemIndex item) const override;
    std::string kind() const override { return "model"; }

private:
    const ModelParams<double>& params_;
    Mat<double> hidden_;  // one row per user
};

/// TopPop baseline: score(item) = training-set frequency, user-independent.
class TopPopScorer : public Scorer {
public:
    explicit TopPopScorer(const FrequencyTable& freq) : freq_(freq) {}
    double score(std::int32_t, ItemIndex item) const override {
        return static_cast<double>(freq_.at(item));
    }
    std::string kind() const override { return "toppop"; }

private:
    const FrequencyTable& freq_;
};

/// score(item) = train frequency, for each candidate.
Vec<double> toppop_scores(const FrequencyTable& freq, const std::vector<ItemIndex>& candidates);

struct BucketStats {
    std::int64_t count = 0;
    double hr = 0, ndcg = 0;
};

struct UserResult {
    ItemIndex target = 0;
    std::int64_t target_freq = 0;
    std::vector<std::int32_t> ranks;  // one per repeat
};

struct EvalReport {
    EvalConfig config;
    std::vector<double> per_repeat_hr, per_repeat_ndcg;
    double mean_hr = 0, mean_ndcg = 0;
    std::vector<UserResult> users;            // index = internal user index
    std::map<std::int32_t, BucketStats> buckets;  // key 0..10, 10 = "10+"
    std::string scorer_kind;
};

constexpr std::int32_t kColdStartBucketCap = 10;

/// The evaluation protocol: per (repeat, user), draw num_negatives distinct
/// negatives from V \ (history + target) using the stream keyed
/// (seed, repeat, user); rank the target pessimistically (after every tied
/// competitor); HR@k = [rank <= k], NDCG@k = 1/log2(rank + 1) or 0. Repeat
/// metrics are user means; the headline numbers are means over repeats.
/// Users are bucketed by the target's training frequency (0..9, 10+).
EvalReport evaluate(const Scorer& scorer, const SplitCorpus& split, const EvalConfig& cfg);

/// Regroups per-user ranks by target training frequency.
std::map<std::int32_t, BucketStats> coldstart_report(const EvalReport& report,
                                                     const FrequencyTable& freq);

/// Two-sided Welch t-test p-value with Welch-Satterthwaite df.
/// Conventions for degenerate samples: both variances zero -> 1 when the
/// means agree, 0 when they differ.
double welch_pvalue(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace simrec
