#include "simrec/eval.hpp"

#include "simrec/rng.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <unordered_set>

namespace simrec {

namespace {

/// Regularized incomplete beta I_x(a, b) via the continued-fraction form
/// (Lentz). Good to ~1e-14 for the (a, b) used by the t-test.
double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_beta = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
    const double front = std::exp(log_beta + a * std::log(x) + b * std::log1p(-x));

    auto continued_fraction = [](double aa, double bb, double xx) {
        constexpr double eps = 1e-15;
        constexpr double tiny = 1e-300;
        double c = 1.0, d = 1.0 - (aa + bb) * xx / (aa + 1.0);
        if (std::fabs(d) < tiny) d = tiny;
        d = 1.0 / d;
        double h = d;
        for (int m = 1; m <= 300; ++m) {
            const double dm = static_cast<double>(m);
            double num = dm * (bb - dm) * xx / ((aa + 2.0 * dm - 1.0) * (aa + 2.0 * dm));
            d = 1.0 + num * d;
            if (std::fabs(d) < tiny) d = tiny;
            c = 1.0 + num / c;
            if (std::fabs(c) < tiny) c = tiny;
            d = 1.0 / d;
            h *= d * c;
            num = -(aa + dm) * (aa + bb + dm) * xx / ((aa + 2.0 * dm) * (aa + 2.0 * dm + 1.0));
            d = 1.0 + num * d;
            if (std::fabs(d) < tiny) d = tiny;
            c = 1.0 + num / c;
            if (std::fabs(c) < tiny) c = tiny;
            d = 1.0 / d;
            const double delta = d * c;
            h *= delta;
            if (std::fabs(delta - 1.0) < eps) break;
        }
        return h;
    };

    // Use the symmetric form on whichever side converges faster.
    if (x < (a + 1.0) / (a + b + 2.0)) return front * continued_fraction(a, b, x) / a;
    return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          b * std::log1p(-x) + a * std::log(x)) *
                     continued_fraction(b, a, 1.0 - x) / b;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace

ModelScorer::ModelScorer(const ModelParams<double>& params, const SplitCorpus& split,
                         EvalConfig::Target target)
    : params_(params) {
    const auto L = params.cfg.max_seq_len;
    const auto n = split.user_count();
    hidden_ = Mat<double>::Zero(n, params.cfg.hidden_size);
    Rng unused(0);
    for (std::int32_t u = 0; u < n; ++u) {
        std::vector<ItemIndex> history = split.train[static_cast<std::size_t>(u)];
        if (target == EvalConfig::Target::Test)
            history.push_back(split.valid[static_cast<std::size_t>(u)]);
        if (static_cast<std::int32_t>(history.size()) > L)
            history.erase(history.begin(),
                          history.end() - static_cast<std::ptrdiff_t>(L));
        std::vector<ItemIndex> padded(static_cast<std::size_t>(L), 0);
        std::copy(history.begin(), history.end(),
                  padded.end() - static_cast<std::ptrdiff_t>(history.size()));
        const Mat<double> h =
            forward_user<double>(params, padded, /*train_mode=*/false, unused, nullptr);
        hidden_.row(u) = h.row(L - 1);
    }
}

double ModelScorer::score(std::int32_t user, ItemIndex item) const {
    return hidden_.row(user).dot(params_.item_emb.row(item));
}

Vec<double> toppop_scores(const FrequencyTable& freq, const std::vector<ItemIndex>& candidates) {
    Vec<double> scores(static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t i = 0; i < candidates.size(); ++i)
        scores(static_cast<Eigen::Index>(i)) = static_cast<double>(freq.at(candidates[i]));
    return scores;
}

EvalReport evaluate(const Scorer& scorer, const SplitCorpus& split, const EvalConfig& cfg) {
    cfg.validate();
    const Corpus& corpus = *split.corpus;
    const std::int32_t n_users = split.user_count();
    const std::int32_t vocab = corpus.item_count;
    const FrequencyTable freq = train_frequency(split);

    EvalReport report;
    report.config = cfg;
    report.scorer_kind = scorer.kind();
    report.users.resize(static_cast<std::size_t>(n_users));

    for (std::int32_t u = 0; u < n_users; ++u) {
        auto& ur = report.users[static_cast<std::size_t>(u)];
        ur.target = cfg.target == EvalConfig::Target::Test ? split.test[static_cast<std::size_t>(u)]
                                                           : split.valid[static_cast<std::size_t>(u)];
        ur.target_freq = freq.at(ur.target);
        ur.ranks.resize(static_cast<std::size_t>(cfg.repeats));
    }

    for (std::int32_t rep = 0; rep < cfg.repeats; ++rep) {
        double hr_sum = 0.0, ndcg_sum = 0.0;
        for (std::int32_t u = 0; u < n_users; ++u) {
            auto& ur = report.users[static_cast<std::size_t>(u)];
            const auto& full_seq = corpus.user_sequences[static_cast<std::size_t>(u)];
            std::unordered_set<ItemIndex> excluded(full_seq.begin(), full_seq.end());
            excluded.insert(ur.target);

            const auto legal =
                static_cast<std::int64_t>(vocab) - static_cast<std::int64_t>(excluded.size());
            if (legal < cfg.num_negatives)
                throw DataError("evaluate: user " + corpus.user_ids[static_cast<std::size_t>(u)] +
                                " has only " + std::to_string(legal) + " legal negatives");

            Rng rng = keyed_rng(cfg.seed, stream::kEvalNegative,
                                static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(u));
            std::unordered_set<ItemIndex> drawn;
            const double target_score = scorer.score(u, ur.target);
            std::int32_t greater = 0, tied = 0;
            while (static_cast<std::int32_t>(drawn.size()) < cfg.num_negatives) {
                const auto cand =
                    static_cast<ItemIndex>(rng.below(static_cast<std::uint64_t>(vocab)) + 1);
                if (excluded.count(cand) || drawn.count(cand)) continue;
                assert(cand != ur.target && excluded.count(cand) == 0);
                drawn.insert(cand);
                const double s = scorer.score(u, cand);
                if (s > target_score) ++greater;
                else if (s == target_score) ++tied;
            }
            // Pessimistic tie rule: the target ranks after every tied competitor.
            const std::int32_t rank = 1 + greater + tied;
            ur.ranks[static_cast<std::size_t>(rep)] = rank;
            if (rank <= cfg.k) {
                hr_sum += 1.0;
                ndcg_sum += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
            }
        }
        report.per_repeat_hr.push_back(hr_sum / static_cast<double>(n_users));
        report.per_repeat_ndcg.push_back(ndcg_sum / static_cast<double>(n_users));
    }

    report.mean_hr = mean_of(report.per_repeat_hr);
    report.mean_ndcg = mean_of(report.per_repeat_ndcg);
    report.buckets = coldstart_report(report, freq);
    return report;
}

std::map<std::int32_t, BucketStats> coldstart_report(const EvalReport& report,
                                                     const FrequencyTable& freq) {
    std::map<std::int32_t, BucketStats> buckets;
    for (std::int32_t b = 0; b <= kColdStartBucketCap; ++b) buckets[b] = BucketStats{};
    const std::int32_t k = report.config.k;
    for (const auto& ur : report.users) {
        const std::int64_t f = freq.at(ur.target);
        const auto bucket = static_cast<std::int32_t>(
            std::min<std::int64_t>(f, kColdStartBucketCap));
        auto& stats = buckets[bucket];
        stats.count += 1;
        for (const std::int32_t rank : ur.ranks) {
            if (rank <= k) {
                stats.hr += 1.0;
                stats.ndcg += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
            }
        }
    }
    for (auto& [bucket, stats] : buckets) {
        const auto denom = static_cast<double>(stats.count) *
                           static_cast<double>(report.config.repeats);
        if (stats.count > 0) {
            stats.hr /= denom;
            stats.ndcg /= denom;
        }
    }
    return buckets;
}

double welch_pvalue(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw ConfigError("welch_pvalue: need at least 2 samples per side");
    const double ma = mean_of(a), mb = mean_of(b);
    const double va = sample_variance(a, ma), vb = sample_variance(b, mb);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());

    if (va == 0.0 && vb == 0.0) return ma == mb ? 1.0 : 0.0;

    const double se2 = va / na + vb / nb;
    const double t = (ma - mb) / std::sqrt(se2);
    const double df = se2 * se2 /
                      ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    // Two-sided p for Student's t: I_{df/(df+t^2)}(df/2, 1/2).
    return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

}  // namespace simrec
